"""Seeded closed-loop simulation.

The true dynamics (`world`) and the controller/observer design model
(`detector`) are separate so a detector can be run against a world it does
not model exactly, e.g. a windy vehicle observed by a wind-free design.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .attack import attack_step
from .errors import DimensionMismatch, NumericalBlowup
from .numerics import cholesky

__all__ = [
    "BLOWUP_LIMIT",
    "SimulationConfig",
    "SimulationTrace",
    "noise_streams",
    "observer_consistency_view",
    "run_simulation",
]

BLOWUP_LIMIT = 1e12

# Sub-stream order derived from the run seed.
_STREAMS = ("process", "measurement", "watermark", "attack")


@dataclass(frozen=True)
class SimulationConfig:
    """One seeded run.

    `attacker_a` and `attacker_c` are the dynamics the false state follows
    and its output map.  They default to the detector's ``A + B K`` and ``C``,
    which requires the attack's false state to have the detector's state
    dimension.
    """

    world: object
    detector: object
    attack: object = None
    horizon: int = 20_000
    seed: int = 0
    attacker_a: np.ndarray = None
    attacker_c: np.ndarray = None
    label: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        plant = self.detector.plant
        if self.world.m != plant.m or self.world.q != plant.q:
            raise DimensionMismatch(
                f"world (q={self.world.q}, m={self.world.m}) and detector "
                f"(q={plant.q}, m={plant.m}) must share input/output dimensions"
            )
        if self.attack is None:
            return
        if self.attacker_a is None:
            object.__setattr__(self, "attacker_a", self.detector.closed_a)
        if self.attacker_c is None:
            object.__setattr__(self, "attacker_c", plant.c)
        n_xi = self.attack.state_dim
        if self.attacker_a.shape != (n_xi, n_xi) or self.attacker_c.shape != (plant.m, n_xi):
            raise DimensionMismatch("attacker dynamics do not match the attack's false-state dimension")
        if self.attack.output_dim != plant.m:
            raise DimensionMismatch("Sigma_S dimension differs from the output dimension")


@dataclass(frozen=True)
class SimulationTrace:
    """Per-step signals; row ``n`` of each array is the value at step ``n``.

    ``e[n]`` and ``u[n]`` act on the transition from ``x[n]`` to ``x[n+1]``.
    ``residual[n]`` is ``C xhat[n] - y[n]`` with the detector's ``C``.
    """

    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def to_csv(self, path):
        blocks = [
            ("x", self.x), ("xhat", self.xhat), ("y", self.y), ("e", self.e),
            ("u", self.u), ("v", self.v), ("res", self.residual),
        ]
        header = ["step"]
        for name, arr in blocks:
            header.extend(f"{name}_{i}" for i in range(arr.shape[1]))
        table = np.hstack([arr for _, arr in blocks])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for n, row in enumerate(table):
                writer.writerow([n, *map(repr, row.tolist())])


def noise_streams(seed):
    """Independent generators for process, measurement, watermark and attack noise."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(_STREAMS, children)}


def _gaussian(rng, cov, n):
    factor = cholesky(cov)
    return rng.standard_normal((n, cov.shape[0])) @ factor.T


def run_simulation(config):
    """Simulate the watermarked loop from ``x_0 = xhat_0 = 0``.

    World:     x+   = A_w x + B_w u + w,        y = C_w x + z + v
    Observer:  xhat+ = (A + BK + LC) xhat - L y + B e
    Input:     u    = K xhat + e

    Raises
    ------
    NumericalBlowup
        If a world or observer state exceeds ``BLOWUP_LIMIT`` in norm.
    """
    world, det = config.world, config.detector
    plant = det.plant
    n_steps = config.horizon
    rngs = noise_streams(config.seed)
    w = _gaussian(rngs["process"], world.sigma_w, n_steps)
    z = _gaussian(rngs["measurement"], world.sigma_z, n_steps)
    e = _gaussian(rngs["watermark"], det.sigma_e, n_steps)

    a_w, b_w, c_w = world.a, world.b, world.c
    k_gain, l_gain, c, b = det.k_gain, det.l_gain, plant.c, plant.b
    obs_a = plant.a + b @ k_gain + l_gain @ plant.c

    xs = np.empty((n_steps, world.p))
    xhats = np.empty((n_steps, plant.p))
    ys = np.empty((n_steps, plant.m))
    us = np.empty((n_steps, plant.q))
    vs = np.zeros((n_steps, plant.m))

    attack = config.attack
    if attack is not None:
        state = attack.initial_state()
        attack_rng = rngs["attack"]

    limit_sq = BLOWUP_LIMIT**2
    x = np.zeros(world.p)
    xhat = np.zeros(plant.p)
    for n in range(n_steps):
        if not (x @ x < limit_sq and xhat @ xhat < limit_sq):
            raise NumericalBlowup(f"state norm exceeded {BLOWUP_LIMIT:g} at step {n}")
        y_true = c_w @ x + z[n]
        if attack is not None:
            v, state = attack_step(attack, state, y_true, config.attacker_a, config.attacker_c, attack_rng)
            vs[n] = v
            y = y_true + v
        else:
            y = y_true
        u = k_gain @ xhat + e[n]
        xs[n], xhats[n], ys[n], us[n] = x, xhat, y, u
        x = a_w @ x + b_w @ u + w[n]
        xhat = obs_a @ xhat - l_gain @ y + b @ e[n]

    residual = xhats @ c.T - ys
    return SimulationTrace(x=xs, xhat=xhats, y=ys, e=e, u=us, v=vs, residual=residual)


def observer_consistency_view(trace, detector):
    """Observation error ``delta_n = xhat_n - x_n``.

    Only defined when world and detector share the state dimension.
    """
    if trace.x.shape[1] != detector.plant.p:
        raise DimensionMismatch(
            f"world state has dimension {trace.x.shape[1]}, detector {detector.plant.p}"
        )
    return trace.xhat - trace.x
