"""Built-in systems: a double integrator and a lane-keeping vehicle with wind."""

from dataclasses import dataclass

import numpy as np

from .attack import AttackSpec
from .model import PlantModel, design_closed_loop
from .simulate import SimulationConfig

__all__ = [
    "DOUBLE_INTEGRATOR_DESIGN",
    "VEHICLE_DESIGN",
    "VEHICLE_WATERMARK_VARIANCE",
    "DesignDefaults",
    "WindModel",
    "augment_with_wind",
    "build_double_integrator",
    "build_vehicle",
    "experiment_matrix",
    "replay_attack_preset",
    "vehicle_attack_preset",
    "vehicle_attacker_dynamics",
]

VEHICLE_WATERMARK_VARIANCE = 0.5
VEHICLE_SIGMA_W = 1e-8
VEHICLE_SIGMA_Z = 1e-5
_LATERAL_ERROR = 1


@dataclass(frozen=True)
class DesignDefaults:
    """Watermark variance and gain-synthesis weights used for a scenario."""

    sigma_e: float
    q_scale: float = 1.0
    r_scale: float = 1.0
    w_scale: float = 1.0
    z_scale: float = 1.0

    def design(self, plant, sigma_e=None):
        sigma_e = np.asarray(self.sigma_e if sigma_e is None else sigma_e, dtype=float)
        if sigma_e.ndim == 0:
            sigma_e = sigma_e * np.eye(plant.q)
        return design_closed_loop(
            plant,
            sigma_e,
            q_scale=self.q_scale,
            r_scale=self.r_scale,
            w_scale=self.w_scale,
            z_scale=self.z_scale,
        )


# A small watermark and a slow observer keep the replayed residual at the
# same scale as the honest one, so only the lag of the correlation differs.
DOUBLE_INTEGRATOR_DESIGN = DesignDefaults(sigma_e=1e-4, w_scale=1e-2)
VEHICLE_DESIGN = DesignDefaults(sigma_e=VEHICLE_WATERMARK_VARIANCE)


@dataclass(frozen=True)
class WindModel:
    """AR(1) disturbance ``d+ = pole * d + chi`` added to one state's update."""

    pole: float = 0.9
    chi_var: float = 2e-6
    coupling_row: int = _LATERAL_ERROR

    def __post_init__(self):
        if not abs(self.pole) < 1.0:
            raise ValueError(f"wind pole must be inside the unit circle, got {self.pole}")
        if self.chi_var < 0.0:
            raise ValueError("wind variance must be nonnegative")


def build_double_integrator(sigma_w=1e-4, sigma_z=1e-4):
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    b = np.array([[0.0], [1.0]])
    c = np.array([[1.0, 0.0]])
    return PlantModel(a, b, c, np.asarray(sigma_w) * np.eye(2), np.asarray(sigma_z) * np.eye(1))


def _vehicle_matrices():
    # state: heading error, lateral error, distance, vehicle angle, velocity
    # input: steering, acceleration; v0 = 10, ts = 0.05, exact discretization
    a = np.array([
        [1.0, 0.0, 0.0, 1 / 10, 0.0],
        [1 / 2, 1.0, 0.0, 1 / 40, 0.0],
        [0.0, 0.0, 1.0, 0.0, 1 / 2],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    b = np.array([
        [1 / 400, 0.0],
        [1 / 2400, 0.0],
        [0.0, 1 / 800],
        [1 / 20, 0.0],
        [0.0, 1 / 20],
    ])
    c = np.hstack([np.eye(3), np.zeros((3, 2))])
    return a, b, c


def augment_with_wind(plant, wind=None):
    """Append the disturbance as an extra, uncontrolled and unmeasured state."""
    wind = WindModel() if wind is None else wind
    p = plant.p
    a = np.zeros((p + 1, p + 1))
    a[:p, :p] = plant.a
    a[wind.coupling_row, p] = 1.0
    a[p, p] = wind.pole
    b = np.vstack([plant.b, np.zeros((1, plant.q))])
    c = np.hstack([plant.c, np.zeros((plant.m, 1))])
    sigma_w = np.zeros((p + 1, p + 1))
    sigma_w[:p, :p] = plant.sigma_w
    sigma_w[p, p] = wind.chi_var
    return PlantModel(a, b, c, sigma_w, plant.sigma_z)


def build_vehicle(include_wind=False, wind=None):
    a, b, c = _vehicle_matrices()
    plant = PlantModel(a, b, c, VEHICLE_SIGMA_W * np.eye(5), VEHICLE_SIGMA_Z * np.eye(3))
    return augment_with_wind(plant, wind) if include_wind else plant


def replay_attack_preset(plant):
    """Full output replacement: ``alpha = -1`` and noise statistics copied from the plant."""
    return AttackSpec(alpha=-1.0, xi0=np.zeros(plant.p), sigma_o=plant.sigma_w, sigma_s=plant.sigma_z)


def vehicle_attack_preset():
    """``alpha = -0.6`` with isotropic 1e-8 noises over the five vehicle states."""
    return AttackSpec.isotropic(alpha=-0.6, state_dim=5, output_dim=3, sigma_o=1e-8, sigma_s=1e-8)


def vehicle_attacker_dynamics(detector):
    """``A + B K`` and ``C`` restricted to the five vehicle states.

    The attacker imitates the vehicle under the deployed controller but has
    no wind model; wind feedforward columns of ``K`` are dropped.
    """
    a, b, c = _vehicle_matrices()
    return a + b @ detector.k_gain[:, :5], c


def experiment_matrix(seed=0, horizon=20_000, design=VEHICLE_DESIGN):
    """The four vehicle runs: detector with/without wind model, with/without attack.

    The world always contains wind.  Labels are ``<model>/<attack>`` with
    model in ``no-wind-model``/``wind-model`` and attack in
    ``no-attack``/``attack``.
    """
    world = build_vehicle(include_wind=True)
    detectors = {
        "no-wind-model": design.design(build_vehicle(include_wind=False)),
        "wind-model": design.design(world),
    }
    configs = []
    for model_name, det in detectors.items():
        attacker_a, attacker_c = vehicle_attacker_dynamics(det)
        for attack_name, attack in (("no-attack", None), ("attack", vehicle_attack_preset())):
            configs.append(SimulationConfig(
                world=world,
                detector=det,
                attack=attack,
                horizon=horizon,
                seed=seed,
                attacker_a=attacker_a if attack is not None else None,
                attacker_c=attacker_c if attack is not None else None,
                label=f"{model_name}/{attack_name}",
            ))
    return configs
