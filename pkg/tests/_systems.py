"""Random plant generators shared by the property tests."""

import numpy as np

from dynwatermark import design_closed_loop
from dynwatermark.model import PlantModel, is_controllable, is_observable


def random_plant(rng, p, q, m, spread=1.2):
    """Dense random plant, redrawn until controllable and observable."""
    while True:
        a = rng.normal(size=(p, p)) * spread / np.sqrt(p)
        b = rng.normal(size=(p, q))
        c = rng.normal(size=(m, p))
        if is_controllable(a, b) and is_observable(a, c):
            return PlantModel(a, b, c, 0.1 * np.eye(p), 0.1 * np.eye(m))


def chain_plant(rng, p, depth):
    """Single-input plant whose input needs ``depth`` steps to reach the output.

    ``A`` is upper Hessenberg and ``B`` is the first unit vector, so
    ``(A+BK)^k B`` only has support on the first ``k+1`` states.  The output
    reads the last ``p - depth`` states, which gives ``k' = depth``.
    """
    while True:
        a = np.triu(rng.normal(size=(p, p)), -1) * 0.8
        a[np.arange(1, p), np.arange(p - 1)] = rng.uniform(0.5, 1.5, p - 1)
        b = np.zeros((p, 1))
        b[0, 0] = 1.0
        c = np.zeros((p - depth, p))
        c[:, depth:] = rng.normal(size=(p - depth, p - depth))
        if is_controllable(a, b) and is_observable(a, c):
            return PlantModel(a, b, c, 0.1 * np.eye(p), 0.1 * np.eye(p - depth))


def random_closed_loops(seed, count):
    """`count` closed loops with 3 <= p <= 6 and q, m <= 3.

    Odd-numbered entries are chain plants, so ``k'`` ranges up to 5.  The
    lower bound on ``p`` keeps powers up to 5 within the ``2p`` guard.
    """
    rng = np.random.default_rng(seed)
    models = []
    while len(models) < count:
        p = int(rng.integers(3, 7))
        if len(models) % 2:
            plant = chain_plant(rng, p, int(rng.integers(p - 3, p)))
        else:
            q, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            plant = random_plant(rng, p, q, m)
        models.append(design_closed_loop(plant, np.eye(plant.q)))
    return models


def random_schur(rng, p, radius):
    a = rng.normal(size=(p, p))
    return a * (radius / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-12))
