import numpy as np
import pytest

from dynwatermark.model import compute_kprime
from dynwatermark.scenarios import (
    VEHICLE_DESIGN,
    WindModel,
    augment_with_wind,
    build_double_integrator,
    build_vehicle,
    experiment_matrix,
    replay_attack_preset,
    vehicle_attack_preset,
    vehicle_attacker_dynamics,
)


def test_double_integrator_needs_two_steps(double_integrator):
    plant = build_double_integrator()
    np.testing.assert_array_equal(plant.a, [[1.0, 1.0], [0.0, 1.0]])
    for k in ([[-0.3, -1.0]], [[-1.0, -2.0]], double_integrator.k_gain):
        assert compute_kprime(plant.a, plant.b, plant.c, np.asarray(k)) == 1
    assert double_integrator.lag == 2


def test_vehicle_matrices():
    plant = build_vehicle()
    assert (plant.p, plant.q, plant.m) == (5, 2, 3)
    assert plant.a[1, 0] == 0.5 and plant.a[1, 3] == 1 / 40 and plant.a[2, 4] == 0.5
    assert plant.b[0, 0] == 1 / 400 and plant.b[1, 0] == 1 / 2400 and plant.b[2, 1] == 1 / 800
    np.testing.assert_array_equal(plant.c, np.hstack([np.eye(3), np.zeros((3, 2))]))
    np.testing.assert_array_equal(plant.sigma_w, 1e-8 * np.eye(5))
    np.testing.assert_array_equal(plant.sigma_z, 1e-5 * np.eye(3))


def test_wind_augmentation():
    calm, windy = build_vehicle(), build_vehicle(include_wind=True)
    assert windy.p == 6
    np.testing.assert_array_equal(windy.a[:5, :5], calm.a)
    assert windy.a[5, 5] == 0.9 and windy.a[1, 5] == 1.0
    assert np.count_nonzero(windy.a[:5, 5]) == 1 and not windy.a[5, :5].any()
    assert not windy.b[5].any() and not windy.c[:, 5].any()
    assert windy.sigma_w[5, 5] == 2e-6


def test_wind_does_not_change_kprime(vehicle, vehicle_wind):
    assert vehicle.kprime == vehicle_wind.kprime == 0


def test_wind_model_validation():
    with pytest.raises(ValueError):
        WindModel(pole=1.0)
    with pytest.raises(ValueError):
        WindModel(chi_var=-1.0)
    plant = augment_with_wind(build_double_integrator(), WindModel(pole=0.5, chi_var=1.0, coupling_row=0))
    assert plant.a[0, 2] == 1.0 and plant.a[2, 2] == 0.5


def test_attack_presets(double_integrator):
    spec = replay_attack_preset(double_integrator.plant)
    assert spec.alpha == -1.0
    np.testing.assert_array_equal(spec.sigma_o, double_integrator.plant.sigma_w)
    np.testing.assert_array_equal(spec.sigma_s, double_integrator.plant.sigma_z)
    veh = vehicle_attack_preset()
    assert veh.alpha == -0.6 and veh.state_dim == 5 and veh.output_dim == 3
    np.testing.assert_array_equal(veh.sigma_o, 1e-8 * np.eye(5))


def test_attacker_dynamics_ignore_wind(vehicle, vehicle_wind):
    a, c = vehicle_attacker_dynamics(vehicle)
    np.testing.assert_allclose(a, vehicle.closed_a, atol=1e-15)
    a_w, _ = vehicle_attacker_dynamics(vehicle_wind)
    assert a_w.shape == (5, 5) and c.shape == (3, 5)


def test_experiment_matrix():
    configs = experiment_matrix(seed=4, horizon=100)
    assert [c.label for c in configs] == [
        "no-wind-model/no-attack", "no-wind-model/attack", "wind-model/no-attack", "wind-model/attack",
    ]
    assert all(c.world.p == 6 and c.seed == 4 and c.horizon == 100 for c in configs)
    assert [c.detector.plant.p for c in configs] == [5, 5, 6, 6]
    assert [c.attack is None for c in configs] == [True, False, True, False]
    for c in configs:
        np.testing.assert_array_equal(c.detector.sigma_e, VEHICLE_DESIGN.sigma_e * np.eye(2))
