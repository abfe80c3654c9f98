"""Dynamic watermarking for MIMO LTI systems with partial observations."""

from .attack import AttackSpec, AttackState, attack_step
from .detect import (
    DetectionReport,
    Verdict,
    build_psi_sequence,
    build_report,
    calibrate_threshold,
    deviation_stat_covariance,
    deviation_stat_watermark,
    hypothesis_test,
    lagged_correlation,
    legacy_lag1_stat,
    specialized_full_state_residual,
    window_nll_values,
    windowed_scatter,
    wishart_nll,
)
from .errors import WatermarkError
from .model import (
    ClosedLoopModel,
    PlantModel,
    assemble_closed_loop,
    attacked_input_map,
    compute_kprime,
    design_closed_loop,
    powered_input_map,
)
from .numerics import (
    cholesky,
    dlqr_gain,
    kalman_gain,
    solve_discrete_lyapunov,
    spectral_radius,
)
from .scenarios import (
    build_double_integrator,
    build_vehicle,
    experiment_matrix,
    replay_attack_preset,
    vehicle_attack_preset,
)
from .simulate import SimulationConfig, SimulationTrace, observer_consistency_view, run_simulation

__version__ = "0.1.0"
