"""stridelab: a numerics workbench for momentum-based bipedal walking.

Layers, bottom up:

- pendulum: point-mass reduced models (ALIP / LIP / polar) with closed-form
  step transitions and the reference-point transfer law for angular momentum.
- biped: a five-link planar walker pinned at the stance foot — exact
  mass/Coriolis/gravity terms, centroidal quantities, and the plastic
  impact-with-relabel map.
- control: foot-placement laws driven by predicted end-of-step angular
  momentum, virtual-constraint references, and two stance trackers
  (input-output linearizing, passivity-based).
- estimate: scalar Kalman filtering of the contact-referenced momentum.
- simlab: deterministic hybrid rollouts (fixed-step RK4 + bisection events),
  scenario configs, CSV/JSON artifacts.
- analysis: step-to-step error decomposition, disturbance transfer
  magnitudes, Poincare return-map machinery, prediction-fidelity metrics.
"""

from .errors import (
    StrideLabError,
    ValidationError,
    NumericalError,
    SingularMatrixError,
    InfeasibleImpactError,
    GaitFailureError,
    FixedPointError,
)
from .pendulum import (
    PendulumParams,
    AlipState,
    LipState,
    PolarPendulumState,
    wedge,
    alip_derivative,
    alip_transition,
    lip_transition,
    polar_derivative,
    transfer_angular_momentum,
    alip_reset,
    alip_energy,
)
from .biped import (
    LinkParams,
    PlanarBiped,
    BipedState,
    CentroidalState,
    mass_matrix,
    coriolis_matrix,
    gravity_vector,
    potential_energy,
    total_energy,
    forward_dynamics,
    com_position,
    com_velocity,
    com_acceleration,
    com_jacobian,
    swing_foot_position,
    swing_foot_velocity,
    swing_foot_jacobian,
    centroidal,
    relabel,
    impact_map,
    guard,
)
from .control import (
    GaitCommand,
    VirtualConstraintSpec,
    predict_L_end,
    foot_placement_deadbeat,
    foot_placement_asymptotic,
    foot_placement_vz_corrected,
    lateral_L_des,
    turning_frame,
    virtual_constraint_reference,
    virtual_constraint_derivatives,
    planar_outputs,
    io_linearizing_torque,
    passivity_tracking_torque,
)
from .estimate import (
    KalmanState,
    kf_predict,
    kf_correct,
    riccati_steady_state,
    kalman_demo_columns,
)
from .simlab import (
    IntegratorConfig,
    ScenarioConfig,
    ImpactEvent,
    StepRecord,
    HybridTrace,
    SineHeightProfile,
    WalkingController,
    assemble_posture,
    integrate_step,
    run_scenario,
    make_five_link_return_map,
    lip_vs_alip_comparison,
)
from .analysis import (
    ErrorDecomp,
    PoincareResult,
    error_terms,
    error_transfer_magnitude,
    alip_closed_loop_step_map,
    alip_closed_loop_poincare,
    find_fixed_point,
    numeric_poincare_jacobian,
    prediction_fidelity,
    varying_height_prediction,
)

__version__ = "0.1.0"

__all__ = [
    "StrideLabError",
    "ValidationError",
    "NumericalError",
    "SingularMatrixError",
    "InfeasibleImpactError",
    "GaitFailureError",
    "FixedPointError",
    "PendulumParams",
    "AlipState",
    "LipState",
    "PolarPendulumState",
    "wedge",
    "alip_derivative",
    "alip_transition",
    "lip_transition",
    "polar_derivative",
    "transfer_angular_momentum",
    "alip_reset",
    "alip_energy",
    "LinkParams",
    "PlanarBiped",
    "BipedState",
    "CentroidalState",
    "mass_matrix",
    "coriolis_matrix",
    "gravity_vector",
    "potential_energy",
    "total_energy",
    "forward_dynamics",
    "com_position",
    "com_velocity",
    "com_acceleration",
    "com_jacobian",
    "swing_foot_position",
    "swing_foot_velocity",
    "swing_foot_jacobian",
    "centroidal",
    "relabel",
    "impact_map",
    "guard",
    "GaitCommand",
    "VirtualConstraintSpec",
    "predict_L_end",
    "foot_placement_deadbeat",
    "foot_placement_asymptotic",
    "foot_placement_vz_corrected",
    "lateral_L_des",
    "turning_frame",
    "virtual_constraint_reference",
    "virtual_constraint_derivatives",
    "planar_outputs",
    "io_linearizing_torque",
    "passivity_tracking_torque",
    "KalmanState",
    "kf_predict",
    "kf_correct",
    "riccati_steady_state",
    "kalman_demo_columns",
    "IntegratorConfig",
    "ScenarioConfig",
    "ImpactEvent",
    "StepRecord",
    "HybridTrace",
    "SineHeightProfile",
    "WalkingController",
    "assemble_posture",
    "integrate_step",
    "run_scenario",
    "make_five_link_return_map",
    "lip_vs_alip_comparison",
    "ErrorDecomp",
    "PoincareResult",
    "error_terms",
    "error_transfer_magnitude",
    "alip_closed_loop_step_map",
    "alip_closed_loop_poincare",
    "find_fixed_point",
    "numeric_poincare_jacobian",
    "prediction_fidelity",
    "varying_height_prediction",
    "__version__",
]
