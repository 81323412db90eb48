"""Online inverse reinforcement learning for linear-quadratic experts with a
regularized history stack observer."""

from .basis import (
    BasisLayout,
    RegressorBlock,
    WeightVector,
    build_regressor_block,
    extract_solution,
    grad_sigma_S,
    sigma_quad,
    sigma_R2,
    sym_unvec,
    sym_vec,
)
from .control import CareSolution, ExpertPolicy, lqr_gain, observer_gain, solve_care
from .observer import (
    EquivalenceReport,
    GainConfig,
    LtiSystem,
    ObserverState,
    WeightUpdate,
    certify_equivalence,
    delta,
    observer_step,
    vdot_check,
)
from .scenarios import (
    Excitation,
    ExcitationSpec,
    QuadcopterParams,
    Scenario,
    academic_scenario,
    excitation_signal,
    quadcopter_scenario,
)
from .simulation import simulate_expert
from .stack import HistoryStack, StackEntry, StackPair, informativity_report

__version__ = "0.1.0"
