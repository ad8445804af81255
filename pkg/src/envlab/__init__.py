"""envlab: exact multi-partite pure-state simulation of environmental
record redundancy and the envariance route to outcome probabilities."""

from .errors import EnvLabError
from .tensor_core import (
    DensityOperator,
    PureState,
    SchmidtDecomposition,
    SpaceLayout,
    SubsystemUnitary,
    apply_unitary,
    basis_state,
    controlled_shift,
    load_state,
    partial_trace,
    relative_states,
    save_state,
    schmidt_decompose,
    single_state,
    states_equal_up_to_global_phase,
    tensor_product,
)
from .info_measures import (
    FragmentSpec,
    RedundancyReport,
    basis_conditioned_mutual_information,
    mutual_information,
    redundancy_report,
    trace_distance,
    von_neumann_entropy,
)
from .measurement_models import (
    BranchSpec,
    ObserverOutcomeTable,
    broadcast_environment,
    build_branch_state,
    cascade_environment,
    conditional_probability,
    entangle_environment,
    observer_record,
    premeasure,
)
from .envariance import (
    EnvarianceVerdict,
    FineGrainingPlan,
    ProbabilityBound,
    born_probabilities,
    envariant_swap,
    equal_amplitude_probabilities,
    fine_grain,
    is_envariant,
    phase_sensitivity_witness,
    rational_bounds,
    schmidt_phase_unitary,
    subset_probability,
)

__version__ = "0.1.0"
