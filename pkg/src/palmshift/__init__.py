"""palmshift: point-shifts of point processes on concrete groups.

Samplers, point-shift evaluation with honest finite-window censoring,
shift-graph foliation analysis, Monte Carlo verification of the
transport identities, and rooted-network embedding round trips, on
three concrete models: the euclidean spaces, the affine ax+b group and
the flat torus.
"""

from .groups import (
    ALGEBRA_TOL,
    Box,
    GroupModel,
    InfiniteMassError,
    ParallelogramD,
    Strip,
    UnrepresentableWindowError,
    ax_b,
    contains_points,
    contains_window,
    euclidean,
    full_torus,
    haar_mass,
    haar_mass_quadrature,
    strip_tail_mass,
    torus,
    translate_window,
)
from .sampling import (
    PointConfiguration,
    ProcessSpec,
    RngStream,
    lattice,
    palm_expectation_window_average,
    palm_sample_lattice,
    palm_sample_slivnyak,
    poisson,
    recenter,
    sample,
    separation_check,
)
from .shifts import (
    CensoredEvaluationError,
    NotBijectiveError,
    OrbitResult,
    PointShiftSpec,
    ShiftEvaluation,
    apply,
    evaluate_all,
    identity_shift,
    isomodularity_defect,
    iterate,
    nearest_neighbor,
    preimages,
    reverse,
    right_neighbor,
    strip_shift,
)
from .shift_graph import (
    CLASS_CENSORED,
    CLASS_FF,
    ComponentRecord,
    ShiftGraph,
    StripOrbitStats,
    build_graph,
    components,
    descendant_count,
    parallelogram_mass,
    strip_fixed_point_stats,
)
from .transport import (
    MeckeReport,
    PalmFunctional,
    Statistic,
    TransportFunction,
    TransportReport,
    ball_count_functional,
    default_battery,
    dual_palm_consistency,
    mass_flow_check,
    mecke_invariance_test,
    modular_jump_functional,
    reciprocal_vs_reverse_test,
    shift_edge_transport,
    unit_functional,
    verify_mass_transport,
    zero_transport,
)
from .networks import (
    NotEmbeddableError,
    RootedNetwork,
    network_from_config,
    parse_network,
    path_products,
    reconstruct,
    serialize_network,
    unimodularity_check,
)
from .experiments import ExperimentSpec, ReportRecord, StatRecord, emit, run

__version__ = "0.1.0"
