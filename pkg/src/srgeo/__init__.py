"""Sub-Riemannian geometry toolkit.

Exact polynomial frames, bracket flags, nilpotent approximations,
Carnot-Caratheodory distances, horizontal perimeters, and the blowup of
finite-perimeter sets toward vertical halfspaces of the tangent group.
"""

from .blowup import BlowupOptions, blowup_run, l1loc_gap, monotonicity_pairing, rescale_set
from .builtins import BUILTIN_NAMES, make_structure
from .carnot import (
    GroupLaw,
    group_law_from_flows,
    halfspace_perimeter_unit_ball,
    left_invariance_check,
    vertical_halfspace,
)
from .ccdist import (
    BallMask,
    ControlPath,
    DistanceResult,
    SolverOptions,
    ball_mask,
    cc_distance_field,
    control_graph_distance,
    distance,
    distance_many,
    tangent_convergence,
)
from .fields import (
    FlowResult,
    PolyVectorField,
    divergence,
    flow,
    flow_batch,
    lie_bracket,
    pair_distributional,
)
from .grammar import (
    format_polynomial,
    format_vector_field,
    parse_polynomial,
    parse_vector_field,
)
from .grids import Box, GaussianBump, GridFunction, PolyBump
from .metric import MetricEval, min_norm_controls, quadratic_form, scalar_product
from .nilpotent import (
    Grading,
    NilpotentApprox,
    dilate,
    dilation_rescale,
    homogeneous_decompose,
    monomial_field_order,
    nilpotency_check,
    remainder_rescale,
    truncate,
)
from .perimeter import (
    PerimeterReport,
    SetRep,
    density_ratio,
    dual_normal,
    flow_estimator,
    geometric_normal,
    mollified_estimator,
    reduced_boundary_score,
    surface_estimator,
)
from .poly import Polynomial
from .structure import (
    PointFlag,
    SubRiemannianStructure,
    classify_regularity,
    growth_vector,
    point_flag,
)

__version__ = "0.1.0"
