"""First-order boundary-window identifiability for quiver-valued VLMCs."""
from ._version import __version__
from .chain import (StationaryLaw, TransitionArray, is_irreducible, state_space, stationary,
                    stationary_derivative, transition_derivatives, transition_matrix)
from .config import AnalysisConfig, load_config, parse_config
from .errors import (ConfigError, DegeneracyError, DomainError, EstimatorDegeneracyError, InputError,
                     ModelValidityError, QuiverVLMCError)
from .expr import parse as parse_expr
from .fixtures import BranchingOracle, build_branching_fixture
from .informative import (InformativeVector, factorization_map, homogeneous_copy_maps, informative,
                          informative_jacobian, model_chart)
from .model import EDGE_HOMOGENEOUS, EXACT_DEPTH, ParamModel
from .quiver import Quiver, VisibleStateSpace
from .rank import (TangentBlock, chart_invariance_check, compare_depths, kernel_alignment, minimal_window,
                   numerical_rank, restricted_jacobian, selected_coordinate_criterion, sufficiency_report,
                   verify_minimal_global)
from .report import run_analysis
from .simulate import (Trajectory, empirical_informative, minimal_window_estimate, oracle_gap,
                       plugin_jacobian, simulate)
