"""planarflow: Helmholtz decompositions, hidden Hamiltonian structure and
closed-orbit exclusion for planar dynamical systems."""

from .errors import (ConfigError, DegenerateODE, DomainError, ExprSyntaxError,
                     NoAntiderivative, NoClosureWithinTmax, NotClosedForm,
                     NotOrthogonal, PathCrossesSingularity, PlanarflowError,
                     SingularDiffusion, SingularJacobian, SolverDiverged,
                     UnknownIdentifier)
from .expr import (Abs, Add, Constant, Cos, Div, Exp, Expr, Ln, Mul, Neg,
                   Parameter, Point2, Pow, Sin, Sqrt, Sub, T, Variable, X1, X2,
                   bind_params, compile_fn, compile_pair, differentiate,
                   evaluate, free_names, serialize, substitute)
from .parser import parse
from .simplify import ZeroCheck, is_identically_zero, is_zero_expr, simplify
from .calculus import antiderivative
from .grid import Grid2
from .geometry import (Mapping2, Matrix2, Matrix2Field, PolarFactors,
                       VectorField2, compose, jacobian, metric_tensor,
                       polar_decompose, polar_factors_field, pushforward,
                       transform_noise, transform_system)
from .helmholtz import (CARTESIAN, Curvilinear, GridField, HelmholtzPair,
                        LienardSpec, ModalSpec, grid_reconstruct,
                        lienard_decompose, modal_decompose, numeric_decompose,
                        reconstruct)
from .hamiltonian import (CriterionReport, HamiltonianRecovery, LociReport,
                          check_criterion_I, check_criterion_II,
                          recover_hamiltonian, singular_loci)
from .orbits import (AnsatzSpec, ClosedOrbitReport, ExclusionReport,
                     NSolution, OdeDescriptor, assemble_U, compute_omega,
                     corollary_ode_rhs, exclusion_report, find_closed_orbit,
                     find_closed_orbits, integrate_rk4, loop_integral,
                     positive_definite_mask, solve_N, verify_crossings)
from .langevin import (Ensemble, LangevinSpec, StatsReport, compare_stats,
                       map_ensemble, simulate)
from .config import SystemConfig, load_config
from .registry import EXAMPLE_IDS, example_config

__version__ = "0.1.0"
