"""Implicit controlled invariant sets for discrete-time linear systems."""

from .config import DEFAULT, Tolerances
from .invariance import (BigMUnion, BoxResult, ImplicitRCIS, LassoSpec,
                         explicit_rcis, hierarchy, implicit_rcis,
                         invariance_check, lasso_matrices, member_bigm,
                         safe_box, theta_pairs, verify_eventually_periodic)
from .oracle import (FixedPointReport, NominalProblem, convergence_curve,
                     fixed_point_report, maximal_rcis, nominal_problem,
                     outer_bound, pre, weak_completeness)
from .polytope import (HPolytope, HyperBox, MinkowskiSumChain,
                       ProjectionExplosion, UnboundedSet,
                       VertexEnumerationTooLarge, hausdorff_distance,
                       mutual_containment)
from .runtime import (AdmissibleEncoding, FilterOutput, FilterState,
                      InitiallyInfeasible, SafeSetShrank, SupervisionResult,
                      admissible, filter_step, supervise)
from .solvers import (LpOutcome, LpProblem, NumericalFailure, QpOutcome,
                      QpProblem, mat_power, solve_lp, solve_qp)
from .systems import (Horizon, LinearSystem, NotControllable, ReachSet,
                      SafeSet, acc_disturbance, controllability_indices,
                      nilpotentize, reach_set)

__version__ = "0.1.0"
