"""Classical maximal invariant set iteration and completeness checks.

The fixed-point iteration (one backward step per round, each involving a
projection) is the comparison baseline: expensive, with no termination
guarantee, but exact on convergence.  The outer bound composes nu-step
reachability with the maximal set of the disturbance-free problem; by the
order cancellation property the Minkowski-sum membership reduces to a
constraint on the input-history offset alone, so no explicit set sums are
ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT, Tolerances
from .invariance import LassoSpec, explicit_rcis, implicit_rcis
from .polytope import HPolytope, MinkowskiSumChain, hausdorff_distance
from .solvers import OPTIMAL, LpProblem, feasible_point, mat_power, solve_lp
from .systems import Horizon, LinearSystem, SafeSet, acc_disturbance


class OracleDisagreement(RuntimeError):
    """The closed-form and iterative emptiness verdicts differ: a bug."""


class OracleNotConverged(RuntimeError):
    pass


def pre(sys: LinearSystem, safe: SafeSet, C: HPolytope,
        tols: Tolerances = DEFAULT) -> HPolytope:
    """States with an admissible input whose successors all land in C."""
    n = sys.n
    if C.dim != n:
        raise ValueError("C must live in the state space")
    h = MinkowskiSumChain(n, [(sys.E, sys.W)]).support_rows(C.G, tols)
    G = np.vstack([safe.polytope.G,
                   np.hstack([C.G @ sys.A, C.G @ sys.B])])
    f = np.concatenate([safe.polytope.f, C.f - h])
    return HPolytope(G, f).project(n, tols=tols)


def maximal_rcis(sys: LinearSystem, safe: SafeSet,
                 max_iters: int | None = None, tol: float | None = None,
                 tols: Tolerances = DEFAULT):
    """Bertsekas-style fixed point: C_{k+1} = C_k intersect pre(C_k).

    Returns (set, converged).  The new iterate is contained in the previous
    one by construction, so convergence is the reverse containment within
    the given slack.  Non-termination within the budget is legal and simply
    flagged, matching the known behavior of the classical algorithm.
    """
    max_iters = tols.maximal_iters if max_iters is None else max_iters
    tol = tols.set_equality if tol is None else tol
    C = safe.project_states(tols)
    for _ in range(max_iters):
        if C.is_empty(tols):
            return HPolytope.empty(sys.n), True
        Cn = HPolytope.intersection(C, pre(sys, safe, C, tols))
        Cn = Cn.remove_redundancy(tols)
        if Cn.contains(C, tol, tols):
            return Cn, True
        C = Cn
    return C, False


@dataclass(frozen=True)
class NominalProblem:
    """Disturbance-free twin: same (A, B), safe set eroded by the full
    accumulated disturbance (state block only)."""

    system: LinearSystem
    safe: SafeSet


def nominal_problem(sys: LinearSystem, safe: SafeSet,
                    tols: Tolerances = DEFAULT) -> NominalProblem:
    n, m = sys.n, sys.m
    chain = acc_disturbance(sys, Horizon.INF, tols).lifted(n + m, 0)
    eroded = SafeSet(safe.polytope.erode(chain, tols), n, m)
    return NominalProblem(system=LinearSystem(sys.A, sys.B, tols=tols),
                          safe=eroded)


@dataclass
class FixedPointReport:
    feasible: bool
    witness: np.ndarray | None
    interior: bool
    margin: float


def fixed_point_report(nominal: NominalProblem,
                       tols: Tolerances = DEFAULT) -> FixedPointReport:
    """Existence and interiority of a nominal fixed point (x, u) with
    A x + B u = x inside the (eroded) safe set."""
    sysn, safe = nominal.system, nominal.safe
    n, m = sysn.n, sysn.m
    Eq = np.hstack([sysn.A - np.eye(n), sysn.B])
    G = np.vstack([safe.polytope.G, Eq, -Eq])
    f = np.concatenate([safe.polytope.f, np.zeros(2 * n)])
    witness = feasible_point(G, f, tols)
    if witness is None:
        return FixedPointReport(False, None, False, -np.inf)

    # largest uniform safe-row slack available on the fixed-point subspace
    P = safe.polytope.normalized()
    k = P.nrows
    Gm = np.vstack([
        np.hstack([P.G, np.ones((k, 1))]),
        np.hstack([Eq, np.zeros((n, 1))]),
        np.hstack([-Eq, np.zeros((n, 1))]),
        np.concatenate([np.zeros(n + m), [1.0]])[None, :],
    ])
    fm = np.concatenate([P.f, np.zeros(2 * n), [1.0]])
    c = np.concatenate([np.zeros(n + m), [1.0]])
    out = solve_lp(LpProblem(c=c, G=Gm, f=fm, sense="max"), tols)
    margin = out.value if out.status == OPTIMAL else 0.0
    return FixedPointReport(True, witness, margin > 1e-9, float(margin))


def outer_bound(sys: LinearSystem, safe: SafeSet,
                nominal_maximal: HPolytope | None = None,
                tols: Tolerances = DEFAULT) -> HPolytope:
    """Reach-into-the-nominal-maximal-set outer bound on any projected
    implicit invariant set.

    Variables (x, u_0..u_{nu-1}); per-step constraints keep the reachable
    tube in the safe set, and the terminal input-history offset must land in
    the maximal set of the nominal problem (the cancellation step removes
    the accumulated disturbance from both sides).
    """
    n, m = sys.n, sys.m
    nu = sys.nilpotency_index()
    nom = nominal_problem(sys, safe, tols)
    if nominal_maximal is None:
        nominal_maximal, ok = maximal_rcis(nom.system, nom.safe, tols=tols)
        if not ok:
            raise OracleNotConverged("nominal maximal set did not converge")
    if nominal_maximal.is_empty(tols):
        return HPolytope.empty(n)

    dim = n + nu * m
    Gx, Gu, fS = safe.G_x, safe.G_u, safe.f
    rows, rhs = [], []
    h = np.zeros(fS.size)
    At = np.eye(n)
    for t in range(nu):
        block = np.zeros((fS.size, dim))
        block[:, :n] = Gx @ At
        for j in range(t):
            block[:, n + j * m:n + (j + 1) * m] = Gx @ (
                mat_power(sys.A, t - 1 - j) @ sys.B)
        block[:, n + t * m:n + (t + 1) * m] += Gu
        rows.append(block)
        rhs.append(fS - h)
        term = MinkowskiSumChain(n, [(At @ sys.E, sys.W)])
        h = h + term.support_rows(Gx, tols)
        At = sys.A @ At
    offset = np.zeros((nominal_maximal.G.shape[0], dim))
    for j in range(nu):
        offset[:, n + j * m:n + (j + 1) * m] = nominal_maximal.G @ (
            mat_power(sys.A, nu - 1 - j) @ sys.B)
    rows.append(offset)
    rhs.append(nominal_maximal.f)
    big = HPolytope(np.vstack(rows), np.concatenate(rhs))
    return big.project(n, tols=tols)


@dataclass
class WeakCompletenessResult:
    both_empty: bool
    implicit_empty: bool
    outer_empty: bool
    fixed_point: FixedPointReport


def weak_completeness(sys: LinearSystem, safe: SafeSet,
                      tols: Tolerances = DEFAULT) -> WeakCompletenessResult:
    """Emptiness of the (0,1) closed-form set must match emptiness of the
    outer bound; disagreement signals an implementation bug, never a legal
    outcome."""
    ir = implicit_rcis(sys, safe, LassoSpec(0, 1, sys.m), tols)
    e_implicit = ir.is_empty(tols)
    outer = outer_bound(sys, safe, tols=tols)
    e_outer = outer.is_empty(tols)
    if e_implicit != e_outer:
        raise OracleDisagreement(
            f"(0,1) implicit set empty={e_implicit} but outer bound "
            f"empty={e_outer}")
    fp = fixed_point_report(nominal_problem(sys, safe, tols), tols)
    return WeakCompletenessResult(both_empty=e_implicit,
                                  implicit_empty=e_implicit,
                                  outer_empty=e_outer, fixed_point=fp)


@dataclass
class ConvergencePoint:
    tau: int
    distance: float


@dataclass
class ConvergenceReport:
    lam: int
    points: list
    target_rows: int
    fixed_point: FixedPointReport

    @property
    def precondition_ok(self) -> bool:
        return self.fixed_point.interior

    @property
    def distances(self) -> list:
        return [p.distance for p in self.points]


def convergence_curve(sys: LinearSystem, safe: SafeSet, lam: int, tau_list,
                      target: HPolytope | None = None,
                      tols: Tolerances = DEFAULT) -> ConvergenceReport:
    """Hausdorff distances of projected (tau, lam) sets to the outer bound
    for increasing tau.  The interior-fixed-point precondition is reported;
    without it the exponential convergence guarantee is void."""
    fp = fixed_point_report(nominal_problem(sys, safe, tols), tols)
    if target is None:
        target = outer_bound(sys, safe, tols=tols)
    pts = []
    for tau in tau_list:
        ex = explicit_rcis(implicit_rcis(sys, safe, LassoSpec(int(tau), lam, sys.m),
                                         tols), tols)
        pts.append(ConvergencePoint(int(tau),
                                    hausdorff_distance(ex, target, 1024, tols)))
    return ConvergenceReport(lam=lam, points=pts, target_rows=target.nrows,
                             fixed_point=fp)
