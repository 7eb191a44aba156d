"""Online use of implicit invariant sets.

Admissible inputs at a state are encoded as polytopes in three ways (a
separate input-sequence copy per disturbance vertex, the plain slice, or a
shared sequence across vertices); the supervisor projects a nominal command
onto the encoding with a strictly convex QP.  For time-varying safe sets
that only grow, filtering stays recursively feasible by falling back to the
invariant set built at the latest feasible time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .invariance import ImplicitRCIS, LassoSpec, implicit_rcis
from .polytope import HPolytope
from .solvers import QpProblem, solve_qp
from .systems import LinearSystem, SafeSet

VARIANTS = ("U1", "U2", "U3")

PASS = "pass"
CORRECTED = "corrected"
INFEASIBLE = "infeasible"


class SafeSetShrank(RuntimeError):
    """The time-varying safe set lost points; the feasibility guarantee
    requires monotone growth."""


class InitiallyInfeasible(RuntimeError):
    """No admissible input exists at the very first step."""


class RecursiveFeasibilityViolated(RuntimeError):
    """The stored fallback failed after a feasible start: by the growth
    guarantee this cannot happen, so it surfaces a modeling mistake."""


@dataclass
class AdmissibleEncoding:
    """Polytope over the variant's decision variables.

    U1: (u, v_1..v_N) with one sequence per disturbance vertex.
    U2: v alone (the slice of the implicit set at x).
    U3: (u, v) with one shared sequence.
    """

    variant: str
    polytope: HPolytope
    m: int
    dim_v: int
    n_vertices: int

    def is_empty(self, tols: Tolerances = DEFAULT) -> bool:
        return self.polytope.is_empty(tols)


def _w_vertices(sys: LinearSystem, tols: Tolerances) -> np.ndarray:
    cached = getattr(sys, "_w_vertex_cache", None)
    if cached is None:
        V = sys.W.vertices(tols)
        if V.shape[0] == 0:
            V = np.zeros((1, sys.d))
        sys._w_vertex_cache = V
        cached = V
    return cached


def admissible(x, ir: ImplicitRCIS, safe: SafeSet | None = None,
               variant: str = "U3",
               tols: Tolerances = DEFAULT) -> AdmissibleEncoding:
    """Admissible-input encoding at state x from the implicit set."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    safe = ir.safe_set if safe is None else safe
    sys = ir.system
    x = np.asarray(x, dtype=float).reshape(-1)
    n, m = sys.n, sys.m
    mq = ir.spec.dim_v
    GC = ir.polytope.G
    fC = ir.polytope.f
    GCx, GCv = GC[:, :n], GC[:, n:]
    Ax = sys.A @ x

    if variant == "U2":
        return AdmissibleEncoding("U2",
                                  HPolytope(GCv, fC - GCx @ x),
                                  m=m, dim_v=mq, n_vertices=0)

    WV = _w_vertices(sys, tols)
    N = WV.shape[0]
    srows = np.hstack([safe.G_u, np.zeros((safe.f.size,
                                           mq * (N if variant == "U1" else 1)))])
    srhs = safe.f - safe.G_x @ x
    rows = [srows]
    rhs = [srhs]
    for i, w in enumerate(WV):
        if variant == "U3":
            block = np.hstack([GCx @ sys.B, GCv])
        else:  # U1: separate copy of the sequence per vertex
            block = np.zeros((fC.size, m + N * mq))
            block[:, :m] = GCx @ sys.B
            block[:, m + i * mq:m + (i + 1) * mq] = GCv
        rows.append(block)
        rhs.append(fC - GCx @ (Ax + sys.E @ w))
    return AdmissibleEncoding(variant,
                              HPolytope(np.vstack(rows), np.concatenate(rhs)),
                              m=m, dim_v=mq, n_vertices=N)


@dataclass
class SupervisionResult:
    status: str
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    correction: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE


def supervise(x, u_nominal, ir: ImplicitRCIS, safe: SafeSet | None = None,
              variant: str = "U3",
              tols: Tolerances = DEFAULT) -> SupervisionResult:
    """Minimally intrusive safe input: nearest admissible u to the command.

    The squared-distance cost is regularized on the sequence block so the
    optimizer is unique; when the command is already admissible it is passed
    through bit-for-bit.
    """
    u_nominal = np.asarray(u_nominal, dtype=float).reshape(-1)
    enc = admissible(x, ir, safe, variant, tols)
    m = enc.m
    dim = enc.polytope.dim
    reg = tols.qp_reg
    Q = np.eye(dim) * (2.0 * reg)
    c = np.zeros(dim)
    if variant == "U2":
        H = ir.spec.H
        Q += 2.0 * (H.T @ H)
        c = -2.0 * (H.T @ u_nominal)
    else:
        Q[:m, :m] = 2.0 * np.eye(m)
        c[:m] = -2.0 * u_nominal
    out = solve_qp(QpProblem(Q=Q, c=c, G=enc.polytope.G, f=enc.polytope.f), tols)
    if not out.is_optimal:
        return SupervisionResult(INFEASIBLE)
    z = out.point
    u = (ir.spec.H @ z) if variant == "U2" else z[:m]
    v = z if variant == "U2" else z[m:m + enc.dim_v]
    dist = float(np.linalg.norm(u - u_nominal))
    if dist <= 1e-6:
        return SupervisionResult(PASS, u=u_nominal, v=v, correction=0.0)
    return SupervisionResult(CORRECTED, u=u, v=v, correction=dist)


@dataclass
class FilterState:
    """Bookkeeping for the time-varying filter: the invariant set built at
    the latest feasible time, and the safe-set history fingerprints."""

    system: LinearSystem
    spec: LassoSpec
    variant: str = "U3"
    t_star: int | None = None
    ir_star: ImplicitRCIS | None = None
    prev_safe: SafeSet | None = None
    history: list = field(default_factory=list)


@dataclass
class FilterOutput:
    u: np.ndarray
    status: str
    t_star: int
    fell_back: bool


def filter_step(fs: FilterState, t: int, safe_t: SafeSet, x, u_nominal,
                tols: Tolerances = DEFAULT) -> FilterOutput:
    """One supervision step against the freshly built invariant set, falling
    back to the stored one when the new problem is infeasible.

    Requires the safe set to contain its predecessor; a shrinking safe set
    voids the recursive-feasibility guarantee and raises.
    """
    if fs.prev_safe is not None:
        if not safe_t.polytope.contains(fs.prev_safe.polytope,
                                        tols.containment, tols):
            raise SafeSetShrank(f"safe set at t={t} lost points")
    ir_t = implicit_rcis(fs.system, safe_t, fs.spec, tols)
    res = supervise(x, u_nominal, ir_t, None, fs.variant, tols)
    fell_back = False
    if res.feasible:
        fs.t_star = t
        fs.ir_star = ir_t
    else:
        if fs.ir_star is None:
            raise InitiallyInfeasible(
                "no admissible input at the first filter step")
        res = supervise(x, u_nominal, fs.ir_star, None, fs.variant, tols)
        fell_back = True
        if not res.feasible:
            raise RecursiveFeasibilityViolated(
                f"fallback to t*={fs.t_star} infeasible at t={t}")
    fs.prev_safe = safe_t
    fs.history.append((t, safe_t.fingerprint()))
    return FilterOutput(u=res.u, status=res.status, t_star=fs.t_star,
                        fell_back=fell_back)
