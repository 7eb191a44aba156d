"""Closed-form implicit invariant sets for nilpotent linear systems.

An input generator v+ = P v, u = H v with eventually periodic P turns the
infinite family of reachability constraints into finitely many row blocks:
one per step until the transient and one period have been exhausted.  The
resulting polytope over (x, v) is assembled directly from matrix products
and support-function erosions -- no iteration, no fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .polytope import (HPolytope, HyperBox, MinkowskiSumChain, UnboundedSet)
from .solvers import (OPTIMAL, LpProblem, NumericalFailure, feasible_point,
                      mat_power, solve_lp)
from .systems import LinearSystem, SafeSet, acc_disturbance


def lasso_matrices(tau: int, lam: int, m: int = 1):
    """Input-generator pair (P, H) producing (tau, lam)-lasso sequences.

    P is block-diagonal with one q x q shift register per input channel; the
    last row recirculates the entry that carries u_{t+tau}, so the generated
    sequence satisfies u_{t+lam} = u_t for all t >= tau.  H reads the first
    entry of each register.
    """
    if tau < 0 or lam < 1 or m < 1:
        raise ValueError("need tau >= 0, lam >= 1, m >= 1")
    q = tau + lam
    Pb = np.zeros((q, q))
    for i in range(q - 1):
        Pb[i, i + 1] = 1.0
    Pb[q - 1, tau] = 1.0
    Hb = np.zeros((1, q))
    Hb[0, 0] = 1.0
    P = np.kron(np.eye(m), Pb)
    H = np.kron(np.eye(m), Hb)

    ok, _ = verify_eventually_periodic(P, tau, lam)
    if not ok:
        raise NumericalFailure("lasso construction violated eventual periodicity")
    rng = np.random.default_rng(0)
    v = rng.normal(size=m * q)
    seq = [H @ mat_power(P, t) @ v for t in range(tau + 2 * lam + 1)]
    for t in range(tau, lam + tau + 1):
        if np.abs(seq[t + lam] - seq[t]).max() > 1e-9:
            raise NumericalFailure("lasso sequence is not eventually periodic")
    return P, H


def verify_eventually_periodic(P, tau: int, lam: int,
                               tol: float | None = None):
    """Check P^tau == P^(tau+lam) and report the minimal valid (tau*, lam*)
    with tau* <= tau and lam* dividing lam."""
    P = np.asarray(P, dtype=float)
    tol = DEFAULT.eventually_periodic if tol is None else tol
    scale = max(1.0, float(np.abs(P).max()))
    powers = [mat_power(P, t) for t in range(tau + lam + 1)]

    def matches(t, l):
        hi = mat_power(P, t + l) if t + l > tau + lam else powers[t + l]
        return np.abs(powers[t] - hi).max() <= tol * scale

    ok = matches(tau, lam)
    minimal = None
    if ok:
        divisors = [l for l in range(1, lam + 1) if lam % l == 0]
        for l in divisors:
            for t in range(tau + 1):
                if matches(t, l):
                    minimal = (t, l)
                    break
            if minimal:
                break
    return ok, minimal


@dataclass(frozen=True)
class LassoSpec:
    """Eventually periodic input parameterization: transient tau, period lam,
    register length q = tau + lam per input channel."""

    tau: int
    lam: int
    m: int
    P: np.ndarray = None
    H: np.ndarray = None

    def __post_init__(self):
        if self.P is None or self.H is None:
            P, H = lasso_matrices(self.tau, self.lam, self.m)
            object.__setattr__(self, "P", P)
            object.__setattr__(self, "H", H)
        else:
            P = np.atleast_2d(np.asarray(self.P, dtype=float))
            H = np.atleast_2d(np.asarray(self.H, dtype=float))
            object.__setattr__(self, "P", P)
            object.__setattr__(self, "H", H)
            ok, _ = verify_eventually_periodic(P, self.tau, self.lam)
            if not ok:
                raise ValueError("P is not eventually periodic for (tau, lam)")
            if H.shape != (self.m, P.shape[0]):
                raise ValueError("H must be m x (m q)")
            if np.linalg.matrix_rank(H) < self.m:
                raise ValueError("H must be surjective")

    @property
    def q(self) -> int:
        return self.tau + self.lam

    @property
    def dim_v(self) -> int:
        return self.P.shape[0]


@dataclass
class ImplicitRCIS:
    """Polytope over (x, v) whose state projection is an invariant set.

    Carries the system, safe set and generator used to build it, so runtime
    consumers can robustify against the same disturbance model.
    """

    polytope: HPolytope
    spec: LassoSpec
    nu: int
    system: LinearSystem
    safe_set: SafeSet
    num_blocks: int
    safe_fingerprint: str = ""

    @property
    def n(self) -> int:
        return self.system.n

    def is_empty(self, tols: Tolerances = DEFAULT) -> bool:
        return self.polytope.is_empty(tols)

    def slice_at(self, x: np.ndarray) -> HPolytope:
        """Feasible input-sequence set {v | (x, v) in C_xv}."""
        n = self.n
        G = self.polytope.G
        return HPolytope(G[:, n:], self.polytope.f - G[:, :n] @ np.asarray(x, float))

    def contains_pair(self, x, v, tol=None) -> bool:
        return self.polytope.contains_point(np.concatenate([np.asarray(x, float),
                                                            np.asarray(v, float)]), tol)


def implicit_rcis(sys: LinearSystem, safe: SafeSet, spec: LassoSpec,
                  tols: Tolerances = DEFAULT) -> ImplicitRCIS:
    """Assemble the closed-form implicit invariant set row blocks.

    Exactly nu + tau + lam blocks: for t < nu the reach expression keeps its
    x coefficient and the safe set is eroded by the t-step accumulated
    disturbance; afterwards the x coefficient is identically zero and the
    erosion uses the full (nu-step) accumulation.  Emptiness of the result
    is legal and left to the caller to inspect.
    """
    n, m = sys.n, sys.m
    if safe.n != n or safe.m != m:
        raise ValueError("safe set does not match system dimensions")
    if spec.m != m:
        raise ValueError("spec input count does not match system")
    nu = sys.nilpotency_index()
    q = spec.q
    mq = spec.dim_v
    Gx, Gu, fS = safe.G_x, safe.G_u, safe.f
    k = fS.size

    blocks_G = []
    blocks_f = []
    h = np.zeros(k)           # erosion offsets for the current horizon
    At = np.eye(n)            # A^t
    D = spec.H.copy()         # H P^t
    C = np.zeros((n, mq))     # sum_{i=1..t} A^{i-1} B H P^{t-i}
    for t in range(nu + q):
        Xcoef = At if t < nu else np.zeros((n, n))
        Gblock = np.hstack([Gx @ Xcoef, Gx @ C + Gu @ D])
        blocks_G.append(Gblock)
        blocks_f.append(fS - h)
        if t < nu:  # accumulate the (t+1)-th disturbance term
            term = MinkowskiSumChain(n, [(At @ sys.E, sys.W)])
            h = h + term.support_rows(Gx, tols)
        C = sys.A @ C + sys.B @ D
        D = D @ spec.P
        At = sys.A @ At

    poly = HPolytope(np.vstack(blocks_G), np.concatenate(blocks_f))
    return ImplicitRCIS(polytope=poly, spec=spec, nu=nu, system=sys,
                        safe_set=safe, num_blocks=nu + q,
                        safe_fingerprint=safe.fingerprint())


def explicit_rcis(ir: ImplicitRCIS, tols: Tolerances = DEFAULT) -> HPolytope:
    """Project the implicit set onto the state coordinates."""
    return ir.polytope.project(ir.n, tols=tols)


@dataclass
class InvarianceReport:
    total: int
    violations: int
    violating_points: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def invariance_check(sys: LinearSystem, safe: SafeSet, C: HPolytope,
                     samples: int = 200, seed: int = 0,
                     tols: Tolerances = DEFAULT) -> InvarianceReport:
    """Sampled certificate that C is controlled invariant within the safe set.

    For boundary-biased samples x in C, an input u must exist with
    (x, u) in S_xu and A x + B u + E w in C for every vertex w of W; each
    sample is one feasibility LP in u.
    """
    if C.is_empty(tols):
        return InvarianceReport(total=0, violations=0)
    pts = _sample_points(C, samples, seed, tols)
    WV = sys.W.vertices(tols)
    if WV.shape[0] == 0:
        WV = np.zeros((1, sys.d))
    GC, fC = C.G, C.f
    bad = []
    for x in pts:
        rows = [safe.G_u]
        rhs = [safe.f - safe.G_x @ x]
        Ax = sys.A @ x
        for w in WV:
            rows.append(GC @ sys.B)
            rhs.append(fC - GC @ (Ax + sys.E @ w))
        u = feasible_point(np.vstack(rows), np.concatenate(rhs), tols)
        if u is None:
            bad.append(x)
    return InvarianceReport(total=len(pts), violations=len(bad),
                            violating_points=bad)


def _sample_points(C: HPolytope, count: int, seed: int,
                   tols: Tolerances = DEFAULT, boundary_bias: float = 0.7):
    """Boundary-biased interior sampling by ray shooting from a center."""
    center, margin = C.interior_point(tols)
    if center is None:
        return []
    rng = np.random.default_rng(seed)
    n = C.dim
    out = []
    scale = max(1.0, float(np.abs(C.f).max(initial=1.0)))
    for _ in range(count):
        d = rng.normal(size=n)
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            continue
        d /= nd
        denom = C.G @ d
        num = C.f - C.G @ center
        pos = denom > 1e-12 * scale
        smax = float(np.min(num[pos] / denom[pos])) if np.any(pos) else 1.0
        smax = max(smax, 0.0)
        frac = 1.0 - (1.0 - boundary_bias) * rng.random() ** 2
        out.append(center + frac * smax * d)
    return out


def theta_pairs(q: int):
    """All (tau, lam) with tau + lam = q; exactly q of them."""
    if q < 1:
        raise ValueError("q must be positive")
    return [(tau, q - tau) for tau in range(q)]


@dataclass
class BigMUnion:
    """Big-M lift of a union of same-length implicit sets.

    Constraint blocks G_i z <= f_i + (1 - zeta_i) M_i with binary selector
    zeta summing to one; M_i is sized row-wise from the support of each row
    over the shared bounding box of all components, plus a 10% margin.
    """

    components: list
    big_m: list            # per-component row-wise M vectors
    box: HyperBox | None   # shared bounding box (None if all empty)

    @property
    def M(self) -> float:
        vals = [float(v.max()) for v in self.big_m if v.size]
        return max(vals, default=0.0)

    def member(self, x, v, tol: float | None = None) -> tuple[bool, int | None]:
        """Mixed-integer membership by explicit enumeration of the selector."""
        z = np.concatenate([np.asarray(x, float).reshape(-1),
                            np.asarray(v, float).reshape(-1)])
        tol = DEFAULT.containment if tol is None else tol
        for i, comp in enumerate(self.components):
            if comp.is_empty():
                continue
            ok = True
            for j, other in enumerate(self.components):
                P = other.polytope
                slackM = np.zeros(P.nrows) if j == i else self.big_m[j]
                scale = max(1.0, float(np.abs(P.f).max(initial=1.0)))
                if np.max(P.G @ z - P.f - slackM) > tol * scale:
                    ok = False
                    break
            if ok:
                return True, i
        return False, None


def member_bigm(bu: BigMUnion, x, v, tol: float | None = None):
    return bu.member(x, v, tol)


def hierarchy(sys: LinearSystem, safe: SafeSet, q: int,
              tols: Tolerances = DEFAULT):
    """All q implicit sets of lasso length q plus their big-M union.

    Empty components are kept (flagged through ``is_empty``) so the pair
    indexing stays aligned with `theta_pairs`.
    """
    comps = [implicit_rcis(sys, safe, LassoSpec(tau, lam, sys.m), tols)
             for tau, lam in theta_pairs(q)]
    nonempty = [c for c in comps if not c.is_empty(tols)]
    box = None
    if nonempty:
        los, his = [], []
        for c in nonempty:
            b = c.polytope.bounding_box(tols)
            los.append(b.lower)
            his.append(b.upper)
        box = HyperBox(np.min(los, axis=0), np.max(his, axis=0))
    big_m = []
    for c in comps:
        P = c.polytope
        if box is None:
            big_m.append(np.ones(P.nrows))
            continue
        sup = np.array([box.support(g) for g in P.G])
        big_m.append(1.1 * np.maximum(sup - P.f, 1.0))
    return comps, BigMUnion(components=comps, big_m=big_m, box=box)


# ---------------------------------------------------------------------------
# safe hyper-boxes
# ---------------------------------------------------------------------------


class BoxInfeasible(RuntimeError):
    """The hyper-box program has no feasible (box, input-sequence) pair."""


@dataclass
class BoxResult:
    box: HyperBox
    v: np.ndarray
    degenerate: bool     # some optimal width is (numerically) zero
    objective: float


def _box_program_rows(sys: LinearSystem, Sx: HPolytope, spec: LassoSpec,
                      input_box: HyperBox | None, tols: Tolerances):
    """Constraint polytope over (lb, ub, v): the box image A^t [lb, ub]
    shifted by the generated inputs must stay in the eroded state constraints
    for t < nu, and the pure input offsets afterwards."""
    n, m = sys.n, sys.m
    nu = sys.nilpotency_index()
    q = spec.q
    mq = spec.dim_v
    dim = 2 * n + mq
    GS, fS = Sx.G, Sx.f
    rows, rhs = [], []
    h = np.zeros(fS.size)
    At = np.eye(n)
    D = spec.H.copy()
    C = np.zeros((n, mq))
    C_lam = None
    A_lam = None
    for t in range(nu + q):
        if t == spec.lam:
            C_lam, A_lam = C.copy(), At.copy()
        f_er = fS - h
        for g, b in zip(GS, f_er):
            row = np.zeros(dim)
            if t < nu:
                # support of A^t [lb, ub] along g is linear in (lb, ub):
                # negative components of a ride on lb, positive ones on ub
                a = At.T @ g
                row[:n] = np.minimum(a, 0.0)
                row[n:2 * n] = np.maximum(a, 0.0)
            row[2 * n:] = g @ C
            rows.append(row)
            rhs.append(b)
        if input_box is not None:
            for j in range(m):
                row = np.zeros(dim)
                row[2 * n:] = D[j]
                rows.append(row.copy())
                rhs.append(input_box.upper[j])
                row[2 * n:] = -D[j]
                rows.append(row)
                rhs.append(-input_box.lower[j])
        if t < nu:
            term = MinkowskiSumChain(n, [(At @ sys.E, sys.W)])
            h = h + term.support_rows(GS, tols)
        C = sys.A @ C + sys.B @ D
        D = D @ spec.P
        At = sys.A @ At
    if spec.tau == 0:
        # pure periodic inputs: force the box to recur after one period, so
        # lam = 1 yields invariant and lam > 1 recurrent hyper-boxes
        if C_lam is None:
            C_lam, A_lam = C.copy(), At.copy()
        h_lam = acc_disturbance(sys, spec.lam, tols).support_rows(np.eye(n), tols)
        h_lam_neg = acc_disturbance(sys, spec.lam, tols).support_rows(-np.eye(n), tols)
        for j in range(n):
            a = A_lam.T[:, j]
            row = np.zeros(dim)
            row[:n] = np.minimum(a, 0.0)
            row[n:2 * n] = np.maximum(a, 0.0)
            row[n + j] -= 1.0
            row[2 * n:] = C_lam[j]
            rows.append(row)
            rhs.append(-h_lam[j])
            row = np.zeros(dim)
            row[:n] = np.minimum(-a, 0.0)
            row[n:2 * n] = np.maximum(-a, 0.0)
            row[j] += 1.0
            row[2 * n:] = -C_lam[j]
            rows.append(row)
            rhs.append(-h_lam_neg[j])
    # box validity lb <= ub
    for i in range(n):
        row = np.zeros(dim)
        row[i] = 1.0
        row[n + i] = -1.0
        rows.append(row)
        rhs.append(0.0)
    return HPolytope(np.vstack(rows), np.asarray(rhs))


def safe_box(sys: LinearSystem, Sx: HPolytope, spec: LassoSpec,
             mode: str = "geometric-mean", input_box: HyperBox | None = None,
             fixed_box: HyperBox | None = None,
             tols: Tolerances = DEFAULT) -> BoxResult:
    """Largest hyper-box whose trajectories stay in Sx under lasso inputs.

    Modes: "geometric-mean" maximizes sum(log(widths)) by a damped-Newton
    barrier method polished with one LP step; "sum-width" is a single LP;
    "feasibility" only decides whether the given fixed_box admits a valid
    input sequence.
    """
    n = sys.n
    CB = _box_program_rows(sys, Sx, spec, input_box, tols)
    dim = CB.dim
    mq = dim - 2 * n

    if mode == "feasibility":
        if fixed_box is None:
            raise ValueError("feasibility mode needs fixed_box")
        z0 = np.concatenate([fixed_box.lower, fixed_box.upper])
        Gv = CB.G[:, 2 * n:]
        fv = CB.f - CB.G[:, :2 * n] @ z0
        v = feasible_point(Gv, fv, tols)
        if v is None:
            raise BoxInfeasible("no admissible input sequence for this box")
        return BoxResult(box=fixed_box, v=v, degenerate=False, objective=0.0)

    if CB.is_empty(tols):
        raise BoxInfeasible("box program constraints are empty")

    # sum of widths: c = (-1 on lb, +1 on ub)
    c_width = np.concatenate([-np.ones(n), np.ones(n), np.zeros(mq)])
    if mode == "sum-width":
        out = solve_lp(LpProblem(c=c_width, G=CB.G, f=CB.f, sense="max"), tols)
        if out.status != OPTIMAL:
            raise BoxInfeasible(f"sum-width program is {out.status}")
        z = out.point
        return _box_result(z, n, float(out.value))

    if mode != "geometric-mean":
        raise ValueError(f"unknown mode {mode!r}")

    z = _max_log_width(CB, n, tols)
    if z is None:
        # no strictly positive widths exist; fall back to the width LP so a
        # sensible (typically degenerate) box is still reported
        out = solve_lp(LpProblem(c=c_width, G=CB.G, f=CB.f, sense="max"), tols)
        if out.status != OPTIMAL:
            raise BoxInfeasible(f"width program is {out.status}")
        return _box_result(out.point, n, -np.inf)
    w = z[n:2 * n] - z[:n]
    # one LP polish along the gradient of the log objective
    if np.all(w > 1e-9):
        grad = np.zeros(dim)
        grad[:n] = -1.0 / w
        grad[n:2 * n] = 1.0 / w
        out = solve_lp(LpProblem(c=grad, G=CB.G, f=CB.f, sense="max"), tols)
        if out.is_optimal:
            z2 = out.point
            w2 = z2[n:2 * n] - z2[:n]
            if np.all(w2 > 0) and np.sum(np.log(w2)) >= np.sum(np.log(w)):
                z = z2
    wid = z[n:2 * n] - z[:n]
    obj = float(np.sum(np.log(np.maximum(wid, 1e-300))))
    return _box_result(z, n, obj)


def _box_result(z: np.ndarray, n: int, obj: float) -> BoxResult:
    lb, ub = z[:n], np.maximum(z[:n], z[n:2 * n])
    widths = ub - lb
    degenerate = bool(np.any(widths <= 1e-9 * max(1.0, np.abs(ub).max(initial=1.0))))
    return BoxResult(box=HyperBox(lb, ub), v=z[2 * n:], degenerate=degenerate,
                     objective=obj)


def _max_log_width(CB: HPolytope, n: int, tols: Tolerances) -> np.ndarray | None:
    """Damped-Newton barrier maximization of sum(log(ub - lb)) over CB.

    Returns None when the program has no strict interior with positive
    widths (degenerate boxes only)."""
    G, f = CB.G, CB.f
    dim = CB.dim
    z, margin = CB.interior_point(tols)
    if z is None:
        raise BoxInfeasible("box program constraints are empty")
    Wsel = np.zeros((n, dim))
    Wsel[:, :n] = -np.eye(n)
    Wsel[:, n:2 * n] = np.eye(n)

    if np.any(Wsel @ z <= 0) or np.any(f - G @ z <= 0):
        return None

    t_bar = 1.0
    for _ in range(12):
        z = _newton_inner(z, t_bar, G, f, Wsel, tols)
        if G.shape[0] / t_bar < 1e-9:
            break
        t_bar *= 10.0
    return z


def _newton_inner(z, t_bar, G, f, Wsel, tols: Tolerances):
    n_w = Wsel.shape[0]
    prev = None
    for _ in range(tols.newton_max_steps):
        w = Wsel @ z
        s = f - G @ z
        val = -t_bar * np.sum(np.log(w)) - np.sum(np.log(s))
        grad = -t_bar * (Wsel.T @ (1.0 / w)) + G.T @ (1.0 / s)
        Hss = (G / s[:, None]).T @ (G / s[:, None])
        Hww = t_bar * (Wsel / w[:, None]).T @ (Wsel / w[:, None])
        Hmat = Hss + Hww
        try:
            step = np.linalg.solve(Hmat + 1e-12 * np.eye(Hmat.shape[0]), -grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(Hmat, -grad, rcond=None)
        # backtracking line search keeping strict feasibility
        alpha = 1.0
        for _ in range(60):
            zn = z + alpha * step
            if np.all(Wsel @ zn > 0) and np.all(f - G @ zn > 0):
                wn = Wsel @ zn
                sn = f - G @ zn
                vn = -t_bar * np.sum(np.log(wn)) - np.sum(np.log(sn))
                if vn < val - 1e-12:
                    break
            alpha *= 0.5
        else:
            return z
        z = zn
        if prev is not None and abs(prev - vn) <= tols.newton_obj_change * max(1.0, abs(vn)):
            return z
        prev = vn
    return z
