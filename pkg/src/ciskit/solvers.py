"""Dense linear-programming and convex-QP solvers, plus small matrix helpers.

Self-contained on purpose: every set query in the package reduces to LPs of
the form ``min c.x  s.t.  G x <= f`` with free ``x``, and the supervision
step to a strictly convex QP over the same kind of feasible set.  The
problems are low-dimensional (tens of variables) but can carry thousands of
rows, so the simplex below works on the dual, whose tableau has one row per
primal variable.  A conventional two-phase primal tableau is kept as a slow
fallback for the rare degenerate cases where recovering the primal point
from the dual basis fails verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances, lp_pivot_budget

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class NumericalFailure(RuntimeError):
    """The iteration budget was exhausted before reaching a conclusion."""


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-d array")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return M


def _as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def mat_power(M, k: int) -> np.ndarray:
    """k-fold matrix product by plain repeated multiplication; k=0 gives I."""
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if k < 0:
        raise ValueError("exponent must be nonnegative")
    out = np.eye(M.shape[0])
    for _ in range(int(k)):
        out = out @ M
    return out


@dataclass(frozen=True)
class LpProblem:
    """min (or max) c.x subject to G x <= f, x free."""

    c: np.ndarray
    G: np.ndarray
    f: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        object.__setattr__(self, "c", _as_vector(self.c))
        object.__setattr__(self, "G", _as_matrix(self.G))
        object.__setattr__(self, "f", _as_vector(self.f))
        if self.G.shape[1] != self.c.size or self.G.shape[0] != self.f.size:
            raise ValueError("inconsistent LP dimensions")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")


@dataclass(frozen=True)
class LpOutcome:
    status: str
    value: float = np.nan
    point: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 z.Q z + c.z subject to G z <= f."""

    Q: np.ndarray
    c: np.ndarray
    G: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q)
        Qs = 0.5 * (Q + Q.T)
        object.__setattr__(self, "Q", Qs)
        object.__setattr__(self, "c", _as_vector(self.c))
        object.__setattr__(self, "G", _as_matrix(self.G))
        object.__setattr__(self, "f", _as_vector(self.f))
        if Qs.shape[0] != self.c.size:
            raise ValueError("inconsistent QP dimensions")
        if self.G.shape[1] != self.c.size or self.G.shape[0] != self.f.size:
            raise ValueError("inconsistent QP dimensions")
        scale = max(1.0, float(np.abs(Qs).max()))
        if np.linalg.eigvalsh(Qs).min() < -1e-9 * scale:
            raise ValueError("Q must be positive semidefinite")


@dataclass(frozen=True)
class QpOutcome:
    status: str
    value: float = np.nan
    point: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# two-phase tableau simplex on standard equality form
# ---------------------------------------------------------------------------


@dataclass
class _EqResult:
    status: str
    z: np.ndarray | None = None
    value: float = np.nan
    basis: list = field(default_factory=list)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    coeffs = T[:, col].copy()
    coeffs[row] = 0.0
    T -= np.outer(coeffs, T[row])


def _simplex_eq(c, A, b, tols: Tolerances = DEFAULT) -> _EqResult:
    """min c.z  s.t.  A z = b, z >= 0 via a dense two-phase tableau.

    Dantzig pricing with a switch to Bland's rule after `tols.bland_after`
    degenerate pivots; hard pivot budget from `lp_pivot_budget`.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    budget = lp_pivot_budget(m, n + m)
    eps = 1e-10

    # phase 1: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    allowed = n + m

    def run(allowed_cols):
        nonlocal pivots
        degenerate = 0
        while True:
            red = T[-1, :allowed_cols]
            if degenerate <= tols.bland_after:
                j = int(np.argmin(red))
                if red[j] >= -eps:
                    return OPTIMAL
            else:
                neg = np.flatnonzero(red < -eps)
                if neg.size == 0:
                    return OPTIMAL
                j = int(neg[0])
            col = T[:m, j]
            pos = col > eps
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            r = int(np.argmin(ratios))
            if degenerate > tols.bland_after:
                best = ratios[r]
                ties = np.flatnonzero(ratios <= best + eps)
                r = int(min(ties, key=lambda i: basis[i]))
            if ratios[r] <= eps:
                degenerate += 1
            _pivot(T, r, j)
            basis[r] = j
            pivots += 1
            if pivots > budget:
                raise NumericalFailure("simplex pivot budget exhausted")

    pivots = 0
    status = run(allowed)
    if status != OPTIMAL:  # phase 1 is bounded below by 0
        raise NumericalFailure("phase-1 simplex did not converge")
    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max()):
        return _EqResult(INFEASIBLE)

    # drive leftover artificials out of the basis; rows where that is
    # impossible are redundant and get deleted (an artificial left basic
    # could silently grow during phase 2)
    drop = []
    for r in range(m):
        if basis[r] >= n:
            row = np.abs(T[r, :n])
            j = int(np.argmax(row))
            if row[j] > eps:
                _pivot(T, r, j)
                basis[r] = j
            else:
                drop.append(r)
    if drop:
        T = np.delete(T, drop, axis=0)
        basis = [bj for r, bj in enumerate(basis) if r not in drop]
        m = len(basis)

    # phase 2 objective row; entering is restricted to original columns
    T[-1, :] = 0.0
    T[-1, :n] = c
    for r, bj in enumerate(basis):
        if bj < n and abs(c[bj]) > 0:
            T[-1, :] -= c[bj] * T[r, :]

    status = run(n)
    if status == UNBOUNDED:
        return _EqResult(UNBOUNDED)
    z = np.zeros(n)
    for r, bj in enumerate(basis):
        if bj < n:
            z[bj] = T[r, -1]
    return _EqResult(OPTIMAL, z=z, value=float(c @ z), basis=list(basis))


# ---------------------------------------------------------------------------
# inequality-form LP via the dual, with verified primal recovery
# ---------------------------------------------------------------------------


def _recover_primal(G, f, c, value, basis, k, tols) -> np.ndarray | None:
    rows = [j for j in basis if j < k]
    if not rows:
        return None
    x, *_ = np.linalg.lstsq(G[rows], f[rows], rcond=None)
    scale = max(1.0, np.abs(f).max(initial=1.0), float(np.abs(x).max(initial=1.0)))
    if G.shape[0] and np.max(G @ x - f) > 1e-7 * scale:
        return None
    if abs(float(c @ x) - value) > 1e-7 * max(1.0, abs(value)):
        return None
    return x


def _solve_lp_primal(c, G, f, tols: Tolerances) -> LpOutcome:
    """Fallback: split free variables and run the tableau on the primal."""
    k, n = G.shape
    A = np.hstack([G, -G, np.eye(k)])
    cc = np.concatenate([c, -c, np.zeros(k)])
    res = _simplex_eq(cc, A, f, tols)
    if res.status != OPTIMAL:
        return LpOutcome(res.status)
    x = res.z[:n] - res.z[n:2 * n]
    return LpOutcome(OPTIMAL, value=float(c @ x), point=x)


def _min_uniform_slack(G, f, tols: Tolerances) -> tuple[float, np.ndarray | None]:
    """min t s.t. G x <= f + t,  t >= -1: feasibility margin of {Gx <= f}."""
    k, n = G.shape
    Ga = np.vstack([np.hstack([G, -np.ones((k, 1))]),
                    np.concatenate([np.zeros(n), [-1.0]])])
    fa = np.concatenate([f, [1.0]])
    ca = np.concatenate([np.zeros(n), [1.0]])
    res = _simplex_eq(fa, Ga.T, -ca, tols)
    point = None
    if res.status == OPTIMAL:
        value = -res.value
        point = _recover_primal(Ga, fa, ca, value, res.basis, k + 1, tols)
    if point is None:  # rare: degeneracy, or a numerically confused dual
        out = _solve_lp_primal(ca, Ga, fa, tols)
        if not out.is_optimal:
            raise NumericalFailure("feasibility subproblem failed")
        value, point = out.value, out.point
    return value, point[:n]


def feasible_point(G, f, tols: Tolerances = DEFAULT) -> np.ndarray | None:
    """A point of {x | G x <= f} within `tols.feas`, or None when empty."""
    G = _as_matrix(G)
    f = _as_vector(f)
    slack, x = _min_uniform_slack(G, f, tols)
    if slack > tols.feas * max(1.0, np.abs(f).max(initial=1.0)):
        return None
    return x


def solve_lp(p: LpProblem, tols: Tolerances = DEFAULT) -> LpOutcome:
    c = -p.c if p.sense == "max" else p.c
    G, f = p.G, p.f
    k, n = G.shape

    if not np.any(c):
        x = feasible_point(G, f, tols)
        if x is None:
            return LpOutcome(INFEASIBLE)
        return LpOutcome(OPTIMAL, value=0.0, point=x)

    # dual: min f.y  s.t.  G^T y = -c, y >= 0
    res = _simplex_eq(f, G.T, -c, tols)
    if res.status == UNBOUNDED:
        out = LpOutcome(INFEASIBLE)
    elif res.status == INFEASIBLE:
        slack, _ = _min_uniform_slack(G, f, tols)
        if slack > tols.feas * max(1.0, np.abs(f).max(initial=1.0)):
            out = LpOutcome(INFEASIBLE)
        else:
            out = LpOutcome(UNBOUNDED)
    else:
        value = -res.value
        x = _recover_primal(G, f, c, value, res.basis, k, tols)
        if x is None:
            out = _solve_lp_primal(c, G, f, tols)
        else:
            out = LpOutcome(OPTIMAL, value=value, point=x)

    if p.sense == "max" and out.is_optimal:
        out = LpOutcome(OPTIMAL, value=-out.value, point=out.point)
    return out


# ---------------------------------------------------------------------------
# convex QP via a primal active-set method
# ---------------------------------------------------------------------------


def _kkt_step(Q, g, GW):
    nW = GW.shape[0]
    n = Q.shape[0]
    K = np.zeros((n + nW, n + nW))
    K[:n, :n] = Q
    if nW:
        K[:n, n:] = GW.T
        K[n:, :n] = GW
    rhs = np.concatenate([-g, np.zeros(nW)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def kkt_residual(p: QpProblem, z: np.ndarray, tol_active: float = 1e-6) -> float:
    """Stationarity residual of z using least-squares multipliers on the
    active rows (nonnegativity enforced by clipping)."""
    g = p.Q @ z + p.c
    act = np.flatnonzero(p.G @ z - p.f > -tol_active * max(1.0, np.abs(p.f).max(initial=1.0)))
    if act.size == 0:
        return float(np.abs(g).max(initial=0.0))
    GA = p.G[act]
    mu, *_ = np.linalg.lstsq(GA.T, -g, rcond=None)
    mu = np.clip(mu, 0.0, None)
    return float(np.abs(g + GA.T @ mu).max())


def solve_qp(p: QpProblem, tols: Tolerances = DEFAULT) -> QpOutcome:
    G, f, c = p.G, p.f, p.c
    k, n = G.shape
    scale = max(1.0, float(np.abs(p.Q).max()))
    Q = p.Q
    if np.linalg.eigvalsh(Q).min() < 1e-12 * scale:
        Q = Q + (1e-10 * scale) * np.eye(n)  # keep the KKT solves well posed

    z = feasible_point(G, f, tols)
    if z is None:
        return QpOutcome(INFEASIBLE)

    work: list[int] = []
    budget = lp_pivot_budget(k, n)
    fscale = max(1.0, np.abs(f).max(initial=1.0))
    for _ in range(budget):
        g = Q @ z + c
        GW = G[work] if work else np.zeros((0, n))
        step, mu = _kkt_step(Q, g, GW)
        # predicted decrease guards against noise-amplified steps when Q is
        # nearly singular (the step norm alone can stall above any threshold)
        predicted = float(g @ step + 0.5 * step @ (Q @ step))
        zscale = max(1.0, np.abs(z).max(initial=1.0))
        stationary = (np.abs(step).max(initial=0.0) <= 1e-11 * zscale
                      or predicted >= -1e-13 * scale * zscale * zscale)
        if stationary:
            if len(work) == 0 or mu.min(initial=0.0) >= -1e-9 * scale:
                value = 0.5 * float(z @ p.Q @ z) + float(c @ z)
                return QpOutcome(OPTIMAL, value=value, point=z)
            work.pop(int(np.argmin(mu)))
            continue
        Gs = G @ step
        slack = f - G @ z
        alpha = 1.0
        blocking = -1
        cand = np.flatnonzero(Gs > 1e-12 * fscale)
        for i in cand:
            if i in work:
                continue
            a = slack[i] / Gs[i]
            if a < alpha - 1e-14:
                alpha = a
                blocking = int(i)
        z = z + max(alpha, 0.0) * step
        if blocking >= 0:
            work.append(blocking)
    raise NumericalFailure("active-set iteration budget exhausted")
