"""Discrete-time linear system model and reachability operators.

The invariance machinery requires a nilpotent state matrix.  For a
controllable pair (A, B) the `nilpotentize` transform computes a deadbeat
feedback gain K through the controllability crate (Young diagram) selection,
so that A + BK is nilpotent with index equal to the largest controllability
index.  Constraints move along: the safe set is rewritten for the
pre-feedbacked input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances
from .polytope import HPolytope, MinkowskiSumChain
from .solvers import NumericalFailure, mat_power


class Horizon(enum.Enum):
    """Distinguished infinite time horizon (never a sentinel number)."""
    INF = "inf"


class NotControllable(RuntimeError):
    def __init__(self, rank: int, n: int):
        super().__init__(f"(A, B) not controllable: rank {rank} of {n}")
        self.rank = rank


@dataclass(frozen=True)
class SafeSet:
    """State-input constraint polytope over (x, u)."""

    polytope: HPolytope
    n: int
    m: int

    def __post_init__(self):
        if self.polytope.dim != self.n + self.m:
            raise ValueError("safe set dimension must be n + m")

    @property
    def G_x(self) -> np.ndarray:
        return self.polytope.G[:, :self.n]

    @property
    def G_u(self) -> np.ndarray:
        return self.polytope.G[:, self.n:]

    @property
    def f(self) -> np.ndarray:
        return self.polytope.f

    def feedback_transform(self, K: np.ndarray) -> "SafeSet":
        """Constraints for the pre-feedbacked input u' where u = K x + u'."""
        n, m = self.n, self.m
        M = np.zeros((n + m, n + m))
        M[:n, :n] = np.eye(n)
        M[n:, :n] = K
        M[n:, n:] = np.eye(m)
        return SafeSet(self.polytope.affine_preimage(M), n, m)

    def project_states(self, tols: Tolerances = DEFAULT) -> HPolytope:
        return self.polytope.project(self.n, tols=tols)

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(self.polytope.G.tobytes())
        h.update(self.polytope.f.tobytes())
        return h.hexdigest()[:16]


class LinearSystem:
    """x+ = A x + B u + E w with disturbance w constrained to the polytope W.

    Omitting E (or W) models the disturbance-free case as E = 0 column and
    W = {0}; every disturbance computation then degenerates gracefully.
    """

    def __init__(self, A, B, E=None, W: HPolytope | None = None,
                 K: np.ndarray | None = None, tols: Tolerances = DEFAULT):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float)
        if self.B.ndim == 1:
            self.B = self.B[:, None]
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise ValueError("inconsistent A/B dimensions")
        if E is None:
            self.E = np.zeros((n, 1))
            self.W = HPolytope.from_box([0.0], [0.0])
        else:
            self.E = np.atleast_2d(np.asarray(E, dtype=float))
            if self.E.shape[0] != n:
                raise ValueError("inconsistent E dimension")
            if W is None:
                self.W = HPolytope.from_box(np.zeros(self.E.shape[1]),
                                            np.zeros(self.E.shape[1]))
            else:
                if W.dim != self.E.shape[1]:
                    raise ValueError("W dimension must match columns of E")
                self.W = W
        if not self.W.is_bounded(tols):
            raise ValueError("disturbance set must be bounded")
        self.K = None if K is None else np.atleast_2d(np.asarray(K, dtype=float))
        self._tols = tols
        self._nu: int | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.E.shape[1]

    def nilpotency_index(self) -> int:
        """Smallest k with ||A^k|| below the nilpotency tolerance; raises if
        A is not nilpotent within n powers."""
        if self._nu is None:
            nu = _nilpotency_index(self.A, self._tols)
            if nu is None:
                raise NumericalFailure("state matrix is not nilpotent; "
                                       "apply nilpotentize first")
            self._nu = nu
        return self._nu

    def is_nilpotent(self) -> bool:
        return _nilpotency_index(self.A, self._tols) is not None

    def with_disturbance(self, E, W: HPolytope) -> "LinearSystem":
        return LinearSystem(self.A, self.B, E, W, K=self.K, tols=self._tols)


def _nilpotency_index(A: np.ndarray, tols: Tolerances) -> int | None:
    n = A.shape[0]
    scale = max(1.0, float(np.abs(A).max()))
    P = np.eye(n)
    for k in range(1, n + 1):
        P = P @ A
        if np.abs(P).max() <= tols.nilpotent * scale:
            return k
    return None


def controllability_indices(A: np.ndarray, B: np.ndarray,
                            tols: Tolerances = DEFAULT):
    """Crate selection over [B, AB, A^2 B, ...].

    Returns (mu, selected) where mu[j] is the controllability index of input
    j and selected the list of (power, input) pairs picked, in scan order.
    Rank decisions use the orthogonal residual against the span collected so
    far, with the relative tolerance `tols.rank`.
    """
    n, m = B.shape
    basis = np.zeros((n, 0))
    mu = [0] * m
    open_inputs = list(range(m))
    cols = {j: B[:, j].copy() for j in open_inputs}
    selected = []
    scale = max(1.0, float(np.abs(B).max()), float(np.abs(A).max()))
    power = 0
    while open_inputs and basis.shape[1] < n:
        still_open = []
        for j in open_inputs:
            v = cols[j]
            resid = v - basis @ (basis.T @ v)
            # re-orthogonalize once; plain Gram-Schmidt is not enough here
            resid = resid - basis @ (basis.T @ resid)
            if np.linalg.norm(resid) > tols.rank * max(np.linalg.norm(v), scale):
                basis = np.hstack([basis, (resid / np.linalg.norm(resid))[:, None]])
                mu[j] += 1
                selected.append((power, j))
                still_open.append(j)
                cols[j] = A @ v
        open_inputs = still_open
        power += 1
    return mu, selected


def nilpotentize(sys: LinearSystem, safe: SafeSet,
                 tols: Tolerances = DEFAULT):
    """Deadbeat pre-feedback: returns (sys', safe', K) with A + BK nilpotent.

    If A is already nilpotent this is the identity transform (K = 0).  The
    nilpotency index of the result equals the largest controllability index.
    """
    n, m = sys.n, sys.m
    if sys.is_nilpotent():
        K = np.zeros((m, n))
        out = LinearSystem(sys.A, sys.B, sys.E, sys.W, K=K, tols=tols)
        return out, safe, K

    mu, _ = controllability_indices(sys.A, sys.B, tols)
    rank = sum(mu)
    if rank < n:
        raise NotControllable(rank, n)

    active = [j for j in range(m) if mu[j] > 0]
    # similarity transform to the multi-input controller form
    S_cols = []
    for j in active:
        v = sys.B[:, j]
        for _ in range(mu[j]):
            S_cols.append(v)
            v = sys.A @ v
    S = np.column_stack(S_cols)
    S_inv = np.linalg.inv(S)
    ends = np.cumsum([mu[j] for j in active]) - 1
    T_rows = []
    for pos, j in zip(ends, active):
        q = S_inv[pos]
        for i in range(mu[j]):
            T_rows.append(q @ mat_power(sys.A, i))
    T = np.vstack(T_rows)
    T_inv = np.linalg.inv(T)
    Abar = T @ sys.A @ T_inv
    Bbar = T @ sys.B

    M = Bbar[np.ix_(ends, active)]
    rows = np.linalg.solve(M, Abar[ends])
    Kbar = np.zeros((m, n))
    for r, j in enumerate(active):
        Kbar[j] = -rows[r]
    K = Kbar @ T

    Acl = sys.A + sys.B @ K
    nu_target = max(mu)
    scale = max(1.0, float(np.abs(Acl).max()))
    if np.abs(mat_power(Acl, nu_target)).max() > tols.nilpotent * scale:
        raise NumericalFailure("deadbeat feedback failed to nilpotentize A")

    out = LinearSystem(Acl, sys.B, sys.E, sys.W, K=K, tols=tols)
    return out, safe.feedback_transform(K), K


def acc_disturbance(sys: LinearSystem, t: int | Horizon,
                    tols: Tolerances = DEFAULT) -> MinkowskiSumChain:
    """Accumulated disturbance set as a formal chain; truncates at the
    nilpotency index (the infinite horizon equals the nu-step sum)."""
    if t is Horizon.INF:
        steps = sys.nilpotency_index()
    else:
        if t < 0:
            raise ValueError("horizon must be nonnegative")
        steps = min(int(t), sys.nilpotency_index()) if sys.is_nilpotent() else int(t)
    terms = []
    Ak = np.eye(sys.n)
    for _ in range(steps):
        terms.append((Ak @ sys.E, sys.W))
        Ak = sys.A @ Ak
    return MinkowskiSumChain(sys.n, terms)


@dataclass(frozen=True)
class ReachSet:
    """A^t X + sum_i A^{i-1} B u_{t-i} + accumulated disturbances, kept in
    factored form (matrix acting on X, affine offset, disturbance chain)."""

    base: HPolytope
    matrix: np.ndarray
    offset: np.ndarray
    chain: MinkowskiSumChain

    def support(self, c, tols: Tolerances = DEFAULT) -> float:
        c = np.asarray(c, dtype=float)
        val = self.base.support(self.matrix.T @ c, tols)
        val += float(c @ self.offset)
        val += float(self.chain.support_rows(c[None, :], tols)[0])
        return val


def reach_set(sys: LinearSystem, X: HPolytope, inputs,
              tols: Tolerances = DEFAULT) -> ReachSet:
    """Reachable set from X after applying the given input sequence."""
    inputs = [np.asarray(u, dtype=float).reshape(-1) for u in inputs]
    t = len(inputs)
    offset = np.zeros(sys.n)
    Ak = np.eye(sys.n)
    # offset = sum_{i=1..t} A^{i-1} B u_{t-i}
    for i in range(1, t + 1):
        offset += Ak @ (sys.B @ inputs[t - i])
        Ak = sys.A @ Ak
    return ReachSet(base=X, matrix=mat_power(sys.A, t), offset=offset,
                    chain=acc_disturbance(sys, t, tols))
