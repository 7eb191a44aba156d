"""H-representation polytope algebra.

Everything is carried as ``{x | G x <= f}``.  Boundedness is *not* an
invariant: emptiness and boundedness are decided on demand by LPs.  Minkowski
differences are computed against a *formal* sum of linearly mapped polytopes
(`MinkowskiSumChain`) through support functions, so the accumulated
disturbance sets are never expanded into explicit polytopes.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .config import DEFAULT, Tolerances
from .solvers import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, feasible_point,
                      solve_lp)


class UnboundedSet(RuntimeError):
    """A support query hit an unbounded direction."""


class ProjectionExplosion(RuntimeError):
    """Fourier-Motzkin intermediate row count exceeded the configured cap."""


class VertexEnumerationTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperBox:
    """Axis-aligned box [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.size != hi.size:
            raise ValueError("bound sizes differ")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", np.maximum(lo, hi))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def support(self, c: np.ndarray) -> float:
        c = np.asarray(c, dtype=float)
        return float(np.maximum(c * self.upper, c * self.lower).sum())

    def contains_point(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def as_polytope(self) -> "HPolytope":
        n = self.dim
        G = np.vstack([np.eye(n), -np.eye(n)])
        f = np.concatenate([self.upper, -self.lower])
        return HPolytope(G, f)


class MinkowskiSumChain:
    """Formal sum  M_1 W_1 + M_2 W_2 + ...  of linearly mapped polytopes.

    Only row-wise support values are ever needed, so the sum is never
    materialized.  An empty chain stands for the singleton {0}.
    """

    def __init__(self, dim: int, terms=()):
        self.dim = int(dim)
        self.terms = []
        for M, W in terms:
            M = np.asarray(M, dtype=float)
            if M.shape[0] != self.dim:
                raise ValueError("term row count does not match chain dimension")
            if M.shape[1] != W.dim:
                raise ValueError("term column count does not match set dimension")
            self.terms.append((M, W))

    @classmethod
    def zero(cls, dim: int) -> "MinkowskiSumChain":
        return cls(dim)

    def mapped(self, M) -> "MinkowskiSumChain":
        M = np.asarray(M, dtype=float)
        return MinkowskiSumChain(M.shape[0], [(M @ Mi, W) for Mi, W in self.terms])

    def lifted(self, total_dim: int, row_offset: int = 0) -> "MinkowskiSumChain":
        """Embed the chain into a larger space (zero rows elsewhere)."""
        out = []
        for Mi, W in self.terms:
            M = np.zeros((total_dim, Mi.shape[1]))
            M[row_offset:row_offset + self.dim] = Mi
            out.append((M, W))
        return MinkowskiSumChain(total_dim, out)

    def support_rows(self, D: np.ndarray, tols: Tolerances = DEFAULT) -> np.ndarray:
        """Support of the chain along every row of D (shape r x dim)."""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        h = np.zeros(D.shape[0])
        for Mi, W in self.terms:
            dirs = D @ Mi  # rows mapped into the summand's space
            box = W.as_box()
            if box is not None:
                h += np.maximum(dirs * box.upper, dirs * box.lower).sum(axis=1)
            else:
                for j in range(dirs.shape[0]):
                    h[j] += W.support(dirs[j], tols)
        return h


class HPolytope:
    """Convex set {x in R^n | G x <= f}; possibly empty, possibly unbounded."""

    def __init__(self, G, f):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        f = np.asarray(f, dtype=float).reshape(-1)
        if G.shape[0] != f.size:
            raise ValueError("row counts of G and f differ")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(f))):
            raise ValueError("polytope data must be finite")
        # zero-normal rows with f >= 0 say nothing; zero rows with f < 0
        # encode emptiness and are kept
        norms = np.abs(G).max(axis=1, initial=0.0)
        trivial = (norms <= 0.0) & (f >= 0.0)
        if trivial.any():
            G, f = G[~trivial], f[~trivial]
        if G.shape[0] == 0:
            # canonical "whole space" row keeps at least one row around
            G = np.zeros((1, G.shape[1] if G.ndim == 2 else 0))
            f = np.zeros(1)
        self.G = G
        self.f = f
        self._empty: bool | None = None
        self._box: HyperBox | None | str = "?"

    # -- basics ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def nrows(self) -> int:
        return self.G.shape[0]

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, rows={self.nrows})"

    @classmethod
    def from_box(cls, lower, upper) -> "HPolytope":
        return HyperBox(np.asarray(lower, float), np.asarray(upper, float)).as_polytope()

    @classmethod
    def empty(cls, dim: int) -> "HPolytope":
        return cls(np.zeros((1, dim)), np.array([-1.0]))

    @classmethod
    def intersection(cls, P: "HPolytope", Q: "HPolytope") -> "HPolytope":
        if P.dim != Q.dim:
            raise ValueError("dimension mismatch")
        return cls(np.vstack([P.G, Q.G]), np.concatenate([P.f, Q.f]))

    def normalized(self) -> "HPolytope":
        norms = np.linalg.norm(self.G, axis=1)
        norms[norms < 1e-300] = 1.0
        return HPolytope(self.G / norms[:, None], self.f / norms)

    def as_box(self, tol: float = 1e-12) -> HyperBox | None:
        """Recognize an axis-aligned box written with +-e_i rows, else None."""
        if self._box != "?":
            return self._box
        n = self.dim
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        ok = True
        for g, b in zip(self.G, self.f):
            j = int(np.argmax(np.abs(g)))
            a = g[j]
            if abs(a) < tol or np.abs(np.delete(g, j)).max(initial=0.0) > tol * abs(a):
                ok = False
                break
            if a > 0:
                hi[j] = min(hi[j], b / a)
            else:
                lo[j] = max(lo[j], b / a)
        box = None
        if ok and np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi):
            box = HyperBox(lo, hi)
        self._box = box
        return box

    # -- membership and emptiness -------------------------------------------

    def contains_point(self, x, tol: float | None = None) -> bool:
        tol = DEFAULT.containment if tol is None else tol
        x = np.asarray(x, dtype=float)
        scale = max(1.0, float(np.abs(self.f).max(initial=1.0)))
        return bool(np.max(self.G @ x - self.f, initial=-np.inf) <= tol * scale)

    def contains_points(self, X: np.ndarray, tol: float | None = None) -> np.ndarray:
        """Vectorized membership over rows of X."""
        tol = DEFAULT.containment if tol is None else tol
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scale = max(1.0, float(np.abs(self.f).max(initial=1.0)))
        return (X @ self.G.T - self.f).max(axis=1) <= tol * scale

    def is_empty(self, tols: Tolerances = DEFAULT) -> bool:
        if self._empty is None:
            self._empty = feasible_point(self.G, self.f, tols) is None
        return self._empty

    # -- support machinery ----------------------------------------------------

    def support(self, c, tols: Tolerances = DEFAULT) -> float:
        """max <c, x> over the set; raises UnboundedSet on unbounded rays."""
        c = np.asarray(c, dtype=float).reshape(-1)
        if not np.any(c):
            if self.is_empty(tols):
                raise ValueError("support of an empty set")
            return 0.0
        out = solve_lp(LpProblem(c=c, G=self.G, f=self.f, sense="max"), tols)
        if out.status == UNBOUNDED:
            raise UnboundedSet("unbounded support direction")
        if out.status == INFEASIBLE:
            raise ValueError("support of an empty set")
        return out.value

    def support_point(self, c, tols: Tolerances = DEFAULT) -> np.ndarray:
        out = solve_lp(LpProblem(c=np.asarray(c, float), G=self.G, f=self.f,
                                 sense="max"), tols)
        if out.status != OPTIMAL:
            raise UnboundedSet("no support point in this direction")
        return out.point

    def bounding_box(self, tols: Tolerances = DEFAULT) -> HyperBox:
        if isinstance(self._box, HyperBox):
            return self._box
        n = self.dim
        lo, hi = np.empty(n), np.empty(n)
        e = np.zeros(n)
        for i in range(n):
            e[:] = 0.0
            e[i] = 1.0
            hi[i] = self.support(e, tols)
            e[i] = -1.0
            lo[i] = -self.support(e, tols)
        return HyperBox(lo, hi)

    def is_bounded(self, tols: Tolerances = DEFAULT) -> bool:
        if self.is_empty(tols):
            return True
        try:
            self.bounding_box(tols)
            return True
        except UnboundedSet:
            return False

    def interior_point(self, tols: Tolerances = DEFAULT):
        """Chebyshev-style center (radius capped at 1) and its margin."""
        P = self.normalized()
        n = self.dim
        G = np.hstack([P.G, np.ones((P.nrows, 1))])
        G = np.vstack([G, np.concatenate([np.zeros(n), [-1.0]])])
        f = np.concatenate([P.f, [0.0]])  # r >= 0 not required; cap below
        G = np.vstack([G, np.concatenate([np.zeros(n), [1.0]])])
        f = np.concatenate([f, [1.0]])
        c = np.concatenate([np.zeros(n), [1.0]])
        out = solve_lp(LpProblem(c=c, G=G, f=f, sense="max"), tols)
        if out.status != OPTIMAL:
            return None, -np.inf
        return out.point[:n], float(out.value)

    # -- algebra ---------------------------------------------------------------

    def erode(self, chain: MinkowskiSumChain, tols: Tolerances = DEFAULT) -> "HPolytope":
        """Minkowski difference  self - chain  via row-wise supports.

        Exact for H-polytopes: {x | G x <= f - h},  h_j the support of the
        chain along row j.  The result may legitimately be empty.
        """
        if chain.dim != self.dim:
            raise ValueError("chain dimension mismatch")
        if not chain.terms:
            return HPolytope(self.G.copy(), self.f.copy())
        h = chain.support_rows(self.G, tols)
        return HPolytope(self.G.copy(), self.f - h)

    def cartesian(self, other: "HPolytope") -> "HPolytope":
        n, p = self.dim, other.dim
        G = np.zeros((self.nrows + other.nrows, n + p))
        G[:self.nrows, :n] = self.G
        G[self.nrows:, n:] = other.G
        return HPolytope(G, np.concatenate([self.f, other.f]))

    def affine_preimage(self, M, t=None) -> "HPolytope":
        """{z | G (M z + t) <= f}."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] != self.dim:
            raise ValueError("map output dimension mismatch")
        f = self.f if t is None else self.f - self.G @ np.asarray(t, float)
        return HPolytope(self.G @ M, f)

    def contains(self, other: "HPolytope", tol: float | None = None,
                 tols: Tolerances = DEFAULT) -> bool:
        """Row-wise support test: every facet of self bounds other."""
        tol = DEFAULT.containment if tol is None else tol
        if other.is_empty(tols):
            return True
        scale = max(1.0, float(np.abs(self.f).max(initial=1.0)))
        for g, b in zip(self.G, self.f):
            if not np.any(g):
                if b < -tol * scale:
                    return False
                continue
            try:
                if other.support(g, tols) > b + tol * scale:
                    return False
            except UnboundedSet:
                return False
        return True

    # -- redundancy removal and projection ------------------------------------

    def remove_redundancy(self, tols: Tolerances = DEFAULT) -> "HPolytope":
        G, f = _dedupe_rows(*_normalize_rows(self.G, self.f))
        if _looks_infeasible(G, f) or feasible_point(G, f, tols) is None:
            return HPolytope.empty(self.dim)
        keep = list(range(G.shape[0]))
        for i in range(G.shape[0]):
            if len(keep) == 1:
                break
            rest = [j for j in keep if j != i]
            relaxed_f = f.copy()
            relaxed_f[i] += 1.0
            out = solve_lp(LpProblem(c=G[i], G=G[rest + [i]],
                                     f=relaxed_f[rest + [i]], sense="max"), tols)
            if out.status == OPTIMAL and out.value <= f[i] + tols.redundancy:
                keep.remove(i)
        return HPolytope(G[keep], f[keep])

    def project(self, keep: int, row_cap: int | None = None,
                tols: Tolerances = DEFAULT) -> "HPolytope":
        """Orthogonal projection onto the first `keep` coordinates.

        Fourier-Motzkin elimination of the trailing coordinates, one at a
        time (cheapest-looking variable first), with duplicate collapsing
        and LP redundancy removal after every elimination step.
        """
        cap = DEFAULT.projection_row_cap if row_cap is None else row_cap
        if not 0 <= keep <= self.dim:
            raise ValueError("invalid projection dimension")
        if keep == self.dim:
            return self.remove_redundancy(tols)
        if self.is_empty(tols):
            return HPolytope.empty(keep)
        G, f = _normalize_rows(self.G, self.f)
        alive = list(range(self.dim))
        while len(alive) > keep:
            candidates = range(keep, len(alive))
            col = min(candidates, key=lambda j: _fm_cost(G, j))
            G, f = _fm_eliminate(G, f, col)
            if G.shape[0] > cap:
                raise ProjectionExplosion(
                    f"projection exceeded {cap} intermediate rows")
            G, f = _dedupe_rows(*_normalize_rows(G, f))
            reduced = HPolytope(G, f).remove_redundancy(tols)
            if reduced.is_empty(tols):
                return HPolytope.empty(keep)
            G, f = reduced.G, reduced.f
            alive.pop(col)
        return HPolytope(G, f)

    # -- measures ---------------------------------------------------------------

    def mc_volume(self, samples: int, seed: int, tols: Tolerances = DEFAULT) -> float:
        """Hit-or-miss volume estimate: hit ratio times bounding-box volume.

        Deterministic for a fixed seed.  Lower-dimensional (zero-width) and
        empty sets report 0.
        """
        if self.is_empty(tols):
            return 0.0
        box = self.bounding_box(tols)
        if box.volume <= 0.0 or np.any(box.widths <= 1e-12):
            return 0.0
        rng = np.random.default_rng(seed)
        total_hits = 0
        remaining = int(samples)
        while remaining > 0:
            batch = min(remaining, 200_000)
            pts = box.lower + rng.random((batch, self.dim)) * box.widths
            total_hits += int(np.count_nonzero(self.contains_points(pts)))
            remaining -= batch
        return total_hits / samples * box.volume

    def vertices(self, tols: Tolerances = DEFAULT) -> np.ndarray:
        """Vertex enumeration by basis inspection; desk-scale dimensions only."""
        n = self.dim
        G, f = _dedupe_rows(*_normalize_rows(self.G, self.f))
        k = G.shape[0]
        if comb(k, n) > 200_000:
            raise VertexEnumerationTooLarge(f"{k} rows in dimension {n}")
        scale = max(1.0, float(np.abs(f).max(initial=1.0)))
        verts = []
        for idx in combinations(range(k), n):
            sub = G[list(idx)]
            if abs(np.linalg.det(sub)) < 1e-10:
                continue
            v = np.linalg.solve(sub, f[list(idx)])
            if np.max(G @ v - f) <= 1e-8 * scale:
                verts.append(v)
            if len(verts) > DEFAULT.vertex_cap * 4:
                raise VertexEnumerationTooLarge("too many candidate vertices")
        if not verts:
            return np.zeros((0, n))
        V = np.array(verts)
        V = np.unique(np.round(V / max(scale, 1.0), 9), axis=0) * max(scale, 1.0)
        if V.shape[0] > DEFAULT.vertex_cap:
            raise VertexEnumerationTooLarge(f"{V.shape[0]} vertices")
        return V

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "f": self.f.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HPolytope":
        return cls(np.asarray(d["G"], dtype=float), np.asarray(d["f"], dtype=float))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _normalize_rows(G: np.ndarray, f: np.ndarray):
    norms = np.linalg.norm(G, axis=1)
    pos = norms > 1e-300
    G = G.copy()
    f = f.copy()
    G[pos] /= norms[pos, None]
    f[pos] /= norms[pos]
    return G, f


def _dedupe_rows(G: np.ndarray, f: np.ndarray, decimals: int = 10):
    """Collapse duplicate normals keeping the tightest offset."""
    if G.shape[0] <= 1:
        return G, f
    key = np.round(G, decimals)
    # group rows by normal (most-significant keys), break ties by offset so
    # the first row of each group carries the tightest bound
    order = np.lexsort((f,) + tuple(key[:, j] for j in reversed(range(key.shape[1]))))
    G, f, key = G[order], f[order], key[order]
    keep = [0]
    for i in range(1, G.shape[0]):
        if not np.array_equal(key[i], key[keep[-1]]):
            keep.append(i)
    return G[keep], f[keep]


def _looks_infeasible(G: np.ndarray, f: np.ndarray) -> bool:
    zero = np.abs(G).max(axis=1, initial=0.0) <= 0.0
    return bool(np.any(f[zero] < 0.0))


def _fm_cost(G: np.ndarray, col: int) -> int:
    c = G[:, col]
    return int(np.count_nonzero(c > 1e-12) * np.count_nonzero(c < -1e-12))


def _fm_eliminate(G: np.ndarray, f: np.ndarray, col: int):
    """One Fourier-Motzkin step removing the given column."""
    c = G[:, col]
    pos = np.flatnonzero(c > 1e-12)
    neg = np.flatnonzero(c < -1e-12)
    zero = np.flatnonzero(np.abs(c) <= 1e-12)
    Gp = G[pos] / c[pos, None]
    fp = f[pos] / c[pos]
    Gn = G[neg] / (-c[neg, None])
    fn = f[neg] / (-c[neg])
    if pos.size and neg.size:
        Gc = (Gp[:, None, :] + Gn[None, :, :]).reshape(-1, G.shape[1])
        fc = (fp[:, None] + fn[None, :]).reshape(-1)
    else:
        Gc = np.zeros((0, G.shape[1]))
        fc = np.zeros(0)
    Gz, fz = G[zero], f[zero]
    out_G = np.vstack([Gz, Gc])
    out_f = np.concatenate([fz, fc])
    out_G = np.delete(out_G, col, axis=1)
    if out_G.shape[0] == 0:
        out_G = np.zeros((1, out_G.shape[1]))
        out_f = np.zeros(1)
    return out_G, out_f


def hausdorff_distance(P: HPolytope, Q: HPolytope, dirs: int = 1024,
                       tols: Tolerances = DEFAULT) -> float:
    """Support-gap surrogate for the Hausdorff distance of convex bodies.

    Maximum of |h_P(c) - h_Q(c)| over `dirs` unit directions: the 2n axis
    directions first, then a fixed pseudorandom spread.  Exact in the limit
    dirs -> infinity; both sets must be bounded and nonempty.
    """
    if P.dim != Q.dim:
        raise ValueError("dimension mismatch")
    n = P.dim
    D = [np.eye(n), -np.eye(n)]
    extra = dirs - 2 * n
    if extra > 0:
        rng = np.random.default_rng(1234)
        R = rng.normal(size=(extra, n))
        R /= np.linalg.norm(R, axis=1, keepdims=True)
        D.append(R)
    D = np.vstack(D)[:max(dirs, 2 * n)]

    def supports(S: HPolytope) -> np.ndarray:
        try:
            V = S.remove_redundancy(tols).vertices(tols)
        except VertexEnumerationTooLarge:
            V = None
        if V is not None and V.shape[0] > 0:
            return (D @ V.T).max(axis=1)
        return np.array([S.support(d, tols) for d in D])

    return float(np.abs(supports(P) - supports(Q)).max())


def mutual_containment(P: HPolytope, Q: HPolytope, tol: float,
                       tols: Tolerances = DEFAULT) -> bool:
    return P.contains(Q, tol, tols) and Q.contains(P, tol, tols)
