"""Benchmark and experiment suites, reported as CSV.

Instances follow the scalability-study recipe: chains of integrators in
Brunovsky form, random origin-containing state polytopes (unit normals
uniform on the sphere, offsets uniform in [0.5, 1.5], intersected with a
+-5 box to force boundedness), inputs in [-0.5, 0.5], scalar disturbance
entering through the input channel.  Every suite records its seed in the
CSV header, runs instances in a deterministic order, and is reproducible
byte-for-byte given the seed.
"""

from __future__ import annotations

import io as _io
import time
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT, Tolerances
from .invariance import LassoSpec, explicit_rcis, hierarchy, implicit_rcis
from .oracle import (convergence_curve, fixed_point_report, maximal_rcis,
                     nominal_problem)
from .polytope import HPolytope, ProjectionExplosion, UnboundedSet
from .systems import LinearSystem, SafeSet, nilpotentize

INPUT_BOUND = 0.5
DISTURBANCE_BOUND = 0.1
STATE_CAP = 5.0


def brunovsky(n: int) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    return A, B


def random_state_polytope(n: int, k: int, rng: np.random.Generator) -> HPolytope:
    """k random halfspaces containing the origin, capped by the +-5 box."""
    normals = rng.normal(size=(k, n))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = rng.uniform(0.5, 1.5, size=k)
    box = HPolytope.from_box([-STATE_CAP] * n, [STATE_CAP] * n)
    return HPolytope(np.vstack([normals, box.G]),
                     np.concatenate([offsets, box.f]))


def random_instance(n: int, seed: int, k: int | None = None,
                    wbar: float = 0.0, input_bound: float = INPUT_BOUND,
                    tols: Tolerances = DEFAULT):
    """Brunovsky system with a random safe set; verified bounded and
    feasible before use."""
    rng = np.random.default_rng(seed)
    k = 2 * n if k is None else k
    A, B = brunovsky(n)
    Sx = random_state_polytope(n, k, rng)
    if Sx.is_empty(tols) or not Sx.is_bounded(tols):
        raise RuntimeError("generated state set unusable")  # cannot happen
    Sxu = Sx.cartesian(HPolytope.from_box([-input_bound], [input_bound]))
    safe = SafeSet(Sxu, n, 1)
    if wbar > 0.0:
        sys = LinearSystem(A, B, E=B.copy(),
                           W=HPolytope.from_box([-wbar], [wbar]), tols=tols)
    else:
        sys = LinearSystem(A, B, tols=tols)
    return sys, safe


def double_integrator_problem(input_bound: float = 0.8,
                              state_cap: float = 4.0,
                              tols: Tolerances = DEFAULT):
    """Deadbeat-feedbacked double integrator with a box safe set."""
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    Sxu = HPolytope.from_box([-state_cap, -state_cap, -input_bound],
                             [state_cap, state_cap, input_bound])
    sys0 = LinearSystem(A, B, tols=tols)
    sysn, safen, _ = nilpotentize(sys0, SafeSet(Sxu, 2, 1), tols)
    return sysn, safen


def _median_time(fn, repeats: int = 5) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.3g}"
    return str(x)


@dataclass
class CsvReport:
    header: dict
    columns: list
    rows: list

    def render(self) -> str:
        buf = _io.StringIO()
        for key, val in self.header.items():
            buf.write(f"# {key}={val}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())


def volume_ratio_mc(inner: HPolytope, outer: HPolytope, samples: int,
                    seed: int, tols: Tolerances = DEFAULT) -> float:
    """vol(inner)/vol(outer) by shared-sample hit counting over the outer
    set's bounding box; requires inner a subset of outer."""
    if outer.is_empty(tols):
        return float("nan")
    box = outer.bounding_box(tols)
    if box.volume <= 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    hits_in = 0
    hits_out = 0
    remaining = int(samples)
    inner_empty = inner.is_empty(tols)
    while remaining > 0:
        batch = min(remaining, 200_000)
        pts = box.lower + rng.random((batch, outer.dim)) * box.widths
        mask = outer.contains_points(pts)
        hits_out += int(np.count_nonzero(mask))
        if not inner_empty:
            hits_in += int(np.count_nonzero(inner.contains_points(pts[mask])))
        remaining -= batch
    return hits_in / max(hits_out, 1)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def suite_hierarchy(seed: int = 0, samples: int = 20_000, qmax: int = 6,
                    tols: Tolerances = DEFAULT) -> CsvReport:
    """Double-integrator hierarchy: union volume per level q = 1..qmax."""
    sysn, safen = double_integrator_problem(tols=tols)
    box = safen.project_states(tols).bounding_box(tols)
    rng = np.random.default_rng(seed)
    pts = box.lower + rng.random((int(samples), 2)) * box.widths
    rows = []
    for q in range(1, qmax + 1):
        t0 = time.perf_counter()
        comps, _ = hierarchy(sysn, safen, q, tols)
        build_s = time.perf_counter() - t0
        member = np.zeros(pts.shape[0], dtype=bool)
        n_empty = 0
        for comp in comps:
            if comp.is_empty(tols):
                n_empty += 1
                continue
            ex = explicit_rcis(comp, tols)
            member |= ex.contains_points(pts)
        vol = float(np.count_nonzero(member)) / pts.shape[0] * box.volume
        rows.append([q, len(comps), n_empty, vol, build_s])
    return CsvReport(
        header={"suite": "hierarchy", "seed": seed, "samples": samples,
                "qmax": qmax},
        columns=["q", "components", "empty_components", "union_volume",
                 "build_seconds"],
        rows=rows)


def suite_scal(seed: int = 0, n_list=(2, 5, 10, 20, 35, 50),
               constraints: str = "2n", tau: int = 0, lam: int = 2,
               tols: Tolerances = DEFAULT) -> CsvReport:
    """Implicit synthesis timings on integrator chains, no disturbance."""
    rows = []
    for idx, n in enumerate(n_list):
        k = 2 * n if constraints == "2n" else n * n
        try:
            sys, safe = random_instance(n, seed + idx, k=k, wbar=0.0, tols=tols)
            spec = LassoSpec(tau, lam, 1)
            t_med = _median_time(lambda: implicit_rcis(sys, safe, spec, tols))
            ir = implicit_rcis(sys, safe, spec, tols)
            rows.append([n, k, ir.polytope.nrows, t_med, int(ir.is_empty(tols)),
                         ""])
        except Exception as exc:  # per-row failure; the suite continues
            rows.append([n, k, 0, float("nan"), -1, type(exc).__name__])
    return CsvReport(
        header={"suite": "scal", "seed": seed, "constraints": constraints,
                "tau": tau, "lambda": lam},
        columns=["n", "k_constraints", "rows", "median_seconds", "empty",
                 "error"],
        rows=rows)


def suite_volume(seed: int = 0, samples: int = 100_000, n_list=(2, 3, 4),
                 instances: int = 10, tau: int = 4, lam: int = 2,
                 tols: Tolerances = DEFAULT) -> CsvReport:
    """Explicit set volume against the maximal set, no disturbance."""
    rows = []
    for n in n_list:
        for i in range(instances):
            inst_seed = seed * 1000 + n * 100 + i
            try:
                sys, safe = random_instance(n, inst_seed, wbar=0.0, tols=tols)
                t0 = time.perf_counter()
                cmax, converged = maximal_rcis(sys, safe, tols=tols)
                t_max = time.perf_counter() - t0
                t0 = time.perf_counter()
                ex = explicit_rcis(implicit_rcis(
                    sys, safe, LassoSpec(tau, lam, 1), tols), tols)
                t_ours = time.perf_counter() - t0
                ratio = volume_ratio_mc(ex, cmax, samples, inst_seed, tols)
                rows.append([n, i, inst_seed, ratio, int(converged),
                             t_ours, t_max, ""])
            except Exception as exc:
                rows.append([n, i, inst_seed, float("nan"), -1,
                             float("nan"), float("nan"), type(exc).__name__])
    return CsvReport(
        header={"suite": "volume", "seed": seed, "samples": samples,
                "tau": tau, "lambda": lam, "instances": instances},
        columns=["n", "instance", "instance_seed", "volume_ratio",
                 "maximal_converged", "seconds_ours", "seconds_maximal",
                 "error"],
        rows=rows)


def suite_sweep(seed: int = 0, samples: int = 100_000, n: int = 4,
                wbars=(0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40),
                tau: int = 2, lam: int = 2,
                tols: Tolerances = DEFAULT) -> CsvReport:
    """Disturbance sweep on one fixed instance: set ratios, emptiness flags,
    and nominal fixed-point existence per disturbance bound."""
    rows = []
    for wbar in wbars:
        try:
            sys, safe = random_instance(n, seed, wbar=float(wbar), tols=tols)
            nom = nominal_problem(sys, safe, tols)
            sbar = nom.safe.polytope
            sbar_empty = sbar.is_empty(tols)
            ratio_sbar = (0.0 if sbar_empty else
                          volume_ratio_mc(sbar, safe.polytope, samples,
                                          seed + 1, tols))
            fp = fixed_point_report(nom, tols)
            ir = implicit_rcis(sys, safe, LassoSpec(tau, lam, 1), tols)
            cx_empty = ir.is_empty(tols)
            cmax, converged = maximal_rcis(sys, safe, tols=tols)
            cmax_empty = cmax.is_empty(tols)
            if cmax_empty or not converged:
                ratio = float("nan")
            elif cx_empty:
                ratio = 0.0
            else:
                ex = explicit_rcis(ir, tols)
                ratio = volume_ratio_mc(ex, cmax, samples, seed + 2, tols)
            rows.append([wbar, ratio, ratio_sbar, int(cx_empty),
                         int(cmax_empty), int(sbar_empty),
                         int(fp.feasible), int(converged), ""])
        except Exception as exc:
            rows.append([wbar, float("nan"), float("nan"), -1, -1, -1, -1, -1,
                         type(exc).__name__])
    return CsvReport(
        header={"suite": "sweep", "seed": seed, "samples": samples, "n": n,
                "tau": tau, "lambda": lam},
        columns=["wbar", "ratio_cx_over_cmax", "ratio_sbar_over_s",
                 "cx_empty", "cmax_empty", "sbar_empty",
                 "fixed_point_exists", "maximal_converged", "error"],
        rows=rows)


def suite_converge(seed: int = 0, lam: int = 2, taus=(0, 2, 4, 6, 8),
                   tols: Tolerances = DEFAULT) -> CsvReport:
    """Hausdorff distance of projected sets to the outer bound vs tau."""
    sysn, safen = double_integrator_problem(tols=tols)
    report = convergence_curve(sysn, safen, lam, list(taus), tols=tols)
    rows = [[p.tau, p.distance] for p in report.points]
    return CsvReport(
        header={"suite": "converge", "seed": seed, "lambda": lam,
                "interior_fixed_point": report.precondition_ok,
                "fixed_point_margin": f"{report.fixed_point.margin:.3g}"},
        columns=["tau", "hausdorff_to_outer"],
        rows=rows)


SUITES = {
    "hierarchy": suite_hierarchy,
    "scal": suite_scal,
    "volume": suite_volume,
    "sweep": suite_sweep,
    "converge": suite_converge,
}
