"""JSON problem files and result serialization shared with the CLI.

Problem file (version 1):

    {
      "version": 1,
      "A": [[...]], "B": [[...]],
      "E": [[...]],                 # optional; omitted => no disturbance
      "W": {"G": [[...]], "f": [...]},   # optional with E
      "Sxu": {"G": [[...]], "f": [...]},
      "spec": {"tau": 2, "lambda": 2}    # or {"q": 3} or explicit P/H
      "options": {...}              # tolerances, seeds, schedules
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .invariance import ImplicitRCIS, LassoSpec
from .polytope import HPolytope, HyperBox
from .systems import LinearSystem, SafeSet

SCHEMA_VERSION = 1


class ProblemFormatError(ValueError):
    pass


@dataclass
class Problem:
    system: LinearSystem
    safe: SafeSet
    spec: LassoSpec | None = None
    q: int | None = None
    options: dict = field(default_factory=dict)


def _polytope_from(obj, what: str) -> HPolytope:
    try:
        return HPolytope.from_dict(obj)
    except Exception as exc:
        raise ProblemFormatError(f"bad {what} polytope: {exc}") from exc


def load_problem(source) -> Problem:
    """Parse a problem from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        data = source
    else:
        text = source
        try:
            with open(source) as fh:
                text = fh.read()
        except (OSError, TypeError):
            pass
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"not valid JSON: {exc}") from exc
    if data.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ProblemFormatError(f"unsupported schema version {data.get('version')}")
    for key in ("A", "B", "Sxu"):
        if key not in data:
            raise ProblemFormatError(f"missing required field {key!r}")
    A = np.asarray(data["A"], dtype=float)
    B = np.asarray(data["B"], dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    E = data.get("E")
    W = data.get("W")
    try:
        if E is None:
            sys = LinearSystem(A, B)
        else:
            Wp = _polytope_from(W, "W") if W is not None else None
            sys = LinearSystem(A, B, np.asarray(E, dtype=float), Wp)
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from exc
    Sxu = _polytope_from(data["Sxu"], "Sxu")
    if Sxu.dim != sys.n + sys.m:
        raise ProblemFormatError(
            f"Sxu dimension {Sxu.dim} != n + m = {sys.n + sys.m}")
    safe = SafeSet(Sxu, sys.n, sys.m)

    spec = None
    q = None
    sp = data.get("spec")
    if sp:
        if "q" in sp:
            q = int(sp["q"])
        else:
            tau = int(sp.get("tau", 0))
            lam = int(sp.get("lambda", sp.get("lam", 1)))
            if "P" in sp and "H" in sp:
                spec = LassoSpec(tau, lam, sys.m,
                                 P=np.asarray(sp["P"], dtype=float),
                                 H=np.asarray(sp["H"], dtype=float))
            else:
                spec = LassoSpec(tau, lam, sys.m)
    return Problem(system=sys, safe=safe, spec=spec, q=q,
                   options=data.get("options", {}))


def implicit_rcis_to_dict(ir: ImplicitRCIS) -> dict:
    return {
        "polytope": ir.polytope.to_dict(),
        "tau": ir.spec.tau,
        "lambda": ir.spec.lam,
        "nu": ir.nu,
        "n": ir.n,
        "H": ir.spec.H.tolist(),
        "P": ir.spec.P.tolist(),
        "empty": bool(ir.is_empty()),
        "num_blocks": ir.num_blocks,
        "safe_fingerprint": ir.safe_fingerprint,
    }


def implicit_rcis_from_dict(d: dict, system: LinearSystem,
                            safe: SafeSet) -> ImplicitRCIS:
    spec = LassoSpec(int(d["tau"]), int(d["lambda"]), system.m,
                     P=np.asarray(d["P"], dtype=float),
                     H=np.asarray(d["H"], dtype=float))
    return ImplicitRCIS(polytope=HPolytope.from_dict(d["polytope"]),
                        spec=spec, nu=int(d["nu"]), system=system,
                        safe_set=safe,
                        num_blocks=int(d.get("num_blocks", 0)),
                        safe_fingerprint=d.get("safe_fingerprint", ""))


def hyperbox_to_dict(box: HyperBox) -> dict:
    return {"lower": box.lower.tolist(), "upper": box.upper.tolist()}


def save_json(obj: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
