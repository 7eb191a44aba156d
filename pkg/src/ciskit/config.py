"""Centralized numerical tolerances and iteration budgets.

Every default lives here so that experiments can tighten or relax the whole
stack from one place (the CLI exposes the common ones as flags).
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # feasibility slack accepted on returned LP/QP points
    feas: float = 1e-8
    # objective accuracy required from the LP solver on rational-data tests
    obj: float = 1e-8
    # KKT residual accepted from the QP solver
    kkt: float = 1e-6
    # relative tolerance for rank decisions (column-pivoted QR)
    rank: float = 1e-8
    # infinity-norm threshold under which a matrix power counts as zero
    nilpotent: float = 1e-9
    # rows closer than this to redundancy are dropped
    redundancy: float = 1e-9
    # slack used by polytope containment tests
    containment: float = 1e-7
    # threshold for the eventually-periodic matrix check
    eventually_periodic: float = 1e-9
    # regularization weight on the input-sequence block of the supervision QP
    qp_reg: float = 1e-8
    # mutual-containment slack declaring two iterates equal
    set_equality: float = 1e-7
    # abort projection when an intermediate system exceeds this many rows
    projection_row_cap: int = 20000
    # switch the simplex to Bland's rule after this many degenerate pivots
    bland_after: int = 50
    # iteration cap for the maximal invariant set fixed-point loop
    maximal_iters: int = 200
    # geometric-mean box solver: relative objective change / Newton step caps
    newton_obj_change: float = 1e-8
    newton_max_steps: int = 100
    # refuse to enumerate more vertices than this
    vertex_cap: int = 2 ** 12

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT = Tolerances()


def lp_pivot_budget(rows: int, cols: int) -> int:
    """Pivot budget before the simplex gives up with NumericalFailure."""
    return 10 * (rows + cols) + 1000
