"""Per-update-step trace records shared by all three engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:  # pragma: no cover
    from .system import BeamformerState

PHASES = ("u-step", "w-step", "v-step", "scale")


@dataclass
class IterationTrace:
    """One row per update step.

    ``f`` (natural-log cost), ``wsr`` (bits per channel use) and the
    eigenvalue extremes of E_k W_k are diagnostics: they need the oracle
    module, so they are filled only when a run is started with diagnostics
    enabled and are ``None`` otherwise. ``grad_norm_u``/``grad_norm_v`` carry
    the stacked Frobenius norm of the gradient used in the step that produced
    the row, when one was computed.
    """

    run_id: str
    algo: str
    iter: int
    phase: str
    f: Optional[float] = None
    wsr: Optional[float] = None
    lambda_min_ew: Optional[float] = None
    lambda_max_ew: Optional[float] = None
    grad_norm_u: Optional[float] = None
    grad_norm_v: Optional[float] = None
    power: float = 0.0
    wall_nanos: int = 0


@dataclass
class RunResult:
    """Trace rows plus the state the run terminated with."""

    rows: list[IterationTrace] = field(default_factory=list)
    state: Optional["BeamformerState"] = None
