"""Records of observed constants for a-priori estimates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

#: Largest relative change of a ratio under refinement still called stable.
STABILITY_RTOL = 0.15

ESTIMATE_IDS = (
    "esti-u-1",
    "esti-u-2",
    "esti-u-3",
    "esti-u-4",
    "ode-1-1",
    "ode-1-2",
    "ode-1-3",
    "ode-1-4",
    "ode-2-1",
    "ode-2-2",
    "ode-2-3",
    "ode-2-4",
)


def safe_ratio(lhs: float, rhs: float) -> float:
    if lhs == 0.0:
        return 0.0
    if rhs == 0.0:
        return math.inf
    return lhs / rhs


def is_stable(coarse: float, fine: float, floor: float = 0.0) -> bool:
    """Relative change at most :data:`STABILITY_RTOL`, or both values negligible."""
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return False
    if abs(coarse) <= floor and abs(fine) <= floor:
        return True
    return abs(fine - coarse) <= STABILITY_RTOL * max(abs(coarse), abs(fine))


@dataclass(frozen=True)
class EstimateRecord:
    """One estimate evaluated on a solution and on its refinement.

    ``terms`` holds the individual norms entering the left-hand side together
    with diagnostic norms, each as ``(coarse, fine)`` when refined.
    """

    estimate: str
    lhs: float
    rhs: float
    ratio: float
    refinement_stable: bool | None = None
    ratio_refined: float | None = None
    terms: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.estimate not in ESTIMATE_IDS:
            raise ValueError(f"unknown estimate id {self.estimate!r}")
        if not self.ratio >= 0.0:
            raise ValueError(f"ratio must be nonnegative, got {self.ratio!r}")

    def term_stable(self, name: str, floor: float = 0.0) -> bool | None:
        vals = self.terms[name]
        if len(vals) < 2:
            return None
        return is_stable(vals[0], vals[1], floor)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "ratio_refined": self.ratio_refined,
            "refinement_stable": self.refinement_stable,
            "terms": {k: list(v) for k, v in self.terms.items()},
        }


@dataclass(frozen=True)
class RegularityReport:
    records: tuple[EstimateRecord, ...]
    meta: dict = field(default_factory=dict)

    def __getitem__(self, estimate: str) -> EstimateRecord:
        for r in self.records:
            if r.estimate == estimate:
                return r
        raise KeyError(estimate)

    def to_dict(self) -> dict:
        return {"meta": dict(self.meta), "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _clean(x):
    # JSON has no inf/nan; encode them as strings
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
