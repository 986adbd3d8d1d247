"""DOA matching under the 25-degree success rule and aggregate metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .roomsim import DoaSet
from .sphharm import angular_distance_deg

SUCCESS_THRESHOLD = 25.0


def _angles(doas) -> np.ndarray:
    if isinstance(doas, DoaSet):
        return doas.angles()
    a = np.asarray(doas, float)
    return a.reshape(-1, 2)


@dataclass
class MatchResult:
    """Pairs are ``(pred_index, truth_index, error_deg)``."""

    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)
    unmatched_truth: list[int] = field(default_factory=list)

    @property
    def n_pred(self) -> int:
        return len(self.pairs) + len(self.unmatched_pred)

    @property
    def n_truth(self) -> int:
        return len(self.pairs) + len(self.unmatched_truth)

    @property
    def errors(self) -> list[float]:
        return [e for _, _, e in self.pairs]


def match_doas(pred, truth, threshold: float = SUCCESS_THRESHOLD) -> MatchResult:
    """Greedy globally-nearest matching.

    Repeatedly pairs the closest remaining (prediction, truth) couple while
    its distance is strictly below ``threshold``. Ties go to the lower
    prediction index, then the lower truth index.
    """
    P, T = _angles(pred), _angles(truth)
    if len(P) == 0 or len(T) == 0:
        return MatchResult([], list(range(len(P))), list(range(len(T))))
    D = angular_distance_deg(P[:, None, 0], P[:, None, 1], T[None, :, 0], T[None, :, 1])
    pi, ti = np.nonzero(D < threshold)
    d = D[pi, ti]
    order = np.lexsort((ti, pi, d))
    used_p, used_t, pairs = set(), set(), []
    for k in order:
        p, t = int(pi[k]), int(ti[k])
        if p in used_p or t in used_t:
            continue
        used_p.add(p)
        used_t.add(t)
        pairs.append((p, t, float(d[k])))
    return MatchResult(
        pairs,
        [i for i in range(len(P)) if i not in used_p],
        [j for j in range(len(T)) if j not in used_t],
    )


@dataclass
class MetricsReport:
    """Aggregate DOA scores; ``None`` marks an undefined ratio."""

    recall: float | None
    precision: float | None
    e_mean: float | None
    e_var: float | None
    n_matched: int
    n_truth: int
    n_pred: int
    n_records: int

    def as_dict(self) -> dict:
        return {
            "R_rec": self.recall,
            "R_acc": self.precision,
            "E_mean": self.e_mean,
            "E_var": self.e_var,
            "matched": self.n_matched,
            "truths": self.n_truth,
            "predictions": self.n_pred,
            "records": self.n_records,
        }


def compute_metrics(results) -> MetricsReport:
    """Pool matches over records.

    ``E_var`` is the standard deviation of matched errors in degrees,
    a spread on the same scale as ``E_mean``.
    """
    results = list(results)
    errors = np.array(sorted(e for r in results for e in r.errors))
    n_t = sum(r.n_truth for r in results)
    n_p = sum(r.n_pred for r in results)
    n_m = len(errors)
    return MetricsReport(
        recall=n_m / n_t if n_t else None,
        precision=n_m / n_p if n_p else None,
        e_mean=float(errors.mean()) if n_m else None,
        e_var=float(errors.std()) if n_m else None,
        n_matched=n_m,
        n_truth=n_t,
        n_pred=n_p,
        n_records=len(results),
    )


def format_value(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
