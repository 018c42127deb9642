"""L1 error summaries with Tukey box-plot statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class L1Stats:
    n: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float


def tukey_hinges(values) -> tuple[float, float, float]:
    """Lower hinge, median and upper hinge (median of each half, median included when n is odd)."""
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("no values")
    half = (n + 1) // 2
    return float(np.median(x[:half])), float(np.median(x)), float(np.median(x[n - half :]))


def l1_stats(errors) -> L1Stats:
    e = np.abs(np.asarray(errors, dtype=float))
    q1, med, q3 = tukey_hinges(e)
    iqr = q3 - q1
    inside = e[(e >= q1 - 1.5 * iqr) & (e <= q3 + 1.5 * iqr)]
    return L1Stats(
        n=len(e),
        mean=float(e.mean()),
        std=float(e.std()),
        median=med,
        q1=q1,
        q3=q3,
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
    )


@dataclass
class FoldResult:
    key: object
    predictions: np.ndarray
    truths: np.ndarray
    setup_ids: np.ndarray
    person_ids: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        return self.predictions - self.truths

    @property
    def stats(self) -> L1Stats:
        return l1_stats(self.residuals)


@dataclass
class MetricsReport:
    strategy: str
    estimator: str
    folds: list[FoldResult] = field(default_factory=list)

    def _concat(self, attr):
        return np.concatenate([getattr(f, attr) for f in self.folds])

    @property
    def residuals(self) -> np.ndarray:
        return self._concat("residuals")

    @property
    def setup_ids(self) -> np.ndarray:
        return self._concat("setup_ids")

    @property
    def person_ids(self) -> np.ndarray:
        return self._concat("person_ids")

    @property
    def pooled(self) -> L1Stats:
        return l1_stats(self.residuals)

    def subset(self, setup_ids) -> L1Stats:
        """Pooled statistics over the windows of the given setups."""
        mask = np.isin(self.setup_ids, list(setup_ids))
        return l1_stats(self.residuals[mask])

    @property
    def mean_l1(self) -> float:
        return self.pooled.mean

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "estimator": self.estimator,
            "pooled": asdict(self.pooled),
            "folds": [
                {
                    "key": list(f.key) if isinstance(f.key, tuple) else f.key,
                    **asdict(f.stats),
                    "residuals": [round(float(r), 6) for r in f.residuals],
                }
                for f in self.folds
            ],
        }
