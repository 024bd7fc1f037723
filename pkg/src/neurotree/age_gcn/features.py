"""Per-subject cached inputs: static FC, dynamic FC, mixed powers and strengths."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..cohort_io import BoldSeries, standardize_age
from ..fc_builder import OdeParams, dynamic_fc, pearson_fc
from ..khop_operator import mixed_powers


@dataclass
class SubjectFeatures:
    subject_id: str
    a_static: np.ndarray  # (v, v)
    a_dyn: np.ndarray  # (T, v, v)
    powers: np.ndarray  # (T, K, v, v) mixed powers M^0..M^(K-1)
    theta_std: float
    label: int
    age_std: float

    @property
    def v(self) -> int:
        return self.a_static.shape[0]

    @property
    def strength(self) -> np.ndarray:
        """(T, v) mean absolute connectivity per region and segment."""
        return np.abs(self.a_dyn).mean(axis=2)


def subject_features(series: BoldSeries, lam: float, K: int, n_segments: int = 2,
                     backend: str = "pearson", ode: OdeParams | None = None) -> SubjectFeatures:
    a_s = pearson_fc(series.signal).data
    if backend == "ode":
        base = ode or OdeParams()
        ode = OdeParams(base.eta, base.rho, series.age)
    a_d = np.stack([m.data for m in dynamic_fc(series.signal, n_segments, backend, ode)])
    powers = np.stack([np.stack(mixed_powers(a, lam, K - 1)) for a in a_d])
    theta = float(standardize_age(series.age))
    return SubjectFeatures(series.subject_id, a_s, a_d, powers, theta, series.label, theta)


def cohort_features(subjects, lam: float, K: int, n_segments: int = 2, backend: str = "pearson",
                    ode: OdeParams | None = None, jobs: int = 1) -> list[SubjectFeatures]:
    """Features for every subject, returned in input order whatever ``jobs`` is."""
    def one(s):
        return subject_features(s, lam, K, n_segments, backend, ode)

    if jobs <= 1:
        return [one(s) for s in subjects]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, subjects))
