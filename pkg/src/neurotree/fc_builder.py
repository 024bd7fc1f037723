"""Static, segment-wise and ODE-effective connectivity from region time series."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .cohort_io import ZeroVarianceRegion, standardize_age

logger = logging.getLogger(__name__)

STATIC = "StaticPearson"
SEGMENT = "SegmentPearson"
EFFECTIVE = "OdeEffective"

PINV_RCOND = 1e-10
ILL_CONDITIONED = 1e12


class FcError(ValueError):
    pass


class RankDeficientWarning(UserWarning):
    pass


@dataclass
class ConnectivityMatrix:
    data: np.ndarray
    kind: str
    segment_index: int | None = None

    @property
    def v(self) -> int:
        return self.data.shape[0]


@dataclass
class OdeParams:
    """Coupling gain ``eta`` (phi = 1/eta), age scale ``rho`` and age ``theta`` in years.

    The stimulus term of the continuous model is fixed at zero.
    """

    eta: float = 1.0
    rho: float = 0.5
    theta: float = 0.0

    def __post_init__(self):
        if not self.eta > 0:
            raise FcError("eta must be positive")
        if not 0 < self.rho <= 1:
            raise FcError("rho must lie in (0, 1]")

    @property
    def phi(self) -> float:
        return 1.0 / self.eta

    @property
    def theta_std(self) -> float:
        return float(standardize_age(self.theta))


def pearson_fc(signal: np.ndarray) -> ConnectivityMatrix:
    x = np.asarray(signal, dtype=float)
    if x.shape[1] < 3:
        raise FcError("need at least 3 time points for Pearson correlation")
    xc = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ZeroVarianceRegion(f"zero-variance region {int(bad[0])}")
    xn = xc / norms[:, None]
    r = xn @ xn.T
    r = 0.5 * (r + r.T)
    np.clip(r, -1.0, 1.0, out=r)
    np.fill_diagonal(r, 1.0)
    return ConnectivityMatrix(r, STATIC)


def segment_series(signal: np.ndarray, n_segments: int = 2) -> list[np.ndarray]:
    """Split columns into ``n_segments`` contiguous windows; the last absorbs the remainder."""
    T = signal.shape[1]
    if n_segments < 1:
        raise FcError("n_segments must be >= 1")
    if T < 2 * n_segments:
        raise FcError(f"n_segments={n_segments} too large for T={T}")
    width = T // n_segments
    bounds = [i * width for i in range(n_segments)] + [T]
    return [signal[:, bounds[i]:bounds[i + 1]] for i in range(n_segments)]


def right_pinv(x: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse via thin SVD, truncating s < rcond * s_max."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > rcond * s[0] if s.size else s.astype(bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def effective_connectivity(x_t: np.ndarray, x_next: np.ndarray, params: OdeParams,
                           segment_index: int | None = None) -> ConnectivityMatrix:
    """Recover A from X(t+1) - X(t) = (eta A + rho theta I) X(t) by right pseudoinversion."""
    x_t = np.asarray(x_t, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if x_t.shape != x_next.shape:
        raise FcError(f"shape mismatch: {x_t.shape} vs {x_next.shape}")
    s = np.linalg.svd(x_t, compute_uv=False)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if cond > ILL_CONDITIONED:
        warnings.warn(f"X(t) is numerically rank deficient (cond={cond:.3g})",
                      RankDeficientWarning, stacklevel=2)
    drift = x_next - x_t - params.rho * params.theta_std * x_t
    a = params.phi * drift @ right_pinv(x_t)
    return ConnectivityMatrix(a, EFFECTIVE, segment_index)


def dynamic_fc(signal: np.ndarray, n_segments: int = 2, backend: str = "pearson",
               params: OdeParams | None = None) -> list[ConnectivityMatrix]:
    """Per-segment dynamic connectivity A^d(t).

    ``pearson`` correlates each window; ``ode`` fits the effective coupling
    between consecutive columns inside each window.
    """
    out = []
    for t, seg in enumerate(segment_series(signal, n_segments)):
        if backend == "pearson":
            fc = pearson_fc(seg)
            out.append(ConnectivityMatrix(fc.data, SEGMENT, t))
        elif backend == "ode":
            if params is None:
                raise FcError("ode backend needs OdeParams")
            out.append(effective_connectivity(seg[:, :-1], seg[:, 1:], params, t))
        else:
            raise FcError(f"unknown dynamic backend {backend!r}")
    return out
