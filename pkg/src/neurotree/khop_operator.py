"""k-hop connectivity operator, its normalization, and spectral-norm diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

MAX_K = 64
MAX_EXPANSION_K = 20


class KHopError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class KHopConfig:
    lam: float = 0.5
    k: int = 1
    gamma: np.ndarray | None = None
    epsilon_deg: float = 1e-8

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise KHopError(f"lambda must lie strictly inside (0, 1), got {self.lam}")
        if not 0 <= self.k <= MAX_K:
            raise KHopError(f"k must lie in [0, {MAX_K}], got {self.k}")
        if self.gamma is not None and not np.all(np.isfinite(self.gamma)):
            raise KHopError("gamma must be finite")


@dataclass
class KHopOperator:
    a_hat: np.ndarray
    phi: np.ndarray
    config: KHopConfig
    segment_index: int = 0
    raw_phi_norm: float = field(default=0.0)


def _check_square(*ms):
    shape = ms[0].shape
    for m in ms:
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape != shape:
            raise KHopError(f"expected matching square matrices, got {[x.shape for x in ms]}")


def mixing_matrix(a_dyn, lam):
    return lam * a_dyn + (1.0 - lam) * a_dyn.T


def mixed_power(a_dyn: np.ndarray, lam: float, k: int) -> np.ndarray:
    """(lam A + (1 - lam) A^T)^k by repeated multiplication."""
    a_dyn = np.asarray(a_dyn, dtype=float)
    _check_square(a_dyn)
    if k < 0:
        raise KHopError("k must be >= 0")
    m = mixing_matrix(a_dyn, lam)
    out = np.eye(a_dyn.shape[0])
    for _ in range(k):
        out = out @ m
    return out


def mixed_powers(a_dyn: np.ndarray, lam: float, k_max: int) -> list[np.ndarray]:
    """[M^0, M^1, ..., M^k_max] sharing the multiplications."""
    m = mixing_matrix(np.asarray(a_dyn, dtype=float), lam)
    out = [np.eye(m.shape[0])]
    for _ in range(k_max):
        out.append(out[-1] @ m)
    return out


def binomial_expansion(a_dyn: np.ndarray, lam: float, k: int) -> np.ndarray:
    """sum_i C(k, i) lam^i (1 - lam)^(k - i) A^i (A^T)^(k - i).

    Only equal to ``mixed_power`` term by term when A and A^T commute; kept as
    the reference that the product form is checked against.
    """
    a = np.asarray(a_dyn, dtype=float)
    _check_square(a)
    if not 0 <= k <= MAX_EXPANSION_K:
        raise KHopError(f"expansion oracle limited to k <= {MAX_EXPANSION_K}")
    n = a.shape[0]
    pa = [np.eye(n)]
    pt = [np.eye(n)]
    for _ in range(k):
        pa.append(pa[-1] @ a)
        pt.append(pt[-1] @ a.T)
    out = np.zeros((n, n))
    for i in range(k + 1):
        out += float(comb(k, i)) * lam ** i * (1.0 - lam) ** (k - i) * (pa[i] @ pt[k - i])
    return out


def spectral_norm(m: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on B = M^T M.

    Each step squares the current power of B, so after j steps the iterate is
    B^(2^j) x0; this separates nearly equal top singular values in a few dozen
    steps where plain B x iteration would need tens of thousands. Two
    deterministic starts (uniform, then a fixed perturbation) guard against a
    start orthogonal to the top singular subspace.
    """
    m = np.asarray(m, dtype=float)
    if not tol > 0:
        raise KHopError("tol must be positive")
    n = m.shape[1] if m.ndim == 2 else 0
    if n == 0 or not np.any(m):
        return 0.0
    b = m.T @ m
    x0 = np.ones(n) / np.sqrt(n)
    pert = np.cos(np.arange(1, n + 1) * 2.399963229728653)
    x1 = pert / np.linalg.norm(pert)
    return float(np.sqrt(max(_top_eig(b, x0, tol, max_iter), _top_eig(b, x1, tol, max_iter))))


def _top_eig(b, x0, tol, max_iter):
    scale = np.linalg.norm(b)
    p = b / scale
    for _ in range(max_iter):
        y = p @ x0
        ny = np.linalg.norm(y)
        if ny == 0 or not np.isfinite(ny):
            return 0.0
        x = y / ny
        bx = b @ x
        mu = float(x @ bx)
        if np.linalg.norm(bx - mu * x) <= tol * abs(mu):
            return mu
        p = p @ p
        p /= np.linalg.norm(p)
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def degree_normalize(a_hat: np.ndarray, epsilon_deg: float = 1e-8) -> np.ndarray:
    """D^-1/2 A D^-1/2 with degrees from absolute row sums."""
    deg = np.abs(a_hat).sum(axis=1) + epsilon_deg
    d = 1.0 / np.sqrt(deg)
    return d[:, None] * a_hat * d[None, :]


def assemble(a_static: np.ndarray, a_dyn: np.ndarray, config: KHopConfig,
             segment_index: int = 0, power: np.ndarray | None = None) -> KHopOperator:
    """Gamma * A^s * M^k (entrywise), normalized and rescaled to spectral norm <= 1."""
    a_static = np.asarray(a_static, dtype=float)
    a_dyn = np.asarray(a_dyn, dtype=float)
    gamma = np.ones_like(a_static) if config.gamma is None else np.asarray(config.gamma, float)
    _check_square(a_static, a_dyn, gamma)
    if power is None:
        power = mixed_power(a_dyn, config.lam, config.k)
    a_hat = gamma * a_static * power
    phi = degree_normalize(a_hat, config.epsilon_deg)
    norm = spectral_norm(phi)
    if norm > 1.0:
        phi = phi / norm
    return KHopOperator(a_hat, phi, config, segment_index, float(norm))


def rigorous_bound(gamma, a_static, a_dyn, lam, k, norm=spectral_norm) -> float:
    """||Gamma|| ||A^s|| (2 max(lam, 1 - lam) ||A^d||)^k."""
    return norm(gamma) * norm(a_static) * (2 * max(lam, 1 - lam) * norm(a_dyn)) ** k


def printed_bound(gamma, a_static, lam, k, norm=spectral_norm) -> float:
    """The k-free-of-||A^d|| bound ||Gamma|| ||A^s|| max(lam, 1 - lam)^k.

    Implied by ``rigorous_bound`` only when ||A^d||_2 <= 1/2.
    """
    return norm(gamma) * norm(a_static) * max(lam, 1 - lam) ** k


def convergence_profile(a_static, a_dyn, gamma, lam, k_max, epsilon_deg=1e-8, tol=1e-10):
    """Rows of (k, ||Phi_k||, ||A_hat_k||, bound_k) for k = 0..k_max."""
    if not 0 <= k_max <= MAX_K:
        raise KHopError(f"k_max must lie in [0, {MAX_K}]")
    gamma = np.ones_like(a_static) if gamma is None else gamma
    g_norm = spectral_norm(gamma, tol)
    s_norm = spectral_norm(a_static, tol)
    rate = 2 * max(lam, 1 - lam) * spectral_norm(a_dyn, tol)
    rows = []
    for k, power in enumerate(mixed_powers(a_dyn, lam, k_max)):
        op = assemble(a_static, a_dyn, KHopConfig(lam, k, gamma, epsilon_deg), power=power)
        rows.append((k, spectral_norm(op.phi, tol), spectral_norm(op.a_hat, tol),
                     g_norm * s_norm * rate ** k))
    return rows


def log_slope(ks, norms) -> float:
    """Least-squares slope of log(norm) against k."""
    ks = np.asarray(ks, dtype=float)
    y = np.log(np.asarray(norms, dtype=float))
    return float(np.polyfit(ks, y, 1)[0])


def lipschitz_estimate(phis: list[np.ndarray]) -> float:
    """max_{t1 < t2} ||Phi(t1) - Phi(t2)||_2 / |t1 - t2| over segment indices."""
    best = 0.0
    for t1 in range(len(phis)):
        for t2 in range(t1 + 1, len(phis)):
            best = max(best, spectral_norm(phis[t1] - phis[t2]) / (t2 - t1))
    return best
