"""Straight numpy versions of the age-modulated graph convolution pieces.

These are the readable reference path; training runs through the batched
torch version in ``batched`` and the two are cross-checked in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort_io import destandardize_age

CLASSIFY = "classify"
REGRESS_AGE = "regress_age"


class GcnError(ValueError):
    pass


@dataclass
class EmbeddingState:
    z: np.ndarray
    segment_index: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.z)):
            raise GcnError(f"non-finite embedding at segment {self.segment_index}")


def relu(x):
    return np.maximum(x, 0.0)


def layer_forward(h: np.ndarray, phis, weights) -> np.ndarray:
    """relu(sum_k Phi_k H W_k)."""
    h = np.asarray(h, dtype=float)
    if len(phis) != len(weights) or not phis:
        raise GcnError(f"need matching non-empty hop lists, got {len(phis)} and {len(weights)}")
    v, d_in = h.shape
    d_out = weights[0].shape[1]
    acc = np.zeros((v, d_out))
    for phi, w in zip(phis, weights):
        if phi.shape != (v, v) or w.shape != (d_in, d_out):
            raise GcnError(f"shape mismatch: H {h.shape}, Phi {phi.shape}, W {w.shape}")
        acc += phi @ h @ w
    return relu(acc)


def age_modulate(x: np.ndarray, beta: float, theta_std: float) -> np.ndarray:
    return np.asarray(x, dtype=float) * (beta * theta_std)


def segment_forward(h0: np.ndarray, phis, model, theta_std: float) -> tuple[np.ndarray, np.ndarray]:
    """Run all layers for one segment; returns (input to the last layer, last-layer output)."""
    h = h0
    x_last = h0
    for weights in model.layers:
        x_last = h
        h = layer_forward(age_modulate(h, model.beta, theta_std), phis, weights)
    return x_last, h


def temporal_update(z: EmbeddingState, phis_next, x_next: np.ndarray, model, theta_std: float,
                    segment_index: int | None = None, step: float = 1.0) -> EmbeddingState:
    """Explicit Euler step Z(t+1) = Z(t) + step * relu(sum_k Phi_k(t+1) X_theta(t+1) W_k^(L))."""
    nxt = z.segment_index + 1
    if segment_index is not None and segment_index != nxt:
        raise GcnError(f"expected inputs for segment {nxt}, got {segment_index}")
    inc = layer_forward(age_modulate(x_next, model.beta, theta_std), phis_next, model.layers[-1])
    if inc.shape != z.z.shape:
        raise GcnError(f"increment shape {inc.shape} differs from embedding {z.z.shape}")
    return EmbeddingState(z.z + step * inc, nxt)


def readout(z_final: np.ndarray, model, task: str = CLASSIFY) -> float:
    """Mean-pool rows then apply a head; age comes back in years."""
    pooled = np.asarray(z_final, dtype=float).mean(axis=0)
    if task == CLASSIFY:
        return float(pooled @ model.cls_w + model.cls_b)
    if task == REGRESS_AGE:
        return float(destandardize_age(pooled @ model.age_w + model.age_b))
    raise GcnError(f"unknown task {task!r}")
