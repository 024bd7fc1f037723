"""Contrastive masked functional-connectivity (CMFC) loss.

Node strengths C_i are the mean absolute connectivity of region i. A small
perceptron lifts each scalar strength to a latent vector h_i; pairs of regions
that are both above the mean strength are pulled together, pairs that are both
below are pushed apart, using cosine similarity of the latents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-6
HIDDEN = 8
LATENT = 8


class CmfcError(ValueError):
    pass


@dataclass
class FcStrength:
    c: np.ndarray
    mu: float
    t: int = 0


@dataclass
class ProjectionWeights:
    """One hidden tanh layer: h = W2 tanh(W1 c + b1) + b2 for scalar c."""

    w1: np.ndarray  # (HIDDEN,)
    b1: np.ndarray  # (HIDDEN,)
    w2: np.ndarray  # (HIDDEN, LATENT)
    b2: np.ndarray  # (LATENT,)

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = HIDDEN, latent: int = LATENT):
        lim1 = np.sqrt(6.0 / (1 + hidden))
        lim2 = np.sqrt(6.0 / (hidden + latent))
        return cls(rng.uniform(-lim1, lim1, hidden), rng.uniform(-0.5, 0.5, hidden),
                   rng.uniform(-lim2, lim2, (hidden, latent)), rng.uniform(-0.1, 0.1, latent))


@dataclass
class StrengthLatent:
    h: np.ndarray
    proj_weights: ProjectionWeights | None = None


@dataclass
class ContrastMasks:
    pos_pairs: set[tuple[int, int]]
    neg_pairs: set[tuple[int, int]]

    def as_arrays(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        pos = np.zeros((v, v), dtype=bool)
        neg = np.zeros((v, v), dtype=bool)
        for i, j in self.pos_pairs:
            pos[i, j] = True
        for i, j in self.neg_pairs:
            neg[i, j] = True
        return pos, neg


def fc_strength(a_dyn: np.ndarray, t: int = 0) -> FcStrength:
    a = np.asarray(a_dyn, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise CmfcError("fc_strength needs a square matrix")
    c = np.abs(a).mean(axis=1)
    return FcStrength(c, float(c.mean()), t)


def mask_arrays(c: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (v, v) masks; ties with the mean go to the positive side, no self pairs."""
    hi = c >= mu
    off = ~np.eye(len(c), dtype=bool)
    return np.outer(hi, hi) & off, np.outer(~hi, ~hi) & off


def build_masks(strength: FcStrength) -> ContrastMasks:
    if len(strength.c) < 2:
        raise CmfcError("need at least two regions")
    pos, neg = mask_arrays(strength.c, strength.mu)
    return ContrastMasks({(int(i), int(j)) for i, j in zip(*np.nonzero(pos))},
                         {(int(i), int(j)) for i, j in zip(*np.nonzero(neg))})


def project(c: np.ndarray, w: ProjectionWeights) -> StrengthLatent:
    hidden = np.tanh(np.outer(c, w.w1) + w.b1)
    return StrengthLatent(hidden @ w.w2 + w.b2, w)


def cosine_matrix(h: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(h, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise CmfcError(f"zero-norm latent row {int(bad[0])}: cosine similarity undefined")
    hn = h / norms[:, None]
    return hn @ hn.T


def cmfc(latent: StrengthLatent, masks: ContrastMasks, eps: float = EPS):
    """Return (l_pos, l_neg, l_total); an empty mask set contributes 0."""
    h = np.asarray(latent.h, dtype=float)
    v = h.shape[0]
    s = cosine_matrix(h)
    e = np.exp(s)
    ratio = e / (e.sum(axis=1, keepdims=True) + eps)
    pos, neg = masks.as_arrays(v)
    l_pos = -np.log(ratio[pos]).mean() if pos.any() else 0.0
    l_neg = -np.log1p(-ratio[neg]).mean() if neg.any() else 0.0
    return float(l_pos), float(l_neg), float(l_pos + l_neg)
