"""Per-region predictive scores from strength latents and embedding self-similarity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .cmfc_loss import CmfcError, StrengthLatent


@dataclass
class NodeScores:
    s: np.ndarray
    rank: np.ndarray


def rank_descending(s: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending; ties keep the lower index first."""
    return np.lexsort((np.arange(len(s)), -np.asarray(s)))


def node_scores(latent: StrengthLatent, z: np.ndarray) -> NodeScores:
    """s_i = ||h_i|| * logistic(mean_j <Z_j, Z_i>)."""
    h = np.asarray(latent.h, dtype=float)
    z = np.asarray(z, dtype=float)
    if h.shape[0] != z.shape[0]:
        raise ValueError(f"latent has {h.shape[0]} rows but embedding has {z.shape[0]}")
    mag = np.linalg.norm(h, axis=1)
    bad = np.flatnonzero(mag == 0)
    if bad.size:
        raise CmfcError(f"zero-norm latent row {int(bad[0])}")
    g = (z @ z.T).mean(axis=0)
    s = mag * expit(g)
    return NodeScores(s, rank_descending(s))
