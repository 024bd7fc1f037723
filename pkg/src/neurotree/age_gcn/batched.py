"""Batched float64 torch forward pass, total loss and reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..cmfc_loss import EPS
from .features import SubjectFeatures
from .model import GcnModel
from .ops import GcnError

DTYPE = torch.float64
EPS_DEG = 1e-8


@dataclass
class Batch:
    subject_ids: list[str]
    a_static: torch.Tensor  # (B, v, v)
    a_dyn: torch.Tensor  # (B, T, v, v)
    powers: torch.Tensor  # (B, T, K, v, v)
    theta: torch.Tensor  # (B,)
    label: torch.Tensor  # (B,)
    age: torch.Tensor  # (B,)


@dataclass
class LossParts:
    total: torch.Tensor
    l_pos: torch.Tensor
    l_neg: torch.Tensor
    l_b: torch.Tensor
    l_age: torch.Tensor
    per_subject: torch.Tensor
    phi_norm_max: float


def make_batch(feats: list[SubjectFeatures]) -> Batch:
    def t(x):
        return torch.as_tensor(np.asarray(x), dtype=DTYPE)

    return Batch([f.subject_id for f in feats],
                 t(np.stack([f.a_static for f in feats])),
                 t(np.stack([f.a_dyn for f in feats])),
                 t(np.stack([f.powers for f in feats])),
                 t([f.theta_std for f in feats]),
                 t([f.label for f in feats]),
                 t([f.age_std for f in feats]))


def to_params(model: GcnModel, requires_grad: bool = True) -> dict[str, torch.Tensor]:
    return {k: torch.tensor(np.asarray(v, dtype=float), dtype=DTYPE, requires_grad=requires_grad)
            for k, v in model.arrays().items()}


def normalized_operators(params, batch: Batch, K: int):
    """Phi_k(t) for the whole batch, shape (B, T, K, v, v), and the largest raw norm."""
    a_hat = params["gamma"] * batch.a_static[:, None, None] * batch.powers[:, :, :K]
    deg = a_hat.abs().sum(dim=-1) + EPS_DEG
    d = deg.rsqrt()
    phi = d[..., :, None] * a_hat * d[..., None, :]
    norm = torch.linalg.matrix_norm(phi, ord=2)
    phi = phi / torch.clamp(norm, min=1.0)[..., None, None]
    return phi, norm


def embed(params, batch: Batch, L: int, K: int, step: float = 1.0):
    """Final embeddings Z (B, v, d_L) after the Euler sweep over segments."""
    phi, norm = normalized_operators(params, batch, K)
    scale = (params["beta"] * batch.theta)[:, None, None]
    z = None
    for t in range(batch.a_dyn.shape[1]):
        h = batch.a_dyn[:, t]
        for l in range(L):
            x = h * scale
            h = torch.relu(sum(phi[:, t, k] @ x @ params[f"W{l}_{k}"] for k in range(K)))
        z = h if z is None else z + step * h
    return z, phi, norm


def strength_latent(params, c: torch.Tensor) -> torch.Tensor:
    hidden = torch.tanh(c[..., None] * params["proj_w1"] + params["proj_b1"])
    return hidden @ params["proj_w2"] + params["proj_b2"]


def cmfc_terms(params, a_dyn: torch.Tensor):
    """Per-(subject, segment) contrastive terms, each of shape (B, T)."""
    c = a_dyn.abs().mean(dim=-1)
    h = strength_latent(params, c)
    hn = h / h.norm(dim=-1, keepdim=True)
    s = hn @ hn.transpose(-1, -2)
    e = torch.exp(s)
    ratio = e / (e.sum(dim=-1, keepdim=True) + EPS)
    hi = c >= c.mean(dim=-1, keepdim=True)
    off = ~torch.eye(c.shape[-1], dtype=torch.bool)
    pos = hi[..., :, None] & hi[..., None, :] & off
    neg = ~hi[..., :, None] & ~hi[..., None, :] & off

    def masked_mean(vals, mask):
        n = mask.sum(dim=(-1, -2))
        tot = torch.where(mask, vals, torch.zeros_like(vals)).sum(dim=(-1, -2))
        return torch.where(n > 0, tot / n.clamp(min=1), torch.zeros_like(tot))

    l_pos = masked_mean(-torch.log(ratio), pos)
    l_neg = masked_mean(-torch.log1p(-ratio), neg)
    return l_pos, l_neg


def pooled_outputs(params, z):
    pooled = z.mean(dim=1)
    return pooled @ params["cls_w"] + params["cls_b"], pooled @ params["age_w"] + params["age_b"]


def total_loss(params, batch: Batch, L: int, K: int, loss_mix: float = 1.0,
               cls_weight: float = 1.0, age_weight: float = 1.0, step: float = 1.0) -> LossParts:
    z, phi, _ = embed(params, batch, L, K, step)
    logit, age_hat = pooled_outputs(params, z)
    l_pos, l_neg = cmfc_terms(params, batch.a_dyn)
    bce = torch.nn.functional.binary_cross_entropy_with_logits(logit, batch.label, reduction="none")
    sq = (age_hat - batch.age) ** 2
    per_subject = (loss_mix * (l_pos + l_neg).mean(dim=1) + cls_weight * bce + age_weight * sq)
    return LossParts(per_subject.mean(), l_pos.mean(), l_neg.mean(), bce.mean(), sq.mean(),
                     per_subject, operator_norm_max(phi))


def operator_norm_max(phi: torch.Tensor) -> float:
    """Largest spectral norm among the rescaled operators actually used."""
    with torch.no_grad():
        return float(torch.linalg.matrix_norm(phi, ord=2).max()) if phi.numel() else 0.0


def check_finite(parts: LossParts, batch: Batch):
    bad = ~torch.isfinite(parts.per_subject.detach())
    if bad.any():
        sid = batch.subject_ids[int(torch.nonzero(bad)[0])]
        raise GcnError(f"non-finite loss for subject {sid}")


def grad_all(model: GcnModel, batch: Batch, loss_mix: float = 1.0, cls_weight: float = 1.0,
             age_weight: float = 1.0, step: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and exact gradients for every parameter, keyed like ``GcnModel.arrays``."""
    params = to_params(model)
    parts = total_loss(params, batch, model.L, model.K, loss_mix, cls_weight, age_weight, step)
    check_finite(parts, batch)
    parts.total.backward()
    grads = {k: (p.grad.numpy().copy() if p.grad is not None else np.zeros(p.shape))
             for k, p in params.items()}
    return parts.total.item(), grads


def loss_value(model: GcnModel, batch: Batch, **kw) -> float:
    with torch.no_grad():
        return float(total_loss(to_params(model, False), batch, model.L, model.K, **kw).total)


def finite_difference(model: GcnModel, batch: Batch, h: float = 1e-5,
                      **kw) -> dict[str, np.ndarray]:
    """Central differences over every scalar parameter (reference for ``grad_all``)."""
    base = {k: np.array(v, dtype=float) for k, v in model.arrays().items()}
    out = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            vals = []
            for sign in (1.0, -1.0):
                trial = {k: v.copy() for k, v in base.items()}
                trial[name][idx] += sign * h
                m = GcnModel.from_arrays(trial, model.L, model.K)
                vals.append(loss_value(m, batch, **kw))
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        out[name] = g
    return out


def predict(model: GcnModel, batch: Batch, step: float = 1.0):
    """(logits, standardized age predictions, embeddings Z) as numpy arrays."""
    with torch.no_grad():
        params = to_params(model, False)
        z, _, _ = embed(params, batch, model.L, model.K, step)
        logit, age_hat = pooled_outputs(params, z)
    return logit.numpy(), age_hat.numpy(), z.numpy()
