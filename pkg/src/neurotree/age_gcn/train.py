"""Mini-batch gradient descent with a seeded stratified hold-out split."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from scipy.stats import rankdata

from ..cohort_io import destandardize_age
from .batched import (check_finite, embed, make_batch, operator_norm_max, predict, to_params,
                      total_loss)
from .features import SubjectFeatures
from .model import GcnModel, TrainConfig, clamp_beta, init_model
from .ops import GcnError

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "loss", "l_pos", "l_neg", "l_b", "l_age",
                  "val_auc", "val_mse", "phi_norm_max"]


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    l_pos: float
    l_neg: float
    l_b: float
    l_age: float
    val_auc: float
    val_mse: float
    phi_norm_max: float

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties get half credit)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n0 == 0 or n1 == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n1 * (n1 + 1) / 2) / (n0 * n1))


def stratified_split(labels, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (train, val); each class contributes round(val_fraction * n_c) to validation."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(val_fraction * len(idx)))
        val.extend(idx[:n_val])
        train.extend(idx[n_val:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


def sgd_step(params: dict[str, torch.Tensor], lr: float, frozen=()) -> None:
    with torch.no_grad():
        for name, p in params.items():
            if p.grad is None or name in frozen:
                continue
            p -= lr * p.grad
            p.grad = None


def _model_from(params, model: GcnModel) -> GcnModel:
    arrays = {k: v.detach().numpy().copy() for k, v in params.items()}
    return GcnModel.from_arrays(arrays, model.L, model.K, model.seed, model.config)


def evaluate(model: GcnModel, feats: list[SubjectFeatures], step: float = 1.0) -> tuple[float, float]:
    """(AUC, age MSE in years^2) on the given subjects."""
    if not feats:
        return float("nan"), float("nan")
    batch = make_batch(feats)
    logit, age_hat, _ = predict(model, batch, step)
    mse = float(np.mean((destandardize_age(age_hat) - destandardize_age(batch.age.numpy())) ** 2))
    return auc(logit, batch.label.numpy()), mse


def train(feats: list[SubjectFeatures], config: TrainConfig, model: GcnModel | None = None):
    """Train on cached subject features; returns (model, list of EpochMetrics, (train, val) idx).

    Subjects are processed in the order given (callers sort by subject id), and
    every random draw comes from ``config.seed``.
    """
    config.validate()
    torch.set_num_threads(1)
    if model is None:
        model = init_model(feats[0].v, config)
    labels = np.array([f.label for f in feats])
    if len(np.unique(labels)) < 2:
        raise GcnError("training cohort needs both classes")
    train_idx, val_idx = stratified_split(labels, config.val_fraction, config.seed)
    val_feats = [feats[i] for i in val_idx]
    rng = np.random.default_rng(config.seed + 1)
    params = to_params(model)
    frozen = ("beta",) if config.freeze_beta is not None else ()
    if config.freeze_beta is not None:
        with torch.no_grad():
            params["beta"].fill_(config.freeze_beta)
    kw = dict(loss_mix=config.loss_mix, cls_weight=config.cls_weight,
              age_weight=config.age_weight, step=config.step)
    metrics: list[EpochMetrics] = []
    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        sums = np.zeros(5)
        n_seen = 0
        phi_max = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [feats[i] for i in order[start:start + config.batch_size]]
            batch = make_batch(chunk)
            parts = total_loss(params, batch, model.L, model.K, **kw)
            check_finite(parts, batch)
            parts.total.backward()
            sgd_step(params, config.learning_rate, frozen)
            if not frozen:
                with torch.no_grad():
                    params["beta"].fill_(clamp_beta(float(params["beta"])))
            n = len(chunk)
            sums += n * np.array([parts.total.item(), parts.l_pos.item(), parts.l_neg.item(),
                                  parts.l_b.item(), parts.l_age.item()])
            n_seen += n
            phi_max = max(phi_max, parts.phi_norm_max)
        current = _model_from(params, model)
        with torch.no_grad():
            vb = make_batch(val_feats)
            _, phi, _ = embed(to_params(current, False), vb, current.L, current.K, config.step)
            phi_max = max(phi_max, operator_norm_max(phi))
        val_auc, val_mse = evaluate(current, val_feats, config.step)
        avg = sums / max(n_seen, 1)
        if not np.isfinite(avg[0]):
            raise GcnError(f"loss diverged at epoch {epoch}")
        metrics.append(EpochMetrics(epoch, *avg.tolist(), val_auc, val_mse, phi_max))
        logger.info("epoch %d loss %.6g val_auc %.4f", epoch, avg[0], val_auc)
    return _model_from(params, model), metrics, (train_idx, val_idx)
