"""Model parameters, training configuration and JSON checkpoints."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..cmfc_loss import ProjectionWeights
from .ops import GcnError

BETA_MIN = 1e-6
BETA_MAX = 1.0 - 1e-6


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    lam: float = 0.5
    K: int = 3
    L: int = 2
    hidden: int = 16
    gamma_init: float = 1.0
    beta_init: float = 0.5
    loss_mix: float = 1.0
    cls_weight: float = 1.0
    age_weight: float = 1.0
    val_fraction: float = 0.2
    n_segments: int = 2
    step: float = 1.0
    freeze_beta: float | None = None

    def validate(self):
        if self.epochs < 0:
            raise GcnError("epochs must be >= 0")
        for name in ("batch_size", "K", "L", "hidden", "n_segments"):
            if getattr(self, name) < 1:
                raise GcnError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise GcnError("learning_rate must be positive")
        if not 0 < self.lam < 1:
            raise GcnError("lambda must lie in (0, 1)")
        if not 0 < self.val_fraction < 1:
            raise GcnError("val_fraction must lie in (0, 1)")
        if self.freeze_beta is not None and not 0 <= self.freeze_beta < 1:
            raise GcnError("frozen beta must lie in [0, 1)")
        if min(self.loss_mix, self.cls_weight, self.age_weight) < 0:
            raise GcnError("loss weights must be >= 0")


@dataclass
class GcnModel:
    layers: list[list[np.ndarray]]
    beta: float
    gamma: np.ndarray
    cls_w: np.ndarray
    cls_b: float
    age_w: np.ndarray
    age_b: float
    proj: ProjectionWeights
    seed: int = 0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise GcnError(f"beta must lie in [0, 1), got {self.beta}")
        for arr in self.arrays().values():
            if not np.all(np.isfinite(arr)):
                raise GcnError("model weights must be finite")

    @property
    def K(self) -> int:
        return len(self.layers[0])

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[0],) + tuple(ws[0].shape[1] for ws in self.layers)

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable tensor."""
        out = {}
        for l, ws in enumerate(self.layers):
            for k, w in enumerate(ws):
                out[f"W{l}_{k}"] = w
        out["beta"] = np.array(self.beta)
        out["gamma"] = self.gamma
        out["cls_w"] = self.cls_w
        out["cls_b"] = np.array(self.cls_b)
        out["age_w"] = self.age_w
        out["age_b"] = np.array(self.age_b)
        for name in ("w1", "b1", "w2", "b2"):
            out[f"proj_{name}"] = getattr(self.proj, name)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], L: int, K: int, seed: int = 0,
                    config: dict | None = None) -> "GcnModel":
        a = {k: np.array(v, dtype=float) for k, v in arrays.items()}
        layers = [[a[f"W{l}_{k}"] for k in range(K)] for l in range(L)]
        proj = ProjectionWeights(a["proj_w1"], a["proj_b1"], a["proj_w2"], a["proj_b2"])
        return cls(layers, float(a["beta"]), a["gamma"], a["cls_w"], float(a["cls_b"]),
                   a["age_w"], float(a["age_b"]), proj, seed, dict(config or {}))


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-lim, lim, (d_in, d_out))


def init_model(v: int, config: TrainConfig, d_in: int | None = None) -> GcnModel:
    """Seeded initialization; task heads start at zero so early steps only move them."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    dims = [v if d_in is None else d_in] + [config.hidden] * config.L
    layers = [[glorot(rng, dims[l], dims[l + 1]) for _ in range(config.K)]
              for l in range(config.L)]
    proj = ProjectionWeights.init(rng)
    beta = config.beta_init if config.freeze_beta is None else config.freeze_beta
    return GcnModel(layers, beta, np.full((v, v), config.gamma_init),
                    np.zeros(dims[-1]), 0.0, np.zeros(dims[-1]), 0.0, proj,
                    config.seed, asdict(config))


def clamp_beta(beta: float) -> float:
    return float(min(max(beta, BETA_MIN), BETA_MAX))


def save_checkpoint(model: GcnModel, path) -> None:
    payload = {
        "dims": list(model.dims),
        "K": model.K,
        "L": model.L,
        "seed": model.seed,
        "config": model.config,
        "arrays": {k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()}
                   for k, v in model.arrays().items()},
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> GcnModel:
    try:
        payload = json.loads(Path(path).read_text())
        arrays = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in payload["arrays"].items()}
        return GcnModel.from_arrays(arrays, payload["L"], payload["K"], payload["seed"],
                                    payload["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GcnError(f"malformed checkpoint {path}: {exc}") from exc
