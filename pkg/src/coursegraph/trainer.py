"""Combined-objective training loop.

Each epoch resamples edge batches and corruption negatives, evaluates the
four losses on a fresh tape, backpropagates and applies an adaptive
moment update with decoupled weight decay (plain SGD available behind
``optimizer='sgd'``). Fully deterministic given the config seed.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import fusion
from .autodiff import ParamStore, Tape
from .encoder import ViewEncoder, encode, sample_edges
from .errors import ConfigError, NumericFault, SchemaError
from .hin import HinGraph
from .metapath import MetaPath, ViewGraph, project_all
from .model import (LossNodes, ModelDims, StepInputs, forward_losses,
                    init_params)
from .objectives import make_corruption_plan

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lam_q: float = 1.0
    lam_j: float = 1.0
    lam_s: float = 1.0
    lam_y: float = 1.0
    epochs: int = 200
    lr: float = 0.001
    weight_decay: float = 0.001
    dropout: float = 0.1
    d: int = 128
    k: int = 128
    attn_dim: int = 0  # 0 means "same as k"
    depth: int = 1
    seed: int = 0
    max_pos: int = 512
    checkpoint_interval: int = 50
    optimizer: str = "adam"
    share_view_weights: bool = False
    share_agreement_disc: bool = False
    importance_mean: str = "nodes"

    def validate(self) -> None:
        if min(self.lam_q, self.lam_j, self.lam_s, self.lam_y) < 0:
            raise ConfigError("loss weights must be non-negative")
        if max(self.lam_q, self.lam_j, self.lam_s, self.lam_y) == 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        if self.d < 1 or self.k < 1 or self.attn_dim < 0:
            raise ConfigError("dimensions must be positive")
        if self.max_pos < 1:
            raise ConfigError("max_pos must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError("checkpoint_interval must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.importance_mean not in ("nodes", "first_rows"):
            raise ConfigError(f"unknown importance_mean {self.importance_mean!r}")
        if self.depth < 1:
            raise ConfigError("encoder depth must be >= 1")

    @property
    def attn_dim_effective(self) -> int:
        return self.attn_dim if self.attn_dim else self.k

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str | float | int | bool]) -> "TrainConfig":
        """Build from a flat key/value mapping (config-file values arrive as
        strings and are coerced by field type)."""
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, value in mapping.items():
            if key not in by_name:
                raise ConfigError(f"unknown config key {key!r}")
            ftype = by_name[key].type
            if isinstance(value, str):
                if ftype == "bool":
                    if value.lower() not in ("true", "false", "0", "1"):
                        raise ConfigError(f"bad boolean for {key!r}: {value!r}")
                    value = value.lower() in ("true", "1")
                elif ftype == "int":
                    value = int(value)
                elif ftype == "float":
                    value = float(value)
            kwargs[key] = value
        return cls(**kwargs)


def loss_variant(cfg: TrainConfig, variant: set[str] | Sequence[str]) -> TrainConfig:
    """Zero every validity-loss weight not named in ``variant`` (subset of
    {'J', 'S', 'Y'}); the reconstruction weight is always kept."""
    members = {v.upper() for v in variant}
    unknown = members - {"J", "S", "Y"}
    if unknown:
        raise ConfigError(f"unknown loss variant members {sorted(unknown)}")
    return replace(cfg,
                   lam_j=cfg.lam_j if "J" in members else 0.0,
                   lam_s=cfg.lam_s if "S" in members else 0.0,
                   lam_y=cfg.lam_y if "Y" in members else 0.0)


def total_loss(components: tuple[float, float, float, float],
               weights: tuple[float, float, float, float]) -> float:
    """Weighted sum of the four loss components."""
    if not all(np.isfinite(components)):
        raise NumericFault("non-finite loss component")
    return float(sum(w * c for w, c in zip(weights, components)))


@dataclass
class EpochRow:
    epoch: int
    l_q: float
    l_j: float
    l_s: float
    l_y: float
    total: float


@dataclass
class TrainReport:
    rows: list[EpochRow]
    alpha: np.ndarray
    view_labels: list[str]
    seed: int
    config: dict
    wall_clock: float

    def log_lines(self) -> list[str]:
        lines = ["epoch\tL_q\tL_j\tL_s\tL_y\ttotal"]
        for r in self.rows:
            lines.append(f"{r.epoch}\t{r.l_q:.17g}\t{r.l_j:.17g}\t{r.l_s:.17g}"
                         f"\t{r.l_y:.17g}\t{r.total:.17g}")
        return lines


@dataclass
class EmbeddingSet:
    view_labels: list[str]
    per_view: list[np.ndarray]
    unified: np.ndarray
    alpha: np.ndarray


class TrainAborted(NumericFault):
    """Raised when an epoch hits a numeric fault; carries the restored
    last-good parameters and the partial report."""

    def __init__(self, message: str, epoch: int, params: ParamStore,
                 report: TrainReport):
        super().__init__(message)
        self.epoch = epoch
        self.params = params
        self.report = report


class Adam:
    """Adaptive-moment descent with decoupled weight decay."""

    def __init__(self, params: ParamStore, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = {n: np.zeros_like(s.value) for n, s in params.trainable_items()}
        self._v = {n: np.zeros_like(s.value) for n, s in params.trainable_items()}
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for name, slot in self.params.trainable_items():
            g = slot.grad
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self._t)
            v_hat = v / (1 - b2 ** self._t)
            slot.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                slot.value -= self.lr * self.weight_decay * slot.value


class SGD:
    """Plain gradient descent with the same decoupled weight decay."""

    def __init__(self, params: ParamStore, lr: float, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self) -> None:
        for _, slot in self.params.trainable_items():
            slot.value -= self.lr * slot.grad
            if self.weight_decay:
                slot.value -= self.lr * self.weight_decay * slot.value


def _make_optimizer(cfg: TrainConfig, params: ParamStore):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr, cfg.weight_decay)
    return Adam(params, cfg.lr, cfg.weight_decay)


def model_dims(cfg: TrainConfig, view_labels: list[str]) -> ModelDims:
    return ModelDims(view_labels=view_labels, d=cfg.d, k=cfg.k,
                     attn_dim=cfg.attn_dim_effective, depth=cfg.depth,
                     share_view_weights=cfg.share_view_weights,
                     share_agreement_disc=cfg.share_agreement_disc,
                     importance_mean=cfg.importance_mean)


def sample_step_inputs(views: Sequence[ViewGraph], n_courses: int, d: int,
                       cfg: TrainConfig, rng: np.random.Generator) -> StepInputs:
    """Draw one epoch's batches, corruption plans and dropout mask."""
    batches = [sample_edges(v, rng, cfg.max_pos) for v in views]
    plans_agree = [make_corruption_plan(n_courses, rng, seed=cfg.seed) for _ in views]
    plans_consist = [make_corruption_plan(n_courses, rng, seed=cfg.seed) for _ in views]
    plan_align = make_corruption_plan(n_courses, rng, seed=cfg.seed)
    mask = None
    if cfg.dropout > 0.0:
        keep = rng.random((n_courses, d)) >= cfg.dropout
        mask = keep.astype(np.float64) / (1.0 - cfg.dropout)
    return StepInputs(batches=batches, plans_agree=plans_agree,
                      plans_consist=plans_consist, plan_align=plan_align,
                      dropout_mask=mask)


def embeddings_from_params(params: ParamStore, dims: ModelDims,
                           views: Sequence[ViewGraph],
                           X: np.ndarray) -> EmbeddingSet:
    """Inference-mode embeddings through the numpy reference ops (no dropout)."""
    h_views = []
    for view, label in zip(views, dims.view_labels):
        enc = ViewEncoder(weights=[params[n].value for n in dims.enc_names(label)])
        h_views.append(encode(view, X, enc))
    attn = fusion.AttentionParams(W=params["attn/W"].value,
                                  b=params["attn/b"].value,
                                  q=params["attn/q"].value)
    weights = fusion.attention_weights(h_views, attn, mode=dims.importance_mean)
    unified = fusion.fuse(h_views, weights.normalized)
    return EmbeddingSet(view_labels=list(dims.view_labels), per_view=h_views,
                        unified=unified, alpha=weights.normalized)


def train(g: HinGraph, X: np.ndarray, mps: Sequence[MetaPath],
          cfg: TrainConfig) -> tuple[ParamStore, EmbeddingSet, TrainReport]:
    """Project the meta-path views and optimize the combined objective.

    Returns the trained parameters, the final embeddings (per view plus
    unified, with attention weights) and the per-epoch loss report.
    """
    cfg.validate()
    if not mps:
        raise ConfigError("at least one meta-path is required")
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (g.n_courses, cfg.d):
        raise ConfigError(f"feature matrix is {X.shape}, expected "
                          f"({g.n_courses}, {cfg.d})")
    views = project_all(g, mps)
    return train_views(views, X, cfg)


def train_views(views: Sequence[ViewGraph], X: np.ndarray,
                cfg: TrainConfig) -> tuple[ParamStore, EmbeddingSet, TrainReport]:
    """Training loop over pre-projected views (see :func:`train`)."""
    cfg.validate()
    started = time.perf_counter()
    n = X.shape[0]
    labels = [v.metapath.label for v in views]
    dims = model_dims(cfg, labels)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(dims, rng)
    opt = _make_optimizer(cfg, params)
    weights = (cfg.lam_q, cfg.lam_j, cfg.lam_s, cfg.lam_y)

    rows: list[EpochRow] = []
    snapshot = params.state()
    for epoch in range(1, cfg.epochs + 1):
        try:
            step = sample_step_inputs(views, n, cfg.d, cfg, rng)
            tape = Tape()
            losses = forward_losses(params, dims, views, X, step, weights, tape)
            l_q, l_j, l_s, l_y = losses.components()
            total = total_loss((l_q, l_j, l_s, l_y), weights)
            params.zero_grads()
            tape.backward(losses.total)
            opt.step()
        except NumericFault as exc:
            params.load_state(snapshot)
            report = TrainReport(rows=rows, alpha=np.array([]), view_labels=labels,
                                 seed=cfg.seed, config=asdict(cfg),
                                 wall_clock=time.perf_counter() - started)
            raise TrainAborted(f"numeric fault at epoch {epoch}: {exc}; "
                               f"parameters restored to last checkpoint",
                               epoch=epoch, params=params, report=report) from exc
        rows.append(EpochRow(epoch, l_q, l_j, l_s, l_y, total))
        if epoch % cfg.checkpoint_interval == 0:
            snapshot = params.state()

    emb = embeddings_from_params(params, dims, views, X)
    report = TrainReport(rows=rows, alpha=emb.alpha.copy(), view_labels=labels,
                         seed=cfg.seed, config=asdict(cfg),
                         wall_clock=time.perf_counter() - started)
    return params, emb, report


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path: str | Path, params: ParamStore) -> None:
    """Exact float64 round-trip of every named tensor (single .npz file)."""
    path = Path(path)
    meta = {"version": CHECKPOINT_VERSION,
            "names": params.names(),
            "trainable": [s.trainable for _, s in params.items()]}
    arrays = {f"t{i}": slot.value for i, (_, slot) in enumerate(params.items())}
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> ParamStore:
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise SchemaError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = ParamStore()
        for i, (name, trainable) in enumerate(zip(meta["names"], meta["trainable"])):
            params.add(name, data[f"t{i}"], trainable=trainable)
    return params
