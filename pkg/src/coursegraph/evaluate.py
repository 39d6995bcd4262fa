"""Frozen-embedding course-quality evaluation and ablation reports.

The probe is multinomial logistic regression trained with the package's
own descent machinery; metrics are accuracy and macro-F1 over the
6-class quality scale.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .autodiff import ParamStore, Tape
from .errors import ConfigError, SchemaError
from .hin import HinGraph
from .metapath import DEFAULT_METAPATHS, MetaPath
from .trainer import Adam, TrainConfig, loss_variant, train

N_CLASSES = 6


@dataclass(frozen=True)
class SplitPlan:
    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    ratio: float


def split(labels: Mapping[int, int], ratio: float = 0.8, seed: int = 0) -> SplitPlan:
    """Shuffle labeled ids and take the first floor(ratio * N) for training."""
    if not (0.0 < ratio < 1.0):
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    ids = np.array(sorted(labels), dtype=np.intp)
    if ids.size < 2:
        raise SchemaError("need at least 2 labeled courses to split")
    rng = np.random.default_rng(seed)
    rng.shuffle(ids)
    n_train = int(np.floor(ratio * ids.size))
    return SplitPlan(train_ids=ids[:n_train], test_ids=ids[n_train:],
                     seed=seed, ratio=ratio)


@dataclass
class SoftmaxClassifier:
    W: np.ndarray  # (k, C)
    b: np.ndarray  # (1, C)

    def logits(self, H: np.ndarray) -> np.ndarray:
        return H @ self.W + self.b

    def predict(self, H: np.ndarray) -> np.ndarray:
        return self.logits(H).argmax(axis=1)


def softmax_xent(params: ParamStore, H: np.ndarray, onehot: np.ndarray,
                 tape: Tape):
    """Mean cross-entropy node for logits H W + b."""
    z = tape.add_bias(tape.matmul(tape.constant(H), tape.param(params["W"])),
                      tape.param(params["b"]))
    lse = tape.logsumexp_rows(z)
    picked = tape.row_sums(tape.hadamard(z, tape.constant(onehot)))
    return tape.mean_all(tape.sub(lse, picked))


def fit_classifier(h_train: np.ndarray, y_train: np.ndarray,
                   classes: int = N_CLASSES, epochs: int = 500,
                   lr: float = 0.01) -> SoftmaxClassifier:
    """Multinomial logistic regression on frozen embeddings (zero init,
    full-batch adaptive descent, deterministic)."""
    h_train = np.asarray(h_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.intp)
    if h_train.shape[0] != y_train.size or y_train.size == 0:
        raise SchemaError("need one label per training row")
    if y_train.min() < 0 or y_train.max() >= classes:
        raise SchemaError(f"labels must lie in [0, {classes})")
    if np.unique(y_train).size == 1:
        warnings.warn("single-class training set; the probe degenerates to a "
                      "constant predictor")
    onehot = np.zeros((y_train.size, classes))
    onehot[np.arange(y_train.size), y_train] = 1.0

    params = ParamStore()
    params.add("W", np.zeros((h_train.shape[1], classes)))
    params.add("b", np.zeros((1, classes)))
    opt = Adam(params, lr=lr)
    for _ in range(epochs):
        tape = Tape()
        loss = softmax_xent(params, h_train, onehot, tape)
        params.zero_grads()
        tape.backward(loss)
        opt.step()
    return SoftmaxClassifier(W=params["W"].value.copy(),
                             b=params["b"].value.copy())


def accuracy(y: np.ndarray, y_hat: np.ndarray) -> float:
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.size == 0 or y.shape != y_hat.shape:
        raise SchemaError("accuracy needs equal-length non-empty label arrays")
    return float(np.mean(y == y_hat))


def macro_f1(y: np.ndarray, y_hat: np.ndarray, classes: int = N_CLASSES) -> float:
    """Unweighted mean of per-class F1. A class's F1 is 0 when precision and
    recall are both 0; classes absent from both y and y_hat are excluded."""
    y = np.asarray(y, dtype=np.intp)
    y_hat = np.asarray(y_hat, dtype=np.intp)
    if y.size == 0 or y.shape != y_hat.shape:
        raise SchemaError("macro_f1 needs equal-length non-empty label arrays")
    f1s = []
    for c in range(classes):
        tp = int(np.sum((y == c) & (y_hat == c)))
        fp = int(np.sum((y != c) & (y_hat == c)))
        fn = int(np.sum((y == c) & (y_hat != c)))
        if tp + fp + fn == 0:
            continue  # class absent everywhere
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall)
                   if precision + recall else 0.0)
    if not f1s:
        raise SchemaError("no classes present in either label array")
    return float(np.mean(f1s))


@dataclass
class MetricsRow:
    setting: str
    accuracy: float
    macro_f1: float


def evaluate_embeddings(h: np.ndarray, labels: Mapping[int, int],
                        ratio: float = 0.8, seed: int = 0,
                        classes: int = N_CLASSES) -> tuple[float, float]:
    """Split, fit the probe on train embeddings, and score the test split."""
    plan = split(labels, ratio=ratio, seed=seed)
    y = {i: labels[i] for i in labels}
    y_train = np.array([y[i] for i in plan.train_ids], dtype=np.intp)
    y_test = np.array([y[i] for i in plan.test_ids], dtype=np.intp)
    clf = fit_classifier(h[plan.train_ids], y_train, classes=classes)
    y_pred = clf.predict(h[plan.test_ids])
    return accuracy(y_test, y_pred), macro_f1(y_test, y_pred, classes=classes)


def run_setting(g: HinGraph, X: np.ndarray, labels: Mapping[int, int],
                mps: Sequence[MetaPath], cfg: TrainConfig,
                classes: int = N_CLASSES) -> tuple[float, float]:
    """Train on the given views with cfg.seed, then evaluate the unified
    embedding (the same seed drives the split)."""
    _, emb, _ = train(g, X, mps, cfg)
    return evaluate_embeddings(emb.unified, labels, seed=cfg.seed, classes=classes)


def _ablation_cell(args) -> tuple[str, int, float, float]:
    g, X, labels, mps, cfg, setting, classes = args
    acc, f1 = run_setting(g, X, labels, mps, cfg, classes=classes)
    return setting, cfg.seed, acc, f1


def _median_rows(cells: list[tuple[str, int, float, float]],
                 order: list[str]) -> list[MetricsRow]:
    rows = []
    for setting in order:
        accs = [c[2] for c in cells if c[0] == setting]
        f1s = [c[3] for c in cells if c[0] == setting]
        rows.append(MetricsRow(setting=setting,
                               accuracy=float(np.median(accs)),
                               macro_f1=float(np.median(f1s))))
    return rows


def _run_cells(work: list[tuple], jobs: int) -> list[tuple[str, int, float, float]]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_ablation_cell, work))
    return [_ablation_cell(w) for w in work]


def metapath_subsets(mps: Sequence[MetaPath] = DEFAULT_METAPATHS) -> list[tuple[MetaPath, ...]]:
    """All non-empty subsets, singletons first, full set last."""
    subsets: list[tuple[MetaPath, ...]] = []
    n = len(mps)
    for size in range(1, n + 1):
        for bits in range(1 << n):
            chosen = tuple(mp for i, mp in enumerate(mps) if bits >> i & 1)
            if len(chosen) == size:
                subsets.append(chosen)
    return subsets


def subset_label(mps: Sequence[MetaPath]) -> str:
    return "&".join(mp.label for mp in mps)


def ablate_metapaths(g: HinGraph, X: np.ndarray, labels: Mapping[int, int],
                     cfg: TrainConfig, seeds: Sequence[int] | None = None,
                     mps: Sequence[MetaPath] = DEFAULT_METAPATHS,
                     jobs: int = 1, classes: int = N_CLASSES) -> list[MetricsRow]:
    """Train and evaluate every non-empty meta-path subset; one row per
    subset with the median metrics over the seeds."""
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    work = []
    order = []
    for subset in metapath_subsets(mps):
        setting = subset_label(subset)
        order.append(setting)
        for seed in seeds:
            work.append((g, X, labels, subset, replace(cfg, seed=seed),
                         setting, classes))
    return _median_rows(_run_cells(work, jobs), order)


LOSS_VARIANTS: tuple[tuple[str, ...], ...] = (
    ("J",), ("S",), ("Y",), ("J", "S"), ("J", "Y"), ("S", "Y"), ("J", "S", "Y"))


def ablate_losses(g: HinGraph, X: np.ndarray, labels: Mapping[int, int],
                  cfg: TrainConfig, seeds: Sequence[int] | None = None,
                  mps: Sequence[MetaPath] = DEFAULT_METAPATHS,
                  include_base: bool = False, jobs: int = 1,
                  classes: int = N_CLASSES) -> list[MetricsRow]:
    """Train and evaluate the seven validity-loss combinations (optionally
    prefixed by the reconstruction-only base model)."""
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    variants: list[tuple[str, ...]] = list(LOSS_VARIANTS)
    if include_base:
        variants.insert(0, ())
    work = []
    order = []
    for variant in variants:
        setting = "&".join(variant) if variant else "base"
        order.append(setting)
        for seed in seeds:
            work.append((g, X, labels, tuple(mps),
                         replace(loss_variant(cfg, set(variant)), seed=seed),
                         setting, classes))
    return _median_rows(_run_cells(work, jobs), order)


def render_metrics_table(rows: Sequence[MetricsRow], setting_header: str) -> str:
    """Plain-text table of the report rows."""
    width = max(len(setting_header), *(len(r.setting) for r in rows))
    lines = [f"{setting_header:<{width}}  accuracy  macro_f1",
             "-" * (width + 20)]
    for r in rows:
        lines.append(f"{r.setting:<{width}}  {r.accuracy:8.4f}  {r.macro_f1:8.4f}")
    return "\n".join(lines)
