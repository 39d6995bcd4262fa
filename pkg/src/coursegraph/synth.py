"""Seeded synthetic network generator with planted quality classes.

Class signal flows the same way the model consumes it: every
intermediate node (student/teacher/subject) gets a home class and links
same-class courses at rate ``p_in`` and other courses at ``p_out``, so
shared-neighbour projections are class-assortative. Course features are
class prototypes (orthogonal +-1 patterns) plus Gaussian noise.

A config with ``p_in == p_out`` (or with every view noised) plants no
signal at all: edges become uniform at a density-matched rate and the
feature prototypes are assigned independently of the course labels, so
downstream accuracy has chance level as its null.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.linalg import hadamard

from .errors import ConfigError
from .hin import (EDGE_TYPE_NAMES, EdgeType, HinGraph, NodeType, save_features,
                  save_hin, save_labels)
from .metapath import DEFAULT_METAPATHS, MetaPath

_VIEW_INTERMEDIATE = {mp.label: mp.intermediate for mp in DEFAULT_METAPATHS}
_EDGE_FOR_VIEW = {"MP1": EdgeType.UPLOAD, "MP2": EdgeType.CLICK,
                  "MP3": EdgeType.INCLUDE}
_EXT_PREFIX = {NodeType.STUDENT: "student", NodeType.TEACHER: "teacher",
               NodeType.COURSE: "course", NodeType.SUBJECT: "subject"}


@dataclass(frozen=True)
class SynthConfig:
    n_courses: int = 300
    n_students: int = 200
    n_teachers: int = 30
    n_subjects: int = 9
    n_classes: int = 3
    d: int = 16
    p_in: float = 0.15
    p_out: float = 0.01
    sigma_f: float = 0.5
    seed: int = 0
    noise_views: frozenset[str] = frozenset()

    def validate(self) -> None:
        for name in ("n_courses", "n_students", "n_teachers", "n_subjects"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (1 <= self.n_classes <= 6):
            raise ConfigError("n_classes must be in 1..6")
        if self.d < 1:
            raise ConfigError("feature dimension must be >= 1")
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ConfigError("need 0 <= p_out <= p_in <= 1")
        if self.sigma_f < 0:
            raise ConfigError("sigma_f must be >= 0")
        unknown = set(self.noise_views) - set(_VIEW_INTERMEDIATE)
        if unknown:
            raise ConfigError(f"unknown noise views {sorted(unknown)}")

    @property
    def uniform_rate(self) -> float:
        """Edge rate of a noised view, matching the planted views' density
        under uniform class assignment."""
        c = self.n_classes
        return self.p_in / c + self.p_out * (c - 1) / c

    @property
    def signal_present(self) -> bool:
        return self.p_in > self.p_out and not set(_VIEW_INTERMEDIATE) <= set(self.noise_views)


def make_noise_view_config(cfg: SynthConfig, view: MetaPath) -> SynthConfig:
    """Return cfg with the given view's intermediate nodes linking courses
    uniformly at random; other views keep their planted structure."""
    if view.label not in _VIEW_INTERMEDIATE:
        raise ConfigError(f"unknown view {view.label!r}")
    return dataclasses.replace(
        cfg, noise_views=frozenset(cfg.noise_views) | {view.label})


def class_prototypes(n_classes: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """+-1 pattern vectors, exactly orthogonal when d is a power of two with
    room for n_classes non-constant rows, otherwise random distinct signs."""
    if d >= n_classes + 1 and d & (d - 1) == 0:
        return hadamard(d)[1:n_classes + 1].astype(np.float64)
    protos = rng.choice([-1.0, 1.0], size=(n_classes, d))
    for _ in range(50):
        _, first = np.unique(protos, axis=0, return_index=True)
        if first.size == n_classes:
            break
        protos = rng.choice([-1.0, 1.0], size=(n_classes, d))
    return protos


def generate(cfg: SynthConfig) -> tuple[HinGraph, np.ndarray, dict[int, int]]:
    """Sample (graph, features, labels) for the config, deterministically."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    c = cfg.n_classes

    course_class = rng.integers(0, c, size=cfg.n_courses)
    # balanced home classes keep per-class affiliation strength stable
    home = {
        "MP2": np.arange(cfg.n_students) % c,   # students
        "MP1": np.arange(cfg.n_teachers) % c,   # teachers
        "MP3": np.arange(cfg.n_subjects) % c,   # subjects
    }
    counts = {"MP2": cfg.n_students, "MP1": cfg.n_teachers, "MP3": cfg.n_subjects}

    node_specs: list[tuple[str, NodeType]] = []
    for t, n in ((NodeType.STUDENT, cfg.n_students),
                 (NodeType.TEACHER, cfg.n_teachers),
                 (NodeType.COURSE, cfg.n_courses),
                 (NodeType.SUBJECT, cfg.n_subjects)):
        node_specs += [(f"{_EXT_PREFIX[t]}_{i}", t) for i in range(n)]

    edge_specs: list[tuple[str, str, EdgeType]] = []
    for label in ("MP2", "MP1", "MP3"):  # click, upload, include
        n_x = counts[label]
        draws = rng.random((n_x, cfg.n_courses))
        if label in cfg.noise_views or not cfg.signal_present:
            prob = np.full((n_x, cfg.n_courses), cfg.uniform_rate)
        else:
            same = home[label][:, None] == course_class[None, :]
            prob = np.where(same, cfg.p_in, cfg.p_out)
        xs, cs = np.nonzero(draws < prob)
        prefix = _EXT_PREFIX[_VIEW_INTERMEDIATE[label]]
        et = _EDGE_FOR_VIEW[label]
        edge_specs += [(f"{prefix}_{x}", f"course_{j}", et)
                       for x, j in zip(xs, cs)]

    protos = class_prototypes(c, cfg.d, rng)
    if cfg.signal_present:
        proto_assign = course_class
    else:
        proto_assign = rng.integers(0, c, size=cfg.n_courses)
    X = protos[proto_assign] + rng.normal(0.0, cfg.sigma_f,
                                          size=(cfg.n_courses, cfg.d))

    g = HinGraph.build(node_specs, edge_specs)
    labels = {i: int(course_class[i]) for i in range(cfg.n_courses)}
    return g, X, labels


def write_dataset(out_dir: str | Path, g: HinGraph, X: np.ndarray,
                  labels: Mapping[int, int], cfg: SynthConfig) -> None:
    """Write the four TSV files plus a manifest echoing the config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_hin(g, out_dir / "nodes.tsv", out_dir / "edges.tsv")
    save_features(X, g, out_dir / "features.tsv")
    save_labels(labels, g, out_dir / "labels.tsv")
    with open(out_dir / "synth_manifest.tsv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("key\tvalue\n")
        for f in dataclasses.fields(cfg):
            value = getattr(cfg, f.name)
            if isinstance(value, frozenset):
                value = "&".join(sorted(value)) if value else "-"
            fh.write(f"{f.name}\t{value}\n")
