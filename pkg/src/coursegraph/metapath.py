"""Course-anchored meta-paths and per-view adjacency construction.

Each supported meta-path is a length-2 symmetric walk
course -> intermediate -> course; projecting one yields a course-course
adjacency A (two courses are linked iff they share at least one
intermediate neighbour), which is then symmetrically normalized with
self-loops for GCN propagation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import SchemaError, ShapeError
from .hin import EdgeType, HinGraph, NodeType


@dataclass(frozen=True)
class MetaPath:
    """Course -> intermediate -> course walk template."""

    intermediate: NodeType
    label: str


MP1 = MetaPath(NodeType.TEACHER, "MP1")
MP2 = MetaPath(NodeType.STUDENT, "MP2")
MP3 = MetaPath(NodeType.SUBJECT, "MP3")
DEFAULT_METAPATHS: tuple[MetaPath, ...] = (MP1, MP2, MP3)

_BY_LABEL = {mp.label: mp for mp in DEFAULT_METAPATHS}

EDGE_FOR_INTERMEDIATE = {
    NodeType.TEACHER: EdgeType.UPLOAD,
    NodeType.STUDENT: EdgeType.CLICK,
    NodeType.SUBJECT: EdgeType.INCLUDE,
}


def metapaths_from_labels(spec: str | Sequence[str]) -> list[MetaPath]:
    """Parse 'MP1&MP3' (or a sequence of labels) into MetaPath objects."""
    labels = [s.strip() for s in spec.replace(",", "&").split("&")] \
        if isinstance(spec, str) else list(spec)
    out = []
    for label in labels:
        if label not in _BY_LABEL:
            raise SchemaError(f"unknown meta-path label {label!r}")
        out.append(_BY_LABEL[label])
    return out


@dataclass
class ViewGraph:
    """One meta-path's course adjacency plus its normalized propagation matrix."""

    metapath: MetaPath
    A: np.ndarray
    A_hat: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(self.A)) // 2


def project(g: HinGraph, mp: MetaPath, weighted: bool = False) -> np.ndarray:
    """Course-course adjacency through one intermediate type.

    A[i, j] > 0 iff i != j and courses i, j share at least one neighbour of
    the intermediate type; computed as the sparse product R R^T of the
    course x intermediate incidence. Binary by default; ``weighted`` keeps
    shared-neighbour counts.
    """
    if mp.intermediate not in EDGE_FOR_INTERMEDIATE:
        raise SchemaError(f"unsupported meta-path intermediate {mp.intermediate!r}")
    et = EDGE_FOR_INTERMEDIATE[mp.intermediate]
    n_c = g.n_courses
    n_x = g.count(mp.intermediate)
    rows, cols = [], []
    for e in g.edges:
        if e.type is et:
            rows.append(g.course_local(e.dst))
            cols.append(g.local_index(e.src))
    R = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_c, n_x))
    P = (R @ R.T).toarray()
    np.fill_diagonal(P, 0.0)
    if not weighted:
        P = (P > 0).astype(np.float64)
    return P


def normalize(A: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2},
    where D is the row-sum diagonal of A + I (always >= 1, so no zero division)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if np.any(A < 0):
        raise ValueError("adjacency entries must be non-negative")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diagonal(A) != 0):
        raise ValueError("adjacency diagonal must be zero")
    A_tilde = A + np.eye(A.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(A_tilde.sum(axis=1))
    return d_inv_sqrt[:, None] * A_tilde * d_inv_sqrt[None, :]


def project_all(g: HinGraph, mps: Sequence[MetaPath],
                weighted: bool = False) -> list[ViewGraph]:
    """Project and normalize each meta-path, preserving order."""
    labels = [mp.label for mp in mps]
    if len(set(labels)) != len(labels):
        raise SchemaError(f"duplicate meta-path labels in {labels}")
    views = []
    for mp in mps:
        A = project(g, mp, weighted=weighted)
        views.append(ViewGraph(metapath=mp, A=A, A_hat=normalize(A)))
    return views


def dump_adjacency(views: Sequence[ViewGraph], out_dir: str | Path) -> list[Path]:
    """Write each view's A as an upper-triangle TSV edge list."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for view in views:
        path = out_dir / f"adjacency_{view.metapath.label}.tsv"
        ii, jj = np.nonzero(np.triu(view.A, k=1))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("i\tj\n")
            for i, j in zip(ii, jj):
                fh.write(f"{i}\t{j}\n")
        paths.append(path)
    return paths
