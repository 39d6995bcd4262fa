"""Typed heterogeneous network of students, teachers, courses and subjects.

Nodes carry dense integer ids assigned type-major (students, then
teachers, courses, subjects), preserving input order within each type,
so every type occupies a contiguous id range. Edges are undirected and
stored canonically with the non-course endpoint first. Courses are also
addressable by a local index 0..N_c-1 (their order within the course
range); feature matrices and label maps are keyed by that local index.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, SchemaError


class NodeType(IntEnum):
    STUDENT = 0
    TEACHER = 1
    COURSE = 2
    SUBJECT = 3


class EdgeType(IntEnum):
    CLICK = 0
    UPLOAD = 1
    INCLUDE = 2


NODE_TYPE_NAMES = {
    NodeType.STUDENT: "student",
    NodeType.TEACHER: "teacher",
    NodeType.COURSE: "course",
    NodeType.SUBJECT: "subject",
}
NODE_TYPE_FROM_NAME = {v: k for k, v in NODE_TYPE_NAMES.items()}

EDGE_TYPE_NAMES = {
    EdgeType.CLICK: "click",
    EdgeType.UPLOAD: "upload",
    EdgeType.INCLUDE: "include",
}
EDGE_TYPE_FROM_NAME = {v: k for k, v in EDGE_TYPE_NAMES.items()}

# Non-course endpoint type required by each relation.
EDGE_PARTNER = {
    EdgeType.CLICK: NodeType.STUDENT,
    EdgeType.UPLOAD: NodeType.TEACHER,
    EdgeType.INCLUDE: NodeType.SUBJECT,
}


@dataclass(frozen=True)
class HinNode:
    node_id: int
    type: NodeType
    external_id: str


@dataclass(frozen=True)
class HinEdge:
    """Canonical undirected edge: src is the non-course endpoint."""

    src: int
    dst: int
    type: EdgeType


class HinGraph:
    """Validated, immutable view of the typed network."""

    def __init__(self, nodes: list[HinNode], edges: list[HinEdge],
                 type_offsets: dict[NodeType, int],
                 type_counts: dict[NodeType, int]):
        self.nodes = nodes
        self.edges = edges
        self._type_offsets = type_offsets
        self._type_counts = type_counts
        self._by_external = {n.external_id: n.node_id for n in nodes}

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls,
              node_specs: Sequence[tuple[str, NodeType]],
              edge_specs: Sequence[tuple[str, str, EdgeType]]) -> "HinGraph":
        """Validate and assemble a graph from (external_id, type) nodes and
        (src_external, dst_external, type) edges given in either direction."""
        by_type: dict[NodeType, list[str]] = {t: [] for t in NodeType}
        seen_ext: set[str] = set()
        for ext, t in node_specs:
            if ext in seen_ext:
                raise SchemaError(f"duplicate node id {ext!r}")
            seen_ext.add(ext)
            by_type[t].append(ext)

        nodes: list[HinNode] = []
        type_offsets: dict[NodeType, int] = {}
        type_counts: dict[NodeType, int] = {}
        next_id = 0
        for t in NodeType:
            type_offsets[t] = next_id
            type_counts[t] = len(by_type[t])
            for ext in by_type[t]:
                nodes.append(HinNode(next_id, t, ext))
                next_id += 1

        by_external = {n.external_id: n for n in nodes}
        edges: list[HinEdge] = []
        seen_edges: set[tuple[int, int, EdgeType]] = set()
        for src_ext, dst_ext, et in edge_specs:
            for ext in (src_ext, dst_ext):
                if ext not in by_external:
                    raise SchemaError(f"edge references unknown node {ext!r}")
            a, b = by_external[src_ext], by_external[dst_ext]
            partner = EDGE_PARTNER[et]
            types = {a.type, b.type}
            if types != {partner, NodeType.COURSE}:
                raise SchemaError(
                    f"edge ({src_ext!r}, {dst_ext!r}, {EDGE_TYPE_NAMES[et]}) must join "
                    f"a {NODE_TYPE_NAMES[partner]} and a course")
            if a.type == NodeType.COURSE:
                a, b = b, a
            key = (a.node_id, b.node_id, et)
            if key in seen_edges:
                raise SchemaError(
                    f"duplicate edge ({a.external_id!r}, {b.external_id!r}, "
                    f"{EDGE_TYPE_NAMES[et]})")
            seen_edges.add(key)
            edges.append(HinEdge(a.node_id, b.node_id, et))
        return cls(nodes, edges, type_offsets, type_counts)

    # -- lookups ---------------------------------------------------------------

    def count(self, t: NodeType) -> int:
        return self._type_counts[t]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_courses(self) -> int:
        return self._type_counts[NodeType.COURSE]

    def type_range(self, t: NodeType) -> range:
        off = self._type_offsets[t]
        return range(off, off + self._type_counts[t])

    def local_index(self, node_id: int) -> int:
        """Index of a node within its type's contiguous range."""
        return node_id - self._type_offsets[self.nodes[node_id].type]

    def course_local(self, node_id: int) -> int:
        node = self.nodes[node_id]
        if node.type is not NodeType.COURSE:
            raise SchemaError(f"{node.external_id!r} is not a course")
        return node_id - self._type_offsets[NodeType.COURSE]

    def node_by_external(self, external_id: str) -> HinNode:
        try:
            return self.nodes[self._by_external[external_id]]
        except KeyError:
            raise SchemaError(f"unknown node id {external_id!r}") from None

    def course_external_ids(self) -> list[str]:
        return [self.nodes[i].external_id for i in self.type_range(NodeType.COURSE)]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for e in self.edges:
            deg[e.src] += 1
            deg[e.dst] += 1
        return deg


# -- TSV loading ----------------------------------------------------------------


def _read_tsv(path: str | Path,
              expected_header: list[str]) -> list[tuple[int, list[str]]]:
    path = Path(path)
    rows: list[tuple[int, list[str]]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line == "" and lineno > 1:
                continue
            cols = line.split("\t")
            if lineno == 1:
                if cols != expected_header:
                    raise ParseError(f"{path}:1: expected header "
                                     f"{chr(9).join(expected_header)!r}, got {line!r}")
                continue
            if len(cols) != len(expected_header):
                raise ParseError(f"{path}:{lineno}: expected "
                                 f"{len(expected_header)} columns, got {len(cols)}")
            rows.append((lineno, cols))
    return rows


def load_hin(nodes_path: str | Path, edges_path: str | Path) -> HinGraph:
    """Load and validate the network from nodes.tsv / edges.tsv."""
    node_specs: list[tuple[str, NodeType]] = []
    for lineno, cols in _read_tsv(nodes_path, ["id", "type"]):
        ext, tname = cols
        if tname not in NODE_TYPE_FROM_NAME:
            raise ParseError(f"{nodes_path}:{lineno}: unknown node type {tname!r}")
        node_specs.append((ext, NODE_TYPE_FROM_NAME[tname]))

    edge_specs: list[tuple[str, str, EdgeType]] = []
    for lineno, cols in _read_tsv(edges_path, ["src", "dst", "type"]):
        src, dst, tname = cols
        if tname not in EDGE_TYPE_FROM_NAME:
            raise ParseError(f"{edges_path}:{lineno}: unknown edge type {tname!r}")
        edge_specs.append((src, dst, EDGE_TYPE_FROM_NAME[tname]))
    return HinGraph.build(node_specs, edge_specs)


def save_hin(g: HinGraph, nodes_path: str | Path, edges_path: str | Path) -> None:
    """Write the graph back in the nodes.tsv / edges.tsv schema."""
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\ttype\n")
        for n in g.nodes:
            fh.write(f"{n.external_id}\t{NODE_TYPE_NAMES[n.type]}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("src\tdst\ttype\n")
        for e in g.edges:
            fh.write(f"{g.nodes[e.src].external_id}\t{g.nodes[e.dst].external_id}"
                     f"\t{EDGE_TYPE_NAMES[e.type]}\n")


def degree_filter(g: HinGraph, min_links: int,
                  types: Iterable[NodeType] = (NodeType.STUDENT,)) -> HinGraph:
    """Drop nodes of the given types (students by default) with total degree
    below ``min_links``, along with their incident edges. One pass only:
    degrees are measured on the input graph, not recomputed after removal."""
    if min_links < 1:
        raise SchemaError("min_links must be >= 1")
    targets = set(types)
    deg = g.degrees()
    drop = {n.node_id for n in g.nodes
            if n.type in targets and deg[n.node_id] < min_links}
    node_specs = [(n.external_id, n.type) for n in g.nodes if n.node_id not in drop]
    edge_specs = [(g.nodes[e.src].external_id, g.nodes[e.dst].external_id, e.type)
                  for e in g.edges if e.src not in drop and e.dst not in drop]
    return HinGraph.build(node_specs, edge_specs)


def load_features(path: str | Path, g: HinGraph, d: int) -> np.ndarray:
    """Read features.tsv into an (N_courses, d) matrix ordered by course index."""
    if d < 1:
        raise SchemaError("feature dimension must be >= 1")
    header = ["course_id"] + [f"f{i}" for i in range(d)]
    rows = _read_tsv(path, header)
    n_c = g.n_courses
    X = np.full((n_c, d), np.nan)
    seen: set[int] = set()
    for lineno, cols in rows:
        node = g.node_by_external(cols[0])
        if node.type is not NodeType.COURSE:
            raise SchemaError(f"{path}:{lineno}: {cols[0]!r} is not a course")
        idx = g.course_local(node.node_id)
        if idx in seen:
            raise SchemaError(f"{path}:{lineno}: duplicate feature row for {cols[0]!r}")
        seen.add(idx)
        try:
            vals = [float(v) for v in cols[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise SchemaError(f"{path}:{lineno}: non-finite feature value")
        X[idx] = vals
    if len(seen) != n_c:
        missing = [ext for i, ext in enumerate(g.course_external_ids())
                   if i not in seen]
        raise SchemaError(f"{path}: missing feature rows for courses "
                          f"{', '.join(missing[:5])}"
                          + (" ..." if len(missing) > 5 else ""))
    return X


def score_to_class(score: float) -> int:
    """Discretize a [0, 5] score to its nearest integer class (ties round up)."""
    return int(np.floor(score + 0.5))


def load_labels(path: str | Path, g: HinGraph) -> dict[int, int]:
    """Read labels.tsv into {course local index: class in 0..5}."""
    labels: dict[int, int] = {}
    for lineno, cols in _read_tsv(path, ["course_id", "score"]):
        node = g.node_by_external(cols[0])
        if node.type is not NodeType.COURSE:
            raise SchemaError(f"{path}:{lineno}: {cols[0]!r} is not a course")
        try:
            score = float(cols[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        if not (0.0 <= score <= 5.0):
            raise SchemaError(f"{path}:{lineno}: score {score} outside [0, 5]")
        idx = g.course_local(node.node_id)
        if idx in labels:
            raise SchemaError(f"{path}:{lineno}: duplicate label for {cols[0]!r}")
        labels[idx] = score_to_class(score)
    return labels


def save_labels(labels: Mapping[int, int], g: HinGraph, path: str | Path) -> None:
    ext = g.course_external_ids()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("course_id\tscore\n")
        for idx in sorted(labels):
            fh.write(f"{ext[idx]}\t{float(labels[idx])}\n")


def save_features(X: np.ndarray, g: HinGraph, path: str | Path) -> None:
    d = X.shape[1]
    ext = g.course_external_ids()
    header = "course_id\t" + "\t".join(f"f{i}" for i in range(d))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(X):
            fh.write(ext[i] + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")
