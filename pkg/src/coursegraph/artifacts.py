"""Run artifacts: embedding/attention/log/manifest files, written atomically."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError
from .trainer import TrainReport


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embeddings(path: str | Path, course_ids: Sequence[str],
                     H: np.ndarray) -> None:
    k = H.shape[1]
    lines = ["course_id\t" + "\t".join(f"e{i}" for i in range(k))]
    for ext, row in zip(course_ids, H):
        lines.append(ext + "\t" + "\t".join(f"{v:.17g}" for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "course_id":
            raise ParseError(f"{path}:1: bad embedding header")
        width = len(header)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns")
            ids.append(cols[0])
            try:
                rows.append([float(v) for v in cols[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return ids, np.asarray(rows, dtype=np.float64)


def attention_block(view_labels: Sequence[str], alpha: np.ndarray) -> str:
    lines = ["metapath\talpha"]
    for label, a in zip(view_labels, alpha):
        lines.append(f"{label}\t{a:.17g}")
    return "\n".join(lines) + "\n"


def write_training_log(path: str | Path, report: TrainReport) -> None:
    atomic_write_text(path, "\n".join(report.log_lines()) + "\n")


def write_manifest(path: str | Path, entries: Mapping[str, object]) -> None:
    lines = ["key\tvalue"]
    for key, value in entries.items():
        lines.append(f"{key}\t{value}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_metrics(path: str | Path, rows) -> None:
    lines = ["setting\taccuracy\tmacro_f1"]
    for r in rows:
        lines.append(f"{r.setting}\t{r.accuracy:.17g}\t{r.macro_f1:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")
