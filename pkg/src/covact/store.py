"""Descriptor store: tab-separated text records with a versioned header.

Layout of a store file::

    # covact-descriptors v1 kind=<covariance|log> features=<name,...> weighted=<0|1>
    video_id<TAB>clip_id<TAB>label<TAB>group<TAB>d<TAB>n<TAB>reg<TAB>v_0<TAB>v_1 ...
    <one record per clip>

``v_*`` are the (d^2 + d)/2 upper-triangular entries in row-major order,
written with ``repr`` so a save/load cycle is bit-exact. For
``kind=covariance`` they are the raw (unregularized) covariance entries and
``reg`` is the ridge to add before taking logs; for ``kind=log`` they are
the log-Euclidean vector (off-diagonals scaled by sqrt(2) when
``weighted=1``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .covariance import CovarianceDescriptor
from .io import atomic_open
from .spd import LogDescriptor, dim_from_length, vector_length

MAGIC = "# covact-descriptors"
VERSION = 1
COLUMNS = ("video_id", "clip_id", "label", "group", "d", "n", "reg")


class StoreFormatError(ValueError):
    pass


@dataclass
class DescriptorFile:
    kind: str
    features: tuple[str, ...]
    weighted: bool
    records: list = field(default_factory=list)


def _check_text(value: str, what: str) -> str:
    value = str(value)
    if any(ch in value for ch in "\t\n\r"):
        raise ValueError(f"{what} {value!r} contains tabs or newlines")
    return value


def _fmt(x: float) -> str:
    return repr(float(x))


def write_store(path: str | os.PathLike, kind: str, records: Iterable, features: Iterable[str] = (), weighted: bool = True) -> None:
    if kind not in ("covariance", "log"):
        raise ValueError(f"unknown store kind {kind!r}")
    features = tuple(features)
    lines = [f"{MAGIC} v{VERSION} kind={kind} features={','.join(features)} weighted={int(weighted)}"]
    lines.append("\t".join(COLUMNS) + "\tvalues...")
    for r in records:
        if kind == "covariance":
            d = r.d
            iu = np.triu_indices(d)
            vals = r.matrix[iu]
            n, reg = r.n, r.reg
        else:
            vals = r.v
            d, n, reg = r.d, 0, 0.0
        if features and d != len(features):
            raise ValueError(f"record d={d} does not match {len(features)} feature names")
        head = [
            _check_text(r.video_id, "video id"),
            str(int(r.clip_id)),
            _check_text(r.label, "label"),
            _check_text(r.group, "group"),
            str(d),
            str(int(n)),
            _fmt(reg),
        ]
        lines.append("\t".join(head + [_fmt(v) for v in vals]))
    with atomic_open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_store(path: str | os.PathLike) -> DescriptorFile:
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise StoreFormatError(f"{path}: cannot read descriptor file ({exc})") from exc
    lines = text.split("\n")
    if not lines or not lines[0].startswith(MAGIC):
        raise StoreFormatError(f"{path}: missing descriptor header")
    try:
        meta = dict(tok.split("=", 1) for tok in lines[0][len(MAGIC):].split()[1:])
        version = int(lines[0][len(MAGIC):].split()[0].lstrip("v"))
        kind = meta["kind"]
        features = tuple(f for f in meta.get("features", "").split(",") if f)
        weighted = meta.get("weighted", "1") == "1"
    except (ValueError, KeyError, IndexError) as exc:
        raise StoreFormatError(f"{path}: malformed header line") from exc
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported store version {version}")
    if kind not in ("covariance", "log"):
        raise StoreFormatError(f"{path}: unknown kind {kind!r}")
    out = DescriptorFile(kind, features, weighted)
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split("\t")
        try:
            video_id, clip_id, label, group, d, n, reg = parts[:7]
            d, clip_id, n, reg = int(d), int(clip_id), int(n), float(reg)
            vals = np.array([float(v) for v in parts[7:]])
            if len(vals) != vector_length(d) or not np.all(np.isfinite(vals)):
                raise ValueError(f"expected {vector_length(d)} finite values, got {len(vals)}")
        except ValueError as exc:
            raise StoreFormatError(f"{path}:{lineno}: corrupt record ({exc})") from exc
        if kind == "covariance":
            mat = np.zeros((d, d))
            iu = np.triu_indices(d)
            mat[iu] = vals
            mat[(iu[1], iu[0])] = vals
            out.records.append(CovarianceDescriptor(mat, n, label, video_id, clip_id, group, reg))
        else:
            dim_from_length(len(vals))
            out.records.append(LogDescriptor(vals, label, video_id, clip_id, group))
    return out


def regularized(desc: CovarianceDescriptor) -> np.ndarray:
    """Raw covariance plus its stored ridge."""
    return desc.matrix + desc.reg * np.eye(desc.d)

