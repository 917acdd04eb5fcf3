"""Dataset manifests and group-disjoint splits."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .io import atomic_open, frame_files

MAGIC = "# covact-manifest v1"
FIELDS = ("video_id", "label", "group", "frames", "depth", "n_frames")


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    label: str
    group: str
    frames: Path
    depth: Path | None
    n_frames: int


@dataclass
class DatasetManifest:
    classes: list[str]
    records: list[VideoRecord]
    root: Path = Path(".")

    def by_id(self) -> dict[str, VideoRecord]:
        return {r.video_id: r for r in self.records}

    def groups(self) -> list[str]:
        return sorted({r.group for r in self.records})


def write_manifest(path: str | os.PathLike, manifest: DatasetManifest) -> None:
    """CSV with a header comment declaring the class set; paths relative to the manifest."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"{MAGIC} classes={','.join(manifest.classes)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    base = path.parent.resolve()
    for r in manifest.records:
        def rel(p):
            if p is None:
                return ""
            p = Path(p)
            return os.path.relpath(p.resolve(), base) if p.is_absolute() else p.as_posix()

        w.writerow([r.video_id, r.label, r.group, rel(r.frames), rel(r.depth), r.n_frames])
    with atomic_open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_manifest(path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    text = path.read_text()
    first, _, rest = text.partition("\n")
    if not first.startswith(MAGIC):
        raise ValueError(f"{path}: not a covact manifest")
    meta = dict(tok.split("=", 1) for tok in first[len(MAGIC):].split() if "=" in tok)
    classes = [c for c in meta.get("classes", "").split(",") if c]
    if not classes:
        raise ValueError(f"{path}: manifest declares no classes")
    root = path.parent
    records = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(rest)), start=3):
        try:
            rec = VideoRecord(
                video_id=row["video_id"],
                label=row["label"],
                group=row["group"],
                frames=root / row["frames"],
                depth=(root / row["depth"]) if row["depth"] else None,
                n_frames=int(row["n_frames"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed manifest row ({exc})") from exc
        if rec.label not in classes:
            raise ValueError(f"{path}:{lineno}: label {rec.label!r} not in declared classes")
        if rec.n_frames < 2:
            raise ValueError(f"{path}:{lineno}: video {rec.video_id} has fewer than 2 frames")
        if check_files:
            if not rec.frames.is_dir():
                raise FileNotFoundError(f"{path}:{lineno}: frame directory {rec.frames} missing")
            if rec.depth is not None and not rec.depth.is_dir():
                raise FileNotFoundError(f"{path}:{lineno}: depth directory {rec.depth} missing")
            if len(frame_files(rec.frames)) != rec.n_frames:
                raise ValueError(f"{path}:{lineno}: frame count mismatch for {rec.video_id}")
        records.append(rec)
    ids = [r.video_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate video ids")
    return DatasetManifest(classes, records, root)


def group_split(
    records: Sequence, test_groups: Sequence[str] = (), test_fraction: float = 0.4, seed: int = 0
) -> tuple[list, list]:
    """Split records so that no group appears on both sides.

    Explicit ``test_groups`` win; otherwise a seeded draw of
    ``round(test_fraction * n_groups)`` groups (at least one, never all).
    """
    groups = sorted({r.group for r in records})
    if test_groups:
        test = set(test_groups)
        unknown = test - set(groups)
        if unknown:
            raise ValueError(f"test groups {sorted(unknown)} not in dataset")
    else:
        if len(groups) < 2:
            raise ValueError("need at least two groups for a group-disjoint split")
        k = min(max(1, round(test_fraction * len(groups))), len(groups) - 1)
        rng = np.random.default_rng(seed)
        test = set(rng.choice(groups, size=k, replace=False).tolist())
    train = [r for r in records if r.group not in test]
    held = [r for r in records if r.group in test]
    assert_disjoint(train, held)
    return train, held


def assert_disjoint(train: Sequence, test: Sequence) -> None:
    overlap = {r.group for r in train} & {r.group for r in test}
    if overlap:
        raise ValueError(f"groups {sorted(overlap)} appear in both train and test")
