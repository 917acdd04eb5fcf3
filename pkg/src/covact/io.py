"""Pixmap I/O and atomic file writes."""

from __future__ import annotations

import contextlib
import os
import re
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


@contextlib.contextmanager
def atomic_open(path: str | os.PathLike, mode: str = "w"):
    """Open a temp file next to ``path``; rename over it on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_pnm(path: str | os.PathLike, pixels: np.ndarray) -> None:
    """Write binary P5 (2-D, uint8/uint16) or P6 (H x W x 3, uint8)."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 3:
        if pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise ValueError("colour pixmaps must be uint8 with 3 channels")
        img = Image.fromarray(pixels, "RGB")
    elif pixels.dtype == np.uint8:
        img = Image.fromarray(pixels, "L")
    elif pixels.dtype == np.uint16:
        img = Image.fromarray(pixels)
    else:
        raise ValueError(f"unsupported pixmap dtype {pixels.dtype}")
    with atomic_open(path, "wb") as fh:
        img.save(fh, format="PPM")


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Read a P5/P6 pixmap; 16-bit P5 comes back as uint16."""
    with Image.open(path) as img:
        if img.format != "PPM":
            raise ValueError(f"{path}: not a portable pixmap")
        if img.mode == "RGB":
            return np.asarray(img, dtype=np.uint8)
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        return np.asarray(img).astype(np.uint16)


_NUM = re.compile(r"(\d+)")


def frame_files(directory: str | os.PathLike) -> list[Path]:
    """Pixmaps in ``directory`` sorted by the first integer in their names."""
    directory = Path(directory)
    files = [p for p in directory.iterdir() if p.suffix.lower() in (".ppm", ".pgm", ".pnm")]

    def key(p: Path):
        m = _NUM.search(p.stem)
        return (int(m.group(1)) if m else -1, p.name)

    return sorted(files, key=key)


def read_frames(directory: str | os.PathLike) -> np.ndarray:
    """All frames of a directory stacked as (T, H, W[, 3])."""
    files = frame_files(directory)
    if not files:
        raise FileNotFoundError(f"no pixmaps in {directory}")
    frames = []
    for f in files:
        try:
            frames.append(read_pnm(f))
        except Exception as exc:  # Pillow raises a zoo of types
            raise ValueError(f"unreadable frame {f}: {exc}") from exc
    shapes = {fr.shape for fr in frames}
    if len(shapes) != 1:
        raise ValueError(f"{directory}: frames have mixed shapes {sorted(shapes)}")
    return np.stack(frames)
