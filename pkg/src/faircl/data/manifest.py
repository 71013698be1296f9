"""CSV manifest reader/writer.

Header ``path,label,domain,split`` (images) or ``features,label,domain,split``
(precomputed vectors, ';'-separated decimals). Expression labels are class
integers; AU labels are fixed-width '0'/'1' strings, leftmost = AU 1. Image
paths are relative to the manifest file. An empty split is filled in with
:func:`stratified_split`.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .samples import Sample, stratified_split


class ManifestError(ValueError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"manifest row {row}: {message}")


def _parse_label(raw: str, task: str, num_classes: int, num_units: Optional[int], row: int):
    raw = raw.strip()
    if task == "expression":
        try:
            label = int(raw)
        except ValueError:
            raise ManifestError(row, f"label {raw!r} is not an integer") from None
        if not 0 <= label < num_classes:
            raise ManifestError(row, f"label {label} outside 0..{num_classes - 1}")
        return label
    if not raw or set(raw) - {"0", "1"}:
        raise ManifestError(row, f"AU label {raw!r} must be a string of 0/1")
    if num_units is not None and len(raw) != num_units:
        raise ManifestError(row, f"AU label has {len(raw)} units, expected {num_units}")
    return np.array([int(c) for c in raw], dtype=np.int64)


def _load_image(path: Path, channels: int, size: Optional[tuple], row: int) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            if size is not None and im.size != (size[1], size[0]):
                im = im.resize((size[1], size[0]), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise ManifestError(row, f"cannot read image {str(path)!r}: {exc}") from None
    return arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)


def load_manifest(path, task: str = "expression", num_classes: int = 7, num_units: Optional[int] = None,
                  channels: int = 1, image_size: Optional[tuple] = None, test_fraction: float = 0.2,
                  seed: int = 0) -> list[Sample]:
    if task not in ("expression", "au"):
        raise ValueError(f"task must be 'expression' or 'au', got {task!r}")
    path = Path(path)
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        for need in ("label", "domain", "split"):
            if need not in cols:
                raise ManifestError(1, f"missing column {need!r}")
        if "path" not in cols and "features" not in cols:
            raise ManifestError(1, "missing column 'path' (or 'features')")
        use_features = "features" in cols
        samples, width = [], None
        for row_no, row in enumerate(reader, start=2):
            label = _parse_label(row["label"] or "", task, num_classes, num_units, row_no)
            if task == "au":
                if width is None:
                    width = len(label)
                elif len(label) != width:
                    raise ManifestError(row_no, f"AU label width {len(label)} differs from {width}")
            domain = (row["domain"] or "").strip()
            if not domain:
                raise ManifestError(row_no, "empty domain")
            split = (row["split"] or "").strip()
            if split not in ("train", "test", ""):
                raise ManifestError(row_no, f"split {split!r} must be train, test or empty")
            if use_features:
                try:
                    feats = np.array([float(v) for v in row["features"].split(";")], dtype=np.float64)
                except (ValueError, AttributeError):
                    raise ManifestError(row_no, "features must be ';'-separated decimals") from None
                source = None
            else:
                rel = (row["path"] or "").strip()
                if not rel:
                    raise ManifestError(row_no, "empty image path")
                feats = _load_image(base / rel, channels, image_size, row_no)
                source = rel
            samples.append(Sample(feats, label, domain, split, source))
    if not samples:
        raise ManifestError(2, "manifest has no data rows")
    unsplit = [s for s in samples if s.split == ""]
    if unsplit:
        train, test = stratified_split(unsplit, test_fraction, seed)
        samples = [s for s in samples if s.split != ""] + train + test
    return samples


def format_label(label) -> str:
    if np.ndim(label) == 0:
        return str(int(label))
    return "".join(str(int(v)) for v in label)


def write_manifest(samples: Sequence[Sample], path, image_dir: str = "img") -> None:
    """Write samples as a manifest; images go to PNG files under ``image_dir``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    images = samples and np.ndim(samples[0].features) == 3
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path" if images else "features", "label", "domain", "split"])
        for i, s in enumerate(samples):
            if images:
                rel = f"{image_dir}/{i:06d}.png"
                _save_image(s.features, path.parent / rel)
                first = rel
            else:
                first = ";".join(repr(float(v)) for v in np.asarray(s.features).reshape(-1))
            w.writerow([first, format_label(s.label), s.domain, s.split])


def _save_image(arr: np.ndarray, dest: Path) -> None:
    from PIL import Image

    os.makedirs(dest.parent, exist_ok=True)
    px = np.clip(np.rint(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(px[0], mode="L") if px.shape[0] == 1 else Image.fromarray(px.transpose(1, 2, 0), mode="RGB")
    img.save(dest, format="PNG")
