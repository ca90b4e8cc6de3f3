"""Report writers: JSON/CSV payloads, run manifests and SVG scatter plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

MANIFEST_SCHEMA_VERSION = 1

# colour-blind friendly qualitative palette, cycled for more clusters
PALETTE = ("#0072B2", "#E69F00", "#009E73", "#CC79A7", "#56B4E9", "#D55E00", "#F0E442", "#000000")


class OutputSet:
    """Track files written by a command and delete them all if it fails."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.paths: list[Path] = []
        self._created_dir = False

    def __enter__(self) -> "OutputSet":
        if not self.directory.exists():
            self.directory.mkdir(parents=True)
            self._created_dir = True
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            return False
        for path in self.paths:
            path.unlink(missing_ok=True)
        if self._created_dir and not any(self.directory.iterdir()):
            self.directory.rmdir()
        return False

    def path(self, name: str) -> Path:
        p = self.directory / name
        self.paths.append(p)
        return p

    def write_json(self, name: str, payload) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        p = self.path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def to_jsonable(obj):
    """Convert numpy scalars/arrays, enums and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def flatten(payload: dict, prefix: str = "") -> dict:
    """Nested dict -> single level with dotted keys (for one-row CSV reports)."""
    flat = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, name + "."))
        elif isinstance(value, (list, tuple)):
            flat[name] = json.dumps(to_jsonable(value))
        else:
            flat[name] = value
    return flat


def manifest(command: str, config: dict, seed: int) -> dict:
    return {"schema_version": MANIFEST_SCHEMA_VERSION, "command": command, "seed": seed, "config": config}


def svg_scatter(x, y, labels, title: str = "", width: int = 480, height: int = 360,
                margin: int = 36, radius: float = 2.5) -> str:
    """Scatter of (x, y) with one circle per sample, filled by cluster label."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)

    def scale(v, lo, hi, a, b):
        span = hi - lo if hi > lo else 1.0
        return a + (v - lo) / span * (b - a)

    x0, x1, y0, y1 = x.min(), x.max(), y.min(), y.max()
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" height="{height - 2 * margin}" '
        'fill="none" stroke="#888"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="{margin * 0.6:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{escape(title)}</text>')
    codes = {v: i for i, v in enumerate(sorted(set(labels.tolist())))}
    for xi, yi, lab in zip(x, y, labels.tolist()):
        cx = scale(xi, x0, x1, margin, width - margin)
        cy = scale(yi, y0, y1, height - margin, margin)
        colour = PALETTE[codes[lab] % len(PALETTE)]
        parts.append(f'<circle class="sample" cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" '
                     f'fill="{colour}" fill-opacity="0.8"><title>{escape(str(lab))}</title></circle>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
