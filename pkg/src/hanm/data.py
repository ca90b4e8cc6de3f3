"""Bivariate datasets: synthetic generators, loaders and standardisation."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, PairSkipped, ParseError


class Direction(str, Enum):
    X_TO_Y = "XtoY"
    Y_TO_X = "YtoX"


@dataclass(frozen=True)
class AffineTransform:
    """``standardized = (raw - mean) / scale`` for each column."""

    x_mean: float = 0.0
    x_scale: float = 1.0
    y_mean: float = 0.0
    y_scale: float = 1.0

    def inverse(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return (np.asarray(x) * self.x_scale + self.x_mean,
                np.asarray(y) * self.y_scale + self.y_mean)

    def then(self, other: "AffineTransform") -> "AffineTransform":
        """Compose: apply ``self`` first, then ``other``."""
        return AffineTransform(
            self.x_mean + other.x_mean * self.x_scale, self.x_scale * other.x_scale,
            self.y_mean + other.y_mean * self.y_scale, self.y_scale * other.y_scale,
        )


@dataclass
class BivariateDataset:
    x: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    weight: float | None = None
    ground_truth: Direction | None = None
    mechanism_labels: np.ndarray | None = None
    transform: AffineTransform | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.x.size != self.y.size:
            raise DimensionError(f"{self.name}: x has {self.x.size} values, y has {self.y.size}")
        if self.x.size < 2:
            raise DimensionError(f"{self.name}: need at least 2 samples, got {self.x.size}")
        if self.mechanism_labels is not None:
            self.mechanism_labels = np.asarray(self.mechanism_labels, dtype=np.int64).reshape(-1)
            if self.mechanism_labels.size != self.x.size:
                raise DimensionError(f"{self.name}: {self.mechanism_labels.size} labels "
                                     f"for {self.x.size} samples")

    def __len__(self):
        return self.x.size

    def swapped(self) -> "BivariateDataset":
        truth = None
        if self.ground_truth is not None:
            truth = Direction.Y_TO_X if self.ground_truth == Direction.X_TO_Y else Direction.X_TO_Y
        return replace(self, x=self.y.copy(), y=self.x.copy(), ground_truth=truth, transform=None)


# synthetic mechanisms ------------------------------------------------------

MECHANISMS = {
    "f1": lambda x: 1.0 / (1.0 + x ** 2),
    "f2": lambda x: np.exp(-2.0 * x),
    "f3": lambda x: x ** 2,
    "f4": np.tanh,
    "f5": lambda x: np.log(5.0 * x),
}

DEFAULT_OFFSETS = ((1.0, 1.1), (0.5, 0.6))


@dataclass(frozen=True)
class MechanismSpec:
    """One class of ``y = a * (f(x) + eps)`` with ``a ~ U(offset)`` per sample."""

    family: str = "f1"
    offset: tuple[float, float] = (1.0, 1.1)
    sigma: float = 0.05
    n_samples: int = 100
    x_range: tuple[float, float] = (0.1, 1.1)

    def __post_init__(self):
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        if self.family not in MECHANISMS:
            raise ConfigError(f"unknown mechanism family {self.family!r}")
        # a degenerate interval [a, a] pins the offset to a constant
        if self.offset[0] > self.offset[1]:
            raise ConfigError(f"offset interval {self.offset} is reversed")
        if not self.x_range[0] < self.x_range[1]:
            raise ConfigError(f"x_range {self.x_range} is empty")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.family == "f5" and self.x_range[0] <= 0:
            raise ConfigError("f5 = log(5x) needs a strictly positive x range")

    def curve(self, x) -> np.ndarray:
        return MECHANISMS[self.family](np.asarray(x, dtype=np.float64))


def default_specs(family: str = "f1", sigma: float = 0.05, n_samples: int = 100) -> list[MechanismSpec]:
    """Two classes of one family with the offsets a1 ~ U(1, 1.1), a2 ~ U(0.5, 0.6)."""
    return [MechanismSpec(family, offset, sigma, n_samples) for offset in DEFAULT_OFFSETS]


def gen_mechanism_mixture(specs: Sequence[MechanismSpec], seed: int,
                          name: str = "mixture") -> BivariateDataset:
    if not specs:
        raise ConfigError("need at least one mechanism spec")
    rng = np.random.default_rng(seed)
    xs, ys, labels = [], [], []
    for label, spec in enumerate(specs):
        x = rng.uniform(*spec.x_range, size=spec.n_samples)
        a = rng.uniform(*spec.offset, size=spec.n_samples)
        eps = rng.normal(0.0, spec.sigma, size=spec.n_samples) if spec.sigma > 0 else np.zeros(spec.n_samples)
        xs.append(x)
        ys.append(a * (spec.curve(x) + eps))
        labels.append(np.full(spec.n_samples, label))
    order = rng.permutation(sum(s.n_samples for s in specs))
    return BivariateDataset(
        np.concatenate(xs)[order], np.concatenate(ys)[order], name=name,
        ground_truth=Direction.X_TO_Y, mechanism_labels=np.concatenate(labels)[order],
    )


def gen_sim_style(n: int, seed: int, noise_x: float = 0.1, noise_y: float = 0.1,
                  noise: float = 0.3, n_features: int = 10,
                  name: str = "sim") -> BivariateDataset:
    """``x = x' + e_x``, ``y = f(x') + e + e_y`` with x' from a random Gaussian
    mixture and f a random smooth function (random Fourier features)."""
    if n < 2:
        raise ConfigError("n must be >= 2")
    rng = np.random.default_rng(seed)
    n_comp = rng.integers(1, 6)
    means = rng.normal(0.0, 2.0, size=n_comp)
    stds = rng.uniform(0.3, 1.0, size=n_comp)
    comp = rng.choice(n_comp, size=n, p=rng.dirichlet(np.ones(n_comp)))
    x_clean = rng.normal(means[comp], stds[comp])

    freq = rng.normal(0.0, 1.0, size=n_features)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=n_features)
    amp = rng.normal(0.0, 1.0, size=n_features) / math.sqrt(n_features)
    f = np.cos(np.outer(x_clean, freq) + phase) @ amp

    y = f + noise * rng.standard_normal(n) + noise_y * rng.standard_normal(n)
    x = x_clean + noise_x * rng.standard_normal(n)
    return BivariateDataset(x, y, name=name, ground_truth=Direction.X_TO_Y)


# standardisation -----------------------------------------------------------


def standardize(dataset: BivariateDataset) -> BivariateDataset:
    """Zero mean, unit population standard deviation in both columns.

    The returned dataset's ``transform`` maps raw values to standardized ones;
    ``transform.inverse`` maps back.
    """
    x_mean, y_mean = float(dataset.x.mean()), float(dataset.y.mean())
    x_std, y_std = float(dataset.x.std()), float(dataset.y.std())
    for col, std in (("x", x_std), ("y", y_std)):
        if not std > 0:
            raise ConfigError(f"{dataset.name}: column {col} has zero variance")
    step = AffineTransform(x_mean, x_std, y_mean, y_std)
    transform = dataset.transform.then(step) if dataset.transform is not None else step
    return replace(dataset, x=(dataset.x - x_mean) / x_std, y=(dataset.y - y_mean) / y_std,
                   transform=transform)


# loaders -------------------------------------------------------------------

EXCLUDED_PAIRS = frozenset({52, 53, 54, 55, 71, 105, 107, 108})

NULL_TOKENS = frozenset({"", "na", "nan", "null", "none", "-"})


@dataclass(frozen=True)
class PairMeta:
    """One row of the benchmark meta table (1-based inclusive column ranges)."""

    pair_id: int
    cause_cols: tuple[int, int]
    effect_cols: tuple[int, int]
    weight: float = 1.0


def parse_meta(path) -> list[PairMeta]:
    """Read ``id cause_first cause_last effect_first effect_last weight`` rows."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if len(fields) != 6:
            raise ParseError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
        try:
            pid, c0, c1, e0, e1 = (int(float(v)) for v in fields[:5])
            weight = float(fields[5])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        rows.append(PairMeta(pid, (c0, c1), (e0, e1), weight))
    return rows


def pair_path(directory, pair_id: int) -> Path:
    return Path(directory) / f"pair{pair_id:04d}.txt"


def load_pair_file(data_path, meta_row: PairMeta) -> BivariateDataset:
    """Load the two columns named by ``meta_row`` from a whitespace table.

    Raises :class:`PairSkipped` when cause or effect spans several columns.
    """
    (c0, c1), (e0, e1) = meta_row.cause_cols, meta_row.effect_cols
    if c0 != c1 or e0 != e1:
        raise PairSkipped(meta_row.pair_id, "multi-dimensional cause or effect")
    rows = []
    for lineno, line in enumerate(Path(data_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in re.split(r"[\s,]+", line.strip())])
        except ValueError:
            raise ParseError(f"{data_path}:{lineno}: non-numeric value in {line.strip()!r}") from None
        if len(rows[-1]) < max(c0, e0):
            raise ParseError(f"{data_path}:{lineno}: expected at least {max(c0, e0)} columns")
    table = np.array(rows)
    # the file's first listed variable is x; truth says which one is the cause
    first, second = sorted((c0, e0))
    truth = Direction.X_TO_Y if c0 == first else Direction.Y_TO_X
    return BivariateDataset(table[:, first - 1], table[:, second - 1], name=f"pair{meta_row.pair_id:04d}",
                            weight=meta_row.weight, ground_truth=truth)


def load_csv(path, x_col: str, y_col: str, label_col: str | None = None) -> BivariateDataset:
    """Load two numeric columns from a headered CSV, dropping rows with nulls."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (x_col, y_col) + ((label_col,) if label_col else ()):
            if col not in header:
                raise ConfigError(f"{path}: no column {col!r} (have {header})")
        xs, ys, raw_labels, dropped = [], [], [], 0
        for rownum, row in enumerate(reader, start=2):
            cells = [row[x_col], row[y_col]] + ([row[label_col]] if label_col else [])
            if any(c is None or c.strip().lower() in NULL_TOKENS for c in cells):
                dropped += 1
                continue
            try:
                x, y = float(row[x_col]), float(row[y_col])
            except ValueError:
                raise ParseError(f"{path}: row {rownum}: non-numeric value "
                                 f"({row[x_col]!r}, {row[y_col]!r})") from None
            xs.append(x)
            ys.append(y)
            if label_col:
                raw_labels.append(row[label_col].strip())
    labels = None
    if label_col:
        codes = {v: i for i, v in enumerate(sorted(set(raw_labels), key=_natural_key))}
        labels = np.array([codes[v] for v in raw_labels], dtype=np.int64)
    return BivariateDataset(xs, ys, name=Path(path).stem, mechanism_labels=labels, dropped_rows=dropped)


def _natural_key(value: str):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def write_csv(dataset: BivariateDataset, path) -> None:
    """Write ``x,y,label`` (label empty when unknown) with full float precision."""
    labels = dataset.mechanism_labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for i in range(len(dataset)):
            writer.writerow([repr(float(dataset.x[i])), repr(float(dataset.y[i])),
                             "" if labels is None else int(labels[i])])
