"""Imbalanced Gaussian-mixture datasets: generation, splitting, disk I/O.

Class sizes follow a geometric decay n_i = round(n_max * r^(-i/(c-1))) so a
single ratio parameter controls the long tail. Files are plain comma-separated
text with a 3-line header, diffable and easy to check by hand.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SpecError, StratifyError
from .nn import seeded_rng

PROVENANCE_REAL = 0
PROVENANCE_SYNTHETIC = 1
_PROV_NAMES = {PROVENANCE_REAL: "real", PROVENANCE_SYNTHETIC: "synthetic"}
_PROV_IDS = {v: k for k, v in _PROV_NAMES.items()}

_STREAM_GEN = 11  # rng purpose tag for mixture generation
_STREAM_SPLIT = 12


@dataclass
class LabeledDataset:
    """Feature matrix with integer labels and a real/synthetic flag per row."""

    features: np.ndarray          # [n, d] float64
    labels: np.ndarray            # [n] int
    n_classes: int
    provenance: np.ndarray = None  # [n] int, 0 real / 1 synthetic

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.provenance is None:
            self.provenance = np.zeros(len(self.labels), dtype=np.int64)
        self.provenance = np.asarray(self.provenance, dtype=np.int64)
        if self.features.ndim != 2:
            raise SpecError("features must be 2-D")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.provenance.shape != (n,):
            raise SpecError("labels/provenance length must match feature rows")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise SpecError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx):
        return LabeledDataset(self.features[idx], self.labels[idx],
                              self.n_classes, self.provenance[idx])

    def merge(self, other):
        if other.n == 0:
            return LabeledDataset(self.features.copy(), self.labels.copy(),
                                  self.n_classes, self.provenance.copy())
        if other.dim != self.dim or other.n_classes != self.n_classes:
            raise SpecError("cannot merge datasets with different shape or class count")
        return LabeledDataset(
            np.concatenate([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            self.n_classes,
            np.concatenate([self.provenance, other.provenance]))

    def __eq__(self, other):
        return (isinstance(other, LabeledDataset)
                and self.n_classes == other.n_classes
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.provenance, other.provenance))


@dataclass
class MixtureSpec:
    """Gaussian mixture with geometrically decaying class sizes."""

    n_classes: int = 3
    dim: int = 2
    n_max: int = 2000
    imbalance_ratio: float = 20.0
    spread: float = 1.3                  # radius of the circle the means sit on
    cov_scale: list = field(default_factory=list)  # per-class stddev, default 1.0
    means: np.ndarray = None             # [c, d]; default: circle layout

    def __post_init__(self):
        if self.n_classes < 1:
            raise SpecError("need at least one class")
        if self.imbalance_ratio < 1.0:
            raise SpecError("imbalance_ratio must be >= 1")
        if self.n_max < self.n_classes:
            raise SpecError("n_max must be at least the class count")
        if not self.cov_scale:
            self.cov_scale = [1.0] * self.n_classes
        if len(self.cov_scale) != self.n_classes:
            raise SpecError("cov_scale must have one entry per class")
        if self.means is None:
            self.means = self._circle_means()
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.shape != (self.n_classes, self.dim):
            raise SpecError(f"means must have shape ({self.n_classes}, {self.dim})")

    def _circle_means(self):
        means = np.zeros((self.n_classes, self.dim))
        if self.n_classes == 1:
            return means
        for i in range(self.n_classes):
            ang = 2.0 * math.pi * i / self.n_classes
            means[i, 0] = self.spread * math.cos(ang)
            if self.dim > 1:
                means[i, 1] = self.spread * math.sin(ang)
        return means

    def class_sizes(self):
        c, r = self.n_classes, self.imbalance_ratio
        if c == 1:
            return [self.n_max]
        sizes = [int(round(self.n_max * r ** (-i / (c - 1)))) for i in range(c)]
        if min(sizes) < 1:
            raise SpecError("smallest class rounds to zero samples; raise n_max")
        return sizes


def make_imbalanced_mixture(spec, seed):
    """Draw the mixture. Pure in (spec, seed)."""
    sizes = spec.class_sizes()
    feats, labels = [], []
    for i, n_i in enumerate(sizes):
        rng = seeded_rng(seed, _STREAM_GEN, i)
        feats.append(spec.means[i] + spec.cov_scale[i]
                     * rng.standard_normal((n_i, spec.dim)))
        labels.append(np.full(n_i, i, dtype=np.int64))
    return LabeledDataset(np.concatenate(feats), np.concatenate(labels),
                          spec.n_classes)


def split_dataset(ds, fractions, seed):
    """Stratified (train, val, test) split; per-class remainders go to train."""
    f_train, f_val, f_test = fractions
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise SpecError("fractions must be non-negative and sum to 1")
    parts = {"train": [], "val": [], "test": []}
    for cls in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) == 0:
            continue
        if len(idx) < 3:
            raise StratifyError(f"class {cls} has {len(idx)} samples, need >= 3 to split")
        rng = seeded_rng(seed, _STREAM_SPLIT, cls)
        idx = rng.permutation(idx)
        n_val = int(math.floor(len(idx) * f_val))
        n_test = int(math.floor(len(idx) * f_test))
        n_train = len(idx) - n_val - n_test
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    out = []
    for key in ("train", "val", "test"):
        sel = (np.sort(np.concatenate(parts[key])) if parts[key]
               else np.array([], dtype=np.int64))
        out.append(ds.subset(sel))
    return tuple(out)


def save_dataset(ds, path):
    """Header lines n=, d=, c= then one CSV row per sample (features, label, flag)."""
    with open(path, "w") as fh:
        fh.write(f"n={ds.n}\nd={ds.dim}\nc={ds.n_classes}\n")
        for row, lab, prov in zip(ds.features, ds.labels, ds.provenance):
            cells = [repr(float(v)) for v in row]
            cells.append(str(int(lab)))
            cells.append(_PROV_NAMES[int(prov)])
            fh.write(",".join(cells) + "\n")


def _header_int(line, key, path, lineno):
    if not line.startswith(key + "="):
        raise ParseError(path, lineno, f"expected header '{key}=<int>'")
    try:
        return int(line[len(key) + 1:])
    except ValueError:
        raise ParseError(path, lineno, f"bad integer in header '{line}'") from None


def load_dataset(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise ParseError(path, 1, "missing 3-line header (n, d, c)")
    n = _header_int(lines[0], "n", path, 1)
    d = _header_int(lines[1], "d", path, 2)
    c = _header_int(lines[2], "c", path, 3)
    if len(lines) != 3 + n:
        raise ParseError(path, len(lines), f"expected {n} data rows, found {len(lines) - 3}")
    feats = np.zeros((n, d))
    labels = np.zeros(n, dtype=np.int64)
    prov = np.zeros(n, dtype=np.int64)
    for r, line in enumerate(lines[3:]):
        lineno = r + 4
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ParseError(path, lineno, f"expected {d + 2} fields, found {len(cells)}")
        try:
            feats[r] = [float(v) for v in cells[:d]]
            labels[r] = int(cells[d])
        except ValueError:
            raise ParseError(path, lineno, "non-numeric cell") from None
        if cells[d + 1] not in _PROV_IDS:
            raise ParseError(path, lineno, f"bad provenance flag {cells[d + 1]!r}")
        prov[r] = _PROV_IDS[cells[d + 1]]
        if not 0 <= labels[r] < c:
            raise ParseError(path, lineno, f"label {labels[r]} outside [0, {c})")
    return LabeledDataset(feats, labels, c, prov)
