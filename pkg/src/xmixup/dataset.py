"""Synthetic Gaussian-cluster classification datasets with planted class correspondences.

Source datasets are unions of isotropic Gaussian clusters whose means are drawn
uniformly in [-1, 1]^d. Target datasets are built *from* a source dataset: each
planted target class copies the samples of one source class (plus optional
noise), so the ground-truth class correspondence is known and pairing quality
is checkable. Everything is a pure function of its arguments including the
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

_MAX_MEAN_TRIES = 100_000


class Domain(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(eq=False)
class Sample:
    """One feature vector with its class label and originating domain."""

    x: np.ndarray
    label: int
    domain: Domain

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and self.domain is other.domain
            and np.array_equal(self.x, other.x)
        )


@dataclass(eq=False)
class Dataset:
    """A list of samples sharing one feature dimension and label range.

    Labels must lie in [0, class_count); classes may be empty (subset
    datasets produced by filtering have gaps). Samples are treated as
    immutable after construction.
    """

    samples: list[Sample]
    class_count: int
    domain: Domain
    d: int
    _class_indices: dict[int, np.ndarray] | None = field(
        default=None, init=False, repr=False
    )

    def __post_init__(self):
        if self.class_count < 1 or self.d < 1:
            raise ValueError("class_count and d must be positive")
        for i, s in enumerate(self.samples):
            if s.x.shape != (self.d,):
                raise ValueError(
                    f"sample {i} has shape {s.x.shape}, expected ({self.d},)"
                )
            if not 0 <= s.label < self.class_count:
                raise ValueError(
                    f"sample {i} label {s.label} outside [0, {self.class_count})"
                )

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.domain is other.domain
            and self.d == other.d
            and self.samples == other.samples
        )

    def xs(self) -> np.ndarray:
        """All feature vectors stacked into an (N, d) matrix."""
        if not self.samples:
            return np.empty((0, self.d))
        return np.stack([s.x for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=int)

    def indices_by_class(self) -> dict[int, np.ndarray]:
        """Sample indices grouped by class, cached on first use."""
        if self._class_indices is None:
            groups: dict[int, list[int]] = {c: [] for c in range(self.class_count)}
            for i, s in enumerate(self.samples):
                groups[s.label].append(i)
            self._class_indices = {
                c: np.array(idx, dtype=int) for c, idx in groups.items()
            }
        return self._class_indices

    def class_sizes(self) -> dict[int, int]:
        return {c: len(idx) for c, idx in self.indices_by_class().items()}


@dataclass(frozen=True)
class PlantedMapping:
    """Ground truth: target class index -> copied source class, or None if novel."""

    mapping: dict[int, int | None]

    def __post_init__(self):
        used = [s for s in self.mapping.values() if s is not None]
        if len(used) != len(set(used)):
            raise ValueError("planted mapping must be injective over non-novel classes")

    def planted_classes(self) -> list[int]:
        return sorted(t for t, s in self.mapping.items() if s is not None)

    def novel_classes(self) -> list[int]:
        return sorted(t for t, s in self.mapping.items() if s is None)


def _draw_means(rng, count, d, min_dist, avoid=()):
    """Draw `count` means uniform in [-1,1]^d, rejecting any pair closer than min_dist."""
    placed: list[np.ndarray] = []
    others = list(avoid)
    tries = 0
    while len(placed) < count:
        tries += 1
        if tries > _MAX_MEAN_TRIES:
            raise DataError(
                f"could not place {count} class means at min distance {min_dist}"
            )
        cand = rng.uniform(-1.0, 1.0, size=d)
        if all(np.linalg.norm(cand - m) >= min_dist for m in placed + others):
            placed.append(cand)
    return np.array(placed)


def _check_gen_args(m, per_class, d, spread):
    if m < 2:
        raise ValueError(f"need at least 2 classes, got {m}")
    if per_class < 2:
        raise ValueError(f"need at least 2 samples per class, got {per_class}")
    if d < 2:
        raise ValueError(f"need dimension >= 2, got {d}")
    if not spread > 0:
        raise ValueError(f"spread must be positive, got {spread}")


def gen_source(m: int, per_class: int, d: int, spread: float, seed: int) -> Dataset:
    """Generate a source dataset of m Gaussian clusters.

    Args:
        m: number of classes (>= 2).
        per_class: samples per class (>= 2).
        d: feature dimension (>= 2).
        spread: isotropic noise stddev around each class mean; means closer
            than 0.5 * spread are rejection-resampled.
        seed: RNG seed; output is a pure function of all arguments.
    """
    _check_gen_args(m, per_class, d, spread)
    rng = np.random.default_rng(seed)
    means = _draw_means(rng, m, d, min_dist=0.5 * spread)
    samples = []
    for c in range(m):
        xs = means[c] + spread * rng.standard_normal((per_class, d))
        samples.extend(Sample(x, c, Domain.SOURCE) for x in xs)
    return Dataset(samples, m, Domain.SOURCE, d)


def source_class_means(m: int, d: int, spread: float, seed: int) -> np.ndarray:
    """Replay the class means gen_source(seed=seed) plants (same draw order)."""
    _check_gen_args(m, 2, d, spread)
    rng = np.random.default_rng(seed)
    return _draw_means(rng, m, d, min_dist=0.5 * spread)


def gen_target(
    src: Dataset,
    planted: list[int],
    novel: int,
    per_class: int,
    noise: float,
    seed: int,
) -> tuple[Dataset, PlantedMapping]:
    """Build a target dataset whose first classes copy planted source classes.

    Target class i < len(planted) draws per_class samples of source class
    planted[i] (without replacement when enough exist) and adds isotropic
    Gaussian noise of the given stddev; at noise=0 the copies are exact.
    Novel classes get fresh means and the same noise scale. The returned
    PlantedMapping records which target class copies which source class.
    """
    planted = [int(c) for c in planted]
    if len(set(planted)) != len(planted):
        raise ValueError(f"duplicate planted source index in {planted}")
    for c in planted:
        if not 0 <= c < src.class_count:
            raise ValueError(f"planted index {c} outside [0, {src.class_count})")
    if per_class < 2:
        raise ValueError(f"need at least 2 samples per class, got {per_class}")
    if novel < 0:
        raise ValueError(f"novel class count must be >= 0, got {novel}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    if len(planted) + novel < 1:
        raise ValueError("target needs at least one class")

    rng = np.random.default_rng(seed)
    n = len(planted) + novel
    samples = []
    for t, src_cls in enumerate(planted):
        pool = src.indices_by_class()[src_cls]
        if len(pool) == 0:
            raise DataError(f"source class {src_cls} has no samples to copy")
        chosen = rng.choice(pool, size=per_class, replace=len(pool) < per_class)
        jitter = rng.standard_normal((per_class, src.d))
        for j, idx in enumerate(chosen):
            x = src.samples[idx].x + noise * jitter[j]
            samples.append(Sample(x, t, Domain.TARGET))
    if novel:
        anchors = [
            np.stack([src.samples[i].x for i in idx]).mean(axis=0)
            for idx in src.indices_by_class().values()
            if len(idx) > 0
        ]
        means = _draw_means(rng, novel, src.d, min_dist=0.5 * noise, avoid=anchors)
        for k in range(novel):
            t = len(planted) + k
            xs = means[k] + noise * rng.standard_normal((per_class, src.d))
            samples.extend(Sample(x, t, Domain.TARGET) for x in xs)

    mapping = {t: src_cls for t, src_cls in enumerate(planted)}
    mapping.update({len(planted) + k: None for k in range(novel)})
    return Dataset(samples, n, Domain.TARGET, src.d), PlantedMapping(mapping)


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as CSV: header `domain,class_count,d`, then `label,x_0,...`.

    Floats carry 17 significant digits so load(save(ds)) == ds exactly.
    """
    with open(Path(path), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{ds.domain.value},{ds.class_count},{ds.d}\n")
        for s in ds.samples:
            f.write(f"{s.label}," + ",".join(_fmt(v) for v in s.x) + "\n")


def load_dataset(path) -> Dataset:
    """Read a dataset written by save_dataset; malformed rows name their line."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", line=1)

    header = lines[0].split(",")
    if len(header) != 3:
        raise ParseError("header must be `domain,class_count,d`", line=1)
    try:
        domain = Domain(header[0])
    except ValueError:
        raise ParseError(f"unknown domain {header[0]!r}", line=1) from None
    try:
        class_count, d = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError("class_count and d must be integers", line=1) from None
    if class_count < 1 or d < 1:
        raise ParseError("class_count and d must be positive", line=1)

    samples = []
    for lineno, row in enumerate(lines[1:], start=2):
        cols = row.split(",")
        if len(cols) != 1 + d:
            raise ParseError(f"expected {1 + d} columns, got {len(cols)}", line=lineno)
        try:
            label = int(cols[0])
        except ValueError:
            raise ParseError(f"non-numeric label {cols[0]!r}", line=lineno) from None
        if not 0 <= label < class_count:
            raise ParseError(
                f"label {label} outside [0, {class_count})", line=lineno
            )
        try:
            x = np.array([float(v) for v in cols[1:]])
        except ValueError:
            raise ParseError("non-numeric feature value", line=lineno) from None
        if not np.all(np.isfinite(x)):
            raise ParseError("non-finite feature value", line=lineno)
        samples.append(Sample(x, label, domain))
    if not samples:
        raise DataError(f"{path}: dataset file has no sample rows")
    return Dataset(samples, class_count, domain, d)


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; every class keeps at least one train sample."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_samples: list[Sample] = []
    test_samples: list[Sample] = []
    for c in range(ds.class_count):
        idx = ds.indices_by_class()[c]
        if len(idx) < 2:
            raise DataError(
                f"class {c} has {len(idx)} samples; need >= 2 to split"
            )
        perm = rng.permutation(idx)
        n_test = int(round(len(idx) * test_fraction))
        n_test = min(max(n_test, 0), len(idx) - 1)
        test_samples.extend(ds.samples[i] for i in perm[:n_test])
        train_samples.extend(ds.samples[i] for i in perm[n_test:])
    mk = lambda ss: Dataset(ss, ds.class_count, ds.domain, ds.d)  # noqa: E731
    return mk(train_samples), mk(test_samples)


def class_subset(ds: Dataset, classes) -> Dataset:
    """The sub-dataset of samples whose label is in `classes` (same label
    range as ds, so the kept classes retain their original ids)."""
    keep = set(classes)
    bad = [c for c in keep if not 0 <= c < ds.class_count]
    if bad:
        raise ValueError(f"classes {sorted(bad)} outside [0, {ds.class_count})")
    samples = [s for s in ds.samples if s.label in keep]
    return Dataset(samples, ds.class_count, ds.domain, ds.d)


def compact_classes(ds: Dataset) -> tuple[Dataset, dict[int, int]]:
    """Relabel the classes present in ds to a dense range [0, k).

    Returns the relabeled dataset and the old->new label map. Used before
    splitting subset datasets whose class range has gaps.
    """
    present = sorted({s.label for s in ds.samples})
    if not present:
        raise DataError("cannot compact an empty dataset")
    remap = {old: new for new, old in enumerate(present)}
    samples = [Sample(s.x, remap[s.label], s.domain) for s in ds.samples]
    return Dataset(samples, len(present), ds.domain, ds.d), remap
