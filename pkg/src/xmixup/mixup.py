"""Cross-domain mixup: Beta(α, β) coefficients and target/auxiliary blending.

A mixed example is x = λ·x_t + (1−λ)·x_s with the labels blended the same
way over the unified label space (target classes first, then the selected
source classes). λ is drawn fresh per example. The Beta sampler is built from
scratch: an exact inverse-CDF path for β = 1 and a Marsaglia–Tsang Gamma
ratio otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Sample
from .errors import DataError
from .pairing import PairingPlan


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 2.0
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(
                f"Beta shapes must be positive, got alpha={self.alpha} beta={self.beta}"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass
class LabelSpace:
    """Unified label indexing: target classes take [0, n), selected source
    classes take [n, L) in ascending original-id order."""

    n_target: int
    source_classes: tuple[int, ...]

    def __post_init__(self):
        if self.n_target < 1:
            raise ValueError("need at least one target class")
        self.source_classes = tuple(self.source_classes)
        if list(self.source_classes) != sorted(set(self.source_classes)):
            raise ValueError("source classes must be sorted and distinct")

    @property
    def size(self) -> int:
        return self.n_target + len(self.source_classes)

    def source_index(self, source_class: int) -> int:
        try:
            return self.n_target + self.source_classes.index(source_class)
        except ValueError:
            raise KeyError(source_class) from None

    def target_onehot(self, target_class: int) -> np.ndarray:
        if not 0 <= target_class < self.n_target:
            raise ValueError(f"target class {target_class} out of range")
        y = np.zeros(self.size)
        y[target_class] = 1.0
        return y

    def source_onehot(self, source_class: int) -> np.ndarray:
        y = np.zeros(self.size)
        y[self.source_index(source_class)] = 1.0
        return y


@dataclass
class MixedExample:
    x: np.ndarray
    y: np.ndarray
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if np.any(self.y < -1e-12) or abs(self.y.sum() - 1.0) > 1e-9:
            raise ValueError("mixed label must lie on the simplex")


#: (α, β) pairs covered by the sampler's distributional self-checks — spans
#: sub-uniform, uniform, and sharply peaked shapes on both sides of λ = 1/2.
SHAPE_GRID: tuple[tuple[float, float], ...] = tuple(
    (a, b) for a in (0.25, 1.0, 2.0, 8.0) for b in (0.5, 1.0, 2.0)
)


def _open_uniform(rng) -> float:
    """Uniform draw in the open interval (0, 1)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


def sample_gamma(shape: float, rng) -> float:
    """Gamma(shape, 1) variate via Marsaglia–Tsang squeeze-and-accept.

    For shape < 1 the standard boost applies: G(a) = G(a+1) · U^{1/a}.
    """
    if shape <= 0:
        raise ValueError(f"shape must be positive, got {shape}")
    if shape < 1.0:
        return sample_gamma(shape + 1.0, rng) * _open_uniform(rng) ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = (1.0 + c * x) ** 3
        if v <= 0.0:
            continue
        u = _open_uniform(rng)
        if u < 1.0 - 0.0331 * x**4:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def sample_beta(cfg: MixupConfig, rng) -> float:
    """λ ~ Beta(α, β) in (0, 1).

    β = 1 uses the exact inverse CDF λ = U^{1/α} (the CDF is x^α); any other
    β uses λ = G_α / (G_α + G_β). Boundary values from float rounding are
    redrawn so the open interval holds.
    """
    while True:
        if cfg.beta == 1.0:
            lam = _open_uniform(rng) ** (1.0 / cfg.alpha)
        else:
            g_a = sample_gamma(cfg.alpha, rng)
            g_b = sample_gamma(cfg.beta, rng)
            lam = g_a / (g_a + g_b)
        if 0.0 < lam < 1.0:
            return lam


def draw_auxiliary(plan: PairingPlan, target_class: int, src: Dataset, rng) -> Sample:
    """One source sample for a target class: uniform over the classes paired
    to it (across all rounds), then uniform over that class's samples."""
    paired = plan.per_target[target_class]
    cls = paired[int(rng.integers(len(paired)))]
    pool = src.indices_by_class()[cls]
    if len(pool) == 0:
        raise DataError(f"source class {cls} has no samples to draw from")
    return src.samples[int(pool[int(rng.integers(len(pool)))])]


def mix(
    x_t: np.ndarray, y_t: np.ndarray, x_s: np.ndarray, y_s: np.ndarray, lam: float
) -> MixedExample:
    """x = λ·x_t + (1−λ)·x_s and likewise for the labels."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    x_t, y_t, x_s, y_s = (np.asarray(a, dtype=float) for a in (x_t, y_t, x_s, y_s))
    if x_t.shape != x_s.shape:
        raise ValueError(f"input shapes differ: {x_t.shape} vs {x_s.shape}")
    if y_t.shape != y_s.shape:
        raise ValueError(f"label shapes differ: {y_t.shape} vs {y_s.shape}")
    return MixedExample(
        lam * x_t + (1.0 - lam) * x_s, lam * y_t + (1.0 - lam) * y_s, lam
    )


def make_batch(
    tgt_train: Dataset,
    src: Dataset,
    plan: PairingPlan,
    cfg: MixupConfig,
    batch_size: int,
    rng,
) -> list[MixedExample]:
    """A mini-batch of mixed examples: target samples drawn uniformly with
    replacement, then one auxiliary draw and one fresh λ per example."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if len(tgt_train) == 0:
        raise DataError("cannot draw a batch from an empty target dataset")
    space = LabelSpace(tgt_train.class_count, tuple(plan.selected_sources()))
    picks = rng.integers(len(tgt_train), size=batch_size)
    batch = []
    for i in picks:
        t = tgt_train.samples[int(i)]
        aux = draw_auxiliary(plan, t.label, src, rng)
        lam = sample_beta(cfg, rng)
        batch.append(
            mix(
                t.x,
                space.target_onehot(t.label),
                aux.x,
                space.source_onehot(aux.label),
                lam,
            )
        )
    return batch
