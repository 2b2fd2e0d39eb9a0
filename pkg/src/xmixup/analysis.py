"""Model diagnostics: forgetting probes and tail singular-value spectra.

A linear probe freezes the extractor, trains a fresh linear classifier on a
source subset's features, and reports held-out accuracy — how much source
knowledge the extractor still carries. The spectrum diagnostic computes the
singular values of a feature matrix (hand-rolled one-sided Jacobi) and
normalizes by the largest; the mean of the smallest values indicates how much
feature-space volume fine-tuning has collapsed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import Dataset, class_subset, compact_classes, split
from .errors import DataError, NumericError
from .model import ModelParams, forward, init_linear, log_softmax
from .pairing import PairingPlan


class ProbeSubset(Enum):
    AUXILIARY = "auxiliary"
    ABA = "aba"  # all but auxiliary
    ALL = "all"


@dataclass(frozen=True)
class ProbeConfig:
    """Fixed probe protocol so probes of different models are comparable."""

    iterations: int = 500
    lr: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.lr <= 0:
            raise ValueError("probe needs iterations >= 1 and lr > 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass
class ProbeResult:
    subset: ProbeSubset
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")


@dataclass
class Spectrum:
    """Singular values divided by the largest, in descending order."""

    normalized: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.normalized, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("spectrum must be a non-empty vector")
        if abs(v[0] - 1.0) > 1e-12:
            raise ValueError("spectrum must be normalized by its largest value")
        if np.any(np.diff(v) > 1e-12) or np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("spectrum must be non-increasing within [0, 1]")
        self.normalized = v

    def tail_mean(self, k: int = 10) -> float:
        """Mean of the k smallest normalized values (all of them if fewer)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        return float(self.normalized[-k:].mean())


def _train_probe_head(F: np.ndarray, y: np.ndarray, k: int, cfg: ProbeConfig):
    """Full-batch softmax-regression fit on frozen features; returns (W, b)."""
    rng = np.random.default_rng(cfg.seed)
    w, b = init_linear(k, F.shape[1], rng)
    eye = np.eye(k)
    target = eye[y]
    for _ in range(cfg.iterations):
        logp = log_softmax(F @ w.T + b)
        g = (np.exp(logp) - target) / len(F)
        w = w - cfg.lr * (g.T @ F)
        b = b - cfg.lr * g.sum(axis=0)
    return w, b


def probe_accuracy(w: np.ndarray, b: np.ndarray, F: np.ndarray, y: np.ndarray) -> float:
    return float(((F @ w.T + b).argmax(axis=1) == y).mean())


def linear_probe(
    params: ModelParams,
    src_subset: Dataset,
    cfg: ProbeConfig,
    kind: ProbeSubset = ProbeSubset.ALL,
) -> ProbeResult:
    """Held-out accuracy of a fresh linear classifier on frozen features."""
    if len(src_subset) == 0:
        raise DataError("cannot probe an empty subset")
    compact, _ = compact_classes(src_subset)
    if compact.class_count < 2:
        raise DataError("degenerate probe: subset has a single class")
    train, test = split(compact, cfg.test_fraction, cfg.seed)
    f_train, _ = forward(params, train.xs())
    f_test, _ = forward(params, test.xs())
    w, b = _train_probe_head(f_train, train.labels(), compact.class_count, cfg)
    return ProbeResult(kind, probe_accuracy(w, b, f_test, test.labels()))


def source_subsets(src: Dataset, plan: PairingPlan) -> dict[ProbeSubset, Dataset]:
    """The three probe subsets: selected (auxiliary) classes, the rest, all."""
    aux = plan.selected_sources()
    rest = [c for c in range(src.class_count) if c not in set(aux)]
    return {
        ProbeSubset.AUXILIARY: class_subset(src, aux),
        ProbeSubset.ABA: class_subset(src, rest),
        ProbeSubset.ALL: src,
    }


def singular_values(
    A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60
) -> np.ndarray:
    """All singular values of a dense matrix, descending, via one-sided Jacobi.

    Columns are repeatedly rotated in pairs until every pair satisfies
    |<a_i, a_j>| <= tol * ||a_i|| * ||a_j||; the singular values are then the
    column norms.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise ValueError("need a non-empty 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise NumericError("non-finite entries in matrix")
    if A.shape[0] < A.shape[1]:
        A = A.T
    n = A.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = float(A[:, p] @ A[:, p])
                aqq = float(A[:, q] @ A[:, q])
                apq = float(A[:, p] @ A[:, q])
                if abs(apq) <= tol * math.sqrt(app * aqq):
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ap = A[:, p].copy()
                A[:, p] = c * ap - s * A[:, q]
                A[:, q] = s * ap + c * A[:, q]
        if not rotated:
            break
    else:
        raise NumericError(f"Jacobi iteration did not settle in {max_sweeps} sweeps")
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


def spectrum(params: ModelParams, ds: Dataset, batch: int, seed: int = 0) -> Spectrum:
    """Normalized singular spectrum of a batch x h feature matrix.

    The batch is a seeded shuffle of ds truncated to `batch` rows, so repeated
    calls with one seed compare different models on identical samples.
    """
    h = params.feature_width
    if batch < h:
        raise ValueError(f"batch {batch} smaller than feature width {h}")
    if len(ds) < batch:
        raise DataError(f"dataset has {len(ds)} samples, need {batch}")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))[:batch]
    feats, _ = forward(params, ds.xs()[idx])
    svals = singular_values(feats)
    if svals[0] <= 0.0:
        raise NumericError("feature matrix has rank 0; cannot normalize spectrum")
    return Spectrum(svals / svals[0])
