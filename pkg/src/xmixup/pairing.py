"""Auxiliary class selection: feature centroids, cosine similarity, greedy matching.

Each target class is matched one-to-one to a source class by maximizing the
cosine similarity between per-class feature centroids (features come from a
frozen extractor). Greedy matching repeatedly fixes the globally most similar
unmatched pair; `optimal_pair` is the exhaustive oracle it is tested against.
Multi-round expansion reruns the matching on the not-yet-selected source
classes until the selected source samples reach a size threshold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import DataError, NumericError, ParseError
from .model import ModelParams, forward

_ZERO_NORM = 1e-12


@dataclass
class CentroidBank:
    """Per-class mean feature vectors with the sample counts behind them."""

    centroids: dict[int, np.ndarray]
    counts: dict[int, int]

    def __post_init__(self):
        widths = {v.shape for v in self.centroids.values()}
        if len(widths) > 1:
            raise ValueError(f"centroids disagree on width: {widths}")
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("centroid counts must be >= 1")

    @property
    def feature_width(self) -> int:
        return next(iter(self.centroids.values())).shape[0]


@dataclass
class SimilarityMatrix:
    """Cosine similarities, one row per target class, one column per source class."""

    sims: np.ndarray

    def __post_init__(self):
        self.sims = np.asarray(self.sims, dtype=float)
        if self.sims.ndim != 2:
            raise ValueError("similarity matrix must be 2-D")
        if np.any(np.abs(self.sims) > 1.0 + 1e-12):
            raise ValueError("cosine similarities must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return self.sims.shape[0]

    @property
    def m(self) -> int:
        return self.sims.shape[1]


@dataclass
class PairingPlan:
    """Ordered source classes per target class, one entry per matching round.

    per_target[t][r] is the source class matched to target t in round r+1
    (a target may miss the final round when the source set runs out first);
    scores holds the parallel similarity values. `exhausted` means every
    source class was selected before the sample threshold was reached.
    """

    per_target: dict[int, list[int]]
    scores: dict[int, list[float]]
    n_rounds: int
    exhausted: bool = False

    def __post_init__(self):
        for t, srcs in self.per_target.items():
            if len(srcs) != len(set(srcs)):
                raise ValueError(f"target {t} pairs a source class twice: {srcs}")
            if len(self.scores[t]) != len(srcs):
                raise ValueError(f"target {t}: scores do not parallel sources")
        for r in range(self.n_rounds):
            in_round = [srcs[r] for srcs in self.per_target.values() if len(srcs) > r]
            if len(in_round) != len(set(in_round)):
                raise ValueError(f"round {r + 1} is not injective")

    def selected_sources(self) -> list[int]:
        return sorted({s for srcs in self.per_target.values() for s in srcs})

    def round_map(self, round_index: int) -> dict[int, int]:
        """target -> source assignments of one round (1-based)."""
        r = round_index - 1
        return {
            t: srcs[r] for t, srcs in self.per_target.items() if len(srcs) > r
        }

    def entries(self):
        """(round, target, source, similarity) tuples sorted by round then target."""
        out = []
        for t in sorted(self.per_target):
            for r, (s, score) in enumerate(zip(self.per_target[t], self.scores[t])):
                out.append((r + 1, t, s, score))
        out.sort(key=lambda e: (e[0], e[1]))
        return out


def compute_centroids(ds: Dataset, params: ModelParams) -> CentroidBank:
    """Mean extractor feature per class: centroid(c) = (1/|c|) sum_x features(x)."""
    feats, _ = forward(params, ds.xs())
    centroids = {}
    counts = {}
    by_class = ds.indices_by_class()
    for c in range(ds.class_count):
        idx = by_class[c]
        if len(idx) == 0:
            raise DataError(f"class {c} has no samples; cannot form a centroid")
        centroids[c] = feats[idx].mean(axis=0)
        counts[c] = len(idx)
    return CentroidBank(centroids, counts)


def similarity(src: CentroidBank, tgt: CentroidBank) -> SimilarityMatrix:
    """Pairwise cosine similarity between target and source centroids."""
    if src.feature_width != tgt.feature_width:
        raise ValueError(
            f"centroid widths differ: {src.feature_width} vs {tgt.feature_width}"
        )

    def unit(bank: CentroidBank, side: str) -> np.ndarray:
        mat = np.stack([bank.centroids[c] for c in sorted(bank.centroids)])
        norms = np.linalg.norm(mat, axis=1)
        small = np.nonzero(norms <= _ZERO_NORM)[0]
        if small.size:
            cls = sorted(bank.centroids)[small[0]]
            raise NumericError(f"{side} class {cls} has a zero-norm centroid")
        return mat / norms[:, None]

    return SimilarityMatrix(unit(tgt, "target") @ unit(src, "source").T)


def _greedy_round(sims: np.ndarray, avail_sources: np.ndarray) -> list[tuple[int, int]]:
    """Greedily match targets to available sources, best global pair first.

    Ties break toward the smallest target index, then the smallest source
    index. Stops when targets or available sources run out, so the round may
    be partial.
    """
    n, m = sims.shape
    avail_t = np.ones(n, dtype=bool)
    avail_s = avail_sources.copy()
    pairs = []
    for _ in range(min(n, int(avail_s.sum()))):
        masked = np.where(np.outer(avail_t, avail_s), sims, -np.inf)
        t, s = divmod(int(masked.argmax()), m)
        pairs.append((t, s))
        avail_t[t] = False
        avail_s[s] = False
    return pairs


def greedy_pair(sm: SimilarityMatrix) -> dict[int, int]:
    """One-to-one target->source map via global-best-pair-first greedy search."""
    if sm.m < sm.n:
        raise ValueError(
            f"need at least as many source as target classes ({sm.m} < {sm.n})"
        )
    return dict(sorted(_greedy_round(sm.sims, np.ones(sm.m, dtype=bool))))


def optimal_pair(sm: SimilarityMatrix) -> dict[int, int]:
    """Exhaustive maximum-total-similarity one-to-one map (test oracle, n <= 8)."""
    if sm.m < sm.n:
        raise ValueError(
            f"need at least as many source as target classes ({sm.m} < {sm.n})"
        )
    if sm.n > 8:
        raise ValueError(f"exhaustive search limited to n <= 8, got {sm.n}")
    best_total = -np.inf
    best = None
    rows = sm.sims
    for perm in itertools.permutations(range(sm.m), sm.n):
        total = sum(rows[t, s] for t, s in enumerate(perm))
        if total > best_total:
            best_total = total
            best = perm
    return {t: s for t, s in enumerate(best)}


def expand_until_threshold(
    sm: SimilarityMatrix, src_class_sizes: dict[int, int], threshold: int
) -> PairingPlan:
    """Repeat greedy matching on unselected source classes until the selected
    sample count reaches `threshold` (or the source classes run out)."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    for s in range(sm.m):
        if s not in src_class_sizes:
            raise ValueError(f"missing size for source class {s}")
    if sm.m < sm.n:
        raise ValueError(
            f"need at least as many source as target classes ({sm.m} < {sm.n})"
        )

    per_target: dict[int, list[int]] = {t: [] for t in range(sm.n)}
    scores: dict[int, list[float]] = {t: [] for t in range(sm.n)}
    avail = np.ones(sm.m, dtype=bool)
    total = 0
    n_rounds = 0
    while avail.any():
        for t, s in _greedy_round(sm.sims, avail):
            per_target[t].append(s)
            scores[t].append(float(sm.sims[t, s]))
            avail[s] = False
            total += src_class_sizes[s]
        n_rounds += 1
        if total >= threshold:
            break
    return PairingPlan(per_target, scores, n_rounds, exhausted=not avail.any())


def save_plan(plan: PairingPlan, path) -> None:
    """Write a plan as CSV: `round,target_class,source_class,similarity`."""
    with open(Path(path), "w", encoding="utf-8", newline="\n") as f:
        f.write("round,target_class,source_class,similarity\n")
        for rnd, t, s, score in plan.entries():
            f.write(f"{rnd},{t},{s},{score:.17g}\n")


def load_plan(path) -> PairingPlan:
    """Read a plan CSV; the exhaustion flag is not persisted and loads as False."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != "round,target_class,source_class,similarity":
        raise ParseError("bad plan header", line=1)
    rows = []
    for lineno, row in enumerate(lines[1:], start=2):
        cols = row.split(",")
        if len(cols) != 4:
            raise ParseError(f"expected 4 columns, got {len(cols)}", line=lineno)
        try:
            rows.append((int(cols[0]), int(cols[1]), int(cols[2]), float(cols[3])))
        except ValueError:
            raise ParseError("non-numeric plan entry", line=lineno) from None
    if not rows:
        raise DataError(f"{path}: plan file has no entries")
    rows.sort(key=lambda e: (e[0], e[1]))
    per_target: dict[int, list[int]] = {}
    scores: dict[int, list[float]] = {}
    for rnd, t, s, score in rows:
        per_target.setdefault(t, []).append(s)
        scores.setdefault(t, []).append(score)
        if len(per_target[t]) != rnd:
            raise ParseError(f"target {t} is missing round {len(per_target[t])}")
    return PairingPlan(per_target, scores, max(r for r, *_ in rows))
