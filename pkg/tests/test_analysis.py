"""Feature spectrum via one-sided Jacobi SVD, and linear-probe diagnostics."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmixup.analysis import (
    ProbeConfig,
    ProbeSubset,
    Spectrum,
    linear_probe,
    singular_values,
    source_subsets,
    spectrum,
)
from xmixup.dataset import Dataset, Domain, class_subset
from xmixup.errors import DataError, NumericError

SVD_TOL = 1e-9


def reference_svd(A):
    return np.sort(np.linalg.svd(A, compute_uv=False))[::-1]


@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=12),
    cols=st.integers(min_value=1, max_value=12),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_singular_values_match_lapack(rows, cols, seed):
    A = np.random.default_rng(seed).normal(size=(rows, cols))
    mine = singular_values(A)
    ref = reference_svd(A)
    assert mine.shape == ref.shape
    assert np.all(np.diff(mine) <= 1e-12)  # descending
    assert np.max(np.abs(mine - ref)) <= SVD_TOL * max(1.0, ref[0])


def test_singular_values_handle_rank_deficiency():
    rng = np.random.default_rng(50)
    base = rng.normal(size=(8, 3))
    A = np.hstack([base, base[:, :2]])      # duplicated columns
    mine = singular_values(A)
    ref = reference_svd(A)
    assert np.max(np.abs(mine - ref)) <= SVD_TOL * ref[0]
    assert np.sum(mine > 1e-10) == 3


def test_singular_values_orthogonal_invariance():
    rng = np.random.default_rng(51)
    A = rng.normal(size=(9, 5))
    Q, _ = np.linalg.qr(rng.normal(size=(9, 9)))
    assert np.max(np.abs(singular_values(Q @ A) - singular_values(A))) <= SVD_TOL


def test_singular_values_frobenius_identity_and_scaling():
    rng = np.random.default_rng(52)
    A = rng.normal(size=(6, 4))
    s = singular_values(A)
    assert np.sum(s**2) == pytest.approx(np.sum(A**2), rel=1e-12)
    assert np.allclose(singular_values(2.5 * A), 2.5 * s, atol=1e-12)


def test_singular_values_zero_matrix_and_bad_input():
    assert np.array_equal(singular_values(np.zeros((4, 3))), np.zeros(3))
    with pytest.raises(NumericError):
        singular_values(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_spectrum_normalization_rules():
    s = Spectrum(np.array([1.0, 0.5, 0.25]))
    assert s.tail_mean(2) == pytest.approx(0.375)
    assert s.tail_mean(10) == pytest.approx((1.0 + 0.5 + 0.25) / 3)
    with pytest.raises(ValueError):
        s.tail_mean(0)
    with pytest.raises(ValueError):
        Spectrum(np.array([0.9, 0.5]))          # not normalized
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 0.2, 0.3]))     # not sorted
    with pytest.raises(ValueError):
        Spectrum(np.array([]))


def test_spectrum_of_model_features(toy_pretrained, toy_source):
    sp = spectrum(toy_pretrained, toy_source, batch=32, seed=0)
    assert sp.normalized[0] == 1.0
    assert len(sp.normalized) == toy_pretrained.feature_width
    again = spectrum(toy_pretrained, toy_source, batch=32, seed=0)
    assert np.array_equal(sp.normalized, again.normalized)
    other = spectrum(toy_pretrained, toy_source, batch=32, seed=9)
    assert not np.array_equal(sp.normalized, other.normalized)


def test_spectrum_batch_bounds(toy_pretrained, toy_source):
    with pytest.raises(ValueError):
        # fewer rows than feature directions cannot span the spectrum
        spectrum(toy_pretrained, toy_source, batch=toy_pretrained.feature_width - 1)
    with pytest.raises(DataError):
        spectrum(toy_pretrained, toy_source, batch=len(toy_source) + 1)


def test_probe_learns_separable_features(toy_pretrained, toy_source):
    res = linear_probe(toy_pretrained, toy_source, ProbeConfig())
    assert res.subset is ProbeSubset.ALL
    assert res.accuracy > 0.5


def test_probe_is_deterministic(toy_pretrained, toy_source):
    a = linear_probe(toy_pretrained, toy_source, ProbeConfig())
    b = linear_probe(toy_pretrained, toy_source, ProbeConfig())
    assert a.accuracy == b.accuracy


def test_probe_handles_gappy_label_ranges(toy_pretrained, toy_source):
    sub = class_subset(toy_source, [1, 3])
    res = linear_probe(toy_pretrained, sub, ProbeConfig(), ProbeSubset.AUXILIARY)
    assert res.subset is ProbeSubset.AUXILIARY
    assert 0.0 <= res.accuracy <= 1.0


def test_probe_rejects_degenerate_subsets(toy_pretrained, toy_source):
    with pytest.raises(DataError):
        linear_probe(
            toy_pretrained, Dataset([], 5, Domain.SOURCE, 4), ProbeConfig()
        )
    with pytest.raises(DataError):
        linear_probe(toy_pretrained, class_subset(toy_source, [2]), ProbeConfig())


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(iterations=0)
    with pytest.raises(ValueError):
        ProbeConfig(lr=0.0)
    with pytest.raises(ValueError):
        ProbeConfig(test_fraction=1.0)


def test_source_subsets_partition_the_classes(toy_source, toy_plan):
    subsets = source_subsets(toy_source, toy_plan)
    aux = subsets[ProbeSubset.AUXILIARY]
    aba = subsets[ProbeSubset.ABA]
    assert subsets[ProbeSubset.ALL] is toy_source
    aux_classes = {s.label for s in aux.samples}
    aba_classes = {s.label for s in aba.samples}
    assert aux_classes == set(toy_plan.selected_sources())
    assert not aux_classes & aba_classes
    assert aux_classes | aba_classes == set(range(toy_source.class_count))
    assert len(aux) + len(aba) == len(toy_source)


def test_probe_tracks_feature_quality(toy_source, toy_pretrained):
    """A trained extractor probes better than an untrained one on its task."""
    from xmixup.model import init

    trained = linear_probe(toy_pretrained, toy_source, ProbeConfig())
    blank = linear_probe(
        init(toy_source.d, [10, 8], 5, seed=77), toy_source, ProbeConfig()
    )
    assert trained.accuracy >= blank.accuracy
