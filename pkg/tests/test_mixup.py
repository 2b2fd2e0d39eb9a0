"""Beta sampling, the unified label space, and cross-domain batch mixing."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from xmixup.dataset import gen_source, gen_target
from xmixup.errors import DataError
from xmixup.mixup import (
    SHAPE_GRID,
    LabelSpace,
    MixedExample,
    MixupConfig,
    draw_auxiliary,
    make_batch,
    mix,
    sample_beta,
    sample_gamma,
)
from xmixup.pairing import PairingPlan

ALPHA_GRID = tuple(dict.fromkeys(a for a, _ in SHAPE_GRID))
BETA_GRID = tuple(dict.fromkeys(b for _, b in SHAPE_GRID))


def beta_raw_moment(a: float, b: float, k: int) -> float:
    value = 1.0
    for r in range(k):
        value *= (a + r) / (a + b + r)
    return value


@pytest.mark.parametrize("alpha", ALPHA_GRID)
@pytest.mark.parametrize("beta", BETA_GRID)
def test_sample_beta_stays_in_open_interval(alpha, beta):
    cfg = MixupConfig(alpha=alpha, beta=beta, seed=0)
    rng = np.random.default_rng([5, int(alpha * 100), int(beta * 100)])
    draws = np.array([sample_beta(cfg, rng) for _ in range(2000)])
    assert np.all(draws > 0.0)
    assert np.all(draws < 1.0)


@pytest.mark.parametrize("alpha", ALPHA_GRID)
@pytest.mark.parametrize("beta", BETA_GRID)
def test_sample_beta_moments_match_closed_form(alpha, beta):
    n = 20_000
    cfg = MixupConfig(alpha=alpha, beta=beta, seed=0)
    rng = np.random.default_rng([6, int(alpha * 100), int(beta * 100)])
    x = np.array([sample_beta(cfg, rng) for _ in range(n)])
    mean = beta_raw_moment(alpha, beta, 1)
    var = beta_raw_moment(alpha, beta, 2) - mean**2
    assert abs(x.mean() - mean) < 4.0 * np.sqrt(var / n)
    m3, m4 = (beta_raw_moment(alpha, beta, k) for k in (3, 4))
    mu4 = m4 - 4 * m3 * mean + 6 * beta_raw_moment(alpha, beta, 2) * mean**2 - 3 * mean**4
    assert abs(x.var() - var) < 4.0 * np.sqrt(max(mu4 - var * var, 0.0) / n)


@pytest.mark.parametrize("alpha", ALPHA_GRID)
def test_beta_one_uses_exact_power_law(alpha):
    # Beta(a, 1) has CDF t^a; the inverse-CDF branch must sample exactly that
    cfg = MixupConfig(alpha=alpha, beta=1.0, seed=0)
    rng = np.random.default_rng([7, int(alpha * 100)])
    x = np.array([sample_beta(cfg, rng) for _ in range(4000)])
    stat = stats.kstest(x, lambda t: np.clip(t, 0.0, 1.0) ** alpha).statistic
    assert stat < 1.628 * np.sqrt(1.0 / 4000)


@pytest.mark.parametrize("shape", [0.4, 1.0, 2.5, 7.0])
def test_sample_gamma_matches_reference_distribution(shape):
    rng = np.random.default_rng([8, int(shape * 10)])
    x = np.array([sample_gamma(shape, rng) for _ in range(4000)])
    assert np.all(x > 0)
    stat = stats.kstest(x, stats.gamma(shape).cdf).statistic
    assert stat < 1.628 * np.sqrt(1.0 / 4000)


def test_sample_beta_is_deterministic_per_rng_state():
    cfg = MixupConfig(alpha=2.0, beta=0.5, seed=0)
    a = [sample_beta(cfg, np.random.default_rng(3)) for _ in range(1)]
    b = [sample_beta(cfg, np.random.default_rng(3)) for _ in range(1)]
    assert a == b


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_mixup_config_rejects_non_positive_shapes(alpha, beta):
    with pytest.raises(ValueError):
        MixupConfig(alpha=alpha, beta=beta, seed=0)


def test_label_space_indexing():
    space = LabelSpace(3, (2, 5, 7))
    assert space.size == 6
    assert space.source_index(2) == 3
    assert space.source_index(7) == 5
    with pytest.raises(KeyError):
        space.source_index(4)
    assert space.target_onehot(1).tolist() == [0, 1, 0, 0, 0, 0]
    assert space.source_onehot(5).tolist() == [0, 0, 0, 0, 1, 0]
    with pytest.raises(ValueError):
        space.target_onehot(3)
    with pytest.raises(ValueError):
        LabelSpace(3, (5, 2))
    with pytest.raises(ValueError):
        LabelSpace(3, (2, 2))


def test_mix_convex_combination():
    x_t = np.array([1.0, 0.0])
    x_s = np.array([0.0, 2.0])
    y_t = np.array([1.0, 0.0, 0.0])
    y_s = np.array([0.0, 0.0, 1.0])
    ex = mix(x_t, y_t, x_s, y_s, 0.25)
    assert np.allclose(ex.x, [0.25, 1.5])
    assert np.allclose(ex.y, [0.25, 0.0, 0.75])
    assert ex.lam == 0.25
    # endpoints reproduce the inputs bit-for-bit
    assert np.array_equal(mix(x_t, y_t, x_s, y_s, 1.0).x, x_t)
    assert np.array_equal(mix(x_t, y_t, x_s, y_s, 0.0).y, y_s)


def test_mix_validates_inputs():
    x = np.zeros(2)
    y = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        mix(x, y, np.zeros(3), y, 0.5)
    with pytest.raises(ValueError):
        mix(x, y, x, np.array([1.0, 0.0, 0.0]), 0.5)
    with pytest.raises(ValueError):
        mix(x, y, x, y, 1.5)


@settings(max_examples=60, deadline=None)
@given(
    lam=st.floats(min_value=0.0, max_value=1.0),
    ti=st.integers(min_value=0, max_value=2),
    si=st.integers(min_value=0, max_value=1),
)
def test_mix_outputs_stay_on_the_label_simplex(lam, ti, si):
    space = LabelSpace(3, (4, 6))
    y_t = space.target_onehot(ti)
    y_s = space.source_onehot((4, 6)[si])
    ex = mix(np.zeros(2), y_t, np.ones(2), y_s, lam)
    assert ex.y.min() >= 0.0
    assert ex.y.sum() == pytest.approx(1.0, abs=1e-12)


def test_mixed_example_rejects_off_simplex_labels():
    with pytest.raises(ValueError):
        MixedExample(np.zeros(2), np.array([0.6, 0.6]), 0.5)
    with pytest.raises(ValueError):
        MixedExample(np.zeros(2), np.array([0.5, 0.5]), 1.2)


@pytest.fixture(scope="module")
def mix_world():
    src = gen_source(6, 8, 3, 0.4, seed=10)
    tgt, _ = gen_target(src, [0, 2], 0, 8, 0.1, seed=11)
    plan = PairingPlan(
        {0: [0, 4], 1: [2]},
        {0: [0.9, 0.4], 1: [0.8]},
        2,
        False,
    )
    return src, tgt, plan


def test_draw_auxiliary_only_uses_planned_classes(mix_world):
    src, _, plan = mix_world
    rng = np.random.default_rng(12)
    seen = set()
    for _ in range(200):
        s = draw_auxiliary(plan, 0, src, rng)
        assert s.label in {0, 4}
        seen.add(s.label)
    assert seen == {0, 4}  # both rounds contribute
    for _ in range(50):
        assert draw_auxiliary(plan, 1, src, rng).label == 2
    with pytest.raises(KeyError):
        draw_auxiliary(plan, 9, src, rng)


def test_make_batch_shapes_and_label_structure(mix_world):
    src, tgt, plan = mix_world
    cfg = MixupConfig(alpha=2.0, beta=1.0, seed=0)
    space = LabelSpace(tgt.class_count, tuple(plan.selected_sources()))
    batch = make_batch(tgt, src, plan, cfg, 32, np.random.default_rng(13))
    assert len(batch) == 32
    for ex in batch:
        assert ex.x.shape == (3,)
        nz = np.nonzero(ex.y)[0]
        assert len(nz) == 2
        t, s_pos = int(nz[0]), int(nz[1])
        assert t < tgt.class_count <= s_pos < space.size
        src_cls = space.source_classes[s_pos - tgt.class_count]
        assert src_cls in plan.per_target[t]
        assert ex.y[t] == pytest.approx(ex.lam, abs=1e-12)
        assert ex.y[s_pos] == pytest.approx(1.0 - ex.lam, abs=1e-12)
        assert 0.0 < ex.lam < 1.0


def test_make_batch_is_deterministic(mix_world):
    src, tgt, plan = mix_world
    cfg = MixupConfig(alpha=1.0, beta=2.0, seed=0)
    a = make_batch(tgt, src, plan, cfg, 8, np.random.default_rng(14))
    b = make_batch(tgt, src, plan, cfg, 8, np.random.default_rng(14))
    for ea, eb in zip(a, b):
        assert np.array_equal(ea.x, eb.x)
        assert np.array_equal(ea.y, eb.y)
        assert ea.lam == eb.lam


def test_make_batch_rejects_empty_or_silly_inputs(mix_world):
    src, tgt, plan = mix_world
    cfg = MixupConfig(alpha=1.0, beta=1.0, seed=0)
    from xmixup.dataset import Dataset, Domain

    empty = Dataset([], tgt.class_count, Domain.TARGET, 3)
    with pytest.raises(DataError):
        make_batch(empty, src, plan, cfg, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_batch(tgt, src, plan, cfg, 0, np.random.default_rng(0))
