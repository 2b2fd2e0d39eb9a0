"""Fine-tuning strategies: validation, per-strategy post-conditions, the
source-preservation penalty, the joint-batch masked loss, and evaluation.
"""
import numpy as np
import pytest

from tests.conftest import flat, numeric_gradient
from xmixup.dataset import Dataset, Domain, Sample, split
from xmixup.errors import ConfigError, DataError
from xmixup.mixup import MixupConfig
from xmixup.model import ModelParams, TrainConfig, forward_cache, init
from xmixup.training import (
    RunResult,
    Strategy,
    StrategyKind,
    evaluate,
    finetune,
    masked_loss_and_grad,
    pretrain,
    result_to_json,
    sp_penalty,
)

MIX = MixupConfig(alpha=2.0, beta=1.0, seed=0)
FAST = TrainConfig(iterations=40, lr_drop_at=30, lr=0.02, batch_size=8, seed=0)


@pytest.fixture(scope="module")
def world(toy_source, toy_target, toy_pretrained, toy_plan):
    tgt, _ = toy_target
    tgt_train, tgt_test = split(tgt, 0.25, seed=3)
    return dict(
        src=toy_source,
        pre=toy_pretrained,
        plan=toy_plan,
        train=tgt_train,
        test=tgt_test,
    )


def run(world, strategy, cfg=FAST):
    return finetune(
        world["pre"], world["train"], world["src"], world["plan"],
        strategy, cfg, world["test"],
    )


# ---------------------------------------------------------------- validation

def test_strategy_parameter_coupling():
    with pytest.raises(ConfigError):
        Strategy(StrategyKind.L2, mixup=MIX)
    with pytest.raises(ConfigError):
        Strategy(StrategyKind.L2SP)
    with pytest.raises(ConfigError):
        Strategy(StrategyKind.XMIXUP)
    with pytest.raises(ConfigError):
        Strategy(StrategyKind.L2, midtune_iterations=5)
    with pytest.raises(ConfigError):
        Strategy.l2sp(-0.1)
    assert Strategy.l2().kind is StrategyKind.L2
    assert Strategy.seqtrain().midtune_iterations is None
    assert not Strategy.l2().needs_source
    assert Strategy.cotrain().needs_source


def test_source_strategies_require_plan_and_source(world):
    for strat in (Strategy.xmixup(MIX), Strategy.seqtrain(), Strategy.cotrain()):
        with pytest.raises(ConfigError):
            finetune(world["pre"], world["train"], None, None, strat, FAST, world["test"])


def test_finetune_rejects_mismatched_shapes(world):
    wrong_d = Dataset(
        [Sample(np.zeros(7), 0, Domain.TARGET), Sample(np.ones(7), 1, Domain.TARGET)],
        world["train"].class_count,
        Domain.TARGET,
        7,
    )
    with pytest.raises(ValueError):
        finetune(world["pre"], wrong_d, None, None, Strategy.l2(), FAST, world["test"])
    bad_test = Dataset(
        world["test"].samples, world["test"].class_count + 1, Domain.TARGET, 4
    )
    with pytest.raises(ValueError):
        finetune(world["pre"], world["train"], None, None, Strategy.l2(), FAST, bad_test)
    empty = Dataset([], world["train"].class_count, Domain.TARGET, 4)
    with pytest.raises(DataError):
        finetune(world["pre"], empty, None, None, Strategy.l2(), FAST, world["test"])


# ------------------------------------------------------- strategy behaviors

def test_every_strategy_trains_and_traces(world):
    strategies = [
        Strategy.l2(),
        Strategy.l2sp(0.05),
        Strategy.mixup_indomain(MIX),
        Strategy.xmixup(MIX),
        Strategy.xmixup_nolabel(MIX),
        Strategy.seqtrain(),
        Strategy.cotrain(),
    ]
    for strat in strategies:
        res = run(world, strat)
        assert len(res.trace) == FAST.iterations
        assert 0.0 <= res.accuracy <= 1.0
        assert res.config["strategy"]["kind"] == strat.kind.value
        assert np.all(np.isfinite(res.trace))


def test_head_width_follows_label_space(world):
    n = world["train"].class_count
    aux = len(world["plan"].selected_sources())
    assert run(world, Strategy.l2()).params.label_count == n
    assert run(world, Strategy.mixup_indomain(MIX)).params.label_count == n
    for strat in (Strategy.xmixup(MIX), Strategy.cotrain(), Strategy.seqtrain()):
        assert run(world, strat).params.label_count == n + aux


def test_zero_lr_keeps_the_extractor_at_pretrained(world):
    frozen = TrainConfig(iterations=5, lr_drop_at=5, lr=0.0, batch_size=8, seed=0)
    res = run(world, Strategy.l2(), frozen)
    for (w, b), (w0, b0) in zip(res.params.layers, world["pre"].layers):
        assert np.array_equal(w, w0)
        assert np.array_equal(b, b0)
    # the head is fresh, not the pre-training head
    assert res.params.label_count == world["train"].class_count


def test_l2sp_with_zero_weight_is_exactly_l2(world):
    a = run(world, Strategy.l2())
    b = run(world, Strategy.l2sp(0.0))
    assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))
    assert a.trace == b.trace


def test_l2sp_pull_keeps_extractor_closer(world):
    cfg = TrainConfig(iterations=120, lr_drop_at=90, lr=0.05, batch_size=8, seed=0)
    free = run(world, Strategy.l2(), cfg)
    tied = run(world, Strategy.l2sp(1.0), cfg)

    def drift(params):
        return sum(
            float(np.linalg.norm(w - w0) ** 2 + np.linalg.norm(b - b0) ** 2)
            for (w, b), (w0, b0) in zip(params.layers, world["pre"].layers)
        )

    assert drift(tied.params) < drift(free.params)


def test_nolabel_sees_same_inputs_but_learns_differently(world):
    a = run(world, Strategy.xmixup(MIX))
    b = run(world, Strategy.xmixup_nolabel(MIX))
    assert a.params.label_count == b.params.label_count
    assert not all(
        np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays())
    )


def test_seqtrain_budget_split(world):
    res = run(world, Strategy.seqtrain())
    assert res.config["strategy"]["midtune_iterations"] == FAST.iterations // 2
    assert len(res.trace) == FAST.iterations
    explicit = run(world, Strategy.seqtrain(midtune_iterations=10))
    assert explicit.config["strategy"]["midtune_iterations"] == 10
    zero = run(world, Strategy.seqtrain(midtune_iterations=0))
    assert len(zero.trace) == FAST.iterations
    with pytest.raises(ConfigError):
        run(world, Strategy.seqtrain(midtune_iterations=FAST.iterations + 1))


def test_finetune_is_deterministic_and_seed_sensitive(world):
    a = run(world, Strategy.xmixup(MIX))
    b = run(world, Strategy.xmixup(MIX))
    c = run(world, Strategy.xmixup(MIX), TrainConfig(
        iterations=40, lr_drop_at=30, lr=0.02, batch_size=8, seed=1
    ))
    assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))
    assert a.trace == b.trace
    assert a.trace != c.trace


# ------------------------------------------------------------------ pretrain

def test_pretrain_learns_the_source_task(toy_source, toy_pretrained):
    assert evaluate(toy_pretrained, toy_source) > 0.8


def test_pretrain_validation(toy_source):
    one_class = Dataset(
        [Sample(np.zeros(4), 0, Domain.SOURCE), Sample(np.ones(4), 0, Domain.SOURCE)],
        1,
        Domain.SOURCE,
        4,
    )
    with pytest.raises(ValueError):
        pretrain(one_class, FAST, [6])
    with pytest.raises(DataError):
        pretrain(Dataset([], 3, Domain.SOURCE, 4), FAST, [6])


def test_pretrain_zero_iterations_returns_the_init(toy_source):
    cfg = TrainConfig(iterations=0, lr_drop_at=0, seed=4)
    params = pretrain(toy_source, cfg, [6, 5])
    fresh = init(toy_source.d, [6, 5], toy_source.class_count, seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), fresh.arrays()))


# ------------------------------------------------------------------ evaluate

def _constant_logit_params(biases):
    # one dead layer: relu(0 x + 0) = 0 features, so logits are just biases
    layer = (np.zeros((2, 2)), np.zeros(2))
    head = (np.zeros((len(biases), 2)), np.asarray(biases, dtype=float))
    return ModelParams([layer], head)


def _two_class_ds(labels):
    return Dataset(
        [Sample(np.zeros(2), int(v), Domain.TARGET) for v in labels],
        2,
        Domain.TARGET,
        2,
    )


def test_evaluate_ignores_source_logits():
    params = _constant_logit_params([0.1, 0.5, 9.0, 9.0, 9.0])
    ds = _two_class_ds([0, 1, 1, 1])
    assert evaluate(params, ds) == 0.75   # always predicts class 1


def test_evaluate_breaks_ties_toward_lower_index():
    params = _constant_logit_params([0.5, 0.5])
    ds = _two_class_ds([0, 0, 1])
    assert evaluate(params, ds) == pytest.approx(2 / 3)


def test_evaluate_validation():
    params = _constant_logit_params([0.0])
    with pytest.raises(ValueError):
        evaluate(params, _two_class_ds([0, 1]))
    with pytest.raises(DataError):
        evaluate(
            _constant_logit_params([0.0, 0.0]),
            Dataset([], 2, Domain.TARGET, 2),
        )


# ------------------------------------------------- penalties and masked loss

def test_sp_penalty_value_and_gradient():
    ref = init(3, [5, 4], 2, seed=20)
    params = init(3, [5, 4], 2, seed=21)
    mu = 0.3
    value, grads = sp_penalty(params, ref, mu)
    manual = sum(
        float(((w - w0) ** 2).sum() + ((b - b0) ** 2).sum())
        for (w, b), (w0, b0) in zip(params.layers, ref.layers)
    )
    assert value == pytest.approx(mu * manual, rel=1e-12)
    assert sp_penalty(ref, ref, mu)[0] == 0.0
    wh, bh = grads.head
    assert not wh.any() and not bh.any()
    numeric = numeric_gradient(lambda p: sp_penalty(p, ref, mu)[0], params)
    assert np.allclose(flat(grads.arrays()), flat(numeric), atol=1e-6)


def test_sp_penalty_validation():
    ref = init(3, [5], 2, seed=0)
    with pytest.raises(ValueError):
        sp_penalty(ref, ref, -0.5)
    with pytest.raises(ValueError):
        sp_penalty(init(3, [4], 2, seed=0), ref, 0.1)


def _masked_case(seed=30):
    rng = np.random.default_rng(seed)
    params = init(3, [6], 5, seed=seed)     # 2 target + 3 source logits
    X = rng.normal(size=(5, 3))
    labels = np.array([0, 1, 2, 4, 3])      # rows 0-1 target, rows 2-4 source
    return params, X, labels


def test_masked_loss_matches_manual_blocks():
    params, X, labels = _masked_case()
    loss, _ = masked_loss_and_grad(params, X, labels, 2, 2)
    _, _, _, logits = forward_cache(params, X)

    def block_nll(z, label):
        z = z - z.max()
        return float(np.log(np.exp(z).sum()) - z[label])

    manual = (
        block_nll(logits[0, :2], 0)
        + block_nll(logits[1, :2], 1)
        + sum(block_nll(logits[r, 2:], labels[r] - 2) for r in (2, 3, 4))
    ) / 5.0
    assert loss == pytest.approx(manual, rel=1e-12)


def test_masked_loss_gradient_check():
    params, X, labels = _masked_case()
    _, analytic = masked_loss_and_grad(params, X, labels, 2, 2)
    numeric = numeric_gradient(
        lambda p: masked_loss_and_grad(p, X, labels, 2, 2)[0], params
    )
    a, n = flat(analytic.arrays()), flat(numeric)
    assert np.linalg.norm(a - n) <= 1e-7 * max(np.linalg.norm(n), 1.0)


def test_masked_loss_degenerate_splits_and_bad_labels():
    params, X, labels = _masked_case()
    loss_all_target, _ = masked_loss_and_grad(params, X[:2], labels[:2], 2, 2)
    assert np.isfinite(loss_all_target)
    loss_all_source, _ = masked_loss_and_grad(params, X[2:], labels[2:], 2, 0)
    assert np.isfinite(loss_all_source)
    with pytest.raises(ValueError):
        masked_loss_and_grad(params, X, labels, 2, 9)
    bad = labels.copy()
    bad[0] = 4   # source label in a target row
    with pytest.raises(ValueError):
        masked_loss_and_grad(params, X, bad, 2, 2)


# ------------------------------------------------------------------- results

def test_run_result_validation():
    with pytest.raises(ValueError):
        RunResult(None, [0.1], 1.2, 0, {})
    with pytest.raises(ValueError):
        RunResult(None, [0.1, 0.2], 0.5, 0, {"train": {"iterations": 3}})


def test_result_to_json_thins_the_trace(world):
    res = run(world, Strategy.l2())
    out = result_to_json(res)
    assert out["accuracy"] == res.accuracy
    assert out["loss_every_100"] == [res.trace[0]]
    assert out["config"]["strategy"]["kind"] == "l2"
