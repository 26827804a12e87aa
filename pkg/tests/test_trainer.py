import math

import numpy as np
import pytest

from nagg import autodiff
from nagg.autodiff import Tape, Tensor, backward, grad_check
from nagg.data import SBM_STD_SPLITS, SbmSpec, generate_sbm, make_splits
from nagg.errors import DivergenceError
from nagg.models import build_specs
from nagg.trainer import (SplitMask, TrainConfig, accuracy, adam_step, masked_cross_entropy,
                          sgd_momentum_step, train)

SMALL = SbmSpec(blocks=3, nodes_per_block=20, p_in=0.3, p_out=0.02, feature_dim=6,
                feature_shift=2.0, noise_sigma=0.5)


@pytest.fixture(scope="module")
def small():
    bundle = generate_sbm(SMALL, 0)
    return bundle, make_splits(bundle.labels, 5, 15, 20, seed=0)


def test_cross_entropy_uniform_logits():
    loss = masked_cross_entropy(Tensor(np.zeros((4, 3))), [0, 1, 2, 0], [0, 2])
    assert loss.item() == pytest.approx(math.log(3), abs=1e-12)


def test_cross_entropy_gradient_and_mask():
    rng = np.random.default_rng(0)
    labels = np.array([0, 2, 1, 1, 0])
    mask = [1, 3, 4]
    report = grad_check(lambda z: masked_cross_entropy(z, labels, mask), rng.normal(size=(5, 3)))
    assert report.max_rel_error < 1e-8
    z = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    with Tape() as tape:
        loss = masked_cross_entropy(z, labels, mask)
    g = backward(tape, loss)[z]
    assert np.all(g[[0, 2]] == 0.0)


def test_cross_entropy_handles_huge_logits():
    z = Tensor(np.array([[1e4, -1e4], [-1e4, 1e4]]))
    assert masked_cross_entropy(z, [0, 1], [0, 1]).item() == pytest.approx(0.0, abs=1e-12)


def test_accuracy_breaks_ties_low():
    logits = np.array([[1.0, 1.0], [0.0, 2.0]])
    assert accuracy(logits, [0, 1], [0, 1]) == 1.0
    assert accuracy(logits, [1, 1], [0, 1]) == 0.5


def test_sgd_step_example():
    cfg = TrainConfig(lr=0.1, momentum=0.0, weight_decay=0.0)
    new, _ = sgd_momentum_step([np.array([[1.0]])], [np.array([[1.0]])], None, cfg)
    assert new[0][0, 0] == pytest.approx(0.9, abs=1e-15)


@pytest.mark.parametrize("g", [1e-3, 1.0, 1e4])
def test_adam_first_step_is_lr(g):
    cfg = TrainConfig(lr=0.01, weight_decay=0.0)
    new, _ = adam_step([np.array([[0.0]])], [np.array([[g]])], None, cfg)
    assert new[0][0, 0] == pytest.approx(-0.01 * g / (g + 1e-8), rel=1e-12)


def test_weight_decay_only_on_flagged_params():
    cfg = TrainConfig(lr=0.1, momentum=0.0, weight_decay=0.5)
    p = [np.array([[2.0]]), np.array([[2.0]])]
    zero = [np.zeros((1, 1)), np.zeros((1, 1))]
    new, _ = sgd_momentum_step(p, zero, None, cfg, decay=[True, False])
    assert new[0][0, 0] == pytest.approx(1.9) and new[1][0, 0] == 2.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=600)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_split_mask_rejects_overlap():
    with pytest.raises(ValueError):
        SplitMask([0, 1], [1, 2], [3])


def test_zero_lr_keeps_parameters(small):
    bundle, split = small
    specs = build_specs("gcn", 6, 3, "lp", dropout_rate=0.0)
    res = train(bundle, specs, TrainConfig(lr=0.0, max_epochs=5, patience=5), split)
    losses = [log.train_loss for log in res.logs]
    np.testing.assert_allclose(losses, losses[0], rtol=0, atol=1e-15)
    assert all(log.param_snapshot == res.logs[0].param_snapshot for log in res.logs)


def test_early_stopping_and_best_snapshot(small):
    bundle, split = small
    specs = build_specs("gcn", 6, 3, "sum")
    res = train(bundle, specs, TrainConfig(max_epochs=200, patience=10), split)
    m = res.metrics
    assert m.epochs_run <= 200
    accs = [log.val_acc for log in res.logs]
    assert m.best_val_acc == max(accs)
    assert m.best_epoch == 1 + accs.index(max(accs))
    if m.epochs_run < 200:
        assert m.epochs_run - m.best_epoch == 10


def test_training_is_deterministic(small):
    bundle, split = small
    specs = build_specs("gcn", 6, 3, "poly")
    a = train(bundle, specs, TrainConfig(max_epochs=30, patience=30, seed=4), split)
    b = train(bundle, specs, TrainConfig(max_epochs=30, patience=30, seed=4), split)
    assert a.metrics == b.metrics
    assert [log.train_loss for log in a.logs] == [log.train_loss for log in b.logs]


@pytest.mark.parametrize("agg", ["sum", "max", "lp", "poly", "softmax"])
@pytest.mark.parametrize("optimizer", ["adam", "sgd_momentum"])
def test_every_aggregator_trains_finite_and_in_domain(small, agg, optimizer):
    bundle, split = small
    specs = build_specs("gcn", 6, 3, agg)
    res = train(bundle, specs, TrainConfig(max_epochs=40, patience=40, optimizer=optimizer), split)
    assert all(np.isfinite(log.train_loss) for log in res.logs)
    lower = {"lp": 1.0, "poly": 0.0, "softmax": 0.0}.get(agg)
    for log in res.logs:
        for v in log.param_snapshot:
            assert (v is None) if lower is None else v >= lower
    assert res.logs[-1].train_loss < res.logs[0].train_loss


def test_gat_trains(small):
    bundle, split = small
    specs = build_specs("gat", 6, 3, "softmax", heads=2)
    res = train(bundle, specs, TrainConfig(max_epochs=20, patience=20), split)
    assert np.isfinite(res.metrics.final_train_loss)


def test_divergence_reports_epoch(small):
    bundle, split = small
    huge = type(bundle)(bundle.graph, bundle.features * 1e300, bundle.labels, 3)
    specs = build_specs("gcn", 6, 3, "sum", dropout_rate=0.0)
    cfg = TrainConfig(lr=1e3, max_epochs=50, patience=50, optimizer="sgd_momentum")
    previous = autodiff.set_check_finite(False)
    try:
        with pytest.raises(DivergenceError) as info, np.errstate(all="ignore"):
            train(huge, specs, cfg, split)
    finally:
        autodiff.set_check_finite(previous)
    assert info.value.epoch >= 1 and not math.isfinite(info.value.loss)


def test_learned_parameter_moves(small):
    bundle, split = small
    specs = build_specs("gcn", 6, 3, "lp")
    res = train(bundle, specs, TrainConfig(max_epochs=30, patience=30), split)
    assert res.logs[-1].param_snapshot != res.logs[0].param_snapshot


def test_std_split_sizes():
    bundle = generate_sbm(SbmSpec(), 0)
    split = make_splits(bundle.labels, seed=3, **SBM_STD_SPLITS)
    assert (split.train_idx.size, split.val_idx.size, split.test_idx.size) == (80, 100, 200)
