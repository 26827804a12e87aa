"""Semi-supervised node classification: loss, metrics, optimizers, training loop."""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor, Tape, backward, make_op, no_grad
from .errors import DivergenceError, ShapeError
from .models import effective_parameters, init_params, model_forward, prepare_graph

OPTIMIZERS = ("adam", "sgd_momentum")


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 100
    optimizer: str = "adam"
    seed: int = 0
    eval_every: int = 1
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.max_epochs < 1 or self.eval_every < 1:
            raise ValueError("max_epochs and eval_every must be positive")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError(f"patience must be in [1, max_epochs], got {self.patience}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass(frozen=True)
class SplitMask:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test_idx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.train_idx.size == 0:
            raise ValueError("training split is empty")
        sets = [set(self.train_idx.tolist()), set(self.val_idx.tolist()), set(self.test_idx.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("train/val/test splits overlap")

    def check(self, num_nodes):
        for idx in (self.train_idx, self.val_idx, self.test_idx):
            if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
                raise ValueError(f"split index out of range for {num_nodes} nodes")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    param_snapshot: tuple


@dataclass
class Metrics:
    test_acc: float
    best_epoch: int
    best_val_acc: float
    epochs_run: int
    final_train_loss: float
    agg_params: list
    wall_time_s: float = field(default=0.0, compare=False)

    def to_dict(self, include_time=False):
        d = asdict(self)
        if not include_time:
            del d["wall_time_s"]
        return d


@dataclass
class TrainResult:
    params: object
    logs: list
    metrics: Metrics


def masked_cross_entropy(logits, labels, mask):
    """Mean of -log softmax(logits)[label] over the rows in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data[mask]
    y = labels[mask]
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise ShapeError(f"labels must lie in [0, {z.shape[1]})")
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    rows = np.arange(mask.size)
    loss = np.mean(lse - z[rows, y])

    def rule(g):
        p = np.exp(z - lse[:, None])
        p[rows, y] -= 1.0
        full = np.zeros_like(logits.data)
        np.add.at(full, mask, p * (g[0, 0] / mask.size))
        return (full,)

    return make_op("masked_cross_entropy", np.array([[loss]]), (logits,), rule)


def accuracy(logits, labels, mask):
    """Fraction of masked rows whose argmax (lowest index on ties) is the label."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("accuracy: empty mask")
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    pred = np.argmax(data[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


def adam_step(params, grads, state, tcfg, decay=None):
    """One Adam update. Returns ``(new_params, new_state)``.

    ``state`` is None on the first call. ``decay[i]`` says whether
    ``weight_decay * param`` is added to gradient ``i``.
    """
    if state is None:
        state = {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}
    decay = decay or [True] * len(params)
    t = state["t"] + 1
    b1, b2 = tcfg.beta1, tcfg.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v, dec in zip(params, grads, state["m"], state["v"], decay):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param {p.shape} vs grad {g.shape}")
        if dec and tcfg.weight_decay:
            g = g + tcfg.weight_decay * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - tcfg.lr * m_hat / (np.sqrt(v_hat) + tcfg.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, {"t": t, "m": new_m, "v": new_v}


def sgd_momentum_step(params, grads, state, tcfg, decay=None):
    """Heavy-ball SGD: ``v = momentum * v + g``; ``p -= lr * v``."""
    if state is None:
        state = {"v": [np.zeros_like(p) for p in params]}
    decay = decay or [True] * len(params)
    new_p, new_v = [], []
    for p, g, v, dec in zip(params, grads, state["v"], decay):
        if p.shape != g.shape:
            raise ShapeError(f"sgd_momentum_step: param {p.shape} vs grad {g.shape}")
        if dec and tcfg.weight_decay:
            g = g + tcfg.weight_decay * p
        v = tcfg.momentum * v + g
        new_p.append(p - tcfg.lr * v)
        new_v.append(v)
    return new_p, {"v": new_v}


_STEP = {"adam": adam_step, "sgd_momentum": sgd_momentum_step}


def _snapshot_params(specs, params):
    return tuple(None if v is None else float(v) for v in effective_parameters(specs, params))


def train(bundle, specs, tcfg, split, share_theta=False):
    """Fit a model on ``split.train_idx`` with early stopping on validation accuracy.

    Returns the parameters of the best validation epoch (earliest on ties),
    the per-epoch logs and the final metrics. Aggregator thetas are excluded
    from weight decay.
    """
    start = time.perf_counter()
    split.check(bundle.graph.num_nodes)
    g = prepare_graph(bundle.graph, specs[0].weighting)
    x = Tensor(bundle.features)
    labels = np.asarray(bundle.labels)
    params = init_params(specs, tcfg.seed, share_theta=share_theta)
    drop_rng = np.random.default_rng([tcfg.seed, 1])
    pairs = [(t, dec) for t, dec in params.tensors() if t.requires_grad]
    tensors = [t for t, _ in pairs]
    decay = [dec for _, dec in pairs]
    step = _STEP[tcfg.optimizer]
    state = None

    logs = []
    best_acc, best_epoch, best_state = -1.0, 0, params.snapshot()
    val_loss = val_acc = math.nan
    stale = 0
    epoch = 0
    # a diverging run is reported through DivergenceError, not numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, tcfg.max_epochs + 1):
            with Tape() as tape:
                logits = model_forward(g, x, specs, params, train_mode=True, rng=drop_rng)
                loss = masked_cross_entropy(logits, labels, split.train_idx)
            train_loss = loss.item()
            if not math.isfinite(train_loss):
                raise DivergenceError(epoch, train_loss)
            grads = backward(tape, loss, wrt=tensors)
            new, state = step([t.data for t in tensors], [grads[t] for t in tensors], state, tcfg, decay)
            for t, a in zip(tensors, new):
                t.data = a

            evaluated = epoch % tcfg.eval_every == 0
            if evaluated:
                with no_grad():
                    logits = model_forward(g, x, specs, params)
                    val_loss = masked_cross_entropy(logits, labels, split.val_idx).item() \
                        if split.val_idx.size else math.nan
                val_acc = accuracy(logits, labels, split.val_idx) if split.val_idx.size else 0.0
            logs.append(EpochLog(epoch, train_loss, val_loss, val_acc, _snapshot_params(specs, params)))
            if evaluated:
                if val_acc > best_acc:
                    best_acc, best_epoch, best_state = val_acc, epoch, params.snapshot()
                    stale = 0
                else:
                    stale += 1
                    if stale >= tcfg.patience:
                        break

    params.restore(best_state)
    with no_grad():
        logits = model_forward(g, x, specs, params)
    test_acc = accuracy(logits, labels, split.test_idx) if split.test_idx.size else math.nan
    metrics = Metrics(
        test_acc=test_acc,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        epochs_run=epoch,
        final_train_loss=logs[-1].train_loss,
        agg_params=list(_snapshot_params(specs, params)),
        wall_time_s=time.perf_counter() - start,
    )
    return TrainResult(params, logs, metrics)
