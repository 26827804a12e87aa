"""Run orchestration: resolved config -> dataset, model, per-seed training, outputs.

Per-seed artifacts go to ``<out>/<run-name>/<seed>/``:

    metrics.json     deterministic metrics (no timing)
    timing.json      wall-clock time of the run
    loss.csv         per-epoch losses and aggregator parameters
    embeddings.csv   hidden representation, when requested

and the run directory gets ``config.txt`` (the resolved config) and
``summary.json`` (mean and population std of test accuracy over seeds).
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as config_mod
from .autodiff import no_grad
from .data import (SBM_STD, SbmSpec, export_embeddings, generate_sbm, load_dataset,
                   load_splits, make_splits, write_loss_csv, write_metrics_json)
from .models import build_specs, model_forward, prepare_graph
from .trainer import TrainConfig, train


def sbm_spec(cfg):
    return SbmSpec(
        blocks=cfg["sbm_blocks"], nodes_per_block=cfg["sbm_nodes_per_block"],
        p_in=cfg["sbm_p_in"], p_out=cfg["sbm_p_out"], feature_dim=cfg["sbm_feature_dim"],
        feature_shift=cfg["sbm_feature_shift"], noise_sigma=cfg["sbm_noise_sigma"])


def dataset_name(cfg):
    if cfg["dataset"] == "sbm-std":
        return "sbm-std" if sbm_spec(cfg) == SBM_STD else "sbm"
    return os.path.basename(os.path.normpath(cfg["dataset"]))


def run_name(cfg):
    return f"{dataset_name(cfg)}-{cfg['model']}-{cfg['aggregator']}"


def load_bundle(cfg):
    if cfg["dataset"] == "sbm-std":
        bundle = generate_sbm(sbm_spec(cfg), cfg["data_seed"])
        bundle.name = dataset_name(cfg)
        return bundle, None
    fixed = os.path.join(cfg["dataset"], "splits.json")
    return load_dataset(cfg["dataset"]), (load_splits(fixed) if os.path.isfile(fixed) else None)


def split_for(cfg, bundle, fixed, seed):
    """A dataset's own splits.json wins; otherwise a fresh split per seed."""
    if fixed is not None:
        return fixed
    return make_splits(bundle.labels, cfg["per_class"], cfg["val_size"], cfg["test_size"], seed)


def model_specs(cfg, bundle):
    return build_specs(cfg["model"], bundle.feature_dim, bundle.num_classes, cfg["aggregator"],
                       hidden=cfg["hidden"], heads=cfg["heads"], dropout_rate=cfg["dropout"],
                       weighting=cfg["weighting"], theta_init=cfg["agg_theta_init"],
                       learnable=cfg["agg_learnable"], value=cfg["agg_value"])


def train_config(cfg, seed):
    return TrainConfig(lr=cfg["lr"], weight_decay=cfg["weight_decay"],
                       max_epochs=cfg["max_epochs"], patience=cfg["patience"],
                       optimizer=cfg["optimizer"], seed=seed, eval_every=cfg["eval_every"])


def validate(cfg):
    """Build every object a run needs so bad settings fail before any output."""
    from .errors import ConfigError

    try:
        if cfg["dataset"] == "sbm-std":
            sbm_spec(cfg)
        for seed in cfg["seeds"]:
            train_config(cfg, seed)
        model_specs(cfg, _ShapeOnly(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class _ShapeOnly:
    """Stand-in bundle with placeholder dimensions for spec validation."""
    cfg: dict
    feature_dim: int = 1
    num_classes: int = 2


def run_seed(cfg, seed, bundle=None, fixed_split=None):
    """Train one seed; returns the :class:`TrainResult` and the hidden representation."""
    if bundle is None:
        bundle, fixed_split = load_bundle(cfg)
    specs = model_specs(cfg, bundle)
    split = split_for(cfg, bundle, fixed_split, seed)
    result = train(bundle, specs, train_config(cfg, seed), split, share_theta=cfg["agg_share"])
    hidden = None
    if cfg["export_embeddings"]:
        with no_grad():
            g = prepare_graph(bundle.graph, specs[0].weighting)
            _, h = model_forward(g, bundle.features, specs, result.params, return_hidden=True)
            # hidden = input of the last layer, i.e. the learned node representation
            hidden = h.data
    return result, hidden


def write_seed(result, hidden, seed_dir):
    os.makedirs(seed_dir, exist_ok=True)
    write_metrics_json(result.metrics, os.path.join(seed_dir, "metrics.json"))
    write_loss_csv(result.logs, os.path.join(seed_dir, "loss.csv"))
    with open(os.path.join(seed_dir, "timing.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"wall_time_s": result.metrics.wall_time_s}, fh)
        fh.write("\n")
    if hidden is not None:
        export_embeddings(hidden, os.path.join(seed_dir, "embeddings.csv"))


def _worker(args):
    cfg, seed, run_dir = args
    result, hidden = run_seed(cfg, seed)
    write_seed(result, hidden, os.path.join(run_dir, str(seed)))
    return seed, result.metrics


def summarize(values):
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def worker_count(n_tasks):
    raw = os.environ.get("NAGG_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def run_experiment(cfg, out_dir=None, name=None):
    """Train every seed of ``cfg`` and write per-seed files plus a summary.

    Returns ``(run_dir, summary_dict)``. Seeds run in worker processes when
    ``NAGG_THREADS`` is above 1.
    """
    out_dir = out_dir or cfg["out_dir"]
    run_dir = os.path.join(out_dir, name or run_name(cfg))
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_mod.dump(cfg))
    tasks = [(cfg, seed, run_dir) for seed in cfg["seeds"]]
    workers = worker_count(len(tasks))
    if workers == 1:
        outcomes = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_worker, tasks))
    accs = [m.test_acc for _, m in outcomes]
    losses = [m.final_train_loss for _, m in outcomes]
    mean, std = summarize(accs)
    loss_mean, loss_std = summarize(losses)
    summary = {
        "run": os.path.basename(run_dir),
        "seeds": [s for s, _ in outcomes],
        "test_acc": accs,
        "test_acc_mean": mean,
        "test_acc_std": std,
        "final_train_loss_mean": loss_mean,
        "final_train_loss_std": loss_std,
    }
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return run_dir, summary


def format_summary(summary):
    """One line in the usual ``mean ± std`` percent style."""
    return (f"{summary['run']:<32} test acc {100 * summary['test_acc_mean']:6.2f} "
            f"± {100 * summary['test_acc_std']:.2f}  (n={len(summary['seeds'])})")
