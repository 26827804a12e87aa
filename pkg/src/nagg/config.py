"""Plain-text ``key = value`` run configuration with schema validation.

A config file holds one ``key = value`` pair per line; blank lines and lines
starting with ``#`` are ignored. Command-line overrides take precedence over
the file, and every key is checked against :data:`SCHEMA` before any work
starts.
"""

import difflib
import os
from dataclasses import dataclass

from .errors import ConfigError


def _bool(text):
    low = str(text).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return int(text)


def _choice(*options, optional=False):
    def parse(text):
        if optional and (text is None or str(text).strip().lower() in ("", "none")):
            return None
        text = str(text).strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str


SCHEMA = {
    # data
    "dataset": Key(str, "sbm-std", "dataset directory, or the preset name sbm-std"),
    "data_seed": Key(int, 0, "seed of the synthetic graph and features"),
    "per_class": Key(int, 20, "training nodes per class when no splits.json is present"),
    "val_size": Key(int, 100, "validation nodes when no splits.json is present"),
    "test_size": Key(int, 200, "test nodes when no splits.json is present"),
    "sbm_blocks": Key(int, 4, "synthetic graph: number of blocks"),
    "sbm_nodes_per_block": Key(int, 100, "synthetic graph: nodes per block"),
    "sbm_p_in": Key(float, 0.05, "synthetic graph: edge probability inside a block"),
    "sbm_p_out": Key(float, 0.005, "synthetic graph: edge probability across blocks"),
    "sbm_feature_dim": Key(int, 16, "synthetic graph: feature dimension"),
    "sbm_feature_shift": Key(float, 1.0, "synthetic graph: class-mean offset"),
    "sbm_noise_sigma": Key(float, 1.0, "synthetic graph: feature noise scale"),
    # model
    "model": Key(_choice("gcn", "gat"), "gcn", "architecture"),
    "hidden": Key(_opt_int, None, "hidden width (gcn 16, gat 8 per head)"),
    "heads": Key(int, 8, "attention heads in the first gat layer"),
    "dropout": Key(float, 0.5, "dropout rate on layer inputs"),
    "weighting": Key(_choice("symnorm", "rownorm", "binary", "attention", optional=True), None,
                     "edge weighting (gcn default symnorm, gat uses attention)"),
    "aggregator": Key(_choice("sum", "max", "lp", "poly", "softmax"), "sum", "aggregator kind"),
    "agg_theta_init": Key(_opt_float, None, "raw aggregator parameter at initialization"),
    "agg_learnable": Key(_bool, True, "train the aggregator parameter"),
    "agg_value": Key(_opt_float, None, "fixed p/alpha/gamma; needs agg_learnable = false"),
    "agg_share": Key(_bool, False, "share one aggregator parameter across layers"),
    # trainer
    "lr": Key(float, 0.01, "learning rate"),
    "weight_decay": Key(float, 5e-4, "L2 penalty on weights and attention vectors"),
    "max_epochs": Key(int, 500, "epoch budget"),
    "patience": Key(int, 100, "early-stopping patience in evaluations"),
    "optimizer": Key(_choice("adam", "sgd_momentum"), "adam", "optimizer"),
    "eval_every": Key(int, 1, "epochs between validation passes"),
    # run
    "seeds": Key(_int_list, [0], "comma-separated seeds"),
    "out_dir": Key(str, "runs", "output directory"),
    "export_embeddings": Key(_bool, False, "write hidden representations per seed"),
}


def suggest(key):
    close = difflib.get_close_matches(key, SCHEMA, n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def parse_pairs(lines, source="<overrides>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_pairs(fh.read().splitlines(), path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def resolve(raw):
    """Validate raw values against :data:`SCHEMA` and fill in defaults."""
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}{suggest(key)}")
    cfg = {}
    for key, spec in SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = spec.parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        else:
            cfg[key] = list(spec.default) if isinstance(spec.default, list) else spec.default
    check(cfg)
    return cfg


def check(cfg):
    if not cfg["seeds"]:
        raise ConfigError("seeds must name at least one seed")
    if cfg["agg_value"] is not None and cfg["agg_learnable"]:
        raise ConfigError("agg_value needs agg_learnable = false")
    if cfg["agg_value"] is not None:
        lower = {"lp": 1.0, "poly": 0.0, "softmax": 0.0}.get(cfg["aggregator"])
        if lower is None:
            raise ConfigError(f"agg_value has no meaning for aggregator {cfg['aggregator']!r}")
        if cfg["agg_value"] < lower:
            raise ConfigError(f"agg_value {cfg['agg_value']} is below {lower} "
                              f"for aggregator {cfg['aggregator']!r}")
    if cfg["model"] == "gat" and cfg["weighting"] not in (None, "attention"):
        raise ConfigError("model 'gat' uses weighting = attention")
    if cfg["model"] == "gcn" and cfg["weighting"] == "attention":
        raise ConfigError("weighting = attention requires model = gat")
    if not 0 <= cfg["dropout"] < 1:
        raise ConfigError(f"dropout must lie in [0, 1), got {cfg['dropout']}")
    if cfg["dataset"] != "sbm-std" and not os.path.isdir(cfg["dataset"]):
        raise ConfigError(f"dataset {cfg['dataset']!r} is neither 'sbm-std' nor a directory")


def load(path=None, overrides=()):
    """File values, then ``overrides`` (``key=value`` strings) on top, resolved."""
    raw = read_config(path) if path else {}
    raw.update(parse_pairs(overrides))
    return resolve(raw)


def dump(cfg):
    """Serialize a resolved config back to ``key = value`` text."""
    lines = []
    for key in SCHEMA:
        value = cfg[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        elif value is None:
            value = "none"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
