"""Command-line driver: data in, method out, metrics and ledger reports.

Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""

import argparse
import sys
import time

import numpy as np

from . import pitc
from .core import Hyperparams
from .data import generate_synthetic_tiled, load_csv, train_test_split
from .exact import fgp_predict
from .icf import IcfBreakdownError, centralized_icf, factor_serial
from .linalg import NotPositiveDefiniteError
from .metrics import (
    MetricsReport,
    mnlp,
    mnlp_floor_count,
    negative_variance_count,
    rmse,
)
from .partition import (
    partition_clustered,
    partition_even,
    select_support_set,
    support_candidates,
)
from .runtime import run_picf, run_ppic, run_ppitc

METHODS = ("fgp", "ppitc", "ppic", "picf", "pitc", "pic", "icf")
SUPPORT_METHODS = ("ppitc", "ppic", "pitc", "pic")
RANK_METHODS = ("picf", "icf")
PARALLEL_METHODS = ("ppitc", "ppic", "picf")
CENTRAL_TWIN = {"pitc": "ppitc", "pic": "ppic", "icf": "picf"}
CSV_COLUMNS = (
    "method",
    "n_train",
    "machines",
    "param",
    "rmse",
    "mnlp",
    "wall_time_seconds",
    "neg_var_count",
)

DEFAULTS = {
    "method": "fgp",
    "machines": 1,
    "support_size": None,
    "rank": None,
    "signal_variance": 1.0,
    "noise_variance": 0.1,
    "length_scales": None,
    "prior_mean": 0.0,
    "seed": 0,
    "partition_seed": 0,
    "support_pool_size": 2048,
    "partition": None,
    "transport": "threads",
    "train": None,
    "test": None,
    "synthetic": None,
    "out": None,
    "full_cov": False,
    "icf_partition_queries": False,
}

SWEEPABLE = ("method", "machines", "support_size", "rank", "seed", "partition_seed")


class ConfigError(ValueError):
    pass


def parse_config_file(path):
    """Flat key = value text; '#' starts a comment."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, raw = line.partition("=")
                key = key.strip()
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(key, raw.strip())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return values


def _parse_value(key, raw):
    if key in ("machines", "support_size", "rank", "seed", "partition_seed",
               "support_pool_size"):
        return int(raw)
    if key in ("signal_variance", "noise_variance", "prior_mean"):
        return float(raw)
    if key == "length_scales":
        return [float(v) for v in raw.split(",") if v.strip()]
    if key in ("full_cov", "icf_partition_queries"):
        return raw.strip() not in ("0", "false", "False", "")
    if key == "synthetic":
        return raw
    return raw


def build_parser():
    p = argparse.ArgumentParser(
        prog="pargp",
        description="Gaussian process regression, exact and distributed "
        "low-rank approximate, with CSV metrics output.",
    )
    p.add_argument("--method", choices=METHODS, help="prediction method")
    p.add_argument("--machines", type=int, help="number of workers (M)")
    p.add_argument("--support-size", type=int, dest="support_size",
                   help="support set size for the *pitc/*pic methods")
    p.add_argument("--rank", type=int, help="factor rank for the *icf methods")
    p.add_argument("--train", help="training CSV (x1..xd,y)")
    p.add_argument("--test", help="test CSV (x1..xd[,y])")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="data seed (synthetic draw / test split)")
    p.add_argument("--synthetic", metavar="d,n_train,n_test",
                   help="generate data from the model prior instead of loading")
    p.add_argument("--partition", choices=("even", "clustered"),
                   help="how training/query points are split across machines")
    p.add_argument("--transport", choices=("threads", "processes"),
                   help="worker binding for the parallel methods")
    p.add_argument("--out", help="write result CSV rows to this path")
    p.add_argument("--full-cov", action="store_true", dest="full_cov", default=None,
                   help="also compute the full predictive covariance "
                   "(centralized methods only)")
    p.add_argument("--sweep", metavar="KEY=v1,v2,...",
                   help=f"run once per value; keys: {', '.join(SWEEPABLE)}")
    return p


def merge_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _parse_synthetic(raw):
    try:
        d, n_train, n_test = (int(v) for v in str(raw).split(","))
    except ValueError as exc:
        raise ConfigError(f"--synthetic wants d,n_train,n_test, got {raw!r}") from exc
    return d, n_train, n_test


def validate_config(cfg):
    if cfg["method"] not in METHODS:
        raise ConfigError(f"unknown method {cfg['method']!r}")
    if cfg["machines"] < 1:
        raise ConfigError("machines must be at least 1")
    if cfg["method"] in SUPPORT_METHODS and not cfg["support_size"]:
        raise ConfigError(f"method {cfg['method']} needs support_size")
    if cfg["method"] in RANK_METHODS and not cfg["rank"]:
        raise ConfigError(f"method {cfg['method']} needs rank")
    if cfg["synthetic"] is None and cfg["train"] is None:
        raise ConfigError("need --synthetic or --train")
    if cfg["partition"] is None:
        cfg["partition"] = "clustered" if cfg["method"] == "ppic" else "even"
    return cfg


def load_data(cfg):
    if cfg["synthetic"] is not None:
        d, n_train, n_test = _parse_synthetic(cfg["synthetic"])
        h = make_hyperparams(cfg, d)
        train, test = generate_synthetic_tiled(
            d, n_train, n_test, h, cfg["seed"], cfg["prior_mean"]
        )
        return train, test.x, test.y, h
    train = load_csv(cfg["train"], prior_mean=cfg["prior_mean"])
    if cfg["test"]:
        held = load_csv(cfg["test"], prior_mean=cfg["prior_mean"],
                        start_id=train.n)
        if hasattr(held, "y"):
            test_x, test_y = held.x, held.y
        else:
            test_x, test_y = held, None
    else:
        train, held = train_test_split(train, cfg["seed"])
        test_x, test_y = held.x, held.y
    return train, test_x, test_y, make_hyperparams(cfg, train.x.dim)


def make_hyperparams(cfg, d):
    ls = cfg["length_scales"]
    if ls is None:
        ls = np.ones(d)
    ls = np.atleast_1d(np.asarray(ls, dtype=np.float64))
    if ls.shape[0] == 1 and d > 1:
        ls = np.full(d, ls[0])
    if ls.shape[0] != d:
        raise ConfigError(f"{ls.shape[0]} length_scales for {d}-dimensional inputs")
    return Hyperparams(cfg["signal_variance"], cfg["noise_variance"], ls)


def _build_support(cfg, train, h):
    pool = support_candidates(train, cfg["support_pool_size"], cfg["partition_seed"])
    if cfg["support_size"] > len(pool):
        raise ConfigError(
            f"support_size {cfg['support_size']} exceeds candidate pool {len(pool)}"
        )
    return select_support_set(pool, cfg["support_size"], h)


def _make_partition(cfg, train, query):
    if cfg["partition"] == "clustered":
        return partition_clustered(train, query, cfg["machines"],
                                   cfg["partition_seed"])
    return partition_even(train, query, cfg["machines"])


def execute_method(cfg, train, query, h):
    """Run the configured predictor; returns (prediction, ledger or None)."""
    method = cfg["method"]
    full = cfg["full_cov"]
    if method == "fgp":
        return fgp_predict(train, query, h, want_full_cov=full), None
    if method in ("ppitc", "ppic"):
        support = _build_support(cfg, train, h)
        runner = run_ppitc if method == "ppitc" else run_ppic
        return runner(
            train, query, support, h, cfg["machines"],
            partition_mode=cfg["partition"], partition_seed=cfg["partition_seed"],
            transport=cfg["transport"],
        )
    if method == "picf":
        return run_picf(
            train, query, h, cfg["rank"], cfg["machines"],
            partition_mode=cfg["partition"], partition_seed=cfg["partition_seed"],
            transport=cfg["transport"],
            partition_queries=cfg["icf_partition_queries"],
        )
    if method in ("pitc", "pic"):
        support = _build_support(cfg, train, h)
        part = _make_partition(cfg, train, query)
        fn = pitc.centralized_pitc if method == "pitc" else pitc.centralized_pic
        return fn(train, part, query, support, h, want_full_cov=full), None
    if method == "icf":
        factor = factor_serial(train.x, cfg["rank"], h)
        return centralized_icf(train, factor.entries, query, h,
                               want_full_cov=full), None
    raise ConfigError(f"unknown method {method!r}")


def run_experiment(cfg):
    """One configured run: data, method, metrics, and a CSV result row."""
    cfg = validate_config(dict(cfg))
    train, test_x, test_y, h = load_data(cfg)
    if cfg["machines"] > train.n:
        raise ConfigError(
            f"machines={cfg['machines']} exceeds the {train.n} training points"
        )
    if cfg["method"] in RANK_METHODS and cfg["rank"] > train.n:
        raise ConfigError(f"rank={cfg['rank']} exceeds the {train.n} training points")
    started = time.perf_counter()
    prediction, ledger = execute_method(cfg, train, test_x, h)
    elapsed = time.perf_counter() - started
    if test_y is not None:
        rmse_val = rmse(prediction, test_y)
        mnlp_val = mnlp(prediction, test_y)
    else:
        rmse_val = mnlp_val = float("nan")
    report = MetricsReport(
        rmse=rmse_val,
        mnlp=mnlp_val,
        wall_time_seconds=elapsed,
        negative_variance_count=negative_variance_count(prediction),
        mnlp_floor_count=mnlp_floor_count(prediction),
        ledger_report=ledger.report() if ledger is not None else "",
    )
    param = cfg["support_size"] if cfg["method"] in SUPPORT_METHODS else (
        cfg["rank"] if cfg["method"] in RANK_METHODS else 0
    )
    row = {
        "method": cfg["method"],
        "n_train": train.n,
        "machines": cfg["machines"],
        "param": param,
        "rmse": repr(report.rmse),
        "mnlp": repr(report.mnlp),
        "wall_time_seconds": repr(report.wall_time_seconds),
        "neg_var_count": report.negative_variance_count,
    }
    return report, row


def _parse_sweep(raw):
    key, _, values = raw.partition("=")
    key = key.strip()
    if key not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {key!r}; choose from {', '.join(SWEEPABLE)}")
    out = []
    for tok in values.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append(tok if key == "method" else int(tok))
    if not out:
        raise ConfigError(f"sweep {raw!r} lists no values")
    return key, out


def format_rows(rows):
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _speedup_lines(rows):
    by_method = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(float(row["wall_time_seconds"]))
    lines = []
    for central, par in CENTRAL_TWIN.items():
        if central in by_method and par in by_method:
            ratio = np.mean(by_method[central]) / np.mean(by_method[par])
            lines.append(f"speedup {central}/{par} = {ratio:.3f}")
    return lines


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = merge_config(args)
        if args.sweep:
            key, values = _parse_sweep(args.sweep)
            configs = []
            for v in values:
                c = dict(cfg)
                c[key] = v
                configs.append(c)
        else:
            configs = [cfg]
        rows = []
        for c in configs:
            report, row = run_experiment(c)
            rows.append(row)
            print(
                f"method={row['method']} n_train={row['n_train']} "
                f"M={row['machines']} param={row['param']} "
                f"rmse={report.rmse:.6g} mnlp={report.mnlp:.6g} "
                f"time={report.wall_time_seconds:.3f}s "
                f"neg_var={report.negative_variance_count} "
                f"mnlp_floored={report.mnlp_floor_count}"
            )
            if report.ledger_report:
                print(report.ledger_report, end="")
        csv_text = format_rows(rows)
        print(csv_text, end="")
        for line in _speedup_lines(rows):
            print(line)
        if cfg["out"]:
            with open(cfg["out"], "w", encoding="utf-8") as fh:
                fh.write(csv_text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NotPositiveDefiniteError, IcfBreakdownError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
