"""Batch pipeline front-end: ingest -> tune -> evaluate -> compare -> bench
-> report, with file-based handoff between stages so each can be rerun or
resumed independently.

Exit codes: 0 success, 2 configuration/validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, hpo, ingest
from .bench import BenchConfig, plot_bench, run_bench, summarize_bench, write_summary_csv
from .config import ConfigError, ExperimentConfig, build_config, parse_config_file, write_manifest
from .domain import CoordinateSystem
from .gabornet import GaborNetParams, train_gabor
from .idw import IdwParams, idw_reconstruct
from .kernels import BACKEND
from .kriging import (
    KrigingParams,
    VariogramFamily,
    empirical_variogram,
    fit_variogram,
    ok_reconstruct,
    preprocess_ok,
)
from .metrics import EvalPair, compute_metrics
from .spatial import build as build_index
from .stats import MetricSamples, compare_methods

_log = logging.getLogger("climrecon")

METRIC_NAMES = ("rmse", "mae", "r2", "delta_max")


# -- plumbing -----------------------------------------------------------------


def _split_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out / "splits"


def _split_files(cfg: ExperimentConfig) -> list[Path]:
    return sorted(_split_dir(cfg).glob("*.csv"))


def _history_path(cfg: ExperimentConfig, method: str, date: str) -> Path:
    return cfg.out / "tune" / method / f"{date}.csv"


def _best_path(cfg: ExperimentConfig, method: str, date: str) -> Path:
    return cfg.out / "best_params" / method / f"{date}.json"


def _space_for(cfg: ExperimentConfig, method: str) -> hpo.SearchSpace:
    if method == "gabor":
        return hpo.gabor_space(
            hidden_dims=cfg.gabor_hidden_dims,
            latent_dims=cfg.gabor_latent_dims,
            max_layers=cfg.gabor_max_layers,
            max_batch=cfg.gabor_max_batch,
        )
    return hpo.space_for(method)


def _net_seed(cfg: ExperimentConfig, method: str, date: str) -> int:
    return ingest.derive_date_seed(cfg.seed, f"{method}:{date}:net")


def _load_best(cfg: ExperimentConfig, method: str, date: str) -> dict:
    path = _best_path(cfg, method, date)
    if not path.exists():
        raise FileNotFoundError(
            f"no tuned parameters for method {method!r} on {date}: {path} (run `tune` first)"
        )
    return json.loads(path.read_text())["params"]


def _reconstructor(cfg: ExperimentConfig, method: str, date: str, train, val):
    """Fully prepared callable (lats, lons) -> predictions; all fitting and
    training happens here, outside any timed region."""
    params = _load_best(cfg, method, date)
    if method == "idw":
        p = IdwParams(k_neighbours=int(params["k_neighbours"]), power=float(params["power"]))
        index = build_index(train)
        return lambda lats, lons: idw_reconstruct(train, index, p, (lats, lons), cfg.coordinate)
    if method == "kriging":
        p = KrigingParams(
            n_bins=int(params["n_bins"]),
            anisotropy_scale=float(params["anisotropy_scale"]),
            coord=CoordinateSystem(params["coordinate"]),
            model_family=VariogramFamily(params["model_family"]),
        )
        scaled, sp = preprocess_ok(train)
        ev = empirical_variogram(scaled, p.n_bins, p.anisotropy_scale, p.coord)
        fv = fit_variogram(ev, p.model_family)
        return lambda lats, lons: ok_reconstruct(scaled, fv, sp, (lats, lons), p.coord, p.anisotropy_scale)
    if method == "gabor":
        gp = _gabor_params(cfg, params)
        net, _trace = train_gabor(train, val, gp, seed=_net_seed(cfg, method, date))
        return lambda lats, lons: net.predict(lats, lons)
    raise ConfigError(f"unknown method {method!r}")


def _gabor_params(cfg: ExperimentConfig, params: dict) -> GaborNetParams:
    return GaborNetParams(
        learning_rate=float(params["learning_rate"]),
        l2=float(params["l2"]),
        batch_size=int(params["batch_size"]),
        hidden_dim=int(params["hidden_dim"]),
        latent_dim=int(params["latent_dim"]),
        n_layers=int(params["n_layers"]),
        input_scale=float(params["input_scale"]),
        alpha=float(params["alpha"]),
        epochs=cfg.gabor_epochs,
    )


# -- stages -------------------------------------------------------------------


def cmd_ingest(cfg: ExperimentConfig) -> int:
    records = ingest.read_station_file(cfg.data)
    dates = ingest.select_dates(records, min_valid=cfg.min_valid, n=cfg.n_dates, seed=cfg.seed)
    _split_dir(cfg).mkdir(parents=True, exist_ok=True)
    by_date: dict[str, list[ingest.StationRecord]] = {}
    for r in records:
        by_date.setdefault(r.date, []).append(r)
    splits = []
    for date in dates:
        ss = ingest.make_splits(by_date[date], cfg.seed)
        ingest.write_split_csv(_split_dir(cfg) / f"{date}.csv", list(ss.records), ss.labels)
        splits.append(ss)
    summary = ingest.split_summary(splits)
    with open(cfg.out / "split_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "count", "min", "mean", "std", "max"])
        for s in summary:
            writer.writerow(
                [s.split, s.count, _g(s.min), _g(s.mean), _g(s.std), _g(s.max)]
            )
    write_manifest(cfg, "ingest", BACKEND, __version__)
    _log.info("ingested %d dates -> %s", len(dates), _split_dir(cfg))
    return 0


def cmd_tune(cfg: ExperimentConfig) -> int:
    files = _split_files(cfg)
    if not files:
        raise FileNotFoundError(f"no split files under {_split_dir(cfg)}; run `ingest` first")
    for method in cfg.methods:
        space = _space_for(cfg, method)
        n_init, n_iter = cfg.budgets[method]
        budget = hpo.BoBudget(n_initial=n_init, n_iterations=n_iter)
        for path in files:
            date, clouds = ingest.read_split_csv(path, subsets=("train", "val"))
            hist_path = _history_path(cfg, method, date)
            best_path = _best_path(cfg, method, date)
            if hist_path.exists() and best_path.exists():
                prior = hpo.load_history(hist_path, space)
                if len(prior) == n_init + n_iter:
                    _log.info("tune %s/%s already complete, skipping", method, date)
                    continue
            objective = hpo.make_objective(
                method,
                clouds["train"],
                clouds["val"],
                cfg.coordinate,
                net_seed=_net_seed(cfg, method, date),
                epochs=cfg.gabor_epochs if method == "gabor" else None,
            )
            tune_seed = ingest.derive_date_seed(cfg.seed, f"{method}:{date}:tune")
            best, history = hpo.tune(space, objective, budget, tune_seed)
            hist_path.parent.mkdir(parents=True, exist_ok=True)
            hpo.save_history(hist_path, space, history)
            _write_histograms(hist_path.parent, date, space, history)
            best_path.parent.mkdir(parents=True, exist_ok=True)
            best_path.write_text(
                json.dumps(
                    {"params": best.params, "objective": best.objective, "status": best.status},
                    indent=2,
                    sort_keys=True,
                    default=float,
                )
                + "\n"
            )
            _log.info("tuned %s/%s: objective %.6g", method, date, best.objective)
    write_manifest(cfg, "tune", BACKEND, __version__)
    return 0


def _write_histograms(dirpath: Path, date: str, space: hpo.SearchSpace, history) -> None:
    """20-bin sampled-value histograms per continuous parameter; these back
    the manual check that tuned values stay off the bounds."""
    for spec in space.specs:
        if spec.kind not in (hpo.ParamKind.REAL, hpo.ParamKind.REAL_LOG):
            continue
        values = np.asarray([t.params[spec.name] for t in history], dtype=np.float64)
        if spec.kind is hpo.ParamKind.REAL_LOG:
            edges = np.exp(np.linspace(np.log(spec.low), np.log(spec.high), 21))
        else:
            edges = np.linspace(spec.low, spec.high, 21)
        counts, _ = np.histogram(values, bins=edges)
        with open(dirpath / f"{date}_hist_{spec.name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                writer.writerow([_g(lo), _g(hi), int(c)])


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    files = _split_files(cfg)
    if not files:
        raise FileNotFoundError(f"no split files under {_split_dir(cfg)}; run `ingest` first")
    eval_dir = cfg.out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in files:
        # the one and only stage allowed to read the test subset
        date, clouds = ingest.read_split_csv(path, subsets=("train", "val", "test"))
        test = clouds["test"]
        for method in cfg.methods:
            recon = _reconstructor(cfg, method, date, clouds["train"], clouds["val"])
            preds = recon(test.lats, test.lons)
            ms = compute_metrics(EvalPair(observed=test.values, predicted=np.asarray(preds)))
            rows.append((date, method, ms))
            _log.info("evaluate %s/%s: rmse %.4g mae %.4g", method, date, ms.rmse, ms.mae)
    with open(eval_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "method"] + list(METRIC_NAMES))
        for date, method, ms in rows:
            writer.writerow(
                [date, method, _g(ms.rmse), _g(ms.mae), _g(ms.r2), _g(ms.delta_max)]
            )
    write_manifest(cfg, "evaluate", BACKEND, __version__)
    return 0


def _read_eval(cfg: ExperimentConfig):
    path = cfg.out / "eval" / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run `evaluate` first")
    table: dict[str, dict[str, dict[str, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            per_method = table.setdefault(row["method"], {})
            per_method[row["date"]] = {m: float(row[m]) for m in METRIC_NAMES}
    return table


def cmd_compare(cfg: ExperimentConfig) -> int:
    table = _read_eval(cfg)
    methods = sorted(table)
    if len(methods) < 2:
        raise ConfigError("comparison needs at least two methods in the evaluation table")
    dates = sorted(set.intersection(*(set(table[m]) for m in methods)))
    if len(dates) < 3:
        raise ConfigError(f"comparison needs at least 3 dates, found {len(dates)}")
    samples = {}
    for metric in METRIC_NAMES:
        groups = tuple(
            np.asarray([table[m][d][metric] for d in dates], dtype=np.float64) for m in methods
        )
        samples[metric] = MetricSamples(labels=tuple(methods), groups=groups)
    report = compare_methods(samples, alpha=cfg.alpha)
    cmp_dir = cfg.out / "compare"
    cmp_dir.mkdir(parents=True, exist_ok=True)
    rows = report.to_rows()
    with open(cmp_dir / "comparison.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_g(v) if isinstance(v, float) else v) for k, v in row.items()})
    (cmp_dir / "comparison.txt").write_text(report.to_text())
    write_manifest(cfg, "compare", BACKEND, __version__)
    _log.info("comparison written to %s", cmp_dir)
    return 0


def cmd_bench(cfg: ExperimentConfig) -> int:
    files = _split_files(cfg)
    if not files:
        raise FileNotFoundError(f"no split files under {_split_dir(cfg)}; run `ingest` first")
    date, clouds = ingest.read_split_csv(files[0], subsets=("train", "val"))
    train = clouds["train"]
    reconstructors = {}
    for method in cfg.methods:
        reconstructors[method] = _reconstructor(cfg, method, date, train, clouds["val"])
    bench_dir = cfg.out / "bench"
    bench_dir.mkdir(parents=True, exist_ok=True)
    bcfg = BenchConfig(
        sizes=cfg.bench_sizes,
        repetitions=cfg.bench_reps,
        methods=cfg.methods,
        warmup=cfg.bench_warmup,
        seed=cfg.seed,
    )
    records_path = bench_dir / "bench_records.csv"
    if records_path.exists():
        records_path.unlink()
    records = run_bench(bcfg, reconstructors, train, out_csv=records_path)
    summary = summarize_bench(records)
    write_summary_csv(bench_dir / "bench_summary.csv", summary)
    plot_bench(summary, bench_dir / "bench.svg")
    write_manifest(cfg, "bench", BACKEND, __version__)
    _log.info("bench complete: %d records on %s nodes of %s", len(records), train.n, date)
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    lines = ["# Reconstruction experiment report", ""]
    lines.append(f"- kernel backend: {BACKEND}")
    lines.append(f"- master seed: {cfg.seed}")
    lines.append(f"- methods: {', '.join(cfg.methods)}")
    lines.append("")
    summary_path = cfg.out / "split_summary.csv"
    if summary_path.exists():
        lines.append("## Split value statistics (train/validation pooled)")
        lines.append("")
        lines.append("```")
        lines.append(summary_path.read_text().strip())
        lines.append("```")
        lines.append("")
    try:
        table = _read_eval(cfg)
        lines.append("## Median test metrics per method")
        lines.append("")
        lines.append("| method | " + " | ".join(METRIC_NAMES) + " |")
        lines.append("|---" * (len(METRIC_NAMES) + 1) + "|")
        for method in sorted(table):
            meds = [
                float(np.median([table[method][d][m] for d in table[method]]))
                for m in METRIC_NAMES
            ]
            lines.append("| " + method + " | " + " | ".join(f"{v:.3f}" for v in meds) + " |")
        lines.append("")
    except FileNotFoundError:
        lines.append("(no evaluation results yet)")
        lines.append("")
    cmp_txt = cfg.out / "compare" / "comparison.txt"
    if cmp_txt.exists():
        lines.append("## Statistical comparison")
        lines.append("")
        lines.append("```")
        lines.append(cmp_txt.read_text().strip())
        lines.append("```")
        lines.append("")
    bench_summary = cfg.out / "bench" / "bench_summary.csv"
    if bench_summary.exists():
        lines.append("## Efficiency summary")
        lines.append("")
        lines.append("```")
        lines.append(bench_summary.read_text().strip())
        lines.append("```")
        lines.append("")
    (cfg.out / "report.md").write_text("\n".join(lines))
    write_manifest(cfg, "report", BACKEND, __version__)
    _log.info("report written to %s", cfg.out / "report.md")
    return 0


# -- argument handling ----------------------------------------------------------


_FLAG_TO_KEY = {
    "seed": "seed",
    "methods": "methods",
    "out": "out",
    "sizes": "bench_sizes",
    "ladder": "bench_ladder",
}

COMMANDS = {
    "ingest": cmd_ingest,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "bench": cmd_bench,
    "report": cmd_report,
}


def _g(v: float) -> str:
    return format(float(v), ".17g")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="climrecon",
        description="Sparse climate field reconstruction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", help="master seed override")
        p.add_argument("--methods", help="comma-separated methods override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--sizes", help="comma-separated bench target sizes")
        p.add_argument("--ladder", choices=["small", "large"], help="bench size ladder")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        values = parse_config_file(args.config)
        for flag, key in _FLAG_TO_KEY.items():
            v = getattr(args, flag, None)
            if v is not None:
                values[key] = v
        for key, value in _parse_extra(extra):
            values[key] = value
        cfg = build_config(values)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        _log.error("%s failed: %s", args.command, exc)
        return 1


def _parse_extra(extra: list[str]) -> list[tuple[str, str]]:
    """Generic --<config_key> <value> overrides for any config key."""
    from .config import DEFAULTS

    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"flag --{key} needs a value")
            value = extra[i + 1]
            i += 1
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out.append((key, value))
        i += 1
    return out


if __name__ == "__main__":
    sys.exit(main())
