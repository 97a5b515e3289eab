"""Command-line experiment runner.

Subcommands: ``simulate`` (one run per seed), ``sweep`` (malicious
percentage x seed grid), ``train`` (warm-up only, writes checkpoints) and
``report`` (aggregates existing metrics.csv files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifier import save_codec
from .errors import ConfigError, TrustSimError
from .netsim import (
    METRIC_COLUMNS,
    RoundMetrics,
    SimConfig,
    expected_first_decision_round,
    run,
    summarize_metrics,
    train_initial_models,
)
from .redemption import save_redemption

log = logging.getLogger("iwsn_trust")

DEFAULT_SWEEP = (10.0, 20.0, 30.0, 40.0, 50.0)
REPORT_METRICS = ("detection_rate", "false_positive_rate", "attacks_drop", "attacks_delay", "lifetime", "throughput")
TRACE_COLUMNS = ("round", "member", "head", "loss", "label", "recommendations", "cooperation")

# keys that belong to the experiment rather than to the simulated network
EXPERIMENT_KEYS = ("out", "seeds", "percentages", "baseline", "jobs")


class ConfigParseError(ConfigError):
    """Malformed configuration file."""


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    out: Path = Path("runs")
    seeds: tuple[int, ...] = (1,)
    percentages: tuple[float, ...] = DEFAULT_SWEEP
    baseline: bool = False
    jobs: int = 1

    def validate(self) -> "ExperimentConfig":
        self.sim.validate()
        if not self.seeds:
            raise ConfigError("seeds: the seed list must not be empty")
        for p in self.percentages:
            if not 0.0 <= p <= 100.0:
                raise ConfigError(f"percentages: {p} outside [0, 100]")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        return self

    def sim_for(self, seed: int, malicious_pct: Optional[float] = None) -> SimConfig:
        cfg = replace(self.sim, seed=seed, trust_enabled=self.sim.trust_enabled and not self.baseline)
        if malicious_pct is not None:
            cfg = replace(cfg, malicious_pct=malicious_pct)
        return cfg


@dataclass
class ReportRow:
    malicious_pct: float
    n_runs: int
    stats: dict  # metric -> (mean, std); None when no run produced the metric

    def as_dict(self) -> dict:
        out = {"malicious_pct": self.malicious_pct, "n_runs": self.n_runs}
        for name in REPORT_METRICS:
            mean, std = self.stats.get(name) or (None, None)
            out[f"{name}_mean"] = mean
            out[f"{name}_std"] = std
        return out


# --- configuration -----------------------------------------------------------


def _coerce(key: str, raw: str, default):
    """Convert ``raw`` to the type of ``default``."""
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if isinstance(default, Path):
            return Path(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigParseError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigParseError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def parse_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults, then file values, then ``overrides`` (already typed)."""
    sim_defaults = SimConfig()
    exp_defaults = ExperimentConfig()
    sim_kw, exp_kw = {}, {}
    for key, raw in (read_config_file(path) if path else {}).items():
        if key in EXPERIMENT_KEYS:
            default = getattr(exp_defaults, key)
            if key == "seeds":
                exp_kw[key] = tuple(int(_coerce(key, v, 0)) for v in raw.split(",") if v.strip())
            else:
                exp_kw[key] = _coerce(key, raw, default)
        elif key in SimConfig.field_names():
            sim_kw[key] = _coerce(key, raw, getattr(sim_defaults, key))
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in EXPERIMENT_KEYS:
            exp_kw[key] = value
        elif key in SimConfig.field_names():
            sim_kw[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    sim = replace(sim_defaults, **sim_kw)
    return replace(exp_defaults, sim=sim, **exp_kw).validate()


# --- output ------------------------------------------------------------------


def write_metrics_csv(path, series: Sequence[RoundMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for m in series:
            writer.writerow(m.row())


def read_metrics_csv(path) -> list[RoundMetrics]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METRIC_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        return [RoundMetrics.from_row(row) for row in reader]


def write_summary_json(path, summary: dict, config: SimConfig) -> None:
    doc = dict(summary, config=config.to_dict(), seed=config.seed)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(trace)


def _fmt(value):
    return "" if value is None else value


def write_report_csv(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = None
        for row in rows:
            d = row.as_dict()
            if writer is None:
                writer = csv.DictWriter(fh, fieldnames=list(d), lineterminator="\n")
                writer.writeheader()
            writer.writerow({k: _fmt(v) for k, v in d.items()})


def report_rows(summaries: Sequence[tuple[float, dict]]) -> list[ReportRow]:
    """Group run summaries by malicious percentage; mean and population std per metric."""
    groups: dict[float, list[dict]] = {}
    for pct, summary in summaries:
        groups.setdefault(float(pct), []).append(summary)
    rows = []
    for pct in sorted(groups):
        runs = groups[pct]
        stats = {}
        for name in REPORT_METRICS:
            vals = np.array([s[name] for s in runs if s.get(name) is not None], dtype=float)
            stats[name] = (float(vals.mean()), float(vals.std())) if len(vals) else None
        rows.append(ReportRow(pct, len(runs), stats))
    return rows


# --- subcommands -------------------------------------------------------------


def _execute_run(cfg: SimConfig, run_dir: Path) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
    result = run(cfg)
    write_metrics_csv(run_dir / "metrics.csv", result.series)
    write_summary_json(run_dir / "summary.json", result.summary, cfg)
    if cfg.trace_decisions:
        write_trace_csv(run_dir / "decisions.csv", result.trace)
    return result.summary


def _run_all(jobs: list[tuple[SimConfig, Path]], workers: int) -> list[dict]:
    for cfg, run_dir in jobs:
        log.info("queued pct=%g seed=%d -> %s", cfg.malicious_pct, cfg.seed, run_dir)
    if workers == 1 or len(jobs) == 1:
        return [_execute_run(cfg, d) for cfg, d in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_execute_run, cfg, d) for cfg, d in jobs]
        return [f.result() for f in futures]


def cmd_simulate(exp: ExperimentConfig) -> int:
    single = len(exp.seeds) == 1
    jobs = [(exp.sim_for(s), exp.out if single else exp.out / f"seed_{s}") for s in exp.seeds]
    for (cfg, _), summary in zip(jobs, _run_all(jobs, exp.jobs)):
        print(_summary_line(cfg, summary))
    return 0


def cmd_sweep(exp: ExperimentConfig) -> int:
    jobs = [
        (exp.sim_for(s, pct), exp.out / f"pct_{pct:g}" / f"seed_{s}")
        for pct in exp.percentages
        for s in exp.seeds
    ]
    summaries = _run_all(jobs, exp.jobs)
    rows = report_rows([(cfg.malicious_pct, s) for (cfg, _), s in zip(jobs, summaries)])
    write_report_csv(exp.out / "report.csv", rows)
    _print_rows(rows)
    return 0


def cmd_train(exp: ExperimentConfig) -> int:
    for seed in exp.seeds:
        cfg = exp.sim_for(seed)
        run_dir = exp.out if len(exp.seeds) == 1 else exp.out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _, models = train_initial_models(cfg)
        save_codec(run_dir / "codec.npz", models.codec, models.thresholds)
        np.save(run_dir / "training_vectors.npy", models.reference)
        if models.redemption is not None:
            save_redemption(run_dir / "redemption.npz", models.redemption)
        th = models.thresholds
        print(f"seed {seed}: {len(models.reference)} vectors, Tr1={th.tr1:.6f} Tr2={th.tr2:.6f} -> {run_dir}")
    return 0


def cmd_report(exp: ExperimentConfig, runs_dir: Optional[Path]) -> int:
    root = runs_dir or exp.out
    paths = sorted(root.rglob("metrics.csv"))
    if not paths:
        raise ConfigError(f"{root}: no metrics.csv files found")
    summaries = []
    for path in paths:
        pct = exp.sim.malicious_pct
        meta = path.with_name("summary.json")
        if meta.exists():
            with open(meta) as fh:
                pct = json.load(fh)["config"]["malicious_pct"]
        summaries.append((pct, summarize_metrics(read_metrics_csv(path))))
    rows = report_rows(summaries)
    write_report_csv(root / "report.csv", rows)
    _print_rows(rows)
    print(f"N_r = {expected_first_decision_round(exp.sim):.2f}")
    return 0


def _summary_line(cfg: SimConfig, s: dict) -> str:
    def f(v):
        return "n/a" if v is None else f"{v:.3f}"

    return (
        f"seed {cfg.seed} pct {cfg.malicious_pct:g} trust={'on' if cfg.trust_enabled else 'off'}: "
        f"detection {f(s['detection_rate'])} fpr {f(s['false_positive_rate'])} "
        f"attacks {s['attacks_total']} lifetime {s['lifetime']}{'+' if s['lifetime_censored'] else ''} "
        f"throughput {s['throughput']}"
    )


def _print_rows(rows: Sequence[ReportRow]) -> None:
    for row in rows:
        parts = [f"pct {row.malicious_pct:g} (n={row.n_runs})"]
        for name in REPORT_METRICS:
            st = row.stats[name]
            parts.append(f"{name} " + ("n/a" if st is None else f"{st[0]:.4g}±{st[1]:.2g}"))
        print("  ".join(parts))


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, action="append", dest="seeds", help="master seed (repeatable)")
    common.add_argument("--rounds", type=int, help="total rounds including warm-up")
    common.add_argument("--malicious-pct", type=float, help="percentage of malicious nodes, 0-100")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--baseline", action="store_true", default=None, help="disable trust management")
    common.add_argument("--trace-decisions", action="store_true", default=None, help="write decisions.csv")
    common.add_argument("--jobs", type=int, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="iwsn-trust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run one simulation per seed")
    sweep = sub.add_parser("sweep", parents=[common], help="run a malicious-percentage x seed grid")
    sweep.add_argument("--percentages", type=str, help="comma-separated malicious percentages")
    sub.add_parser("train", parents=[common], help="warm-up only; write model checkpoints")
    report = sub.add_parser("report", parents=[common], help="aggregate existing metrics.csv files")
    report.add_argument("--runs", type=Path, help="directory searched for metrics.csv (default: --out)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {
            "rounds": args.rounds,
            "malicious_pct": args.malicious_pct,
            "trace_decisions": args.trace_decisions,
            "out": args.out,
            "seeds": tuple(args.seeds) if args.seeds else None,
            "baseline": args.baseline,
            "jobs": args.jobs,
        }
        if getattr(args, "percentages", None):
            overrides["percentages"] = _coerce("percentages", args.percentages, DEFAULT_SWEEP)
        exp = parse_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(exp)
        if args.command == "sweep":
            return cmd_sweep(exp)
        if args.command == "train":
            return cmd_train(exp)
        return cmd_report(exp, args.runs)
    except (TrustSimError, OSError) as exc:
        where = f" ({exc.filename})" if isinstance(exc, OSError) and exc.filename else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
