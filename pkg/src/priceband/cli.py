"""Operator CLI: calibrate, train, predict, evaluate, report.

Grammar::

    priceband <calibrate|train|predict|evaluate|report> --config <path>
              [--seed N] [--date YYYY-MM-DD] [--from D --to D] [--out DIR]
              [--resume]

Configuration lives in one JSON file; command-line flags win over config
values. Every command is deterministic given the master seed: rerunning with
identical inputs produces byte-identical artifacts. ``PRICEBAND_LOG`` sets
the log level (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import date as date_type
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import ctsgan, data_ingest, metrics
from .errors import EmptyDataset, MissingArtifact, PricebandError
from .intervals import DensityGrid, PredictionInterval, ScenarioSet, predict_pipeline
from .seeding import derive_seed
from .weather_volatility import (
    FACTOR_WINDOWS,
    FACTORS,
    SPIKE_THRESHOLD_AUD,
    VolatilityThresholds,
    calibrate_thresholds,
    spike_histogram,
    window_variance,
)

log = logging.getLogger("priceband")

# Southern-hemisphere seasons; the spike-prone summers span December-February.
_SEASONS = {
    12: "summer", 1: "summer", 2: "summer",
    3: "autumn", 4: "autumn", 5: "autumn",
    6: "winter", 7: "winter", 8: "winter",
    9: "spring", 10: "spring", 11: "spring",
}

_CHANNEL_FOR_FACTOR = {
    "temperature": "temperature",
    "irradiance": "irradiance",
    "wind": "wind_speed",
}


@dataclass
class RunConfig:
    """Everything a command needs; see README for the config file schema."""

    dataset: Path
    out_dir: Path
    checkpoint: Path
    thresholds: Path
    seed: int = 0
    batch_size: int = 7
    iterations_per_phase: int = 10000
    learning_rate: float = 0.02
    clip_limit: float = 0.5
    supervised_weight: float = 10.0
    holdout_fraction: float = 0.1
    hidden_dim: int = 100
    latent_dim: int = 100
    dispersion_gain: float = 8.0
    scenarios: int = 500
    nominal: float = 0.9
    bins: int = 50
    variance_override: dict | None = None
    delta_target: float = 0.9
    xi_target: float = 0.25
    runs: int = 10

    def training_config(self) -> ctsgan.TrainingConfig:
        return ctsgan.TrainingConfig(
            batch_size=self.batch_size,
            iterations_per_phase=self.iterations_per_phase,
            learning_rate=self.learning_rate,
            clip_limit=self.clip_limit,
            seed=self.seed,
            supervised_weight=self.supervised_weight,
            holdout_fraction=self.holdout_fraction,
        )


def load_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MissingArtifact(f"config file {path} ({exc})") from exc

    paths = raw.get("paths", {})
    training = raw.get("training", {})
    prediction = raw.get("prediction", {})
    metric_cfg = raw.get("metrics", {})

    out_dir = Path(out if out is not None else paths.get("out_dir", "."))
    cfg = RunConfig(
        dataset=Path(paths.get("dataset", "dataset.csv")),
        out_dir=out_dir,
        checkpoint=Path(paths.get("checkpoint", out_dir / "model.json")),
        thresholds=Path(paths.get("thresholds", out_dir / "thresholds.json")),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        batch_size=int(training.get("batch_size", 7)),
        iterations_per_phase=int(training.get("iterations_per_phase", 10000)),
        learning_rate=float(training.get("learning_rate", 0.02)),
        clip_limit=float(training.get("clip_limit", 0.5)),
        supervised_weight=float(training.get("supervised_weight", 10.0)),
        holdout_fraction=float(training.get("holdout_fraction", 0.1)),
        hidden_dim=int(training.get("hidden_dim", 100)),
        latent_dim=int(training.get("latent_dim", 100)),
        dispersion_gain=float(training.get("dispersion_gain", 8.0)),
        scenarios=int(prediction.get("scenarios", 500)),
        nominal=float(prediction.get("nominal", 0.9)),
        bins=int(prediction.get("bins", 50)),
        variance_override=prediction.get("variance_override"),
        delta_target=float(metric_cfg.get("delta_target", 0.9)),
        xi_target=float(metric_cfg.get("xi_target", 0.25)),
        runs=int(metric_cfg.get("runs", 10)),
    )
    return cfg


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _factor_variances(dataset: data_ingest.Dataset, rec) -> dict[str, float]:
    return {
        factor: window_variance(
            dataset.normalized_channel(rec, _CHANNEL_FOR_FACTOR[factor]),
            FACTOR_WINDOWS[factor],
        )
        for factor in FACTORS
    }


def cmd_calibrate(cfg: RunConfig) -> None:
    dataset = data_ingest.load_dataset(cfg.dataset)
    samples = {factor: [] for factor in FACTORS}
    for rec in dataset.day_records:
        for factor, value in _factor_variances(dataset, rec).items():
            samples[factor].append(value)
    thresholds = calibrate_thresholds({f: np.asarray(v) for f, v in samples.items()})
    _atomic_write(cfg.thresholds, thresholds.to_json())

    report = {
        factor: {
            "samples": len(samples[factor]),
            "low_cut": thresholds.cuts[factor].low_cut,
            "med_cut": thresholds.cuts[factor].med_cut,
            "high_cut": thresholds.cuts[factor].high_cut,
        }
        for factor in FACTORS
    }
    _atomic_write(cfg.out_dir / "calibration_report.json", json.dumps(report, sort_keys=True))
    print(f"calibrated thresholds on {dataset.n_days} days -> {cfg.thresholds}")


def _phase_span(model: ctsgan.CTSGANModel, phase: int) -> tuple[float, float, int]:
    losses = [r["loss"] for r in model.training_log if r["phase"] == phase]
    return (losses[0], losses[-1], len(losses)) if losses else (float("nan"), float("nan"), 0)


def cmd_train(cfg: RunConfig, resume: bool = False) -> None:
    dataset = data_ingest.load_dataset(cfg.dataset)
    if not dataset.days:
        raise EmptyDataset("dataset has no condition/target day pairs")
    days = dataset.days

    if resume and cfg.checkpoint.exists():
        model = ctsgan.load_model(cfg.checkpoint)
        log.info("resuming from %s with flags %s", cfg.checkpoint, model.training_flags)
    else:
        model = ctsgan.build_model(
            condition_dim=days[0][0].dim,
            hidden_dim=cfg.hidden_dim,
            latent_dim=cfg.latent_dim,
            seed=cfg.seed,
            latent_dispersion_gain=cfg.dispersion_gain,
        )

    tc = cfg.training_config()
    phases = (
        ("phase1", 1, ctsgan.train_phase1_autoencoder),
        ("phase2", 2, ctsgan.train_phase2_supervised),
        ("phase3", 3, ctsgan.train_phase3_joint),
    )
    for flag, number, trainer in phases:
        if model.training_flags.get(flag):
            print(f"phase {number} already trained, skipping")
            continue
        trainer(model, days, tc)
        first, last, n = _phase_span(model, number)
        print(f"phase {number} complete: loss {first:.6f} -> {last:.6f} over {n} iterations")
        ctsgan.save_model(model, cfg.checkpoint)

    log_path = cfg.out_dir / "training_log.jsonl"
    lines = [
        json.dumps({"phase": r["phase"], "iteration": r["iteration"], "loss": r["loss"]})
        for r in model.training_log
    ]
    _atomic_write(log_path, "\n".join(lines) + "\n")
    if model.adversarial_report:
        print(
            "critic check: real {d_score_real:.4f} generated {d_score_fake:.4f} "
            "accuracy {real_vs_fake_accuracy:.3f}".format(**model.adversarial_report)
        )
    print(f"checkpoint -> {cfg.checkpoint}")


def _pair_for_date(dataset: data_ingest.Dataset, day: date_type):
    """Condition/actuals/records for one predicted day (needs the previous day)."""
    rec = dataset.record_for(day)
    prev = dataset.record_for(day - timedelta(days=1))
    condition = data_ingest.build_conditions(prev, rec, dataset.norm)
    actuals = data_ingest.normalize(rec.channel("price"), dataset.norm["price"])
    return condition, actuals, rec


def cmd_predict(cfg: RunConfig, day: date_type) -> None:
    dataset = data_ingest.load_dataset(cfg.dataset)
    model = ctsgan.load_model(cfg.checkpoint)
    thresholds = VolatilityThresholds.from_json(cfg.thresholds.read_text(encoding="utf-8"))
    condition, _, rec = _pair_for_date(dataset, day)

    if cfg.variance_override is not None:
        variances = {f: float(cfg.variance_override[f]) for f in FACTORS}
        log.info("using variance override %s", variances)
    else:
        variances = _factor_variances(dataset, rec)

    interval, density, scenario_set = predict_pipeline(
        model,
        condition,
        variances,
        thresholds,
        cfg.scenarios,
        cfg.nominal,
        bins=cfg.bins,
        seed=derive_seed(cfg.seed, f"predict-{day.isoformat()}"),
    )
    sigma = scenario_set.noise_sigma
    print(f"sigma={sigma:.3f} reinforced={'true' if sigma > 1 else 'false'}")

    tag = day.isoformat()
    _write_interval_csv(cfg.out_dir / f"interval_{tag}.csv", interval, dataset.norm["price"])
    _atomic_write(cfg.out_dir / f"density_{tag}.json", density.to_json())
    _write_scenarios_csv(cfg.out_dir / f"scenarios_{tag}.csv", scenario_set)
    print(f"artifacts -> {cfg.out_dir}/interval_{tag}.csv, density_{tag}.json, scenarios_{tag}.csv")


def _write_interval_csv(path: Path, interval: PredictionInterval, price_norm) -> None:
    lower_aud = data_ingest.denormalize(interval.lower, price_norm)
    upper_aud = data_ingest.denormalize(interval.upper, price_norm)
    rows = ["timestep,lower,upper,lower_denorm_aud,upper_denorm_aud"]
    for t in range(interval.lower.size):
        rows.append(
            f"{t},{interval.lower[t]!r},{interval.upper[t]!r},"
            f"{lower_aud[t]!r},{upper_aud[t]!r}"
        )
    _atomic_write(path, "\n".join(rows) + "\n")


def _write_scenarios_csv(path: Path, scenario_set: ScenarioSet) -> None:
    header = "provenance," + ",".join(f"t{k:02d}" for k in range(scenario_set.horizon))
    rows = [header]
    for tag, path_values in zip(scenario_set.provenance, scenario_set.scenarios):
        rows.append(tag + "," + ",".join(repr(v) for v in path_values))
    _atomic_write(path, "\n".join(rows) + "\n")


def _date_range(start: date_type, end: date_type):
    day = start
    while day <= end:
        yield day
        day += timedelta(days=1)


def cmd_evaluate(cfg: RunConfig, start: date_type, end: date_type) -> None:
    dataset = data_ingest.load_dataset(cfg.dataset)
    model = ctsgan.load_model(cfg.checkpoint)
    thresholds = VolatilityThresholds.from_json(cfg.thresholds.read_text(encoding="utf-8"))

    eval_days = []
    for day in _date_range(start, end):
        try:
            condition, actuals, rec = _pair_for_date(dataset, day)
        except EmptyDataset as exc:
            raise EmptyDataset(f"missing actuals for {day.isoformat()}: {exc}") from exc
        eval_days.append(
            metrics.EvalDay(
                condition=condition,
                actuals=actuals,
                variances=_factor_variances(dataset, rec),
                day_label=day.isoformat(),
            )
        )
    if not eval_days:
        raise EmptyDataset(f"no days between {start} and {end}")

    report = metrics.repeated_sampling_harness(
        model,
        eval_days,
        thresholds,
        runs=cfg.runs,
        count=cfg.scenarios,
        nominal=cfg.nominal,
        delta_target=cfg.delta_target,
        xi_target=cfg.xi_target,
        master_seed=derive_seed(cfg.seed, "evaluate"),
        bins=cfg.bins,
    )
    _atomic_write(cfg.out_dir / "metrics_report.json", report.to_json())
    _print_evaluation_table(report, eval_days)
    print(f"report -> {cfg.out_dir}/metrics_report.json")


def _print_evaluation_table(report: metrics.RepeatedSamplingReport, eval_days) -> None:
    by_season: dict[str, list[int]] = {}
    for idx, day in enumerate(eval_days):
        season = _SEASONS[date_type.fromisoformat(day.day_label).month]
        by_season.setdefault(season, []).append(idx)

    print(f"{'group':<10} {'days':>4} {'ecpas':>8} {'eawapi':>8}")
    if len(by_season) > 1:
        for season, indices in sorted(by_season.items()):
            cov = np.mean(
                [run[i]["ecpas"] for run in report.day_breakdown for i in indices]
            )
            wid = np.mean(
                [run[i]["eawapi"] for run in report.day_breakdown for i in indices]
            )
            print(f"{season:<10} {len(indices):>4} {cov:>8.4f} {wid:>8.4f}")
    print(
        f"{'overall':<10} {len(eval_days):>4} "
        f"{np.mean(report.coverages):>8.4f} {np.mean(report.widths):>8.4f}"
    )
    print(
        f"phi(delta'={report.delta_target}) = {report.phi_coverage:.3f}   "
        f"phi(xi'={report.xi_target}) = {report.phi_width:.3f}"
    )
    print(
        f"achieved at 90% confidence: ecpas >= {report.achieved_delta_90:.4f}, "
        f"eawapi <= {report.achieved_xi_90:.4f}"
    )


def cmd_report(cfg: RunConfig) -> None:
    dataset = data_ingest.load_dataset(cfg.dataset)

    interval_files = sorted(cfg.out_dir.glob("interval_*.csv"))
    density_files = sorted(cfg.out_dir.glob("density_*.json"))
    metrics_file = cfg.out_dir / "metrics_report.json"
    if not interval_files or not density_files:
        raise MissingArtifact("prediction outputs (run `priceband predict` first)")
    if not metrics_file.exists():
        raise MissingArtifact("metrics_report.json (run `priceband evaluate` first)")

    # spike histogram over the whole dataset, one row per half-hour slot
    counts = np.zeros(data_ingest.HALF_HOURS_PER_DAY, dtype=np.int64)
    for rec in dataset.day_records:
        counts += spike_histogram(rec.price_series(), SPIKE_THRESHOLD_AUD)
    hist_rows = ["half_hour_index,count"] + [f"{k},{int(c)}" for k, c in enumerate(counts)]
    _atomic_write(cfg.out_dir / "spike_histogram.csv", "\n".join(hist_rows) + "\n")

    latest = interval_files[-1]
    day = date_type.fromisoformat(latest.stem.removeprefix("interval_"))
    _, actuals, _ = _pair_for_date(dataset, day)
    overlay_rows = ["timestep,actual,lower,upper"]
    with open(latest, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            t = int(row["timestep"])
            overlay_rows.append(f"{t},{actuals[t]!r},{row['lower']},{row['upper']}")
    _atomic_write(cfg.out_dir / "interval_overlay.csv", "\n".join(overlay_rows) + "\n")

    density_latest = density_files[-1]
    _atomic_write(
        cfg.out_dir / "density_heatmap.json", density_latest.read_text(encoding="utf-8")
    )

    manifest = {
        "source_date": day.isoformat(),
        "files": [
            "spike_histogram.csv",
            "density_heatmap.json",
            "interval_overlay.csv",
            "report_manifest.json",
        ],
        "metrics_report": metrics_file.name,
    }
    _atomic_write(cfg.out_dir / "report_manifest.json", json.dumps(manifest, sort_keys=True))
    print(f"plot-data bundle -> {cfg.out_dir} ({len(manifest['files'])} files)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priceband",
        description="Scenario-generation prediction intervals for half-hourly electricity prices",
    )
    parser.add_argument("command", choices=["calibrate", "train", "predict", "evaluate", "report"])
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--date", default=None, help="prediction date YYYY-MM-DD")
    parser.add_argument("--from", dest="date_from", default=None, help="evaluation start date")
    parser.add_argument("--to", dest="date_to", default=None, help="evaluation end date")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--resume", action="store_true", help="train: continue from checkpoint")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("PRICEBAND_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "calibrate":
            cmd_calibrate(cfg)
        elif args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "predict":
            if not args.date:
                raise MissingArtifact("--date is required for predict")
            cmd_predict(cfg, date_type.fromisoformat(args.date))
        elif args.command == "evaluate":
            if not (args.date_from and args.date_to):
                raise MissingArtifact("--from and --to are required for evaluate")
            cmd_evaluate(
                cfg,
                date_type.fromisoformat(args.date_from),
                date_type.fromisoformat(args.date_to),
            )
        else:
            cmd_report(cfg)
    except PricebandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
