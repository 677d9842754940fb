"""Command-line interface: run experiments, train a model, predict with it.

Exit codes: 0 success, 2 invalid configuration (bad JSON, unknown keys,
out-of-range values), 3 missing dataset or model file, 1 anything else.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from .bundle import BundleError, ModelBundle, load_bundle, save_bundle
from .eventlog import LogParseError, LogSchemaError, parse_log
from .harness import (
    MIN_PREFIX_LENGTH,
    ConfigError,
    ExperimentConfig,
    expand_feature_modes,
    filter_long_cases,
    prepare_fold,
    run_experiment,
    train_model,
    write_iteration_log,
    write_results,
)
from .neuralnet import Batch, forward

EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3

FINISHED_DISPLAY = "FINISHED"


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(config_path: str, seed: int | None) -> ExperimentConfig:
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read config {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(EXIT_CONFIG, f"invalid JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        _fail(EXIT_CONFIG, f"config {path} must contain a JSON object")
    try:
        config = ExperimentConfig.from_mapping(data)
    except (ConfigError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"invalid configuration: {exc}")
    if seed is not None:
        config.seed = seed
        config.validate()
    if not Path(config.dataset).exists():
        _fail(EXIT_MISSING_INPUT, f"dataset not found: {config.dataset}")
    return config


def _config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _log_format(path: str) -> str:
    return "xes" if Path(path).suffix.lower() == ".xes" else "csv"


@click.group()
def main() -> None:
    """Next-activity prediction with clustered event-attribute features."""


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_path", default="results.csv", show_default=True,
              help="Result CSV path.")
@click.option("--iter-log", "iter_log_path", default=None,
              help="Optional per-iteration validation-accuracy CSV.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def run(config_path: str, out_path: str, iter_log_path: str | None, seed: int | None) -> None:
    """Run the cross-validation experiment described by CONFIG_PATH."""
    config = _load_config(config_path, seed)
    try:
        rows = run_experiment(config)
    except (LogParseError, LogSchemaError) as exc:
        _fail(1, f"cannot parse dataset: {exc}")
    with open(out_path, "w", encoding="utf-8", newline="") as sink:
        write_results(rows, sink)
    if iter_log_path:
        with open(iter_log_path, "w", encoding="utf-8", newline="") as sink:
            write_iteration_log(rows, sink)
    failures = [r for r in rows if r.error is not None]
    for row in failures:
        click.echo(f"fold {row.fold} / {row.features} failed: {row.error}", err=True)
    click.echo(f"wrote {len(rows)} result rows to {out_path}")
    if failures:
        sys.exit(1)


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_path", required=True, help="Model bundle output path.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def train(config_path: str, out_path: str, seed: int | None) -> None:
    """Train one model on the whole dataset and save it as a bundle."""
    config = _load_config(config_path, seed)
    mode = expand_feature_modes(config)[0]
    try:
        log = filter_long_cases(parse_log(config.dataset, config.format), config.max_case_len)
    except (LogParseError, LogSchemaError) as exc:
        _fail(1, f"cannot parse dataset: {exc}")
    try:
        setup = prepare_fold(config, list(log.cases), fold=0, mode=mode)
        net, accuracy_log, train_time = train_model(
            config, setup.training_prefixes, setup.validation_prefixes,
            setup.encoder, fold=0)
    except Exception as exc:
        _fail(1, f"training failed: {exc}")
    bundle = ModelBundle(
        schema=setup.schema,
        mode=mode,
        clusters=setup.clusters,
        network=net,
        metadata={
            "seed": config.seed,
            "config_hash": _config_hash(config),
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "dataset": config.dataset,
            "best_validation_accuracy": max(accuracy_log) if accuracy_log else 0.0,
        },
    )
    save_bundle(bundle, out_path)
    click.echo(
        f"trained {mode.label} model in {train_time:.1f}s "
        f"(best validation accuracy {max(accuracy_log):.4f}); wrote {out_path}"
    )


@main.command()
@click.argument("model_path", type=click.Path())
@click.argument("log_path", type=click.Path())
@click.option("--out", "out_path", default="predictions.csv", show_default=True,
              help="Prediction CSV path.")
def predict(model_path: str, log_path: str, out_path: str) -> None:
    """Predict the next activity for every prefix of every case in LOG_PATH."""
    if not Path(model_path).exists():
        _fail(EXIT_MISSING_INPUT, f"model not found: {model_path}")
    if not Path(log_path).exists():
        _fail(EXIT_MISSING_INPUT, f"log not found: {log_path}")
    try:
        bundle = load_bundle(model_path)
    except BundleError as exc:
        _fail(1, f"cannot load model: {exc}")
    try:
        log = parse_log(log_path, _log_format(log_path))
    except (LogParseError, LogSchemaError) as exc:
        _fail(1, f"cannot parse log: {exc}")

    encoder = bundle.encoder()
    activities = bundle.schema.activities
    pending: list[tuple[str, int, np.ndarray]] = []
    for case in log.cases:
        for length in range(MIN_PREFIX_LENGTH, len(case.events) + 1):
            pending.append((case.id, length, encoder.encode_steps(case.events[:length])))

    with open(out_path, "w", encoding="utf-8", newline="") as sink:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["caseid", "prefix_length", "predicted_activity", "probability"])
        for start in range(0, len(pending), 256):
            chunk = pending[start:start + 256]
            longest = max(steps.shape[0] for _, _, steps in chunk)
            inputs = np.zeros((len(chunk), longest, encoder.width))
            mask = np.zeros((len(chunk), longest))
            for i, (_, length, steps) in enumerate(chunk):
                inputs[i, :steps.shape[0]] = steps
                mask[i, :steps.shape[0]] = 1.0
            batch = Batch(inputs=inputs, mask=mask,
                          targets=np.zeros(len(chunk), dtype=np.intp))
            probs, _ = forward(bundle.network, batch)
            for (case_id, length, _), row in zip(chunk, probs):
                best = int(row.argmax())
                label = activities[best] if best < len(activities) else FINISHED_DISPLAY
                writer.writerow([case_id, length, label, f"{row[best]:.6f}"])
    click.echo(f"wrote {len(pending)} predictions to {out_path}")


if __name__ == "__main__":
    main()
