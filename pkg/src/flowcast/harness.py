"""Experiment protocol: cross-validation, prefix generation, training, metrics.

A run takes an event log and a list of feature modes, evaluates each mode
under k-fold cross-validation (train/validation split, capped prefix
sampling, iterative training with best-snapshot selection, then testing on
the held-out fold), and reports success rate, input vector size, and wall
timings per fold plus mean/stdev summaries.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Callable, Iterator, Sequence

import numpy as np

from .clustering import ClusterModel, fit
from .encoding import FINISHED, Encoder, FeatureMode
from .eventlog import (
    AttributeSchema,
    Case,
    EventLog,
    build_schema,
    filter_long_cases,
    log_from_cases,
    parse_log,
    select_attributes,
)
from .neuralnet import (
    AdamState,
    Batch,
    GruNetwork,
    adam_step,
    clip_gradients,
    loss_and_gradients,
    predict_batch,
)

logger = logging.getLogger(__name__)

MIN_PREFIX_LENGTH = 4

RESULT_COLUMNS = (
    "dataset", "features", "fold", "success_rate",
    "input_vector_size", "cl", "training_time_s", "prediction_time_s",
)


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class ExperimentError(RuntimeError):
    """A fold could not be evaluated (empty data, numeric fault, ...)."""


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; JSON config keys mirror these fields."""

    dataset: str
    format: str = "csv"
    features: list[str] = field(default_factory=lambda: ["None"])
    max_clusters: list[int] = field(default_factory=lambda: [20, 40, 80])
    folds: int = 3
    train_fraction: float = 0.75
    iterations: int = 100
    total_epochs: int = 10
    batch_size: int = 256
    hidden_dim: int = 256
    learning_rate: float = 0.01
    max_case_len: int = 100
    max_train_prefixes: int = 75000
    max_validation_prefixes: int = 25000
    validation_sample: int = 10000
    max_test_traces: int = 100000
    seed: int = 1

    def validate(self) -> None:
        if not self.dataset:
            raise ConfigError("dataset must be a non-empty path")
        if self.format not in ("csv", "xes"):
            raise ConfigError(f"format must be 'csv' or 'xes', not {self.format!r}")
        if not self.features:
            raise ConfigError("features must name at least one mode")
        if not self.max_clusters or any(n < 1 for n in self.max_clusters):
            raise ConfigError("max_clusters entries must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        for name in ("iterations", "total_epochs", "batch_size", "hidden_dim",
                     "max_case_len", "max_train_prefixes",
                     "max_validation_prefixes", "validation_sample",
                     "max_test_traces"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be > 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        for label in self.features:
            if label.strip().lower() not in ("clust", "both"):
                try:
                    FeatureMode.parse(label)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "dataset" not in data:
            raise ConfigError("configuration must set 'dataset'")
        config = cls(**data)
        config.validate()
        return config


def expand_feature_modes(config: ExperimentConfig) -> list[FeatureMode]:
    """Resolve the configured mode labels into concrete feature modes.

    Bare ``Clust``/``Both`` entries expand into one mode per configured
    maximum cluster count, mirroring how the experiments sweep cluster caps;
    explicit labels such as ``Clust20`` are taken as-is.
    """
    modes: list[FeatureMode] = []
    for label in config.features:
        bare = label.strip().lower()
        if bare in ("clust", "both"):
            modes.extend(FeatureMode(bare, n) for n in config.max_clusters)
        else:
            modes.append(FeatureMode.parse(label))
    unique: list[FeatureMode] = []
    for mode in modes:
        if mode not in unique:
            unique.append(mode)
    return unique


def derived_rng(seed: int, *tags: int | str) -> np.random.Generator:
    """Deterministic per-purpose generator derived from the root seed."""
    parts = [seed]
    for tag in tags:
        parts.append(tag if isinstance(tag, int) else zlib.crc32(str(tag).encode("utf-8")))
    return np.random.default_rng(parts)


def derived_seed(seed: int, *tags: int | str) -> int:
    parts = [seed]
    for tag in tags:
        parts.append(tag if isinstance(tag, int) else zlib.crc32(str(tag).encode("utf-8")))
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


@dataclass(frozen=True)
class Prefix:
    """A virtual case: the first ``len(events)`` events of a case plus its target."""

    case_id: str
    events: tuple
    target: str


@dataclass
class ResultRow:
    dataset: str
    features: str
    fold: int
    success_rate: float
    input_vector_size: int
    cluster_label_count: int
    training_time: float
    prediction_time: float
    iteration_log: tuple[float, ...] = ()
    error: str | None = None


def make_folds(
    log: EventLog, k: int, seed: int,
) -> list[tuple[list[Case], list[Case]]]:
    """Randomly partition cases into k near-equal folds; fold i tests subset i."""
    cases = list(log.cases)
    if len(cases) < k:
        raise ExperimentError(f"need at least {k} cases for {k}-fold cross-validation")
    order = derived_rng(seed).permutation(len(cases))
    base, extra = divmod(len(cases), k)
    subsets = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        subsets.append(sorted(order[start:start + size]))
        start += size
    folds = []
    for i in range(k):
        test = [cases[j] for j in subsets[i]]
        train = [cases[j] for s in range(k) if s != i for j in subsets[s]]
        folds.append((train, test))
    return folds


def split_train_validation(
    cases: Sequence[Case], fraction: float, seed: int,
) -> tuple[list[Case], list[Case]]:
    """Case-level random split; the validation share rounds down."""
    order = derived_rng(seed).permutation(len(cases))
    n_validation = int(len(cases) * (1.0 - fraction))
    validation_idx = set(int(i) for i in order[:n_validation])
    training = [c for i, c in enumerate(cases) if i not in validation_idx]
    validation = [c for i, c in enumerate(cases) if i in validation_idx]
    return training, validation


def generate_prefixes(cases: Sequence[Case]) -> list[Prefix]:
    """Split cases into prefix examples.

    Cases shorter than four events are ignored.  A case of length L yields
    prefixes of lengths 4..L; the target of a proper prefix is the next
    activity, and the full-length prefix targets the finished class.
    """
    prefixes = []
    for case in cases:
        length = len(case.events)
        if length < MIN_PREFIX_LENGTH:
            continue
        for p in range(MIN_PREFIX_LENGTH, length + 1):
            target = case.events[p].activity if p < length else FINISHED
            prefixes.append(Prefix(case.id, case.events[:p], target))
    return prefixes


def sample_prefixes(
    prefixes: Sequence[Prefix], cap: int, rng: np.random.Generator,
) -> list[Prefix]:
    """Uniform sample without replacement when the data exceeds the cap."""
    if len(prefixes) <= cap:
        return list(prefixes)
    chosen = rng.choice(len(prefixes), size=cap, replace=False)
    chosen.sort()
    return [prefixes[int(i)] for i in chosen]


def encode_batch(prefixes: Sequence[Prefix], encoder: Encoder) -> Batch:
    return Batch.from_sequences(
        [encoder.encode_prefix(p.events, p.target) for p in prefixes]
    )


def _chunks(count: int, size: int) -> Iterator[range]:
    for start in range(0, count, size):
        yield range(start, min(start + size, count))


def iteration_quotas(total_examples: int, iterations: int) -> list[int]:
    """Spread the total training examples evenly over the iterations."""
    base, extra = divmod(total_examples, iterations)
    return [base + (1 if i < extra else 0) for i in range(iterations)]


def _accuracy(net: GruNetwork, encoder: Encoder,
              prefixes: Sequence[Prefix], batch_size: int) -> float:
    if not prefixes:
        return 0.0
    correct = 0
    for chunk in _chunks(len(prefixes), batch_size):
        batch = encode_batch([prefixes[i] for i in chunk], encoder)
        correct += int((predict_batch(net, batch) == batch.targets).sum())
    return correct / len(prefixes)


def train_model(
    config: ExperimentConfig,
    training_prefixes: Sequence[Prefix],
    validation_prefixes: Sequence[Prefix],
    encoder: Encoder,
    fold: int,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[GruNetwork, list[float], float]:
    """Iteratively train a GRU, keeping the best-validation snapshot.

    Runs ``config.iterations`` rounds; each round consumes an equal share of
    ``total_epochs`` passes over the training prefixes in shuffled
    mini-batches, then measures accuracy on the validation prefixes
    (subsampled to ``validation_sample`` when larger).  Parameters are
    snapshotted whenever validation accuracy strictly improves.
    """
    start = clock()
    if not training_prefixes:
        raise ExperimentError("no training prefixes (all cases shorter than 4 events?)")
    mode = encoder.mode.label
    net = GruNetwork.initialize(
        encoder.width, config.hidden_dim, encoder.output_classes,
        derived_rng(config.seed, "init", fold, mode),
    )
    optimizer = AdamState.for_params(net.params, config.learning_rate)
    shuffle_rng = derived_rng(config.seed, "shuffle", fold, mode)
    validation_rng = derived_rng(config.seed, "validation", fold, mode)

    n = len(training_prefixes)
    order = shuffle_rng.permutation(n)
    cursor = 0
    best_accuracy = -math.inf
    best_params = net.copy_params()
    accuracy_log: list[float] = []

    for quota in iteration_quotas(config.total_epochs * n, config.iterations):
        picked: list[int] = []
        while quota > 0:
            if cursor == n:
                order = shuffle_rng.permutation(n)
                cursor = 0
            take = min(quota, n - cursor)
            picked.extend(int(i) for i in order[cursor:cursor + take])
            cursor += take
            quota -= take
        for chunk in _chunks(len(picked), config.batch_size):
            batch = encode_batch([training_prefixes[picked[i]] for i in chunk], encoder)
            _, grads = loss_and_gradients(net, batch)
            clip_gradients(grads)
            adam_step(net.params, grads, optimizer)
        validation = sample_prefixes(
            validation_prefixes, config.validation_sample, validation_rng)
        accuracy = _accuracy(net, encoder, validation, config.batch_size)
        accuracy_log.append(accuracy)
        if accuracy > best_accuracy:
            best_accuracy = accuracy
            best_params = net.copy_params()
    net.load_params(best_params)
    return net, accuracy_log, clock() - start


def test_model(
    net: GruNetwork,
    encoder: Encoder,
    test_cases: Sequence[Case],
    config: ExperimentConfig,
    rng: np.random.Generator | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[float, float]:
    """Top-1 success rate over the test prefixes, plus prediction wall time."""
    start = clock()
    prefixes = generate_prefixes(test_cases)
    if not prefixes:
        raise ExperimentError("no test prefixes: every test case is shorter than 4 events")
    if rng is None:
        rng = derived_rng(config.seed, "testsample", encoder.mode.label)
    prefixes = sample_prefixes(prefixes, config.max_test_traces, rng)
    correct = 0
    for chunk in _chunks(len(prefixes), config.batch_size):
        batch = encode_batch([prefixes[i] for i in chunk], encoder)
        correct += int((predict_batch(net, batch) == batch.targets).sum())
    return correct / len(prefixes), clock() - start


@dataclass
class FoldSetup:
    """Everything a fold needs, built strictly from its training cases."""

    schema: AttributeSchema
    clusters: ClusterModel | None
    encoder: Encoder
    training_prefixes: list[Prefix]
    validation_prefixes: list[Prefix]


def prepare_fold(
    config: ExperimentConfig,
    train_cases: Sequence[Case],
    fold: int,
    mode: FeatureMode,
) -> FoldSetup:
    """Split, select attributes, build schema/clusters, and sample prefixes.

    The attribute schema and the clusterings are derived from the training
    portion only; validation cases act like test data, so values appearing
    only there stay out of every vocabulary.
    """
    training, validation = split_train_validation(
        train_cases, config.train_fraction, derived_seed(config.seed, "split", fold))
    if not training:
        raise ExperimentError("training split is empty")
    selected = select_attributes(log_from_cases(training))
    schema = build_schema(training, selected)
    clusters = None
    if mode.uses_clusters:
        clusters = fit(training, schema, mode.max_clusters,
                       derived_seed(config.seed, "clusters", fold))
    encoder = Encoder(schema=schema, mode=mode, clusters=clusters)
    training_prefixes = sample_prefixes(
        generate_prefixes(training), config.max_train_prefixes,
        derived_rng(config.seed, "trainsample", fold, mode.label))
    validation_prefixes = sample_prefixes(
        generate_prefixes(validation), config.max_validation_prefixes,
        derived_rng(config.seed, "valsample", fold, mode.label))
    return FoldSetup(schema, clusters, encoder, training_prefixes, validation_prefixes)


def run_experiment(
    config: ExperimentConfig,
    clock: Callable[[], float] = time.perf_counter,
) -> list[ResultRow]:
    """Evaluate every feature mode on every fold; one result row each.

    Fold failures are recorded as rows with an ``error`` message and NaN
    metrics; remaining folds and modes still run.  Training time includes
    fold preparation (schema, clusterings, prefix sampling).
    """
    config.validate()
    path = Path(config.dataset)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    log = filter_long_cases(parse_log(path, config.format), config.max_case_len)
    folds = make_folds(log, config.folds, derived_seed(config.seed, "folds"))
    dataset_name = path.stem

    rows: list[ResultRow] = []
    for mode in expand_feature_modes(config):
        for i, (train_cases, test_cases) in enumerate(folds):
            try:
                prep_start = clock()
                setup = prepare_fold(config, train_cases, i, mode)
                prep_time = clock() - prep_start
                net, accuracy_log, train_time = train_model(
                    config, setup.training_prefixes, setup.validation_prefixes,
                    setup.encoder, i, clock=clock)
                rate, prediction_time = test_model(
                    net, setup.encoder, test_cases, config,
                    rng=derived_rng(config.seed, "testsample", i, mode.label),
                    clock=clock)
                rows.append(ResultRow(
                    dataset=dataset_name,
                    features=mode.label,
                    fold=i,
                    success_rate=rate,
                    input_vector_size=setup.encoder.width,
                    cluster_label_count=setup.clusters.label_count if setup.clusters else 0,
                    training_time=prep_time + train_time,
                    prediction_time=prediction_time,
                    iteration_log=tuple(accuracy_log),
                ))
            except Exception as exc:
                logger.warning("fold %d failed for mode %s: %s", i, mode.label, exc)
                rows.append(ResultRow(
                    dataset=dataset_name, features=mode.label, fold=i,
                    success_rate=float("nan"), input_vector_size=0,
                    cluster_label_count=0, training_time=float("nan"),
                    prediction_time=float("nan"),
                    error=f"{type(exc).__name__}: {exc}",
                ))
    return rows


def _sample_stdev(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def write_results(rows: Sequence[ResultRow], sink: IO[str]) -> None:
    """Write the result CSV: one row per fold x mode plus per-mode summaries."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([
            row.dataset, row.features, row.fold, f"{row.success_rate:.6f}",
            row.input_vector_size, row.cluster_label_count,
            f"{row.training_time:.6f}", f"{row.prediction_time:.6f}",
        ])
    mode_order: list[str] = []
    for row in rows:
        if row.features not in mode_order:
            mode_order.append(row.features)
    for mode in mode_order:
        good = [r for r in rows if r.features == mode and r.error is None]
        dataset = next(r.dataset for r in rows if r.features == mode)
        for label, agg in (("mean", lambda v: sum(v) / len(v)), ("stdev", _sample_stdev)):
            if good:
                summary = [
                    agg([r.success_rate for r in good]),
                    agg([float(r.input_vector_size) for r in good]),
                    agg([float(r.cluster_label_count) for r in good]),
                    agg([r.training_time for r in good]),
                    agg([r.prediction_time for r in good]),
                ]
            else:
                summary = [float("nan")] * 5
            writer.writerow([dataset, mode, label] + [f"{v:.6f}" for v in summary])


def write_iteration_log(rows: Sequence[ResultRow], sink: IO[str]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["fold", "mode", "iteration", "validation_accuracy"])
    for row in rows:
        for i, accuracy in enumerate(row.iteration_log, start=1):
            writer.writerow([row.fold, row.features, i, f"{accuracy:.6f}"])


# --- one-tailed pooled-variance t-test ------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularised incomplete beta function."""
    max_iterations = 300
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-14:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        a * math.log(x) + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * _betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t > 0 else 1.0 - tail


def ttest_one_tailed(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    """Two-sample pooled-variance t statistic and one-tailed p value.

    Tests whether sample_a's mean exceeds sample_b's: p = P(T > t) under the
    null of equal means, assuming equal variances.  Degenerate zero-variance
    inputs yield p = 0.5 on equal means, else 0 or 1 by the sign of the
    difference.
    """
    n_a, n_b = len(sample_a), len(sample_b)
    if n_a < 2 or n_b < 2:
        raise ValueError("each sample needs at least 2 observations")
    mean_a = sum(sample_a) / n_a
    mean_b = sum(sample_b) / n_b
    ss_a = sum((v - mean_a) ** 2 for v in sample_a)
    ss_b = sum((v - mean_b) ** 2 for v in sample_b)
    df = n_a + n_b - 2
    pooled = (ss_a + ss_b) / df
    scale = math.sqrt(pooled * (1.0 / n_a + 1.0 / n_b))
    if scale == 0.0:
        if mean_a == mean_b:
            return 0.0, 0.5
        return (math.inf, 0.0) if mean_a > mean_b else (-math.inf, 1.0)
    t = (mean_a - mean_b) / scale
    return t, student_t_sf(t, df)
