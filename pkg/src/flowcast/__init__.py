"""Next-activity prediction for event logs.

Event attributes are folded into fixed-size GRU input vectors either as raw
one-hot values, as per-activity cluster labels, or both; the harness
reproduces the 3-fold cross-validation protocol comparing those feature
modes.
"""

from .encoding import FINISHED, Encoder, FeatureMode
from .eventlog import (
    AttributeSchema,
    Case,
    Event,
    EventLog,
    build_schema,
    filter_long_cases,
    parse_log,
    select_attributes,
    write_csv,
)
from .harness import ExperimentConfig, ResultRow, run_experiment, write_results

__all__ = [
    "FINISHED",
    "Encoder",
    "FeatureMode",
    "AttributeSchema",
    "Case",
    "Event",
    "EventLog",
    "build_schema",
    "filter_long_cases",
    "parse_log",
    "select_attributes",
    "write_csv",
    "ExperimentConfig",
    "ResultRow",
    "run_experiment",
    "write_results",
]

__version__ = "0.1.0"
