from .config import (
    ALL_METHODS,
    CL_METHODS,
    DEFAULT_SWEEPS,
    SWEEP_FIELD,
    ConfigError,
    ExperimentConfig,
    ModelSettings,
    TrainSettings,
    load_config,
    validate,
)
from .report import ReportError, build_matrices, format_csv, format_text, load_records, mark_column
from .runner import (
    SCHEMA_VERSION,
    GridResult,
    cell_hash,
    group_reports,
    load_episodes,
    run_grid,
    run_sweeps,
    tables_from_json,
    tables_to_json,
    train_method,
    write_result_csvs,
)

__all__ = [
    "ALL_METHODS", "CL_METHODS", "DEFAULT_SWEEPS", "SCHEMA_VERSION", "SWEEP_FIELD", "ConfigError",
    "ExperimentConfig", "GridResult", "ModelSettings", "ReportError", "TrainSettings", "build_matrices",
    "cell_hash", "format_csv", "format_text", "group_reports", "load_config", "load_episodes", "load_records",
    "mark_column", "run_grid", "run_sweeps", "tables_from_json", "tables_to_json", "train_method", "validate",
    "write_result_csvs",
]
