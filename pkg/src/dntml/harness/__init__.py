from .config import (PIPELINES, ExperimentConfig, build_pipeline_config, canonical,
                     canonical_json, config_hash, dump_yaml, load_config, parse_config,
                     with_override)
from .runner import (METRICS_HEADER, OUTPUT_ENV, RunSummary, frl_metrics, parse_axis,
                     read_metrics, replay, run, sweep, sweep_cells)

__all__ = [
    "PIPELINES", "ExperimentConfig", "build_pipeline_config", "canonical", "canonical_json",
    "config_hash", "dump_yaml", "load_config", "parse_config", "with_override",
    "METRICS_HEADER", "OUTPUT_ENV", "RunSummary", "frl_metrics", "parse_axis", "read_metrics",
    "replay", "run", "sweep", "sweep_cells",
]
