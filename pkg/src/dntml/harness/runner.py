"""Run one experiment, a sweep over config axes, or a replay of a recorded trace.

Every run writes into its own directory:

* ``metrics.csv``   -- ``metric,value`` scalars (byte-stable for a given config)
* a per-step or per-round series CSV
* ``manifest.json`` -- canonical config and its hash
* ``summary.json``  -- metrics, wall clock, artifact paths, status
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..caching import run_caching
from ..errors import ConfigError
from ..fedtwin.pipeline import run_fedtwin
from ..netmodel import RequestTrace
from ..securefrl import run_frl, write_heatmap
from .config import (ExperimentConfig, build_pipeline_config, canonical, config_hash,
                     load_config, with_override)

OUTPUT_ENV = "DNTML_OUTPUT_ROOT"
METRICS_HEADER = ("metric", "value")
TAIL_FRACTION = 1 / 3       # frl diagnostic: mean over the last third of the rounds


@dataclass
class RunSummary:
    config_hash: str
    pipeline: str
    seed: int
    metrics: dict
    wall_clock: float
    artifacts: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def run_dir(exp: ExperimentConfig, chash: str, suffix: str = "") -> Path:
    if exp.output_dir:
        return Path(exp.output_dir)
    return output_root() / f"{exp.pipeline}-{chash[:12]}{suffix}"


def write_metrics(metrics: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for k in sorted(metrics):
            w.writerow((k, repr(float(metrics[k]))))


def read_metrics(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return {k: float(v) for k, v in rows[1:]}


def frl_metrics(series) -> dict:
    s = np.asarray(series, dtype=float)
    tail = max(1, int(np.ceil(len(s) * TAIL_FRACTION)))
    return {"no_collision_rate": float(s[-1]),
            "tail_no_collision_rate": float(s[-tail:].mean()),
            "min_no_collision_rate": float(s.min())}


def _execute(exp: ExperimentConfig, out: Path, trace: RequestTrace | None = None) -> tuple[dict, dict]:
    cfg = build_pipeline_config(exp)
    arts = {}
    if exp.pipeline == "caching":
        res = run_caching(cfg, trace=trace)
        metrics = dict(res.metrics)
        metrics["final_max_bs_load"] = res.log.max_load[-1]
        metrics["final_min_bs_load"] = res.log.min_load[-1]
        arts["series"] = str(out / "episode.csv")
        res.log.to_csv(arts["series"])
    elif exp.pipeline == "fedtwin":
        rep = run_fedtwin(cfg)
        metrics = {"final_loss": rep.final_loss, "best_loss": float(rep.losses.min()),
                   "clusters": rep.partition.n_clusters, "modularity": rep.partition.modularity,
                   "reclusterings": rep.reclusterings}
        arts["series"] = str(out / "rounds.csv")
        rep.to_csv(arts["series"])
        arts["partition"] = str(out / "partition.json")
        Path(arts["partition"]).write_text(rep.partition.to_json())
    else:
        rep = run_frl(cfg)
        metrics = frl_metrics(rep.series)
        metrics["fallbacks"] = sum(rep.fallbacks)
        arts["series"] = str(out / "rounds.csv")
        rep.to_csv(arts["series"])
    return metrics, arts


def run(exp: ExperimentConfig | str | os.PathLike, trace: RequestTrace | None = None,
        raise_errors: bool = False, suffix: str = "") -> RunSummary:
    """Execute one config.  Runtime failures are recorded in the summary (status 'failed')."""
    if not isinstance(exp, ExperimentConfig):
        exp = load_config(exp)
    chash = config_hash(exp)
    out = run_dir(exp, chash, suffix)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": chash, "config": canonical(exp)}
    if trace is not None:
        manifest["replayed_trace_requests"] = len(trace)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    t0 = time.perf_counter()
    summary = RunSummary(chash, exp.pipeline, exp.seed, {}, 0.0,
                         {"manifest": str(out / "manifest.json")})
    try:
        metrics, arts = _execute(exp, out, trace)
        summary.metrics = {k: float(v) for k, v in metrics.items()}
        summary.artifacts.update(arts)
        summary.artifacts["metrics"] = str(out / "metrics.csv")
        write_metrics(summary.metrics, summary.artifacts["metrics"])
    except Exception as e:
        summary.status = "failed"
        summary.error = f"{type(e).__name__}: {e}"
        (out / "FAILED").write_text(traceback.format_exc())
        if raise_errors:
            raise
    summary.wall_clock = time.perf_counter() - t0
    summary.artifacts["summary"] = str(out / "summary.json")
    Path(summary.artifacts["summary"]).write_text(summary.to_json())
    return summary


def replay(trace_path, exp: ExperimentConfig | str | os.PathLike) -> RunSummary:
    """Run the caching pipeline on a recorded request trace instead of a generated one."""
    if not isinstance(exp, ExperimentConfig):
        exp = load_config(exp)
    if exp.pipeline != "caching":
        raise ConfigError("replay needs a caching config", "pipeline")
    digest = hashlib.sha256(Path(trace_path).read_bytes()).hexdigest()
    return run(exp, trace=RequestTrace.from_csv(trace_path), suffix=f"-replay-{digest[:8]}")


# ------------------------------------------------------------------- sweep

def parse_axis(text: str) -> tuple[str, list]:
    """``key=v1,v2`` -> (key, [v1, v2]); values are read as YAML scalars."""
    import yaml
    key, sep, vals = text.partition("=")
    if not sep or not key:
        raise ValueError(f"axis must look like key=v1,v2: {text!r}")
    return key.strip(), [yaml.safe_load(v) for v in vals.split(",") if v.strip()]


def sweep_cells(base: ExperimentConfig, axes: list, seeds: int = 1) -> list:
    """Cross product of axis values, each repeated for ``seeds`` consecutive seeds.

    Returns (cell_index, cell_values, config) in deterministic order.
    """
    keys = [k for k, _ in axes]
    out = []
    combos = list(itertools.product(*[v for _, v in axes])) if axes else [()]
    for ci, combo in enumerate(combos):
        exp = base
        for k, v in zip(keys, combo):
            exp = with_override(exp, k, v)
        for s in range(seeds):
            e = with_override(exp, "seed", base.seed + s)
            e = e.model_copy(update={"output_dir": None})
            out.append((ci, dict(zip(keys, combo)), e))
    return out


def _run_cell(exp):
    return run(exp)


def sweep(base: ExperimentConfig | str | os.PathLike, axes: list, seeds: int = 1,
          workers: int = 1, out_dir=None) -> list:
    """Run every cell; failures are recorded and the sweep continues.

    Writes ``aggregate.csv`` (mean/min/max per metric per cell across seeds) and,
    for frl sweeps, ``heatmap.csv``.
    """
    if not isinstance(base, ExperimentConfig):
        base = load_config(base)
    cells = sweep_cells(base, axes, seeds)
    exps = [e for _, _, e in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_cell, exps))     # map keeps submission order
    else:
        summaries = [_run_cell(e) for e in exps]
    out = Path(out_dir) if out_dir else output_root() / f"sweep-{config_hash(base)[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate(cells, summaries, [k for k, _ in axes], out / "aggregate.csv")
    if base.pipeline == "frl":
        write_frl_heatmap(cells, summaries, out / "heatmap.csv")
    return summaries


def _group(cells, summaries):
    groups = {}
    for (ci, values, exp), s in zip(cells, summaries):
        groups.setdefault(ci, (values, exp, []))[2].append(s)
    return [groups[k] for k in sorted(groups)]


def write_aggregate(cells, summaries, keys, path) -> None:
    groups = _group(cells, summaries)
    names = sorted({m for s in summaries if s.status == "ok" for m in s.metrics})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*keys, "runs", "failed", *[f"{m}_{s}" for m in names for s in ("mean", "min", "max")]])
        for values, _, runs in groups:
            ok = [r for r in runs if r.status == "ok"]
            row = [values[k] for k in keys] + [len(runs), len(runs) - len(ok)]
            for m in names:
                v = np.array([r.metrics[m] for r in ok if m in r.metrics])
                row += [f"{v.mean():.6f}", f"{v.min():.6f}", f"{v.max():.6f}"] if len(v) else ["", "", ""]
            w.writerow(row)


def write_frl_heatmap(cells, summaries, path, metric: str = "no_collision_rate") -> None:
    rows = []
    for _, exp, runs in _group(cells, summaries):
        ok = [r.metrics[metric] for r in runs if r.status == "ok"]
        if not ok:
            continue
        cfg = build_pipeline_config(exp)
        rows.append((cfg.attack.label, cfg.rule.label, cfg.agents, float(np.mean(ok))))
    write_heatmap(rows, path)
