"""Experiment configs: YAML in, strict validation, canonical JSON for hashing.

A config file looks like::

    pipeline: caching
    seed: 3
    ablation: full          # caching only, optional
    params:
      net: {catalog_size: 200}
      dqn: {lr: 0.0005}

``params`` is a partial tree over the pipeline's config dataclass; anything
left out keeps its default.  Unknown keys anywhere in the tree are rejected
with the dotted path of the offender.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, TypeAdapter, ValidationError

from ..caching import ABLATIONS, CachingConfig
from ..errors import ConfigError
from ..fedtwin.pipeline import FedTwinConfig
from ..securefrl import FRLConfig

PIPELINES = {"caching": CachingConfig, "fedtwin": FedTwinConfig, "frl": FRLConfig}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pipeline: Literal["caching", "fedtwin", "frl"]
    seed: int
    ablation: Literal["baseline", "dnt", "interventions", "full"] | None = None
    params: dict = {}
    output_dir: str | None = None


def _check_keys(cls, tree, path: str) -> None:
    if not isinstance(tree, dict):
        raise ConfigError("expected a mapping", path)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key, value in tree.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in names:
            raise ConfigError("unknown key", where)
        sub = hints[key]
        if dataclasses.is_dataclass(sub) and isinstance(value, dict):
            _check_keys(sub, value, where)


def _error_path(err: ValidationError, prefix: str) -> tuple[str, str]:
    first = err.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    path = ".".join(x for x in (prefix, loc) if x)
    return path, first["msg"]


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw config tree; raises ConfigError carrying the key path."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        exp = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(*reversed(_error_path(e, "")))
    if exp.ablation is not None and exp.pipeline != "caching":
        raise ConfigError("ablation applies to the caching pipeline only", "ablation")
    if "seed" in exp.params:
        raise ConfigError("set the seed at top level", "params.seed")
    build_pipeline_config(exp)      # full type check up front
    return exp


def build_pipeline_config(exp: ExperimentConfig):
    cls = PIPELINES[exp.pipeline]
    _check_keys(cls, exp.params, "params")
    tree = dict(exp.params)
    if exp.ablation is not None:
        preset = {k: dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
                  for k, v in ABLATIONS[exp.ablation].items()}
        tree = _merge(preset, tree)
    tree["seed"] = exp.seed
    try:
        return TypeAdapter(cls).validate_python(tree)
    except ValidationError as e:
        path, msg = _error_path(e, "params")
        raise ConfigError(msg, path)
    except ValueError as e:
        raise ConfigError(str(e), "params")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigError(f"not valid YAML: {e}")
    except OSError as e:
        raise ConfigError(str(e))
    return parse_config(data)


def _plain(x):
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


def canonical(exp: ExperimentConfig) -> dict:
    """Fully expanded config tree (defaults filled in), without the output location."""
    cfg = build_pipeline_config(exp)
    params = _plain(dataclasses.asdict(cfg))
    params.pop("seed")
    return {"pipeline": exp.pipeline, "seed": exp.seed, "params": params}


def canonical_json(exp: ExperimentConfig) -> str:
    return json.dumps(canonical(exp), sort_keys=True, separators=(",", ":"))


def config_hash(exp: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(exp).encode()).hexdigest()


def with_override(exp: ExperimentConfig, key: str, value) -> ExperimentConfig:
    """Set a dotted key; top-level names (seed, ablation) or paths inside params."""
    data = exp.model_dump()
    if key in ("seed", "ablation", "pipeline"):
        data[key] = value
    else:
        parts = key.removeprefix("params.").split(".")
        node = data["params"] = _merge({}, data["params"])
        for p in parts[:-1]:
            nxt = node.get(p)
            node[p] = dict(nxt) if isinstance(nxt, dict) else {}
            node = node[p]
        node[parts[-1]] = value
    return parse_config(data)


def dump_yaml(exp: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(canonical(exp), sort_keys=True))
