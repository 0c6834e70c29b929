"""Flat parameter vectors and their on-disk format.

A ``ParamVector`` is the unit exchanged between federated participants: a
flat float32 array plus a manifest describing how it splits into layers.
On disk it is a raw little-endian f32 blob with a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidParameterError

SCHEMA_VERSION = 1


@dataclass
class ParamVector:
    values: np.ndarray
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            raise InvalidParameterError("ParamVector must be one-dimensional")
        expected = self.manifest.get("size")
        if expected is not None and expected != self.values.size:
            raise InvalidParameterError(
                f"manifest declares {expected} parameters, got {self.values.size}")

    def __len__(self) -> int:
        return self.values.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), dict(self.manifest))


def save_params(path, pv: ParamVector, **extra) -> None:
    """Write ``<path>`` (f32 LE) and ``<path>.json`` (manifest)."""
    path = Path(path)
    path.write_bytes(np.asarray(pv.values, dtype="<f4").tobytes())
    sidecar = {"schema_version": SCHEMA_VERSION, **pv.manifest, **extra}
    sidecar["size"] = int(pv.values.size)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2))


def load_params(path) -> ParamVector:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise InvalidParameterError(f"unsupported schema_version {meta.get('schema_version')}")
    values = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float32)
    meta.pop("schema_version")
    return ParamVector(values, meta)
