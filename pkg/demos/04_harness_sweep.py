"""
Config-driven runs and sweeps
=============================

The same thing the ``dntml`` command does, from Python: load a YAML config,
run it, then sweep one axis over two seeds.  Output goes under a temporary
directory.
"""

import os
import tempfile
from pathlib import Path

from dntml.harness import OUTPUT_ENV, config_hash, load_config, run, sweep

root = Path(tempfile.mkdtemp(prefix="dntml-demo-"))
os.environ[OUTPUT_ENV] = str(root)
configs = Path(__file__).resolve().parents[1] / "configs"

# %%
exp = load_config(configs / "frl_smoke.yaml")
print("config hash:", config_hash(exp)[:12])
s = run(exp)
print(s.status, {k: round(v, 3) for k, v in s.metrics.items()})
print("metrics file:", s.artifacts["metrics"])

# %%
# Same config, same bytes.
again = run(exp.model_copy(update={"output_dir": str(root / "again")}))
print("byte-identical:", Path(s.artifacts["metrics"]).read_bytes() == Path(again.artifacts["metrics"]).read_bytes())

# %%
# One axis, two seeds per cell; aggregate.csv and heatmap.csv land in out/.
sweep(exp, [("rule.kind", ["mean", "coordinate_median"])], seeds=2, out_dir=root / "out")
print((root / "out" / "aggregate.csv").read_text())
print((root / "out" / "heatmap.csv").read_text())
