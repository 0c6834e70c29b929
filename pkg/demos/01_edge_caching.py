"""
Edge caching with a twin-assisted DQN
=====================================

Five base stations serve Zipf-distributed requests.  A DQN picks which
cached item to evict on each miss; optionally a per-BS network twin adds
one-step demand forecasts to the state, and a safety layer overrides
actions that would push a BS past its overload threshold.

Runs all four ablations on a short trace (a few seconds each).
"""

import numpy as np

from dntml.caching import CachingConfig, ablation_config, run_caching
from dntml.netmodel import NetConfig, ZipfParams, zipf_pmf

# %%
# The request popularity.  Item 0 is the most popular; the head of the
# distribution is what an eviction policy has to keep.
pmf = zipf_pmf(ZipfParams(exponent=0.8, catalog_size=200))
print("top-5 item probabilities:", np.round(pmf[:5], 4))
print("mass in the top 150 items:", round(pmf[:150].sum(), 3))

# %%
# A short trace so the demo finishes quickly.  The acceptance suite uses
# 50k requests per seed instead.
base = CachingConfig(seed=0, net=NetConfig(ticks=800))
base = ablation_config(base, "full")

# %%
# Baseline DQN, DQN + twin forecasts, DQN + interventions, everything.
print(f"\n{'ablation':<14}{'hit rate':>10}{'max load':>10}{'min load':>10}{'interv.':>10}")
for name in ("baseline", "dnt", "interventions", "full"):
    m = run_caching(ablation_config(base, name)).metrics
    print(f"{name:<14}{m['hit_rate']:>10.3f}{m['max_bs_load']:>10.3f}"
          f"{m['min_bs_load']:>10.3f}{m['intervention_rate']:>10.3f}")

# %%
# The intervention rate is exactly zero whenever the safety layer is off.
