"""
Clustered federated training of traffic forecasters
===================================================

Base stations are nodes of an affinity graph (distance, backhaul capacity,
coverage overlap, demand similarity).  Louvain modularity groups them, each
cluster trains a GRU next-request forecaster with sync FedAvg, and later
rounds switch to staleness-aware asynchronous updates.
"""

import dataclasses

import numpy as np

from dntml.fedtwin import (FedTwinConfig, cluster_modularity, from_edges, run_centralized,
                           run_fedtwin, single_client)

# %%
# Two triangles joined by nothing: the textbook modularity example.
tri = from_edges(6, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)])
p = cluster_modularity(tri)
print("two triangles ->", p.labels, "Q =", p.modularity)

# %%
# A small federation: 3 groups of 3 BSs with group-specific demand.
cfg = FedTwinConfig(n_groups=3, per_group=3, rounds=10, requests_per_bs=300, heldout_per_bs=100)
rep = run_fedtwin(cfg)
print("\nclusters found:", rep.partition.n_clusters, "labels", rep.partition.labels)
for r in rep.rounds:
    print(f"round {r.round:2d} {r.mode:<5} loss {r.global_loss:.3f} "
          f"participants {r.participants} max staleness {r.max_staleness}")

# %%
# With a single client, federated training is just centralized training.
one = run_fedtwin(single_client(cfg))
cen = run_centralized(single_client(cfg))
print("\n1-client FL == centralized:", np.array_equal(one.params, cen.params))

# %%
# Async only: damping stale updates versus applying them at full weight.
for aware in (True, False):
    c = dataclasses.replace(cfg, switch_round=0, staleness_aware=aware)
    print(f"staleness-aware={aware!s:<5} final loss {run_fedtwin(c).final_loss:.4f}")
