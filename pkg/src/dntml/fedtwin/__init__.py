"""Clustered federated learning across base-station twins."""

from .affinity import AffinityGraph, BSAttributes, build_affinity, circle_overlap, from_edges
from .aggregate import (AsyncState, ModelUpdate, aggregate_sync, apply_async, sample_participants,
                        staleness_alpha, weighted_average)
from .cluster import (ClusterPartition, cluster_fixed_k, cluster_modularity, modularity,
                      planted_partition_graph, rand_index, reform_clusters)
from .pipeline import (ROUND_HEADER, FedTwinConfig, FedTwinReport, run_centralized, run_fedtwin,
                       single_client)

__all__ = [
    "AffinityGraph", "AsyncState", "BSAttributes", "ClusterPartition", "FedTwinConfig",
    "FedTwinReport", "ModelUpdate", "ROUND_HEADER", "aggregate_sync", "apply_async",
    "build_affinity", "circle_overlap", "cluster_fixed_k", "cluster_modularity", "from_edges",
    "modularity", "planted_partition_graph", "rand_index", "reform_clusters", "run_centralized",
    "run_fedtwin", "sample_participants", "single_client", "staleness_alpha", "weighted_average",
]
