"""Clustering with centers restricted to a labeled dictionary of candidate vectors."""

from .core import (
    ClusterState,
    EmbeddingSet,
    SiteDictionary,
    SolveConfig,
    l2_normalize_rows,
    nearest_site,
    sq_dist,
)
from .dictionary import filter_by_quantile, generality_scores, sweep_quantiles
from .initialize import greedy_open, kmeans_init, ward_init
from .io import (
    gen_synthetic,
    read_dictionary,
    read_embeddings,
    read_labels,
    write_dictionary,
    write_embeddings,
    write_labels,
)
from .metrics import ari, assignment_entropy, clustering_accuracy, evaluate, nmi
from .solve import (
    assign_voronoi,
    brute_force_oracle,
    pam_local_search,
    project_centers,
    relaxed_local_search,
    repair_empty,
    repair_oversized,
    solve,
    wcss_loss,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterState",
    "EmbeddingSet",
    "SiteDictionary",
    "SolveConfig",
    "ari",
    "assign_voronoi",
    "assignment_entropy",
    "brute_force_oracle",
    "clustering_accuracy",
    "evaluate",
    "filter_by_quantile",
    "gen_synthetic",
    "generality_scores",
    "greedy_open",
    "kmeans_init",
    "l2_normalize_rows",
    "nearest_site",
    "nmi",
    "pam_local_search",
    "project_centers",
    "read_dictionary",
    "read_embeddings",
    "read_labels",
    "relaxed_local_search",
    "repair_empty",
    "repair_oversized",
    "solve",
    "sq_dist",
    "sweep_quantiles",
    "ward_init",
    "wcss_loss",
    "write_dictionary",
    "write_embeddings",
    "write_labels",
]
