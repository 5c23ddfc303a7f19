"""TopRank: topological-sort online ranking."""

from .algorithm import PairStats, RegretTrace, TopRank, update_graph, update_stats
from .batch import BatchResult, run_batch, run_episode, run_episodes
from .graph import BlockPartition, RelationGraph, partition_blocks, propose_permutation

__all__ = [
    "BatchResult",
    "BlockPartition",
    "PairStats",
    "RegretTrace",
    "RelationGraph",
    "TopRank",
    "partition_blocks",
    "propose_permutation",
    "run_batch",
    "run_episode",
    "run_episodes",
    "update_graph",
    "update_stats",
]
