"""TopRank, one round at a time.

This is the readable reference loop.  :mod:`toprank_lab.toprank.batch` runs
many episodes in lockstep with the same random-number protocol and is what
:func:`run_episode` uses; the tests check the two agree draw for draw.

Random-number protocol per round: ``rng.random((2, L))``; row 0 are the
within-block shuffle keys, row 1 the per-slot click uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..boundary import BoundarySpec, threshold
from ..env import ClickModel, Permutation, optimal_value
from .graph import BlockPartition, RelationGraph, block_indices, order_from_keys, partition_blocks


@dataclass
class PairStats:
    """Pairwise click-difference sums ``S`` and comparison counts ``N``."""

    S: np.ndarray
    N: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, L: int) -> PairStats:
        return cls(np.zeros((L, L), dtype=np.int64), np.zeros((L, L), dtype=np.int64))

    def copy(self) -> PairStats:
        return PairStats(self.S.copy(), self.N.copy(), self.t)

    def check(self):
        assert np.array_equal(self.S, -self.S.T), "S must be antisymmetric"
        assert np.array_equal(self.N, self.N.T), "N must be symmetric"
        assert not np.diagonal(self.N).any()
        assert np.all(np.abs(self.S) <= self.N)


def pair_differences(clicks: np.ndarray, index: np.ndarray) -> np.ndarray:
    """``U[i, j] = C_i - C_j`` for items sharing a block, else 0 (batched on leading axes)."""
    clicks = np.asarray(clicks, dtype=np.int64)
    same = index[..., :, None] == index[..., None, :]
    return np.where(same, clicks[..., :, None] - clicks[..., None, :], 0)


def update_stats(stats: PairStats, clicks: np.ndarray, blocks: BlockPartition) -> PairStats:
    U = pair_differences(clicks, blocks.block_index())
    return PairStats(stats.S + U, stats.N + np.abs(U), stats.t + 1)


def candidate_edges(S: np.ndarray, N: np.ndarray, adj: np.ndarray, table: np.ndarray) -> np.ndarray:
    """``cand[..., i, j]``: pair (i, j) is unconnected, compared, and ``S_ij`` reaches the radius."""
    return (N > 0) & (S >= table[N]) & ~adj & ~np.swapaxes(adj, -1, -2)


def update_graph(stats: PairStats, boundary: BoundarySpec, graph: RelationGraph) -> RelationGraph:
    """Add ``(j, i)`` for every unconnected pair with ``S_ij >= threshold(N_ij)``."""
    new = []
    for i, j in zip(*np.nonzero(stats.N > 0)):
        if graph.connected(i, j):
            continue
        if stats.S[i, j] >= threshold(boundary, int(stats.N[i, j])):
            new.append((int(j), int(i)))
    return graph.with_edges(new) if new else graph


@dataclass
class RegretTrace:
    """Per-round record of one episode plus correctness instrumentation.

    ``block_rank_violations`` counts rounds where some block's best item ranks
    below the number of items placed ahead of the block.  ``pair_sum`` maps each
    pair ``(i, j)`` with ``i`` better to ``(S_nij, bound)`` when a bound is
    defined for the boundary variant.
    """

    optimal: float
    increments: np.ndarray
    clicks: np.ndarray
    edges_added: np.ndarray
    first_wrong_round: int | None
    block_rank_violations: int
    graph: RelationGraph
    stats: PairStats
    failure_round: int | None = None
    pair_sum: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.increments.size

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def regret(self) -> float:
        return float(self.increments.sum())

    @property
    def wrong_edge(self) -> bool:
        return self.first_wrong_round is not None

    @property
    def wrong_flags(self) -> np.ndarray:
        flags = np.zeros(self.n, dtype=bool)
        if self.first_wrong_round is not None:
            flags[self.first_wrong_round - 1:] = True
        return flags

    @property
    def edge_rounds(self) -> list[int]:
        return (np.flatnonzero(self.edges_added) + 1).tolist()

    @property
    def pair_sum_violations(self) -> int:
        return sum(1 for s, bound in self.pair_sum.values() if s > bound)


def wrong_edge_mask(alpha: np.ndarray) -> np.ndarray:
    """``mask[a, b]``: an edge (a, b) would claim b beats a although alpha(a) > alpha(b)."""
    return alpha[:, None] > alpha[None, :]


def block_rank_ok(index: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Each block's best true rank is at most the number of items in earlier blocks."""
    L = index.shape[-1]
    same = index[..., :, None] == index[..., None, :]
    best = np.where(same, ranks, L).min(axis=-1)
    ahead = (index[..., None, :] < index[..., :, None]).sum(axis=-1)
    return np.all(best <= ahead, axis=-1)


class TopRank:
    """Stateful single-episode learner."""

    def __init__(self, model: ClickModel, boundary: BoundarySpec):
        self.model = model
        self.boundary = boundary
        self.graph = RelationGraph(model.L)
        self.stats = PairStats.zeros(model.L)

    def step(self, rng: np.random.Generator):
        """Play one round; returns ``(permutation, clicks, added_edges)``."""
        blocks = partition_blocks(self.graph)
        draws = rng.random((2, self.model.L))
        a = Permutation(order_from_keys(blocks.block_index(), draws[0]))
        clicks = self.model.clicks_from_uniforms(a.order, draws[1])
        self.stats = update_stats(self.stats, clicks, blocks)
        before = self.graph.edges
        self.graph = update_graph(self.stats, self.boundary, self.graph)
        return a, clicks, self.graph.edges - before

    def run(self, n: int, rng: np.random.Generator) -> RegretTrace:
        model = self.model
        best = optimal_value(model)
        wrong_mask = wrong_edge_mask(model.alpha)
        ranks = model.catalog.ranks()
        increments = np.empty(n)
        clicks_per_round = np.empty(n, dtype=np.int64)
        added = np.zeros(n, dtype=np.int64)
        first_wrong, block_rank_bad = None, 0
        for t in range(n):
            if not block_rank_ok(block_indices(self.graph.adj), ranks):
                block_rank_bad += 1
            a, clicks, new = self.step(rng)
            increments[t] = best - model.expected_clicks(a.order)
            clicks_per_round[t] = clicks.sum()
            added[t] = len(new)
            if first_wrong is None and np.any(self.graph.adj & wrong_mask):
                first_wrong = t + 1
        return RegretTrace(best, increments, clicks_per_round, added, first_wrong, block_rank_bad, self.graph, self.stats)
