"""Relation graph and its block partition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Permutation
from ..errors import CycleDetected


class RelationGraph:
    """DAG of accepted comparisons.

    An edge ``(j, i)`` records the conclusion that item ``i`` is more
    attractive than item ``j``.  ``adj[j, i]`` is the boolean adjacency.
    """

    __slots__ = ("adj",)

    def __init__(self, L: int, edges=()):
        self.adj = np.zeros((L, L), dtype=bool)
        for j, i in edges:
            self._add(j, i)
        if not is_acyclic(self.adj):
            raise CycleDetected(f"edges {sorted(self.edges)} contain a cycle", edges=sorted(self.edges))

    def _add(self, j: int, i: int):
        if i == j:
            raise ValueError(f"self-loop on item {i}")
        if self.adj[i, j]:
            raise ValueError(f"edge ({j}, {i}) conflicts with existing ({i}, {j})")
        self.adj[j, i] = True

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> RelationGraph:
        g = cls.__new__(cls)
        g.adj = np.array(adj, dtype=bool)
        return g

    @property
    def L(self) -> int:
        return self.adj.shape[0]

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(int(j), int(i)) for j, i in zip(*np.nonzero(self.adj))}

    def connected(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j] or self.adj[j, i])

    def with_edges(self, new_edges) -> RelationGraph:
        g = RelationGraph.from_adjacency(self.adj)
        for j, i in new_edges:
            g._add(j, i)
        if not is_acyclic(g.adj):
            raise CycleDetected(
                f"adding {sorted(new_edges)} to {sorted(self.edges)} creates a cycle",
                edges=sorted(g.edges),
            )
        return g

    def __len__(self):
        return int(self.adj.sum())

    def __repr__(self):
        return f"RelationGraph(L={self.L}, edges={sorted(self.edges)})"


def cyclic(adj: np.ndarray) -> np.ndarray:
    """Per-graph cycle flag via transitive closure; accepts leading batch axes."""
    reach = np.array(adj, dtype=bool)
    L = reach.shape[-1]
    for _ in range(max(L - 1, 0).bit_length()):
        reach = reach | (reach[..., :, :, None] & reach[..., None, :, :]).any(axis=-2)
    return np.diagonal(reach, axis1=-2, axis2=-1).any(axis=-1)


def is_acyclic(adj: np.ndarray) -> bool:
    return not np.any(cyclic(adj))


@dataclass(frozen=True)
class BlockPartition:
    """Ordered blocks ``P_1, ..., P_M``; block ``d`` occupies a contiguous slot range."""

    blocks: tuple[tuple[int, ...], ...]

    @property
    def L(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    def slot_ranges(self) -> list[range]:
        out, start = [], 0
        for block in self.blocks:
            out.append(range(start, start + len(block)))
            start += len(block)
        return out

    def block_index(self) -> np.ndarray:
        """``index[i]`` is the block containing item ``i``."""
        index = np.empty(self.L, dtype=np.int64)
        for d, block in enumerate(self.blocks):
            index[list(block)] = d
        return index

    @classmethod
    def from_index(cls, index) -> BlockPartition:
        index = np.asarray(index)
        return cls(tuple(tuple(int(i) for i in np.flatnonzero(index == d)) for d in range(int(index.max()) + 1)))


def block_indices(adj: np.ndarray) -> np.ndarray:
    """Block number of each item, for one graph or a batch of graphs.

    Block 0 holds the items with no outgoing edge; block ``d + 1`` holds the
    items with no outgoing edge once blocks ``0..d`` are removed.
    """
    adj = np.asarray(adj, dtype=bool)
    index = np.full(adj.shape[:-1], -1, dtype=np.int64)
    remaining = np.ones(adj.shape[:-1], dtype=bool)
    L = adj.shape[-1]
    for d in range(L):
        if not remaining.any():
            break
        dominated = (adj & remaining[..., None, :]).any(axis=-1)
        minimal = remaining & ~dominated
        stuck = remaining.any(axis=-1) & ~minimal.any(axis=-1)
        if np.any(stuck):
            raise CycleDetected("no minimal item among the remaining ones; graph is cyclic")
        index[minimal] = d
        remaining &= ~minimal
    return index


def partition_blocks(graph: RelationGraph) -> BlockPartition:
    return BlockPartition.from_index(block_indices(graph.adj))


def order_from_keys(index: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Concatenate blocks in order, shuffling each block by ``keys`` in ``[0, 1)``."""
    return np.argsort(index + keys, axis=-1, kind="stable")


def propose_permutation(blocks: BlockPartition, rng: np.random.Generator) -> Permutation:
    """Blocks in order, uniformly shuffled inside; consumes ``L`` uniforms."""
    return Permutation(order_from_keys(blocks.block_index(), rng.random(blocks.L)))
