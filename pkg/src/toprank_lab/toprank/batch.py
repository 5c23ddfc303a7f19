"""Lockstep execution of many independent TopRank episodes.

Every array carries a leading episode axis; each episode reads only its own
random stream (``rng.random((chunk, 2, L))`` per chunk, same layout as the
reference loop), so results do not depend on how episodes are grouped into
batches or threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import seeding, theory
from ..boundary import BoundarySpec, threshold_table
from ..env import ClickModel, optimal_value
from ..errors import CycleDetected
from .algorithm import PairStats, RegretTrace, candidate_edges, block_rank_ok, pair_differences, wrong_edge_mask
from .graph import RelationGraph, block_indices, cyclic, order_from_keys

CHUNK = 512
BATCH = 256


@dataclass
class BatchResult:
    """Outcome of a set of episodes.

    Round-level arrays (``increments``, ``clicks``, ``edges_added``) are
    ``None`` when the run was made with ``record=False``.  Round numbers are
    1-based; 0 means "never".
    """

    episodes: np.ndarray
    optimal: float
    regret: np.ndarray
    first_wrong: np.ndarray
    block_rank_violations: np.ndarray
    pair_sum_violations: np.ndarray
    pair_sum_checked: bool
    adj: np.ndarray
    S: np.ndarray
    N: np.ndarray
    failure_round: np.ndarray | None = None
    increments: np.ndarray | None = None
    clicks: np.ndarray | None = None
    edges_added: np.ndarray | None = None

    def __len__(self):
        return self.episodes.size

    @property
    def wrong(self) -> np.ndarray:
        return self.first_wrong > 0

    @property
    def failed(self) -> np.ndarray | None:
        return None if self.failure_round is None else self.failure_round > 0

    def trace(self, k: int, catalog=None, n=None, delta=None, variant=None) -> RegretTrace:
        if self.increments is None:
            raise ValueError("round-level data not recorded; rerun with record=True")
        fr = None if self.failure_round is None else (int(self.failure_round[k]) or None)
        return RegretTrace(
            optimal=self.optimal,
            increments=self.increments[k].copy(),
            clicks=self.clicks[k].astype(np.int64),
            edges_added=self.edges_added[k].astype(np.int64),
            first_wrong_round=int(self.first_wrong[k]) or None,
            block_rank_violations=int(self.block_rank_violations[k]),
            graph=RelationGraph.from_adjacency(self.adj[k]),
            stats=PairStats(self.S[k].copy(), self.N[k].copy(), self.increments.shape[1]),
            failure_round=fr,
        )

    @classmethod
    def concat(cls, parts: list[BatchResult]) -> BatchResult:
        def cat(name):
            values = [getattr(p, name) for p in parts]
            return None if values[0] is None else np.concatenate(values)

        return cls(
            episodes=cat("episodes"), optimal=parts[0].optimal, regret=cat("regret"), first_wrong=cat("first_wrong"),
            block_rank_violations=cat("block_rank_violations"), pair_sum_violations=cat("pair_sum_violations"),
            pair_sum_checked=parts[0].pair_sum_checked, adj=cat("adj"), S=cat("S"), N=cat("N"),
            failure_round=cat("failure_round"), increments=cat("increments"), clicks=cat("clicks"),
            edges_added=cat("edges_added"),
        )


def pair_sum_bound_matrix(model: ClickModel, spec: BoundarySpec, n: int) -> np.ndarray | None:
    """``B[i, j]`` bounds ``S_nij`` for every better ``i`` / worse ``j``; ``inf`` elsewhere."""
    variant = theory.variant_for(spec)
    if variant is None or not model.catalog.strictly_decreasing():
        return None
    if variant.tag is not theory.BoundTag.ORIGINAL and n < 16:
        return None
    L = model.L
    bound = np.full((L, L), np.inf)
    for i in range(L):
        for j in range(i + 1, L):
            bound[i, j] = theory.pair_sum_bound(i, j, model.catalog, n, spec.delta, variant)
    return bound


def run_batch(
    model: ClickModel,
    spec: BoundarySpec,
    n: int,
    rngs: list[np.random.Generator],
    episodes=None,
    *,
    record: bool = True,
    centering=None,
    table: np.ndarray | None = None,
) -> BatchResult:
    """Run ``len(rngs)`` episodes side by side.

    ``centering``, when given, maps a batch of block indices ``(E, L)`` to the
    exact conditional means ``E[U_ij | U_ij != 0]`` ``(E, L, L)``; the run
    then tracks the first round at which any centered pair statistic reaches
    the radius (the failure event).
    """
    E, L = len(rngs), model.L
    episodes = np.arange(E) if episodes is None else np.asarray(episodes)
    table = threshold_table(spec, n) if table is None else table
    best = optimal_value(model)
    wrong_mask = wrong_edge_mask(model.alpha)
    ranks = model.catalog.ranks()

    adj = np.zeros((E, L, L), dtype=bool)
    S = np.zeros((E, L, L), dtype=np.int64)
    N = np.zeros((E, L, L), dtype=np.int64)
    regret = np.zeros(E)
    first_wrong = np.zeros(E, dtype=np.int64)
    block_rank_bad = np.zeros(E, dtype=np.int64)
    if centering is not None:
        drift = np.zeros((E, L, L))
        failure = np.zeros(E, dtype=np.int64)
    if record:
        increments = np.empty((E, n))
        clicks_out = np.empty((E, n), dtype=np.int16)
        added_out = np.zeros((E, n), dtype=np.int16)

    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        draws = np.stack([r.random((m, 2, L)) for r in rngs], axis=1)
        for k in range(m):
            t = start + k
            index = block_indices(adj)
            block_rank_bad += ~block_rank_ok(index, ranks)
            order = order_from_keys(index, draws[k, :, 0])
            clicks = model.clicks_from_uniforms(order, draws[k, :, 1])
            inc = best - model.expected_clicks(order)
            regret += inc
            U = pair_differences(clicks, index)
            absU = np.abs(U)
            S += U
            N += absU
            if centering is not None:
                drift += U - centering(index) * absU
                hit = ((N > 0) & (np.abs(drift) >= table[N])).any(axis=(1, 2)) & (failure == 0)
                failure[hit] = t + 1
            cand = candidate_edges(S, N, adj, table)
            if cand.any():
                adj |= np.swapaxes(cand, 1, 2)
                bad = cyclic(adj)
                if bad.any():
                    e = int(np.flatnonzero(bad)[0])
                    raise CycleDetected(
                        f"episode {episodes[e]} round {t + 1}: new edges close a cycle",
                        episode=int(episodes[e]), round_index=t + 1,
                        edges=sorted((int(a), int(b)) for a, b in zip(*np.nonzero(adj[e]))),
                    )
                now_wrong = (adj & wrong_mask).any(axis=(1, 2)) & (first_wrong == 0)
                first_wrong[now_wrong] = t + 1
                if record:
                    added_out[:, t] = cand.sum(axis=(1, 2))
            if record:
                increments[:, t] = inc
                clicks_out[:, t] = clicks.sum(axis=1)

    bound = pair_sum_bound_matrix(model, spec, n)
    if bound is None:
        pair_sum_bad = np.zeros(E, dtype=np.int64)
    else:
        pair_sum_bad = (S > bound).sum(axis=(1, 2))
    return BatchResult(
        episodes=episodes, optimal=best, regret=regret, first_wrong=first_wrong, block_rank_violations=block_rank_bad,
        pair_sum_violations=pair_sum_bad, pair_sum_checked=bound is not None, adj=adj, S=S, N=N,
        failure_round=failure if centering is not None else None,
        increments=increments if record else None,
        clicks=clicks_out if record else None,
        edges_added=added_out if record else None,
    )


def run_episodes(
    model: ClickModel,
    spec: BoundarySpec,
    n: int,
    episodes: int,
    seed: int,
    *,
    threads: int = 1,
    record: bool = True,
    centering=None,
    batch_size: int = BATCH,
) -> BatchResult:
    """Episodes ``0..episodes-1`` with streams derived from ``seed``."""
    table = threshold_table(spec, n)
    groups = [range(s, min(s + batch_size, episodes)) for s in range(0, episodes, batch_size)]

    def work(ids):
        return run_batch(model, spec, n, seeding.streams(seed, ids), list(ids), record=record, centering=centering, table=table)

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, groups))
    else:
        parts = [work(g) for g in groups]
    return BatchResult.concat(parts)


def run_episode(model: ClickModel, boundary: BoundarySpec, n: int, rng: np.random.Generator) -> RegretTrace:
    """One full episode; block-rank and pair-sum instrumentation included."""
    result = run_batch(model, boundary, n, [rng])
    trace = result.trace(0)
    bound = pair_sum_bound_matrix(model, boundary, n)
    if bound is not None:
        L = model.L
        trace.pair_sum = {(i, j): (int(result.S[0, i, j]), float(bound[i, j])) for i in range(L) for j in range(i + 1, L)}
    return trace
