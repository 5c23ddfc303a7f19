"""Empirical checks of the probability statements behind TopRank.

* :func:`simulate_crossing` - time-uniform crossing frequency of a boundary
  on synthetic ``{-1, 0, 1}`` processes (finite horizon ``T``, so the
  measured frequency under-estimates the infinite-horizon probability).
* :func:`failure_event_rate` - frequency of the failure event inside real
  TopRank episodes, with exact (enumerated) conditional means as centering.
* :func:`estimate_pair_bias` - the conditional drift of ``U_ij`` inside a
  fixed block.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import seeding
from .boundary import BoundarySpec, threshold_table
from .env import ClickModel
from .errors import DegenerateConditioning, EnumerationTooLarge
from .toprank.algorithm import order_from_keys
from .toprank.batch import run_episodes
from .toprank.graph import BlockPartition

MAX_ORDERS = 5040


@dataclass
class CrossingReport:
    trials: int
    crossings: int
    delta: float
    horizon: int
    label: str = ""
    bound: float | None = None
    crossing_times: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.bound is None:
            self.bound = self.delta

    @property
    def frequency(self) -> float:
        return self.crossings / self.trials

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1.0

    @property
    def interval(self) -> tuple[float, float]:
        ci = stats.binomtest(self.crossings, self.trials).proportion_ci(0.95, method="exact")
        return float(ci.low), float(ci.high)

    @property
    def sigma(self) -> float:
        """Binomial standard error of the frequency at the claimed bound."""
        p = min(self.bound, 1.0)
        return math.sqrt(p * (1.0 - p) / self.trials)

    @property
    def passed(self) -> bool:
        return self.vacuous or self.frequency <= self.bound + 3.0 * self.sigma

    def to_dict(self) -> dict:
        low, high = self.interval
        return {
            "label": self.label,
            "trials": self.trials,
            "crossings": self.crossings,
            "frequency": self.frequency,
            "delta": self.delta,
            "bound": self.bound,
            "vacuous": self.vacuous,
            "horizon": self.horizon,
            "ci95": [low, high],
            "sigma": self.sigma,
            "passed": self.passed,
        }


# --- synthetic processes ----------------------------------------------------


@dataclass(frozen=True)
class SyntheticProcess:
    """``X_t`` in ``{-1, 0, 1}``: nonzero w.p. ``p_t``, and then ``+1`` w.p. ``(1 + mu_t)/2``.

    ``p`` and ``mu`` are constants or per-step sequences of length ``T``.
    With ``adaptive`` set, ``mu_t = -adaptive * sign(S_{t-1})`` (``sign(0) = 1``)
    and ``mu`` is ignored.
    """

    T: int
    p: float | tuple[float, ...] = 1.0
    mu: float | tuple[float, ...] = 0.0
    adaptive: float | None = None
    name: str = ""

    def __post_init__(self):
        for label, sched in (("p", self.p), ("mu", self.mu)):
            arr = np.atleast_1d(np.asarray(sched, dtype=np.float64))
            if arr.size not in (1, self.T):
                raise ValueError(f"{label} schedule must be scalar or length T={self.T}")
        if np.any(np.asarray(self.p) < 0) or np.any(np.asarray(self.p) > 1):
            raise ValueError("p_t must lie in [0, 1]")
        if np.any(np.abs(np.asarray(self.mu)) > 1):
            raise ValueError("mu_t must lie in [-1, 1]")
        if self.adaptive is not None and not (0.0 <= self.adaptive <= 1.0):
            raise ValueError("adaptive drift must lie in [0, 1]")

    def schedules(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.broadcast_to(np.asarray(self.p, dtype=np.float64), (self.T,))
        mu = np.broadcast_to(np.asarray(self.mu, dtype=np.float64), (self.T,))
        return p, mu

    def paths(self, uniforms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Centered sums ``S`` and counts ``N`` from uniforms of shape ``(trials, T, 2)``."""
        p, mu = self.schedules()
        nonzero = uniforms[..., 0] < p
        if self.adaptive is None:
            up = uniforms[..., 1] < (1.0 + mu) / 2.0
            x = np.where(nonzero, np.where(up, 1.0, -1.0), 0.0)
            S = np.cumsum(x - mu * nonzero, axis=-1)
        else:
            trials = uniforms.shape[0]
            S = np.empty((trials, self.T))
            s = np.zeros(trials)
            for t in range(self.T):
                m = np.where(s >= 0.0, -self.adaptive, self.adaptive)
                up = uniforms[:, t, 1] < (1.0 + m) / 2.0
                x = np.where(nonzero[:, t], np.where(up, 1.0, -1.0), 0.0)
                s = s + x - m * nonzero[:, t]
                S[:, t] = s
        N = np.cumsum(nonzero, axis=-1, dtype=np.int64)
        return S, N


def standard_suite(T: int) -> list[SyntheticProcess]:
    """Fair walk, sparse biased walk, time-varying schedule, adaptive drift."""
    t = np.arange(T)
    return [
        SyntheticProcess(T, 1.0, 0.0, name="fair"),
        SyntheticProcess(T, 0.3, 0.5, name="sparse-biased"),
        SyntheticProcess(T, tuple(0.2 + 0.8 * (t % 2)), tuple(0.6 * np.sin(t / 50.0)), name="time-varying"),
        SyntheticProcess(T, 1.0, adaptive=0.6, name="adaptive"),
    ]


Threshold = BoundarySpec | Callable[[int], np.ndarray]


def _table(spec: Threshold, n_max: int) -> np.ndarray:
    if isinstance(spec, BoundarySpec):
        return threshold_table(spec, n_max)
    return np.asarray(spec(n_max), dtype=np.float64)


def _delta(spec: Threshold) -> float:
    return spec.delta if isinstance(spec, BoundarySpec) else float(getattr(spec, "delta", 0.0))


def simulate_crossings(
    proc: SyntheticProcess,
    specs: list[Threshold],
    trials: int,
    seed: int,
    *,
    chunk: int = 250,
    keep_times: bool = False,
) -> list[CrossingReport]:
    """Crossing frequencies of several boundaries on the same sample paths.

    Trial ``k`` uses stream ``k`` of ``seed``.  A trial crosses at the first
    ``t`` with ``N_t > 0`` and ``|S_t| >= radius(N_t)``.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    tables = [_table(s, proc.T) for s in specs]
    times = [np.zeros(trials, dtype=np.int64) for _ in specs]
    for start in range(0, trials, chunk):
        ids = range(start, min(start + chunk, trials))
        u = np.stack([r.random((proc.T, 2)) for r in seeding.streams(seed, ids)])
        S, N = proc.paths(u)
        absS = np.abs(S)
        for table, out in zip(tables, times):
            hit = absS >= table[N]
            first = np.argmax(hit, axis=1)
            out[start:start + len(ids)] = np.where(hit.any(axis=1), first + 1, 0)
    reports = []
    for spec, out in zip(specs, times):
        label = spec.label() if isinstance(spec, BoundarySpec) else getattr(spec, "label", "custom")
        reports.append(CrossingReport(
            trials, int((out > 0).sum()), _delta(spec), proc.T, label=f"{proc.name}:{label}",
            crossing_times=out if keep_times else None,
        ))
    return reports


def simulate_crossing(proc: SyntheticProcess, spec: Threshold, trials: int, seed: int, **kw) -> CrossingReport:
    return simulate_crossings(proc, [spec], trials, seed, **kw)[0]


# --- exact conditional means ------------------------------------------------


def block_orders(index: np.ndarray, limit: int = MAX_ORDERS) -> np.ndarray:
    """Every permutation consistent with a block assignment (blocks shuffled internally)."""
    index = np.asarray(index)
    blocks = [np.flatnonzero(index == d) for d in range(int(index.max()) + 1)]
    count = math.prod(math.factorial(len(b)) for b in blocks)
    if count > limit:
        raise EnumerationTooLarge(f"{count} within-block orders exceed limit {limit}")
    per_block = [list(itertools.permutations(b.tolist())) for b in blocks]
    return np.array([sum(combo, ()) for combo in itertools.product(*per_block)], dtype=np.int64)


def exact_pair_means(model: ClickModel, index: np.ndarray) -> np.ndarray:
    """``E[U_ij | U_ij != 0]`` for items sharing a block, by enumeration; 0 elsewhere.

    Also 0 where ``U_ij`` can never be nonzero (both items undisplayed).
    """
    orders = block_orders(index)
    joint = np.mean([model.pair_click_probs(o) for o in orders], axis=0)
    num = joint - joint.T
    den = joint + joint.T
    same = np.asarray(index)[:, None] == np.asarray(index)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(same & (den > 0), num / den, 0.0)
    return mean


class Centering:
    """Cached exact conditional means keyed by the block assignment."""

    def __init__(self, model: ClickModel):
        self.model = model
        self._cache: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()

    def means(self, index: np.ndarray) -> np.ndarray:
        key = np.asarray(index, dtype=np.int64).tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            hit = exact_pair_means(self.model, index)
            with self._lock:
                self._cache[key] = hit
        return hit

    def __call__(self, index: np.ndarray) -> np.ndarray:
        uniq, inverse = np.unique(index, axis=0, return_inverse=True)
        stack = np.stack([self.means(row) for row in uniq])
        return stack[inverse.reshape(-1)]


def failure_event_rate(model: ClickModel, spec: BoundarySpec, n: int, episodes: int, seed: int, *, threads: int = 1) -> CrossingReport:
    """Fraction of episodes in which some centered pair statistic reaches the radius."""
    block_orders(np.zeros(model.L, dtype=np.int64))  # refuse early if one big block is too large
    result = run_episodes(model, spec, n, episodes, seed, threads=threads, record=False, centering=Centering(model))
    failed = result.failure_round > 0
    return CrossingReport(
        episodes, int(failed.sum()), spec.delta, n, label=f"failure:{spec.label()}",
        bound=spec.delta * model.L**2, crossing_times=result.failure_round,
    )


# --- pair drift -------------------------------------------------------------


@dataclass
class PairBias:
    mean_ij: float
    mean_ji: float
    stderr: float
    count: int
    lower: float
    exact: float

    @property
    def holds_a(self) -> bool:
        return self.mean_ij >= self.lower - 3.0 * self.stderr

    @property
    def holds_b(self) -> bool:
        return self.mean_ji <= 3.0 * self.stderr

    @property
    def exact_holds_a(self) -> bool:
        return self.exact >= self.lower - 1e-12


def estimate_pair_bias(
    model: ClickModel, blocks: BlockPartition, i: int, j: int, samples: int, rng: np.random.Generator
) -> PairBias:
    """Monte-Carlo estimate of ``E[U_ij | U_ij != 0]`` with the block structure held fixed."""
    index = blocks.block_index()
    if index[i] != index[j]:
        raise ValueError(f"items {i} and {j} are not in the same block")
    alpha = model.alpha
    if alpha[i] < alpha[j]:
        raise ValueError("need alpha(i) >= alpha(j)")
    draws = rng.random((samples, 2, model.L))
    orders = order_from_keys(index, draws[:, 0])
    clicks = model.clicks_from_uniforms(orders, draws[:, 1]).astype(np.int64)
    u = clicks[:, i] - clicks[:, j]
    u = u[u != 0]
    if u.size == 0:
        raise DegenerateConditioning(f"U_{i}{j} was zero in all {samples} samples")
    mean = float(u.mean())
    stderr = float(u.std(ddof=1) / math.sqrt(u.size)) if u.size > 1 else math.inf
    total = alpha[i] + alpha[j]
    lower = (alpha[i] - alpha[j]) / total if total > 0 else 0.0
    exact = float(exact_pair_means(model, index)[i, j])
    return PairBias(mean, -mean, stderr, int(u.size), lower, exact)
