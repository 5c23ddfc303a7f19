"""Click-model environments.

Items are indexed ``0..L-1`` and slots ``0..L-1``; only slots ``0..K-1`` are
displayed.  A permutation maps slot -> item.  Three click models are
supported:

* ``cascade``: the user examines displayed slots top-down, clicks the first
  attractive item and stops.
* ``position-based``: slot ``k`` is examined with probability ``chi[k]``
  (nonincreasing), clicks are independent across slots.
* ``factored``: same click law as position-based but ``chi`` is arbitrary, so
  the ranking assumptions may fail (useful for negative tests).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationTooLarge

KINDS = ("cascade", "position-based", "factored")

_TOL = 1e-12


@dataclass(frozen=True)
class ItemCatalog:
    alphas: tuple[float, ...]
    K: int

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if not alphas:
            raise ValueError("catalog needs at least one item")
        if any(not (0.0 <= a <= 1.0) for a in alphas):
            raise ValueError(f"attractiveness values must lie in [0, 1], got {alphas}")
        if not (1 <= self.K <= len(alphas)):
            raise ValueError(f"display length K={self.K} must satisfy 1 <= K <= L={len(alphas)}")

    @property
    def L(self) -> int:
        return len(self.alphas)

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.alphas)

    def optimal_order(self) -> np.ndarray:
        """Items sorted by decreasing attractiveness (stable, so ties keep index order)."""
        return np.argsort(-self.alpha, kind="stable")

    def ranks(self) -> np.ndarray:
        """0-based position of each item in the optimal order."""
        order = self.optimal_order()
        ranks = np.empty(self.L, dtype=np.int64)
        ranks[order] = np.arange(self.L)
        return ranks

    def strictly_decreasing(self) -> bool:
        a = self.alphas
        return all(a[i] > a[i + 1] for i in range(len(a) - 1))

    def gap(self, i: int, j: int) -> float:
        return self.alphas[i] - self.alphas[j]


class Permutation:
    """A ranking: ``order[k]`` is the item shown in slot ``k``."""

    __slots__ = ("order", "inverse")

    def __init__(self, order):
        order = np.asarray(order, dtype=np.int64)
        if order.ndim != 1 or not np.array_equal(np.sort(order), np.arange(order.size)):
            raise ValueError(f"not a permutation: {order.tolist()}")
        self.order = order
        self.inverse = np.empty_like(order)
        self.inverse[order] = np.arange(order.size)

    @classmethod
    def identity(cls, L: int) -> Permutation:
        return cls(np.arange(L))

    def swapped(self, i: int, j: int) -> Permutation:
        """The permutation exchanging items ``i`` and ``j`` and nothing else."""
        order = self.order.copy()
        order[self.inverse[i]], order[self.inverse[j]] = j, i
        return Permutation(order)

    def __len__(self):
        return self.order.size

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.order, other.order)

    def __hash__(self):
        return hash(self.order.tobytes())

    def __repr__(self):
        return f"Permutation({self.order.tolist()})"


@dataclass(frozen=True)
class ClickModel:
    catalog: ItemCatalog
    kind: str
    chi: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown click model kind {self.kind!r}; expected one of {KINDS}")
        chi = tuple(float(x) for x in self.chi)
        if self.kind == "cascade":
            if chi:
                raise ValueError("cascade model derives examination from attractiveness; chi must be empty")
        else:
            if len(chi) != self.catalog.K:
                raise ValueError(f"chi must have one weight per displayed slot (K={self.catalog.K}), got {len(chi)}")
            if any(not (0.0 <= x <= 1.0) for x in chi):
                raise ValueError(f"examination weights must lie in [0, 1], got {chi}")
            if self.kind == "position-based" and any(chi[k] < chi[k + 1] for k in range(len(chi) - 1)):
                raise ValueError(f"position-based examination weights must be nonincreasing, got {chi}")
        object.__setattr__(self, "chi", chi)

    @classmethod
    def cascade(cls, alphas, K: int) -> ClickModel:
        return cls(ItemCatalog(tuple(alphas), K), "cascade")

    @classmethod
    def position_based(cls, alphas, chi) -> ClickModel:
        return cls(ItemCatalog(tuple(alphas), len(chi)), "position-based", tuple(chi))

    @classmethod
    def factored(cls, alphas, chi) -> ClickModel:
        return cls(ItemCatalog(tuple(alphas), len(chi)), "factored", tuple(chi))

    @property
    def L(self) -> int:
        return self.catalog.L

    @property
    def K(self) -> int:
        return self.catalog.K

    @property
    def alpha(self) -> np.ndarray:
        return self.catalog.alpha

    def slot_probs(self, orders: np.ndarray) -> np.ndarray:
        """Click probability of every slot for one or many permutations.

        ``orders`` has shape ``(..., L)`` (slot -> item); the result has the
        same shape with zeros beyond slot ``K``.
        """
        orders = np.asarray(orders)
        attract = self.alpha[orders[..., : self.K]]
        probs = np.zeros(orders.shape, dtype=np.float64)
        if self.kind == "cascade":
            survive = np.cumprod(1.0 - attract, axis=-1)
            reach = np.ones_like(attract)
            reach[..., 1:] = survive[..., :-1]
            probs[..., : self.K] = attract * reach
        else:
            probs[..., : self.K] = attract * np.asarray(self.chi)
        return probs

    def expected_clicks(self, orders: np.ndarray) -> np.ndarray:
        """Expected number of clicks, summed over displayed slots."""
        orders = np.asarray(orders)
        if self.kind == "cascade":
            # 1 - prod(1 - alpha) summed in closed form avoids a cumprod pass
            return 1.0 - np.prod(1.0 - self.alpha[orders[..., : self.K]], axis=-1)
        return (self.alpha[orders[..., : self.K]] * np.asarray(self.chi)).sum(axis=-1)

    def clicks_from_uniforms(self, orders: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Realize item-level clicks from per-slot uniforms.

        Slot ``k`` consumes ``uniforms[..., k]``.  Returns an int8 array indexed
        by item.
        """
        orders = np.asarray(orders)
        shown = orders[..., : self.K]
        u = uniforms[..., : self.K]
        if self.kind == "cascade":
            attractive = u < self.alpha[shown]
            first = np.argmax(attractive, axis=-1)
            hit = attractive.any(axis=-1)
            slot_clicks = np.zeros(shown.shape, dtype=np.int8)
            np.put_along_axis(slot_clicks, first[..., None], hit[..., None].astype(np.int8), axis=-1)
        else:
            slot_clicks = (u < self.alpha[shown] * np.asarray(self.chi)).astype(np.int8)
        clicks = np.zeros(orders.shape, dtype=np.int8)
        np.put_along_axis(clicks, shown, slot_clicks, axis=-1)
        return clicks

    def pair_click_probs(self, order: np.ndarray) -> np.ndarray:
        """Exact ``P(C_i = 1, C_j = 0)`` for every item pair under one permutation."""
        v = np.empty(self.L)
        v[np.asarray(order)] = self.slot_probs(order)
        if self.kind == "cascade":
            # at most one click per round, so C_i = 1 already forces C_j = 0
            joint = np.repeat(v[:, None], self.L, axis=1)
        else:
            joint = v[:, None] * (1.0 - v[None, :])
        np.fill_diagonal(joint, 0.0)
        return joint


def click_prob(model: ClickModel, a: Permutation, k: int) -> float:
    """Probability that the item in slot ``k`` (0-based) is clicked."""
    if not 0 <= k < model.L:
        raise IndexError(f"slot {k} outside 0..{model.L - 1}")
    return float(model.slot_probs(a.order)[k])


def sample_clicks(model: ClickModel, a: Permutation, rng: np.random.Generator) -> np.ndarray:
    """Draw one round of clicks; consumes exactly ``L`` uniforms from ``rng``."""
    return model.clicks_from_uniforms(a.order, rng.random(model.L))


def optimal_value(model: ClickModel) -> float:
    """Expected clicks of the attractiveness-sorted ranking."""
    return float(model.expected_clicks(model.catalog.optimal_order()))


@dataclass
class AssumptionReport:
    passed: bool
    checks: dict[str, bool]
    mode: str
    permutations_checked: int
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": self.checks,
            "mode": self.mode,
            "permutations_checked": self.permutations_checked,
            "counterexample": self.counterexample,
        }


def check_assumptions(
    model: ClickModel,
    *,
    limit: int = 7,
    spot_check: int | None = None,
    rng: np.random.Generator | None = None,
) -> AssumptionReport:
    """Verify the four ranking assumptions by brute force.

    With ``L <= limit`` every permutation is visited.  Larger catalogs raise
    :class:`EnumerationTooLarge` unless ``spot_check`` asks for that many
    random permutations instead.
    """
    L, K = model.L, model.K
    alpha = model.alpha
    if L <= limit:
        perms = (np.array(p) for p in itertools.permutations(range(L)))
        mode, count = "exhaustive", math.factorial(L)
    elif spot_check:
        rng = rng if rng is not None else np.random.default_rng(0)
        perms = (rng.permutation(L) for _ in range(spot_check))
        mode, count = "random", spot_check
    else:
        raise EnumerationTooLarge(f"L={L} exceeds enumeration limit {limit}; pass spot_check for random sampling")

    star = Permutation(model.catalog.optimal_order())
    v_star = model.slot_probs(star.order)
    best = float(v_star.sum())
    checks = {"A1": True, "A2": True, "A3": True, "A4": True}
    counterexample = None

    def fail(name, **info):
        nonlocal counterexample
        checks[name] = False
        if counterexample is None:
            counterexample = {"assumption": name, **info}

    for order in perms:
        a = Permutation(order)
        v = model.slot_probs(a.order)
        if checks["A1"] and np.any(v[K:] != 0.0):
            fail("A1", permutation=a.order.tolist(), slot=int(np.flatnonzero(v[K:])[0] + K))
        if checks["A2"] and v.sum() > best + _TOL:
            fail("A2", permutation=a.order.tolist(), value=float(v.sum()), optimal=best)
        if checks["A4"]:
            same = np.flatnonzero(alpha[a.order] == alpha[star.order])
            bad = same[v[same] < v_star[same] - _TOL]
            if bad.size:
                k = int(bad[0])
                fail("A4", permutation=a.order.tolist(), slot=k, value=float(v[k]), optimal=float(v_star[k]))
        if checks["A3"]:
            for i in range(L):
                for j in range(L):
                    if i == j or alpha[i] < alpha[j]:
                        continue
                    k = a.inverse[i]
                    swapped = model.slot_probs(a.swapped(i, j).order)[k]
                    # alpha_j * v(a, k) >= alpha_i * v(a', k) avoids dividing by alpha_j = 0
                    if alpha[j] * v[k] < alpha[i] * swapped - _TOL:
                        fail("A3", permutation=a.order.tolist(), i=i, j=j, value=float(v[k]), swapped=float(swapped))
                        break
                if not checks["A3"]:
                    break
    return AssumptionReport(all(checks.values()), checks, mode, count, counterexample)
