"""Closed-form regret and per-pair bounds.

Three families share one layout: the original bounds use ``log(c sqrt(n) / delta)``;
``refined-c1`` swaps it for ``log log n + 2.5 log log log n + C1(delta)``;
``refined-c2`` uses ``log log n`` with the coefficients of the simple
iterated-log boundary.  The iterated-log forms need ``log log log n >= 0``,
i.e. ``n >= e^e`` (so ``n >= 16`` for integer horizons).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .boundary import C_CONST, E_E, BoundarySpec, Variant
from .env import ItemCatalog
from .errors import DomainError


class BoundTag(str, enum.Enum):
    ORIGINAL = "original"
    REFINED_C1 = "refined-c1"
    REFINED_C2 = "refined-c2"


@dataclass(frozen=True)
class BoundVariant:
    tag: BoundTag
    constant: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tag", BoundTag(self.tag))
        needs = self.tag is not BoundTag.ORIGINAL
        if needs != (self.constant is not None):
            raise ValueError(f"{self.tag.value} bound {'needs' if needs else 'takes no'} constant")

    @classmethod
    def original(cls) -> BoundVariant:
        return cls(BoundTag.ORIGINAL)

    @classmethod
    def refined_c1(cls, c1: float) -> BoundVariant:
        return cls(BoundTag.REFINED_C1, float(c1))

    @classmethod
    def refined_c2(cls, c2: float) -> BoundVariant:
        return cls(BoundTag.REFINED_C2, float(c2))


def variant_for(spec: BoundarySpec) -> BoundVariant | None:
    """The bound family matching a boundary rule; ``None`` for the exact mixture radius."""
    if spec.variant is Variant.BASELINE:
        return BoundVariant.original()
    if spec.variant is Variant.ASYMPTOTIC_C1:
        return BoundVariant.refined_c1(spec.c1)
    if spec.variant is Variant.SIMPLE_LIL:
        return BoundVariant.refined_c2(spec.c2)
    return None


def _check(n: float, delta: float, variant: BoundVariant):
    if n < 1:
        raise DomainError(f"horizon must be >= 1, got {n}")
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if variant.tag is not BoundTag.ORIGINAL and n < E_E:
        raise DomainError(f"iterated-log bounds need n >= e^e ~ 15.15, got {n}")


def _log_term(n: float, delta: float, variant: BoundVariant) -> float:
    """The confidence term that multiplies ``6 (alpha_i + alpha_j) / gap`` (and sits under the root)."""
    if variant.tag is BoundTag.ORIGINAL:
        return math.log(C_CONST * math.sqrt(n) / delta)
    ll = math.log(math.log(n))
    if variant.tag is BoundTag.REFINED_C1:
        return ll + 2.5 * math.log(ll) + variant.constant
    return ll


def _pair_coefficient(variant: BoundVariant) -> float:
    if variant.tag is BoundTag.REFINED_C2:
        return 1.0 + 2.0 * math.sqrt(2.0 + variant.constant)
    return 6.0


def _strict(catalog: ItemCatalog):
    if not catalog.strictly_decreasing():
        raise DomainError("bounds assume strictly decreasing attractiveness")


def pair_sum_bound(i: int, j: int, catalog: ItemCatalog, n: float, delta: float, variant: BoundVariant) -> float:
    """Upper bound on ``S_nij`` for a better item ``i`` and worse item ``j``."""
    _check(n, delta, variant)
    gap = catalog.gap(i, j)
    if not gap > 0.0:
        raise DomainError(f"need alpha({i}) > alpha({j}), gap is {gap}")
    a = catalog.alphas
    return 1.0 + _pair_coefficient(variant) * (a[i] + a[j]) / gap * _log_term(n, delta, variant)


def regret_bound_gapped(catalog: ItemCatalog, n: float, delta: float, variant: BoundVariant) -> float:
    _check(n, delta, variant)
    _strict(catalog)
    L, K = catalog.L, catalog.K
    total = delta * n * K * L * L
    coeff, term, a = _pair_coefficient(variant), _log_term(n, delta, variant), catalog.alphas
    for j in range(L):
        for i in range(min(K, j)):
            total += 1.0 + coeff * (a[i] + a[j]) * term / (a[i] - a[j])
    return total


def regret_bound_gapfree(K: int, L: int, n: float, delta: float, variant: BoundVariant) -> float:
    _check(n, delta, variant)
    head = delta * n * K * L * L + K * L
    term = _log_term(n, delta, variant)
    if variant.tag is BoundTag.REFINED_C2:
        return head + math.sqrt(2.0 * (2.0 + variant.constant) * K**3 * L * n * term)
    return head + math.sqrt(4.0 * K**3 * L * n * term)


def one_over_n(n: int) -> float:
    """The ``delta = 1/n`` preset."""
    if n < 2:
        raise DomainError("delta = 1/n needs n >= 2")
    return 1.0 / n
