"""Confidence radii for the pairwise click-difference statistic.

Four rules are available through :class:`BoundarySpec`:

``baseline``
    ``sqrt(2 N log(c sqrt(N) / delta))`` with ``c = 4 sqrt(2/pi) / erf(sqrt 2)``.
``mixture-exact``
    The implicit radius ``beta(N, c)`` solving ``Psi(u, N) = c`` for the
    Robbins-Siegmund mixing measure.  Doob's inequality bounds each side's
    crossing probability by ``1/c``, so the two-sided level is ``c = 2/delta``
    (``level_rule="two-sided"``, the default).  ``level_rule="half-delta"`` uses
    ``c = 1/(2 delta)``, which only certifies ``4 delta``.
``asymptotic-c1``
    ``sqrt(2 N [log log N + 2.5 log log log N + C1])``.
``simple-lil``
    ``sqrt((2 + C2) N log log N)``.

The two iterated-log rules fall back to ``mixture-exact`` below ``n_min``.

Psi is integrated in the variable ``s = log log(1/lambda)``, where the mixing
density becomes ``ds / s**2`` on ``[1, inf)``.  Writing the integrand as
``1 + expm1(...)`` gives the unit mass analytically; the remainder decays
doubly exponentially in ``s``, so the numerical part lives on a short interval.
Log-space evaluation keeps Psi finite for any ``u`` up to ``u_cap``.
"""

from __future__ import annotations

import enum
import functools
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import BracketFailure, DomainError, QuadratureFailure

LAMBDA_MAX = math.exp(-math.e)
E_E = math.exp(math.e)


def _erf_series(x: float, terms: int = 80) -> float:
    # Maclaurin series; converges fast for |x| <= 2
    total, term = 0.0, x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def erf_constant() -> float:
    """``4 sqrt(2/pi) / erf(sqrt(2))``, about 3.34368."""
    return 4.0 * math.sqrt(2.0 / math.pi) / _erf_series(math.sqrt(2.0))


C_CONST = erf_constant()


class Variant(str, enum.Enum):
    BASELINE = "baseline"
    MIXTURE_EXACT = "mixture-exact"
    ASYMPTOTIC_C1 = "asymptotic-c1"
    SIMPLE_LIL = "simple-lil"

    @classmethod
    def parse(cls, value) -> Variant:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"mixture": "mixture-exact", "c1": "asymptotic-c1", "lil": "simple-lil", "c2": "simple-lil"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown boundary variant {value!r}; expected one of {[v.value for v in cls]}") from None


@dataclass(frozen=True)
class QuadratureParams:
    """Numerical controls for Psi.

    ``s_max`` caps the integration variable; the integrand remainder is
    negligible past ``log(log(max(|u|, sqrt v, 1)) + 60)``, which stays below
    7 for every double-precision input, so the cap only matters if set low.
    """

    s_max: float = 50.0
    rel_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.s_max > 1.0:
            raise ValueError("s_max must exceed 1")
        if not (0.0 < self.rel_tol <= 1e-6):
            raise ValueError("rel_tol must lie in (0, 1e-6]")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


@dataclass(frozen=True)
class BoundarySpec:
    variant: Variant
    delta: float
    c1: float | None = None
    c2: float | None = None
    n_min: int = 16
    quadrature: QuadratureParams = field(default_factory=QuadratureParams)
    level_rule: str = "two-sided"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.variant is Variant.ASYMPTOTIC_C1 and (self.c1 is None or not math.isfinite(self.c1)):
            raise ValueError("asymptotic-c1 boundary needs a finite c1")
        if self.variant is Variant.SIMPLE_LIL and (self.c2 is None or not math.isfinite(self.c2)):
            raise ValueError("simple-lil boundary needs a finite c2")
        if self.variant in (Variant.ASYMPTOTIC_C1, Variant.SIMPLE_LIL) and self.n_min < 16:
            raise ValueError("n_min must be at least 16 so that log log N is positive")
        mixture_level(self.delta, self.level_rule)

    @property
    def mixture_level(self) -> float:
        """The level ``c`` at which the mixture radius is solved."""
        return mixture_level(self.delta, self.level_rule)

    def label(self) -> str:
        extra = ""
        if self.variant is Variant.ASYMPTOTIC_C1:
            extra = f",c1={self.c1:.6g}"
        elif self.variant is Variant.SIMPLE_LIL:
            extra = f",c2={self.c2:.6g}"
        return f"{self.variant.value}(delta={self.delta:.6g}{extra})"


def mixture_level(delta: float, rule: str = "two-sided") -> float:
    """``2/delta`` for a two-sided ``delta`` guarantee, or ``1/(2 delta)`` under ``rule="half-delta"``."""
    if rule == "two-sided":
        return 2.0 / delta
    if rule == "half-delta":
        return 1.0 / (2.0 * delta)
    raise ValueError(f"unknown level rule {rule!r}; expected 'two-sided' or 'half-delta'")


# --- mixing measure and Psi -------------------------------------------------


def mixture_density_mass(s_max: float | None = None, q: QuadratureParams | None = None) -> float:
    """Total mass of the Robbins-Siegmund density on ``(0, e^-e)``.

    With ``s_max`` the integral is truncated at ``s = s_max``, i.e. at
    ``lambda = exp(-exp(s_max))``, giving ``1 - 1/s_max``.
    """
    q = q or QuadratureParams()
    upper = math.inf if s_max is None else float(s_max)
    mass, err = integrate.quad(lambda s: 1.0 / (s * s), 1.0, upper, epsabs=0.0, epsrel=q.rel_tol, limit=q.max_subdivisions)
    if err > 1e3 * q.rel_tol * max(mass, 1e-300):
        raise QuadratureFailure(f"mixture mass error estimate {err:.3g} above tolerance")
    return mass


def _lam(s: float) -> float:
    return math.exp(-math.exp(s))


def _exponent_peak(u: float, v: float) -> tuple[float, float | None]:
    """Maximum over the support of ``lambda u - lambda^2 v / 2`` and where it sits in ``s``."""
    if u <= 0.0:
        # exponent decreasing in lambda; sup approached as lambda -> 0
        return 0.0, None
    if v > 0.0 and u / v < LAMBDA_MAX:
        lam_star = u / v
        return u * u / (2.0 * v), math.log(math.log(1.0 / lam_star))
    return LAMBDA_MAX * u - 0.5 * LAMBDA_MAX**2 * v, 1.0


def _cutoff(u: float, v: float, q: QuadratureParams) -> float:
    scale = max(abs(u), math.sqrt(max(v, 0.0)), 1.0)
    s_cut = max(math.log(math.log(scale) + 60.0), 1.5)
    if s_cut > q.s_max:
        raise QuadratureFailure(f"integration cutoff {s_cut:.3g} exceeds s_max={q.s_max}")
    return s_cut


def log_psi(u: float, v: float, q: QuadratureParams | None = None) -> float:
    """``log Psi(u, v)``; stable for large ``u``."""
    q = q or QuadratureParams()
    if v < 0.0:
        raise DomainError(f"Psi needs v >= 0, got {v}")
    peak, s_peak = _exponent_peak(u, v)
    s_cut = _cutoff(u, v, q)
    points = [s_peak] if s_peak is not None and 1.0 < s_peak < s_cut else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if peak < 30.0:
                rem, err = integrate.quad(
                    lambda s: math.expm1(_lam(s) * u - 0.5 * _lam(s) ** 2 * v) / (s * s),
                    1.0, s_cut, points=points, epsabs=0.1 * q.rel_tol, epsrel=q.rel_tol, limit=q.max_subdivisions,
                )
                total = 1.0 + rem
                if total <= 0.0:
                    raise QuadratureFailure(f"Psi({u}, {v}) evaluated nonpositive")
                # quad's estimate is pessimistic; allow two orders of slack
                if err > 100.0 * q.rel_tol * total:
                    raise QuadratureFailure(f"Psi({u}, {v}) error estimate {err:.3g}")
                return math.log(total)
            scaled, err = integrate.quad(
                lambda s: math.exp(_lam(s) * u - 0.5 * _lam(s) ** 2 * v - peak) / (s * s),
                1.0, s_cut, points=points, epsabs=0.0, epsrel=q.rel_tol, limit=q.max_subdivisions,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"Psi({u}, {v}): {exc}") from None
    if err > 100.0 * q.rel_tol * scaled:
        raise QuadratureFailure(f"Psi({u}, {v}) error estimate {err:.3g}")
    # tail past s_cut carries mass 1/s_cut with integrand ~1, i.e. exp(-peak) after scaling
    return peak + math.log(scaled + math.exp(-peak) / s_cut)


def psi(u: float, v: float, q: QuadratureParams | None = None) -> float:
    """Mixture integral ``Psi(u, v)``.

    Raises ``OverflowError`` when the value exceeds double range; that
    happens once the exponent peak ``u^2/(2v)`` (or ``0.066 u`` for small
    ``v``) passes about 709.  :func:`log_psi` has no such limit.
    """
    return math.exp(log_psi(u, v, q))


# --- implicit radius --------------------------------------------------------


def _solve_beta(v: float, log_c: float, q: QuadratureParams, tol: float, lo_hint: float | None, u_cap: float) -> float:
    def f(u):
        return log_psi(u, v, q) - log_c

    if lo_hint is not None and f(lo_hint) < 0.0:
        # warm start from a known lower bound (radii grow with v)
        lo, step = lo_hint, max(1.0, 0.05 * abs(lo_hint))
        hi = lo + step
        while f(hi) < 0.0:
            lo, step = hi, 2.0 * step
            hi = lo + step
            if hi > u_cap:
                raise BracketFailure(f"no bracket below u_cap={u_cap:g} for v={v}")
    elif f(1.0) < 0.0:
        hi = 2.0
        while f(hi) < 0.0:
            hi *= 2.0
            if hi > u_cap:
                raise BracketFailure(f"Psi(u, {v}) stays below target for u <= {u_cap:g}")
        lo = hi / 2.0
    else:
        hi, lo = 1.0, 0.0
        while f(lo) >= 0.0:
            hi, lo = lo, (-1.0 if lo == 0.0 else 2.0 * lo)
            if lo < -u_cap:
                raise BracketFailure(f"no bracket above -u_cap={u_cap:g} for v={v}")
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=max(tol, 1e-15), maxiter=400)


def beta_f(v: float, c: float, q: QuadratureParams | None = None, tol: float = 1e-14, *, u_cap: float = 1e15) -> float:
    """Unique ``u`` with ``Psi(u, v) = c``.

    The bracket grows by doubling from ``u = 1`` (or shrinks through negative
    values when ``c`` is small) and is then refined with Brent's method, which
    never leaves the bracket and needs no derivative.
    """
    if not v > 0.0:
        raise DomainError(f"beta_f needs v > 0, got {v}")
    if not c > 0.0:
        raise DomainError(f"beta_f needs c > 0, got {c}")
    return _solve_beta(float(v), math.log(c), q or QuadratureParams(), tol, None, u_cap)


def asymptotic_beta(v: float, c: float) -> float:
    """Leading terms of the large-``v`` expansion of :func:`beta_f`."""
    if not v > E_E:
        raise DomainError(f"asymptotic expansion needs v > e^e ~ 15.15, got {v}")
    ll = math.log(math.log(v))
    bracket = ll + 2.5 * math.log(ll) + math.log(c / (2.0 * math.sqrt(math.pi)))
    return math.sqrt(2.0 * v * max(bracket, 0.0))


# --- thresholds -------------------------------------------------------------


def _closed_form(spec: BoundarySpec, n: np.ndarray) -> np.ndarray:
    n = n.astype(np.float64)
    if spec.variant is Variant.BASELINE:
        return np.sqrt(2.0 * n * np.log(C_CONST * np.sqrt(n) / spec.delta))
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.log(np.log(n))
        if spec.variant is Variant.ASYMPTOTIC_C1:
            return np.sqrt(2.0 * n * (ll + 2.5 * np.log(ll) + spec.c1))
        return np.sqrt((2.0 + spec.c2) * n * ll)


class _MixtureCache:
    """Per-(delta, quadrature) table of exact mixture radii at integer N."""

    def __init__(self):
        self._tables: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def table(self, level: float, q: QuadratureParams, n_max: int) -> np.ndarray:
        key = (level, q)
        with self._lock:
            have = self._tables.get(key)
            if have is not None and have.size > n_max:
                return have[: n_max + 1]
            start = 1 if have is None else have.size
            out = np.empty(n_max + 1)
            out[0] = np.inf
            if have is not None:
                out[:start] = have
            log_c = math.log(level)
            prev = None if have is None or have.size < 2 else float(have[-1])
            for n in range(start, n_max + 1):
                prev = _solve_beta(float(n), log_c, q, 1e-14, prev, 1e15)
                out[n] = prev
            self._tables[key] = out
            return out


_MIXTURE = _MixtureCache()


@functools.lru_cache(maxsize=65536)
def _mixture_radius(level: float, q: QuadratureParams, n: float) -> float:
    return beta_f(n, level, q)


def _threshold_scalar(spec: BoundarySpec, n: float) -> float:
    if spec.variant is Variant.MIXTURE_EXACT or (spec.variant is not Variant.BASELINE and n < spec.n_min):
        return _mixture_radius(spec.mixture_level, spec.quadrature, n)
    return float(_closed_form(spec, np.array([n]))[0])


def threshold(spec: BoundarySpec, n_obs):
    """Confidence radius at comparison count ``n_obs`` (scalar or array, each >= 1)."""
    n = np.asarray(n_obs, dtype=np.float64)
    if np.any(n < 1):
        raise DomainError("threshold needs N >= 1")
    if n.ndim == 0:
        return _threshold_scalar(spec, float(n))
    return np.array([_threshold_scalar(spec, float(x)) for x in n.ravel()]).reshape(n.shape)


def threshold_table(spec: BoundarySpec, n_max: int) -> np.ndarray:
    """Radii for ``N = 0..n_max``; entry 0 is ``inf`` so that ``N = 0`` never crosses."""
    n_max = max(int(n_max), 1)
    n = np.arange(n_max + 1)
    if spec.variant is Variant.BASELINE:
        out = np.empty(n_max + 1)
        out[0] = np.inf
        out[1:] = _closed_form(spec, n[1:])
        return out
    if spec.variant is Variant.MIXTURE_EXACT:
        return _MIXTURE.table(spec.mixture_level, spec.quadrature, n_max).copy()
    small = min(spec.n_min - 1, n_max)
    out = np.empty(n_max + 1)
    out[: small + 1] = _MIXTURE.table(spec.mixture_level, spec.quadrature, small)
    if n_max >= spec.n_min:
        out[spec.n_min:] = _closed_form(spec, n[spec.n_min:])
    return out


# --- empirical constants ----------------------------------------------------


def default_grid(v_min: float = 1e3, v_max: float = 1e12, per_decade: int = 10) -> np.ndarray:
    decades = math.log10(v_max) - math.log10(v_min)
    return np.logspace(math.log10(v_min), math.log10(v_max), int(round(decades * per_decade)) + 1)


@dataclass(frozen=True)
class ConstantEstimate:
    """Grid-supremum estimate of an expansion constant.

    Valid only on ``[v_min, v_max]``; nothing is claimed outside the grid.
    """

    name: str
    value: float
    delta: float
    v_min: float
    v_max: float
    points: int
    argmax_v: float
    c0: float | None = None
    c1: float | None = None
    level_rule: str = "two-sided"

    @property
    def label(self) -> str:
        return f"empirical over [{self.v_min:.6g}, {self.v_max:.6g}]"

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "delta": self.delta,
            "grid": {"v_min": self.v_min, "v_max": self.v_max, "points": self.points, "spacing": "log"},
            "argmax_v": self.argmax_v,
            "validity": self.label,
            "level_rule": self.level_rule,
        }
        if self.c0 is not None:
            out.update(C0=self.c0, C1=self.c1)
        return out


def _check_grid(v_grid) -> np.ndarray:
    grid = np.sort(np.asarray(v_grid, dtype=np.float64))
    if grid.size < 2:
        raise ValueError("grid needs at least two points")
    if grid[0] <= E_E:
        raise DomainError(f"grid points must exceed e^e ~ 15.15, smallest is {grid[0]}")
    if math.log10(grid[-1] / grid[0]) < 8.0 - 1e-9:
        raise ValueError("grid must span at least 8 decades")
    return grid


def _signed_sq(beta: np.ndarray) -> np.ndarray:
    # a negative radius (level below 1) satisfies any nonnegative envelope
    return np.sign(beta) * beta**2


def _mixture_radii(level: float, grid: np.ndarray, q: QuadratureParams) -> np.ndarray:
    return np.array([beta_f(v, level, q) for v in grid])


def estimate_c0(delta: float, v_grid=None, q: QuadratureParams | None = None, *, level_rule: str = "two-sided") -> ConstantEstimate:
    """Largest remainder of the asymptotic expansion over the grid.

    With ``c`` the mixture level,
    ``C0 = max_v [beta(v, c)^2/(2v) - log log v - 2.5 log log log v - log(c/(2 sqrt(pi)))]``
    and ``C1 = log(c/(2 sqrt(pi))) + C0``.  Under ``level_rule="half-delta"`` the
    offset is ``log(1/(4 delta sqrt(pi)))``.
    """
    q = q or QuadratureParams()
    grid = _check_grid(default_grid() if v_grid is None else v_grid)
    level = mixture_level(delta, level_rule)
    beta = _mixture_radii(level, grid, q)
    ll = np.log(np.log(grid))
    offset = math.log(level / (2.0 * math.sqrt(math.pi)))
    remainder = _signed_sq(beta) / (2.0 * grid) - ll - 2.5 * np.log(ll) - offset
    k = int(np.argmax(remainder))
    c0 = float(remainder[k])
    return ConstantEstimate(
        "C1", offset + c0, delta, float(grid[0]), float(grid[-1]), grid.size, float(grid[k]), c0=c0, c1=offset + c0,
        level_rule=level_rule,
    )


def estimate_c2(delta: float, v_grid=None, q: QuadratureParams | None = None, *, level_rule: str = "two-sided") -> ConstantEstimate:
    """Smallest ``C2 >= 0`` with ``beta <= sqrt((2 + C2) v log log v)`` on the grid."""
    q = q or QuadratureParams()
    grid = _check_grid(default_grid() if v_grid is None else v_grid)
    beta = _mixture_radii(mixture_level(delta, level_rule), grid, q)
    excess = _signed_sq(beta) / (grid * np.log(np.log(grid))) - 2.0
    k = int(np.argmax(excess))
    return ConstantEstimate(
        "C2", max(float(excess[k]), 0.0), delta, float(grid[0]), float(grid[-1]), grid.size, float(grid[k]),
        level_rule=level_rule,
    )


def refined_spec(variant, delta: float, v_grid=None, *, level_rule: str = "two-sided", n_min: int | None = None) -> BoundarySpec:
    """Iterated-log boundary with its constant estimated on ``v_grid``.

    ``n_min`` defaults to the first grid point, so the exact mixture radius
    covers every ``N`` the constant was not fitted on.
    """
    variant = Variant.parse(variant)
    grid = _check_grid(default_grid() if v_grid is None else v_grid)
    n_min = max(16, int(math.ceil(grid[0]))) if n_min is None else n_min
    if variant is Variant.ASYMPTOTIC_C1:
        est = estimate_c0(delta, grid, level_rule=level_rule)
        return BoundarySpec(variant, delta, c1=est.c1, n_min=n_min, level_rule=level_rule)
    if variant is Variant.SIMPLE_LIL:
        est = estimate_c2(delta, grid, level_rule=level_rule)
        return BoundarySpec(variant, delta, c2=est.value, n_min=n_min, level_rule=level_rule)
    raise ValueError(f"{variant.value} has no fitted constant")


def crossover(refined: BoundarySpec, base: BoundarySpec, n_grid) -> float | None:
    """Smallest grid ``N*`` beyond which ``refined`` stays strictly below ``base``.

    Returns ``None`` if the refined radius is not below the baseline at the
    last grid point.
    """
    n_grid = np.sort(np.asarray(n_grid))
    below = np.array([threshold(refined, n) < threshold(base, n) for n in n_grid])
    if not below[-1]:
        return None
    above = np.flatnonzero(~below)
    return float(n_grid[0] if above.size == 0 else n_grid[above[-1] + 1])
