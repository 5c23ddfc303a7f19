"""Experiment configuration (YAML).

Example::

    model:
      kind: position-based
      alphas: [0.9, 0.7, 0.5, 0.3, 0.1]
      chi: [1.0, 0.8, 0.6]
      K: 3
    boundary:
      variant: simple-lil      # baseline | mixture-exact | asymptotic-c1 | simple-lil
      delta: one_over_n        # or a number in (0, 1)
      # c1 / c2 omitted: estimated on the constants grid
    horizon: 10000
    episodes: 20
    seed: 2024
    output: runs/example

Optional sections ``constants`` (grid for C1/C2), ``boundary_table``,
``bounds`` and ``validate`` configure the other subcommands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .boundary import BoundarySpec, Variant, default_grid, estimate_c0, estimate_c2
from .env import ClickModel, ItemCatalog
from .errors import ConfigError


@dataclass
class GridConfig:
    v_min: float = 1e3
    v_max: float = 1e12
    per_decade: int = 10

    def grid(self):
        return default_grid(self.v_min, self.v_max, self.per_decade)


@dataclass
class BoundaryConfig:
    variant: Variant
    delta: float | str
    c1: float | None = None
    c2: float | None = None
    n_min: int | None = None
    level_rule: str = "two-sided"

    def effective_delta(self, n: int) -> float:
        return 1.0 / n if self.delta == "one_over_n" else float(self.delta)


@dataclass
class ExperimentConfig:
    model: ClickModel
    boundary: BoundaryConfig
    horizon: int
    seed: int
    episodes: int = 1
    output: str = "out"
    constants: GridConfig = field(default_factory=GridConfig)
    sections: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    source: str = "<config>"

    @property
    def delta(self) -> float:
        return self.boundary.effective_delta(self.horizon)

    def boundary_spec(self, delta: float | None = None) -> tuple[BoundarySpec, dict]:
        """Resolve the boundary, estimating C1/C2 when not given.

        Returns the spec and a record of how its constants were obtained.
        """
        b = self.boundary
        delta = self.delta if delta is None else delta
        info: dict = {"delta": delta, "level_rule": b.level_rule}
        c1, c2, n_min = b.c1, b.c2, b.n_min
        if b.variant is Variant.ASYMPTOTIC_C1 and c1 is None:
            est = estimate_c0(delta, self.constants.grid(), level_rule=b.level_rule)
            c1, info["constant"] = est.c1, est.to_dict()
            n_min = n_min or max(16, int(est.v_min + 0.999999))
        elif b.variant is Variant.SIMPLE_LIL and c2 is None:
            est = estimate_c2(delta, self.constants.grid(), level_rule=b.level_rule)
            c2, info["constant"] = est.value, est.to_dict()
            n_min = n_min or max(16, int(est.v_min + 0.999999))
        spec = BoundarySpec(b.variant, delta, c1=c1, c2=c2, n_min=n_min or 16, level_rule=b.level_rule)
        info.update(variant=spec.variant.value, c1=spec.c1, c2=spec.c2, n_min=spec.n_min, mixture_level=spec.mixture_level)
        return spec, info


def _line_of(node: yaml.Node | None, path: tuple) -> int | None:
    """1-based line of the YAML node at ``path`` (or of its nearest existing parent)."""
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


class _Reader:
    def __init__(self, data: dict, root: yaml.Node | None, source: str):
        self.data, self.root, self.source = data, root, source

    def error(self, path: tuple, message: str) -> ConfigError:
        line = _line_of(self.root, path)
        where = f"{self.source}:{line}" if line else self.source
        dotted = ".".join(str(p) for p in path)
        return ConfigError(f"{where}: {dotted}: {message}")

    def get(self, path: tuple, kind=None, default=..., required=True):
        node = self.data
        for key in path:
            if not isinstance(node, dict) or key not in node or node[key] is None:
                if default is not ...:
                    return default
                if required:
                    raise self.error(path, "missing required field")
                return None
            node = node[key]
        if kind is not None:
            try:
                if kind is int and (isinstance(node, bool) or float(node) != int(node)):
                    raise ValueError
                return kind(node)
            except (TypeError, ValueError):
                raise self.error(path, f"expected {kind.__name__}, got {node!r}") from None
        return node


def parse_config(text: str, source: str = "<config>", *, seed: int | None = None, output: str | None = None) -> ExperimentConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    r = _Reader(data, root, source)

    kind = r.get(("model", "kind"), str)
    alphas = r.get(("model", "alphas"))
    if not isinstance(alphas, list):
        raise r.error(("model", "alphas"), "expected a list of numbers")
    K = r.get(("model", "K"), int, default=None)
    chi = r.get(("model", "chi"), default=None, required=False)
    try:
        if kind == "cascade":
            model = ClickModel(ItemCatalog(tuple(alphas), K if K is not None else len(alphas)), "cascade")
        else:
            if not isinstance(chi, list):
                raise r.error(("model", "chi"), f"required list for {kind} model")
            model = ClickModel(ItemCatalog(tuple(alphas), K if K is not None else len(chi)), kind, tuple(chi))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise r.error(("model",), str(exc)) from None

    variant_raw = r.get(("boundary", "variant"), str)
    try:
        variant = Variant.parse(variant_raw)
    except ValueError as exc:
        raise r.error(("boundary", "variant"), str(exc)) from None
    delta = r.get(("boundary", "delta"))
    if delta != "one_over_n":
        try:
            delta = float(delta)
        except (TypeError, ValueError):
            raise r.error(("boundary", "delta"), f"expected a number or 'one_over_n', got {delta!r}") from None
        if not 0.0 < delta < 1.0:
            raise r.error(("boundary", "delta"), f"must lie in (0, 1), got {delta}")
    boundary = BoundaryConfig(
        variant,
        delta,
        c1=r.get(("boundary", "c1"), float, default=None),
        c2=r.get(("boundary", "c2"), float, default=None),
        n_min=r.get(("boundary", "n_min"), int, default=None),
        level_rule=r.get(("boundary", "level_rule"), str, default="two-sided"),
    )
    if boundary.level_rule not in ("two-sided", "half-delta"):
        raise r.error(("boundary", "level_rule"), "expected 'two-sided' or 'half-delta'")

    horizon = r.get(("horizon",), int)
    if horizon < 1:
        raise r.error(("horizon",), "must be >= 1")
    if seed is None:
        seed = r.get(("seed",), int)
    episodes = r.get(("episodes",), int, default=1)
    if episodes < 1:
        raise r.error(("episodes",), "must be >= 1")
    constants = GridConfig(
        v_min=r.get(("constants", "v_min"), float, default=1e3),
        v_max=r.get(("constants", "v_max"), float, default=1e12),
        per_decade=r.get(("constants", "per_decade"), int, default=10),
    )
    cfg = ExperimentConfig(
        model=model, boundary=boundary, horizon=horizon, seed=int(seed), episodes=episodes,
        output=output or r.get(("output",), str, default="out"), constants=constants,
        sections={k: data.get(k) or {} for k in ("boundary_table", "bounds", "validate")}, raw=data, source=source,
    )
    if boundary.c2 is not None and boundary.c2 < -2.0:
        raise r.error(("boundary", "c2"), f"must be >= -2, got {boundary.c2}")
    if boundary.n_min is not None and boundary.n_min < 16:
        raise r.error(("boundary", "n_min"), f"must be >= 16, got {boundary.n_min}")
    if boundary.delta == "one_over_n" and horizon < 2:
        raise r.error(("boundary", "delta"), "one_over_n needs horizon >= 2")
    try:
        constants.grid()
    except ValueError as exc:
        raise r.error(("constants",), str(exc)) from None
    return cfg


def load_config(path, *, seed: int | None = None, output: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), seed=seed, output=output)
