"""Command-line entry point: ``toprank-lab <subcommand> [options]``.

Exit status: 0 on success, 1 when a self-check fails (validation bound
exceeded, assumption violated), 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, plots, theory
from .boundary import BoundarySpec, Variant, estimate_c0, estimate_c2, refined_spec, threshold
from .config import ExperimentConfig, GridConfig, load_config
from .env import check_assumptions
from .errors import ConfigError, ToprankLabError
from .montecarlo import failure_event_rate, simulate_crossings, standard_suite
from .seeding import stream
from .toprank.batch import run_episodes

EXIT_OK, EXIT_CHECK, EXIT_ERROR = 0, 1, 2


def _num(x) -> str:
    """Shortest round-tripping text for a number; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else v if isinstance(v, str) else _num(v) for v in row])
    return path


def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    out = Path(args.out or (cfg.output if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(args, cfg: ExperimentConfig | None) -> dict:
    return {
        "version": __version__,
        "command": args.command,
        "seed": cfg.seed if cfg else args.seed,
        "config_path": cfg.source if cfg else None,
        "config": cfg.raw if cfg else None,
    }


@functools.lru_cache(maxsize=None)
def _estimates(delta: float, grid: tuple, level_rule: str):
    g = np.array(grid)
    return estimate_c0(delta, g, level_rule=level_rule), estimate_c2(delta, g, level_rule=level_rule)


def _grid(cfg: ExperimentConfig | None) -> GridConfig:
    return cfg.constants if cfg else GridConfig()


def _level_rule(cfg: ExperimentConfig | None) -> str:
    return cfg.boundary.level_rule if cfg else "two-sided"


def _spec_for(variant: Variant, delta: float, cfg: ExperimentConfig | None) -> BoundarySpec:
    """Boundary of the given family at ``delta``; constants from the config or the estimation grid."""
    rule = _level_rule(cfg)
    if cfg is not None and cfg.boundary.variant is variant:
        explicit = cfg.boundary.c1 if variant is Variant.ASYMPTOTIC_C1 else cfg.boundary.c2
        if explicit is not None:
            return BoundarySpec(variant, delta, c1=cfg.boundary.c1, c2=cfg.boundary.c2,
                                n_min=cfg.boundary.n_min or 16, level_rule=rule)
    if variant in (Variant.ASYMPTOTIC_C1, Variant.SIMPLE_LIL):
        n_min = cfg.boundary.n_min if cfg else None
        return refined_spec(variant, delta, _grid(cfg).grid(), level_rule=rule, n_min=n_min)
    return BoundarySpec(variant, delta, level_rule=rule)


def _theory_bounds(cfg: ExperimentConfig, spec: BoundarySpec) -> dict:
    model, n, delta = cfg.model, cfg.horizon, spec.delta
    c0, c2 = _estimates(delta, tuple(_grid(cfg).grid()), _level_rule(cfg))
    variants = {
        "original": theory.BoundVariant.original(),
        "refined-c1": theory.BoundVariant.refined_c1(spec.c1 if spec.c1 is not None else c0.c1),
        "refined-c2": theory.BoundVariant.refined_c2(spec.c2 if spec.c2 is not None else c2.value),
    }
    out = {}
    for name, v in variants.items():
        entry = {"constant": v.constant}
        try:
            entry["gapfree"] = theory.regret_bound_gapfree(model.K, model.L, n, delta, v)
            entry["gapped"] = (
                theory.regret_bound_gapped(model.catalog, n, delta, v) if model.catalog.strictly_decreasing() else None
            )
        except ToprankLabError as exc:
            entry["error"] = str(exc)
        out[name] = entry
    matching = theory.variant_for(spec)
    out["matching"] = matching.tag.value if matching else "original"
    return out


# --- subcommands -------------------------------------------------------------


def cmd_run(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    spec, info = cfg.boundary_spec()
    n, E = cfg.horizon, cfg.episodes
    res = run_episodes(cfg.model, spec, n, E, cfg.seed, threads=args.threads, record=True)
    cumulative = np.cumsum(res.increments, axis=1)
    t = np.arange(1, n + 1)

    with (out / "regret.csv").open("w", newline="") as fh:
        fh.write("episode,t,expected_regret_increment,cumulative_regret,edges_added,wrong_edge_flag\n")
        for e in range(E):
            fw = int(res.first_wrong[e])
            wrong = (t >= fw) if fw else np.zeros(n, dtype=bool)
            inc, cum, added = res.increments[e].tolist(), cumulative[e].tolist(), res.edges_added[e].tolist()
            fh.writelines(
                f"{e},{t[k]},{inc[k]!r},{cum[k]!r},{added[k]},{int(wrong[k])}\n" for k in range(n)
            )

    bounds = _theory_bounds(cfg, spec)
    gapfree = bounds.get(bounds["matching"], {}).get("gapfree")
    summary = {
        **_provenance(args, cfg),
        "effective_delta": spec.delta,
        "boundary": info,
        "horizon": n,
        "episodes": E,
        "optimal_expected_clicks": res.optimal,
        "theory_bounds": bounds,
        "counters": {
            "episodes_with_wrong_edge": int(res.wrong.sum()),
            "block_rank_violations": int(res.block_rank_violations.sum()),
            "pair_sum_checked": res.pair_sum_checked,
            "pair_sum_violations": int(res.pair_sum_violations.sum()),
            "episodes_above_gapfree_bound": None if gapfree is None else int((res.regret > gapfree).sum()),
        },
        "regret": {
            "mean": float(res.regret.mean()),
            "median": float(np.median(res.regret)),
            "max": float(res.regret.max()),
        },
        "per_episode": [
            {
                "episode": e,
                "regret": float(res.regret[e]),
                "first_wrong_round": int(res.first_wrong[e]) or None,
                "block_rank_violations": int(res.block_rank_violations[e]),
                "pair_sum_violations": int(res.pair_sum_violations[e]),
                "edges": sorted([int(j), int(i)] for j, i in zip(*np.nonzero(res.adj[e]))),
                "S": res.S[e].tolist(),
                "N": res.N[e].tolist(),
            }
            for e in range(E)
        ],
    }
    _write_json(out / "summary.json", summary)
    if args.figures:
        plots.regret_curves(cumulative, out / "regret.png", gapfree, title=f"{spec.label()}, n={n}")
    print(f"run: {E} episodes x {n} rounds, mean regret {summary['regret']['mean']:.3f} -> {out}")
    return EXIT_OK


def _n_grid(section: dict, default) -> list[int]:
    if "n_grid" in section:
        grid = [int(x) for x in section["n_grid"]]
    else:
        grid = default
    if not grid or min(grid) < 1:
        raise ConfigError("n_grid entries must be >= 1")
    return sorted(set(grid))


def _delta_arg(args, cfg: ExperimentConfig | None, section: dict | None = None, fallback: float = 0.01):
    if args.delta is not None:
        return args.delta
    if section and "delta" in section:
        return section["delta"]
    return cfg.delta if cfg else fallback


def _check_delta(delta) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    return delta


def cmd_boundary(args, cfg: ExperimentConfig | None) -> int:
    out = _out_dir(args, cfg)
    section = cfg.sections.get("boundary_table", {}) if cfg else {}
    delta = _check_delta(_delta_arg(args, cfg, section))
    variants = [Variant.parse(v) for v in (args.variants or section.get("variants") or [v.value for v in Variant])]
    default = sorted({int(round(x)) for x in np.logspace(0, 6, 19)} | {16})
    grid = _n_grid({"n_grid": args.n_grid} if args.n_grid else section, default)
    rows = []
    meta = {}
    for v in variants:
        spec = _spec_for(v, delta, cfg)
        meta[v.value] = {"c1": spec.c1, "c2": spec.c2, "n_min": spec.n_min, "mixture_level": spec.mixture_level}
        rows.extend({"variant": v.value, "delta": delta, "N": n, "threshold": threshold(spec, n)} for n in grid)
    _write_csv(out / "boundary.csv", ["variant", "delta", "N", "threshold"],
               ([r["variant"], r["delta"], r["N"], r["threshold"]] for r in rows))
    _write_json(out / "boundary.json", {**_provenance(args, cfg), "delta": delta, "variants": meta,
                                        "constants_grid": _grid_meta(cfg)})
    if args.figures:
        plots.boundary_curves(rows, out / "boundary.png")
    print(f"boundary: {len(rows)} rows -> {out / 'boundary.csv'}")
    return EXIT_OK


def _grid_meta(cfg) -> dict:
    g = _grid(cfg)
    return {"v_min": g.v_min, "v_max": g.v_max, "per_decade": g.per_decade, "label": f"empirical over [{g.v_min:g}, {g.v_max:g}]"}


def cmd_constants(args, cfg: ExperimentConfig | None) -> int:
    out = _out_dir(args, cfg)
    delta = _check_delta(_delta_arg(args, cfg))
    c0, c2 = _estimates(delta, tuple(_grid(cfg).grid()), _level_rule(cfg))
    payload = {
        **_provenance(args, cfg),
        "delta": delta,
        "level_rule": _level_rule(cfg),
        "C0": c0.c0,
        "C1": c0.c1,
        "C2": c2.value,
        "estimates": {"C1": c0.to_dict(), "C2": c2.to_dict()},
        "grid": _grid_meta(cfg),
    }
    _write_json(out / "constants.json", payload)
    print(f"constants (delta={delta:g}, {c0.label}): C0={c0.c0:.6g} C1={c0.c1:.6g} C2={c2.value:.6g}")
    return EXIT_OK


def cmd_bounds(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    section = cfg.sections.get("bounds", {})
    # without an explicit delta, the config's boundary delta applies per row ("one_over_n" -> 1/n)
    raw_delta = args.delta if args.delta is not None else section.get("delta", cfg.boundary.delta)
    grid = _n_grid({"n_grid": args.n_grid} if args.n_grid else section, [10**k for k in range(2, 9)])
    model, rule = cfg.model, _level_rule(cfg)
    rows = []
    for n in grid:
        delta = 1.0 / n if raw_delta == "one_over_n" else _check_delta(raw_delta)
        c0, c2 = _estimates(delta, tuple(_grid(cfg).grid()), rule)
        for v in (theory.BoundVariant.original(), theory.BoundVariant.refined_c1(c0.c1),
                  theory.BoundVariant.refined_c2(c2.value)):
            try:
                gapfree = theory.regret_bound_gapfree(model.K, model.L, n, delta, v)
                gapped = theory.regret_bound_gapped(model.catalog, n, delta, v) if model.catalog.strictly_decreasing() else None
            except ToprankLabError:
                continue
            rows.append({"variant": v.tag.value, "n": n, "delta": delta, "constant": v.constant,
                         "gapfree": gapfree, "gapped": gapped})
    header = ["variant", "n", "delta", "constant", "gapfree", "gapped"]
    _write_csv(out / "bounds.csv", header, ([r[h] for h in header] for r in rows))
    _write_json(out / "bounds.json", {**_provenance(args, cfg), "K": model.K, "L": model.L,
                                      "constants_grid": _grid_meta(cfg)})
    if args.figures and rows:
        plots.bound_curves(rows, out / "bounds.png")
    print(f"bounds: {len(rows)} rows -> {out / 'bounds.csv'}")
    return EXIT_OK


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    section = cfg.sections.get("validate", {})
    trials = int(section.get("trials", 10_000))
    T = int(section.get("horizon", 10_000))
    deltas = [_check_delta(d) for d in section.get("deltas", [0.1, 0.05, 0.01])]
    variants = [Variant.parse(v) for v in section.get("variants", [v.value for v in Variant])]
    keep = bool(section.get("crossing_times", False))
    reports = []
    times = []
    for proc in standard_suite(T):
        for delta in deltas:
            specs = [_spec_for(v, delta, cfg) for v in variants]
            for spec, rep in zip(specs, simulate_crossings(proc, specs, trials, cfg.seed, keep_times=keep)):
                reports.append(rep)
                if keep:
                    times.append((rep.label, rep.crossing_times))
    failure = section.get("failure") or {}
    if failure:
        n = int(failure.get("horizon", cfg.horizon))
        episodes = int(failure.get("episodes", 200))
        f_delta = _check_delta(failure.get("delta", cfg.delta))
        for v in failure.get("variants", ["baseline", "simple-lil"]):
            spec = _spec_for(Variant.parse(v), f_delta, cfg)
            reports.append(failure_event_rate(cfg.model, spec, n, episodes, cfg.seed, threads=args.threads))
    dicts = [r.to_dict() for r in reports]
    ok = all(r.passed for r in reports)
    _write_json(out / "validate.json", {
        **_provenance(args, cfg), "passed": ok, "rule": "frequency <= bound + 3 sigma (sigma at the bound)",
        "note": "finite horizon: frequencies under-estimate the time-uniform crossing probability",
        "reports": dicts,
    })
    if keep:
        _write_csv(out / "crossing_times.csv", ["label", "trial", "crossing_time"],
                   ([label, k, int(x)] for label, arr in times for k, x in enumerate(arr)))
    if args.figures:
        plots.crossing_summary(dicts, out / "validate.png")
    for d in dicts:
        print(f"{'PASS' if d['passed'] else 'FAIL'} {d['label']}: {d['crossings']}/{d['trials']} = "
              f"{d['frequency']:.4g} (bound {d['bound']:.4g}, 3sigma {3 * d['sigma']:.2g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_assumptions(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    spot = cfg.raw.get("assumptions", {}) or {}
    report = check_assumptions(cfg.model, spot_check=spot.get("spot_check"), rng=stream(cfg.seed, 0))
    _write_json(out / "assumptions.json", {**_provenance(args, cfg), **report.to_dict()})
    print(f"assumptions: {'pass' if report.passed else 'FAIL'} ({report.mode}, {report.permutations_checked} permutations) {report.checks}")
    return EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {
    "run": (cmd_run, True, "simulate TopRank episodes; writes regret.csv and summary.json"),
    "boundary": (cmd_boundary, False, "tabulate confidence radii; writes boundary.csv"),
    "validate": (cmd_validate, True, "Monte-Carlo crossing and failure-event checks; writes validate.json"),
    "bounds": (cmd_bounds, True, "regret bounds over an n-grid; writes bounds.csv"),
    "constants": (cmd_constants, False, "estimate C0, C1, C2 on the v-grid; writes constants.json"),
    "assumptions": (cmd_assumptions, True, "brute-force check of the click-model assumptions"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toprank-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_config, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=needs_config, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (output does not depend on it)")
        p.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG figures")
        if name in ("boundary", "constants", "bounds"):
            p.add_argument("--delta", type=float, help="confidence parameter (overrides the config)")
        if name in ("boundary", "bounds"):
            p.add_argument("--n-grid", type=int, nargs="+", help="N (or n) values to tabulate")
        if name == "boundary":
            p.add_argument("--variants", nargs="+", help="subset of baseline, mixture-exact, asymptotic-c1, simple-lil")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config, seed=args.seed) if args.config else None
        return handler(args, cfg)
    except (ToprankLabError, ValueError, OSError) as exc:
        print(f"toprank-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
