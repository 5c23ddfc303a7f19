import csv
import json

import pytest

from toprank_lab.cli import main
from toprank_lab.config import parse_config
from toprank_lab.errors import ConfigError

BASE = """\
model:
  kind: position-based
  alphas: [0.9, 0.6, 0.3, 0.1]
  chi: [1.0, 0.7]
  K: 2
boundary:
  variant: baseline
  delta: {delta}
horizon: {n}
episodes: {episodes}
seed: 11
constants:
  v_min: 1.0e3
  v_max: 1.0e11
  per_decade: 2
validate:
  trials: 200
  horizon: 300
  deltas: [0.1]
  variants: [baseline, mixture-exact]
  crossing_times: true
  failure:
    horizon: 200
    episodes: 8
    delta: 0.01
    variants: [baseline]
"""


@pytest.fixture
def config(tmp_path):
    def make(delta="0.05", n=400, episodes=3, name="cfg.yaml", text=None):
        path = tmp_path / name
        path.write_text(text if text is not None else BASE.format(delta=delta, n=n, episodes=episodes))
        return path
    return make


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_is_byte_identical_across_runs_and_threads(config, tmp_path):
    cfg = config()
    outs = []
    for k, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"out{k}"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--threads", str(threads), "--no-figures"]) == 0
        outs.append((out / "regret.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    rows = _rows(tmp_path / "out0" / "regret.csv")
    assert list(rows[0]) == ["episode", "t", "expected_regret_increment", "cumulative_regret", "edges_added",
                             "wrong_edge_flag"]
    assert len(rows) == 3 * 400


def test_seed_flag_overrides(config, tmp_path):
    cfg = config()
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--no-figures"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "12", "--no-figures"])
    assert (tmp_path / "a" / "regret.csv").read_bytes() != (tmp_path / "b" / "regret.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 12


def test_summary_contents(config, tmp_path):
    cfg = config(delta="one_over_n", n=10_000, episodes=1)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["effective_delta"] == pytest.approx(1e-4)
    assert s["config"]["boundary"]["delta"] == "one_over_n"
    assert s["version"] and s["seed"] == 11
    assert set(s["theory_bounds"]) >= {"original", "refined-c1", "refined-c2"}
    ep = s["per_episode"][0]
    assert len(ep["S"]) == 4 and "edges" in ep
    assert (out / "regret.png").exists()


def test_missing_alphas_names_field(config, capsys):
    text = BASE.format(delta="0.05", n=10, episodes=1).replace("  alphas: [0.9, 0.6, 0.3, 0.1]\n", "")
    cfg = config(text=text)
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "model.alphas" in err and "cfg.yaml:" in err


def test_config_diagnostics():
    good = BASE.format(delta="0.05", n=10, episodes=1)
    with pytest.raises(ConfigError, match=r":8: boundary.delta"):
        parse_config(good.replace("delta: 0.05", "delta: 2"), "x.yaml")
    with pytest.raises(ConfigError, match="seed: missing"):
        parse_config(good.replace("seed: 11\n", ""), "x.yaml")
    with pytest.raises(ConfigError, match="boundary.variant"):
        parse_config(good.replace("variant: baseline", "variant: nope"), "x.yaml")
    with pytest.raises(ConfigError, match="YAML syntax"):
        parse_config("model: [", "x.yaml")
    with pytest.raises(ConfigError, match="horizon: expected int"):
        parse_config(good.replace("horizon: 10", "horizon: ten"), "x.yaml")
    cfg = parse_config(good, "x.yaml", seed=99)
    assert cfg.seed == 99 and cfg.model.K == 2


def test_boundary_table(tmp_path):
    out = tmp_path / "b"
    assert main(["boundary", "--delta", "0.01", "--out", str(out), "--n-grid", "1", "10", "100", "1000", "5000",
                 "--no-figures"]) == 0
    rows = _rows(out / "boundary.csv")
    assert list(rows[0]) == ["variant", "delta", "N", "threshold"]
    by = {}
    for r in rows:
        by.setdefault(r["variant"], []).append(float(r["threshold"]))
    mix_at_1 = by["mixture-exact"][0]
    assert by["simple-lil"][0] == mix_at_1 and by["asymptotic-c1"][0] == mix_at_1
    assert by["baseline"][2] == pytest.approx(40.29, abs=0.005)
    for col in by.values():
        assert all(a <= b for a, b in zip(col, col[1:]))


def test_constants_command(tmp_path):
    out = tmp_path / "c"
    assert main(["constants", "--delta", "0.01", "--out", str(out)]) == 0
    d = json.loads((out / "constants.json").read_text())
    assert {"C0", "C1", "C2", "grid"} <= set(d)
    assert d["C1"] == pytest.approx(8.748696396342448, rel=1e-6)
    assert d["estimates"]["C2"]["validity"].startswith("empirical over")


def test_bounds_command(config, tmp_path):
    out = tmp_path / "bo"
    assert main(["bounds", "--config", str(config()), "--out", str(out), "--n-grid", "100", "10000"]) == 0
    rows = _rows(out / "bounds.csv")
    assert {r["variant"] for r in rows} == {"original", "refined-c1", "refined-c2"}
    assert len(rows) == 6
    assert (out / "bounds.png").exists()


def test_assumptions_command(config, tmp_path):
    out = tmp_path / "a"
    assert main(["assumptions", "--config", str(config()), "--out", str(out)]) == 0
    assert json.loads((out / "assumptions.json").read_text())["passed"]
    bad = BASE.format(delta="0.05", n=10, episodes=1).replace("kind: position-based", "kind: factored").replace(
        "chi: [1.0, 0.7]", "chi: [0.2, 0.9]")
    bad_path = tmp_path / "bad.yaml"
    bad_path.write_text(bad)
    assert main(["assumptions", "--config", str(bad_path), "--out", str(out)]) == 1


def test_validate_command(config, tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "--config", str(config()), "--out", str(out)]) == 0
    d = json.loads((out / "validate.json").read_text())
    assert d["passed"] and len(d["reports"]) == 4 * 2 + 1
    assert _rows(out / "crossing_times.csv")
    assert (out / "validate.png").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["boundary", "--delta", "1.5", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["run"])  # --config is required
