import json

import pytest

from qlandscape.harness.cli import main
from qlandscape.harness.config import ConfigError, cell_seed, load_config
from qlandscape.harness.tables import PROVENANCE_COLUMNS, VERSION, read_table

SMALL_BENCH = {
    "problem": {"Q": 2},
    "grid": {"N": 2, "T": 1.0, "u_max": 1.0},
    "method": {
        "n_train": [8, 16],
        "pool_train": 64,
        "pool_test": 32,
        "n_test": 16,
        "repeats": 2,
        "fourier_candidates": [3, 5],
        "taylor_max_degree": 3,
    },
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(args):
    return main(args + ["--no-figures"])


# -- configuration -----------------------------------------------------------------------


def test_defaults_load_and_hash_is_stable():
    a = load_config("optimize")
    b = load_config("optimize")
    assert a.config_hash == b.config_hash and len(a.config_hash) == 16
    assert load_config("optimize", overrides={"seed": 3}).config_hash != a.config_hash


def test_output_directory_does_not_change_hash():
    assert load_config("optimize", overrides={"output": "x"}).config_hash == load_config("optimize").config_hash


def test_empty_config_rejected(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(ConfigError):
        load_config("spectrum", str(empty))
    with pytest.raises(ConfigError):
        load_config("spectrum", write_config(tmp_path, {}))


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"experiment": "optimize"},
        {"problem": {"initial": "2"}},
        {"problem": {"observable": "energy"}},
        {"grid": {"N": 0}},
        {"grid": {"T": 1.0, "dt": 0.1}},
        {"seed": -1},
    ],
)
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config("spectrum", write_config(tmp_path, data))


def test_user_time_replaces_default_time(tmp_path):
    cfg = load_config("optimize", write_config(tmp_path, {"grid": {"dt": 0.25}}))
    assert cfg.grid["dt"] == 0.25 and "T" not in cfg.grid


def test_random_state_selector_accepted(tmp_path):
    cfg = load_config("optimize", write_config(tmp_path, {"problem": {"initial": "random:7"}}))
    assert cfg.problem["initial"] == "random:7"


def test_cell_seed_depends_on_key():
    assert cell_seed(0, "a", 1) == cell_seed(0, "a", 1)
    assert cell_seed(0, "a", 1) != cell_seed(0, "a", 2) != cell_seed(1, "a", 1)
    assert 0 <= cell_seed(2**64 - 1, "x") < 2**64


# -- CLI exit codes ---------------------------------------------------------------------------


def test_empty_config_exits_with_usage_error(tmp_path):
    empty = tmp_path / "e.json"
    empty.write_text("")
    assert run(["spectrum", "--config", str(empty), "--out", str(tmp_path / "o")]) == 1


def test_missing_config_file(tmp_path):
    assert run(["spectrum", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_bad_flags_exit_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["optimize", "--prune", "maybe"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["optimize", "--seed", "-4"])
    assert info.value.code == 1


def test_capacity_error_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"Q": 13}})
    assert run(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_failed_hard_check_exit_code(tmp_path, monkeypatch):
    from qlandscape.harness import cli
    from qlandscape.harness.experiments import ExperimentResult, run_taylor_order

    def failing(cfg, threads=1):
        res = run_taylor_order(cfg, threads)
        return ExperimentResult(res.experiment, res.tables, res.summary, ["pruning_soundness"])

    monkeypatch.setitem(cli.RUNNERS, "taylor-order", failing)
    assert run(["taylor-order", "--out", str(tmp_path / "o")]) == 3
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["failures"] == ["pruning_soundness"]


def test_taylor_order_default_run(tmp_path):
    out = tmp_path / "t"
    assert run(["taylor-order", "--out", str(out)]) == 0
    rows = read_table(out / "taylor_order.csv")
    assert any(r["epsilon"] == "0.001" and r["u_max_L"] == "1.0" and r["p_star"] == "5" for r in rows)


def test_spectrum_writes_tables_and_schema(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"Q": 2, "alpha_d": 1.0}, "method": {"n": 4}})
    out = tmp_path / "spec"
    assert run(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    rows = read_table(out / "spectrum.csv")
    assert rows and rows[0]["version"] == VERSION
    schema = json.loads((out / "spectrum.schema.json").read_text())
    names = [c["name"] for c in schema["columns"]]
    assert names == list(rows[0].keys())
    assert all(c in names for c, _ in PROVENANCE_COLUMNS)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config_hash"] == rows[0]["config_hash"]
    assert summary["cells"][0]["max_imag"] < 1e-10


def test_optimize_flags_and_figures(tmp_path):
    out = tmp_path / "opt"
    cfg = write_config(tmp_path, {"method": {"grid_resolution": 21}})
    assert main(["optimize", "--config", cfg, "--out", str(out), "--budget", "120", "--prune", "off"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["evaluations"] <= 120 and summary["prune"] is False
    assert (out / "optimize_incumbent.png").exists()
    assert len(read_table(out / "optimize_trace.csv")) == summary["evaluations"]


def test_bounds_audit_subset(tmp_path, capsys):
    cfg = write_config(tmp_path, {"method": {"tasks": ["lipschitz", "closed_form"], "samples": 100}})
    assert run(["bounds-audit", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert "lipschitz" in capsys.readouterr().out


# -- determinism ---------------------------------------------------------------------------------


def test_surrogate_bench_is_byte_reproducible(tmp_path):
    cfg = write_config(tmp_path, SMALL_BENCH)
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        assert run(["surrogate-bench", "--config", cfg, "--out", str(out), "--seed", "11", "--threads", threads]) == 0
        outs.append((out / "surrogate_bench.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "d"
    assert run(["surrogate-bench", "--config", cfg, "--out", str(other), "--seed", "12"]) == 0
    assert (other / "surrogate_bench.csv").read_bytes() != outs[0]


def test_kernel_bandwidth_summary(tmp_path):
    data = dict(SMALL_BENCH, method=dict(SMALL_BENCH["method"], omega_ker_ratios=[0.3, 1.0]))
    out = tmp_path / "kb"
    assert run(["kernel-bandwidth", "--config", write_config(tmp_path, data), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["per_seed_tradeoff"]["0.3"]["repeats"] == 2
