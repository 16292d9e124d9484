import json
import math

import pytest

from rotor_gibbs.errors import UsageError
from rotor_gibbs.harness import experiments
from rotor_gibbs.harness.cli import main
from rotor_gibbs.harness.config import EXPERIMENTS, SCHEMAS, dumps, load_config, parse_config
from rotor_gibbs.harness.config import tomllib
from rotor_gibbs.harness.experiments import run_experiment
from rotor_gibbs.harness.plotdata import emit_plot_data


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_for_every_experiment():
    for name in EXPERIMENTS:
        cfg = parse_config({name: {}}, name)
        assert set(cfg.params) == set(SCHEMAS[name]) | {"seed"}


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_config_roundtrip(name):
    cfg = parse_config({name: {"seed": 7}}, name)
    again = parse_config(tomllib.loads(dumps(cfg)), name)
    assert again == cfg


def test_config_rejections():
    with pytest.raises(UsageError, match="unknown key"):
        parse_config({"dobrushin": {"betaJ": [0.1]}}, "dobrushin")
    with pytest.raises(UsageError, match="unknown section"):
        parse_config({"dobrushin": {}, "other": {}}, "dobrushin")
    with pytest.raises(UsageError, match="no \\[metastability\\]"):
        parse_config({"dobrushin": {}}, "metastability")
    with pytest.raises(UsageError):
        parse_config({"metastability": {"L": 5}}, "metastability")
    with pytest.raises(UsageError):
        parse_config({"metastability": {"sweeps": 10, "burn_in": 20}}, "metastability")
    with pytest.raises(UsageError):
        parse_config({"kernel-table": {"times": [1.0, -1.0]}}, "kernel-table")
    with pytest.raises(UsageError):
        parse_config({"kernel-table": {"n_delta": 2.5}}, "kernel-table")
    with pytest.raises(UsageError):
        parse_config({"dobrushin": {"seed": -1}}, "dobrushin")
    with pytest.raises(UsageError):
        parse_config({}, "nonexistent")


def test_load_config_errors(tmp_path):
    with pytest.raises(UsageError):
        load_config(tmp_path / "missing.toml", "dobrushin")
    with pytest.raises(UsageError):
        load_config(write(tmp_path, "[dobrushin\n"), "dobrushin")


def test_dobrushin_run(tmp_path):
    cfg = parse_config({"dobrushin": {"beta_J": [0.1, 0.15, 0.2, 0.25, 0.3]}}, "dobrushin")
    rec = run_experiment(cfg, tmp_path)
    assert rec.status == "ok"
    rows = (tmp_path / "dobrushin.csv").read_text().splitlines()
    assert rows[0] == "beta_J,dimension,sum,satisfied"
    sat = [r.split(",")[3] for r in rows[1:]]
    assert sat == ["1", "1", "1", "0", "0"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "ok" and "dobrushin.csv" in man["files"] and "config.toml" in man["files"]
    assert man["seed"] == 0 and len(man["input_hash"]) == 64 and man["timings"]["wall_seconds"] >= 0


def test_kernel_table_value(tmp_path):
    cfg = parse_config({"kernel-table": {"times": [1.0], "n_delta": 5}}, "kernel-table")
    run_experiment(cfg, tmp_path)
    first = (tmp_path / "kernel_table.csv").read_text().splitlines()[1].split(",")
    assert float(first[1]) == 0.0 and float(first[2]) == pytest.approx(0.2821240, abs=5e-8)


def test_csv_uses_17_digits(tmp_path):
    cfg = parse_config({"kernel-table": {"times": [1.0], "n_delta": 3}}, "kernel-table")
    run_experiment(cfg, tmp_path)
    row = (tmp_path / "kernel_table.csv").read_text().splitlines()[2].split(",")
    assert float(row[1]) == math.pi / 2 and len(row[1].replace(".", "").lstrip("0")) == 17


def test_empty_metastability(tmp_path):
    cfg = parse_config({"metastability": {"L": 4, "sweeps": 0, "burn_in": 0}}, "metastability")
    rec = run_experiment(cfg, tmp_path)
    assert rec.status == "ok"
    series = sorted(tmp_path.glob("series_*.csv"))
    assert len(series) == 4
    assert all(f.read_text() == "sweep,M_LR,M_UD,energy,acc\n" for f in series)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert all(c["passed"] is None for c in man["checks"])


def test_manifest_written_before_data(tmp_path, monkeypatch):
    seen = {}

    def spy(cfg, out, threads):
        seen["manifest"] = json.loads((out / "manifest.json").read_text())
        seen["files"] = sorted(p.name for p in out.iterdir())
        return []

    monkeypatch.setitem(experiments.EXPERIMENT_FUNCS, "dobrushin", spy)
    run_experiment(parse_config({"dobrushin": {}}, "dobrushin"), tmp_path)
    assert seen["manifest"]["status"] == "running"
    assert seen["files"] == ["config.toml", "manifest.json"]


def test_numeric_error_recorded(tmp_path, monkeypatch):
    def boom(cfg, out, threads):
        raise FloatingPointError("non-finite drift at site 3")

    monkeypatch.setitem(experiments.EXPERIMENT_FUNCS, "dobrushin", boom)
    cfgfile = write(tmp_path, "[dobrushin]\n")
    assert main(["dobrushin", "--config", str(cfgfile), "--out", str(tmp_path / "o")]) == 3
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "error" and "site 3" in man["error"]


def test_cli_exit_codes(tmp_path, capsys):
    ok = write(tmp_path, "[dobrushin]\nbeta_J = [0.1, 0.3]\n", "ok.toml")
    assert main(["dobrushin", "--config", str(ok), "--out", str(tmp_path / "a")]) == 0
    bad = write(tmp_path, "[dobrushin]\nbogus = 1\n", "bad.toml")
    assert main(["dobrushin", "--config", str(bad), "--out", str(tmp_path / "b")]) == 2
    assert not (tmp_path / "b").exists()
    assert main(["dobrushin", "--config", str(ok), "--threads", "0"]) == 2
    failing = write(tmp_path, "[polymer-check]\nn_systems = 3\nmax_order = 1\ntolerance = 1e-15\n", "f.toml")
    assert main(["polymer-check", "--config", str(failing), "--out", str(tmp_path / "c")]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "PASS" in out


def test_cli_seed_override(tmp_path):
    cfg = write(tmp_path, "[polymer-check]\nn_systems = 3\n")
    main(["polymer-check", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"])
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 5 and "seed = 5" in (tmp_path / "a" / "config.toml").read_text()


def test_plot_data_single_column(tmp_path):
    src = write(tmp_path, "value\n1.5\n2.5\n", "col.csv")
    made = emit_plot_data([src], tmp_path / "dat")
    lines = made[0].read_text().splitlines()
    assert lines == ["# index value", "0 1.5", "1 2.5"]


def test_plot_data_series_and_badprobe(tmp_path):
    (tmp_path / "series_a.csv").write_text("sweep,M_LR,M_UD,energy,acc\n1,0.5,0,0,1\n2,0.7,0,0,1\n")
    (tmp_path / "series_b.csv").write_text("sweep,M_LR,M_UD,energy,acc\n1,0.3,0,0,1\n2,0.1,0,0,1\n")
    (tmp_path / "badprobe.csv").write_text(
        "beta_J,L,mean_xi,stderr_xi,mean_eta,stderr_eta,gap,stderr\n20,8,1,0,-1,0,2,0.01\n")
    out = tmp_path / "dat"
    emit_plot_data([tmp_path], out)
    agg = [l for l in (out / "series_aggregate.dat").read_text().splitlines() if not l.startswith("#")]
    s, mean, se, n = agg[0].split()
    assert (int(s), float(mean), int(n)) == (1, 0.4, 2)
    assert float(se) == pytest.approx(0.1)
    assert (out / "series_a_mlr.dat").read_text().splitlines()[1:] == ["1 0.5", "2 0.7"]
    assert "8 2 0.01" in (out / "badprobe_gap.dat").read_text().splitlines()


def test_plot_data_missing_input(tmp_path):
    with pytest.raises(UsageError):
        emit_plot_data([tmp_path / "nope.csv"])
    assert main(["plot-data", str(tmp_path / "nope.csv")]) == 2
