import csv
import io
import json

import pytest
import yaml

import rno.cli as cli
from rno.config import ConfigError, config_hash, dump_scenario, load_scenario, scenario_from_dict
from rno.experiments import RESULT_FIELDS
from rno.plotting import ResultsFormatError, read_results, series

MINIMAL = {
    "schema_version": 1,
    "scenario": {"id": "mini", "trials": 1, "seed_base": 5, "schemes": ["IR_IN"], "solver": {"max_iter": 2}},
    "network": {"L": 1, "K": 1, "N_BS": 1, "M": 1, "N_RIS": 2},
}


def write(tmp_path, data, name="s.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def with_(data, **scenario):
    return {**data, "scenario": {**data["scenario"], **scenario}}


def rows_of(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


class TestConfig:
    def test_round_trip(self, tmp_path):
        sc = load_scenario(write(tmp_path, MINIMAL), env={})
        again = scenario_from_dict(yaml.safe_load(dump_scenario(sc)), env={})
        assert again == sc
        assert config_hash(again) == config_hash(sc)

    def test_seed_from_environment(self):
        assert scenario_from_dict(MINIMAL, env={"RNO_SEED": "42"}).seed_base == 42
        assert scenario_from_dict(MINIMAL, env={}).seed_base == 5

    def test_bad_seed_env(self):
        with pytest.raises(ConfigError):
            scenario_from_dict(MINIMAL, env={"RNO_SEED": "abc"})

    def test_field_errors(self):
        bad = {**MINIMAL, "network": {**MINIMAL["network"], "M": 0, "N_RIS": -1}}
        with pytest.raises(ConfigError) as info:
            scenario_from_dict(bad, env={})
        locs = {e["loc"] for e in info.value.errors}
        assert any("M" in l for l in locs) and any("N_RIS" in l for l in locs)

    def test_schema_version(self):
        with pytest.raises(ConfigError):
            scenario_from_dict({**MINIMAL, "schema_version": 9}, env={})

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            scenario_from_dict(with_(MINIMAL, schemes=["ZZ_Q"]), env={})


class TestRun:
    def test_minimal_run(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 0
        rows = rows_of(out / "results.csv")
        assert len(rows) == 1 and rows[0]["scheme"] == "IR_IN"
        assert list(rows[0]) == list(RESULT_FIELDS)
        assert (out / "traces" / "IR_IN.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed_base"] == 5 and manifest["dropped_trials"] == 0

    def test_rerun_identical_bytes(self, tmp_path):
        cfg = str(write(tmp_path, MINIMAL))
        for d in ("a", "b"):
            assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()

    def test_trials_override(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(out), "--trials", "2"])
        assert rows_of(out / "results.csv")[0]["n_trials"] == "2"

    def test_scheme_overrides(self, tmp_path):
        out = tmp_path / "out"
        argv = ["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(out),
                "--set", "U", "--signaling", "pgs", "--sic", "off"]
        assert cli.main(argv) == 0
        assert rows_of(out / "results.csv")[0]["scheme"] == "PR_UT"

    def test_invalid_config_exit_2(self, tmp_path, capsys):
        bad = {**MINIMAL, "network": {**MINIMAL["network"], "K": -1}}
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(write(tmp_path, bad)), "--out", str(out)]) == 2
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "invalid_config"
        assert any("K" in f["loc"] for f in record["fields"])
        assert (out / "error.json").exists()

    def test_missing_file_exit_2(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2

    def test_backend_missing_exit_3(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "backend_available", lambda: False)
        assert cli.main(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(tmp_path / "o")]) == 3
        assert not (tmp_path / "o" / "results.csv").exists()

    def test_seed_env_changes_results(self, tmp_path, monkeypatch):
        cfg = str(write(tmp_path, MINIMAL))
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        monkeypatch.setenv("RNO_SEED", "77")
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert manifest["seed_base"] == 77
        assert (tmp_path / "a" / "results.csv").read_text() != (tmp_path / "b" / "results.csv").read_text()


def results_text(schemes=("IR_IN", "PR_IN"), grid=(1.0, 10.0, 100.0)):
    buf = io.StringIO()
    w = csv.DictWriter(buf, RESULT_FIELDS, lineterminator="\n")
    w.writeheader()
    for i, s in enumerate(schemes):
        for j, x in enumerate(grid):
            w.writerow({**{f: "" for f in RESULT_FIELDS}, "scheme": s, "metric": "rate", "sweep_var": "power",
                        "sweep_value": x, "mean": 0.5 * i + j, "stderr": 0.01, "n_trials": 3})
    return buf.getvalue()


class TestPlot:
    def test_two_series_of_three(self, tmp_path, monkeypatch):
        import matplotlib.pyplot as plt

        figures = []
        real_close = plt.close
        monkeypatch.setattr(plt, "close", lambda fig=None: (figures.append(fig), real_close(fig)))
        src = tmp_path / "results.csv"
        src.write_text(results_text())
        assert cli.main(["plot", "--in", str(src), "--out", str(tmp_path / "fig")]) == 0
        assert (tmp_path / "fig" / "rate.png").exists()
        ax = figures[0].axes[0]
        assert len(ax.lines) >= 2
        labels = [t.get_text() for t in ax.get_legend().get_texts()]
        assert labels == ["IR_IN", "PR_IN"]
        data = series(read_results(src.read_text()))["rate"]
        assert {s: len(p) for s, p in data.items()} == {"IR_IN": 3, "PR_IN": 3}

    def test_plot_data_round_trip(self, tmp_path):
        src = tmp_path / "results.csv"
        src.write_text(results_text())
        cli.main(["plot", "--in", str(src), "--out", str(tmp_path)])
        got = list(csv.DictReader(io.StringIO((tmp_path / "plot_data.csv").read_text())))
        want = read_results(src.read_text())
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert g["scheme"] == w["scheme"]
            assert float(g["mean"]) == w["mean"] and float(g["sweep_value"]) == w["sweep_value"]

    def test_empty_exit_2(self, tmp_path, capsys):
        src = tmp_path / "results.csv"
        src.write_text(",".join(RESULT_FIELDS) + "\n")
        assert cli.main(["plot", "--in", str(src), "--out", str(tmp_path)]) == 2
        assert "no data" in capsys.readouterr().err

    def test_bad_header(self):
        with pytest.raises(ResultsFormatError):
            read_results("a,b\n1,2\n")

    def test_bad_number(self):
        text = results_text().replace("0.01", "oops", 1)
        with pytest.raises(ResultsFormatError):
            read_results(text)

    def test_run_then_plot(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")])
        assert cli.main(["plot", "--in", str(tmp_path / "r" / "results.csv"), "--out", str(tmp_path / "p")]) == 0
        assert (tmp_path / "p" / "rate.png").exists()
