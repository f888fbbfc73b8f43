import json
import math

import pytest
from hypothesis import given

from conftest import configs
from delayedchoice.cli import EXIT_CODES, eval_number, main
from delayedchoice.config import ConfigFileError, dumps_config, loads_config, parse_keyvalue


def test_parse_keyvalue_comments_and_errors():
    flat = parse_keyvalue("# header\n a.b = 1  # trailing\n\nc = x y\n")
    assert flat == {"a.b": "1", "c": "x y"}
    with pytest.raises(ConfigFileError, match="line 2"):
        parse_keyvalue("a = 1\nnot a pair\n")
    with pytest.raises(ConfigFileError, match="duplicate"):
        parse_keyvalue("a = 1\na = 2\n")


def test_loads_config_splits_options():
    cfg, opts = loads_config("qrng.xi = 0.3\nmbs1.eta_total = 0.1\nscenario.name = fig2\n")
    assert cfg.qrng.xi == 0.3 and cfg.mbs1.eta_total == pytest.approx(0.1)
    assert opts == {"scenario.name": "fig2"}
    with pytest.raises(ConfigFileError, match="unknown parameter"):
        loads_config("qrng.zeta = 1\n")
    with pytest.raises(ConfigFileError):
        loads_config("qrng.xi = lots\n")


@given(configs())
def test_config_file_round_trip(cfg):
    assert loads_config(dumps_config(cfg))[0] == cfg


def test_eval_number():
    assert eval_number("pi/4") == pytest.approx(math.pi / 4)
    assert eval_number("3pi/2") == pytest.approx(1.5 * math.pi)
    assert eval_number("-pi") == pytest.approx(-math.pi)
    assert eval_number("0.25") == 0.25
    with pytest.raises(ValueError):
        eval_number("pi*2")


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_scenario_subcommand(tmp_path, capsys):
    assert main(["fig2", "--engine", "both", "--trials", "2000", "--out", str(tmp_path), "--seed", "5"]) == 0
    printed = capsys.readouterr().out.split()
    assert len(printed) == 11 and printed[-1].endswith("fig2_provenance.json")
    prov = json.loads((tmp_path / "fig2_provenance.json").read_text())["provenance"]
    assert prov["seed"] == 5 and prov["trials_per_point"] == 2000


def test_qrng_mode_flag(tmp_path, capsys):
    assert main(["fig3", "--qrng-mode", "ensemble", "--out", str(tmp_path)]) == 0
    prov = json.loads((tmp_path / "fig3_provenance.json").read_text())["provenance"]
    assert prov["config"]["qrng"]["mode"] == "ensemble"


def test_run_config_and_reproduce(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "scenario.name = fig2\nscenario.engine = montecarlo\nscenario.trials = 3000\n"
        "scenario.phase_grid = 0, pi/2, pi, 3pi/2, 2pi\n"
        "sweep.parameter = qrng.xi\nsweep.values = 0.2, 0.9\nsweep.labels = low, high\n"
        "detector.dark_rate = 100\n"
    )
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert sorted(p.name for p in out1.iterdir()) == [
        "fig2_high_montecarlo.csv", "fig2_low_montecarlo.csv", "fig2_provenance.json"]
    assert main(["reproduce", str(out1 / "fig2_provenance.json"), "--out", str(out2)]) == 0
    for p in out1.iterdir():
        assert (out2 / p.name).read_bytes() == p.read_bytes()


@pytest.mark.parametrize("text,category", [
    ("qrng.xi = 0.5\n", "config"),
    ("scenario.name = fig2\nscenario.colour = red\n", "config"),
    ("scenario.name = fig2\nmbs1.eta_con = 1.5\n", "config"),
    ("scenario.name = fig8\n", "scenario"),
    ("scenario.name = fig2\nsweep.parameter = qrng.xi\nsweep.values = 0.5, 3\n", "scenario"),
    ("garbage\n", "config"),
])
def test_run_config_errors(tmp_path, capsys, text, category):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CODES[category]
    assert _err(capsys)["error"] == category


def test_usage_and_io_errors(tmp_path, capsys):
    assert main(["fig9"]) == 2
    assert _err(capsys)["error"] == "usage"
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CODES["io"]
    assert _err(capsys)["error"] == "io"
    assert main(["fig2", "--workers", "0"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["fig1d", "--out", str(blocker)]) == EXIT_CODES["io"]
    assert _err(capsys)["error"] == "io"


def test_trials_stream(tmp_path, capsys):
    assert main(["trials", "--trials", "5", "--seed", "3", "--start", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(x)["trial_index"] for x in lines] == [7, 8, 9, 10, 11]
    path = tmp_path / "t.jsonl"
    assert main(["trials", "--trials", "5", "--seed", "3", "--start", "7", "--out", str(path)]) == 0
    assert path.read_text().splitlines() == lines


def test_fit_commands(tmp_path, capsys):
    assert main(["fig3", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["fit-fringe", str(tmp_path / "fig3_a_analytic.csv")]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["visibility"] == pytest.approx(0.9068, abs=5e-4)
    assert main(["fig5b", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["fit-decay", str(tmp_path / "fig5b_mbs1_analytic.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["T"] == pytest.approx(420, rel=1e-6)
    assert main(["fit-fringe", str(tmp_path / "fig5b_mbs1_analytic.csv")]) == EXIT_CODES["io"]
    flat = tmp_path / "flat.csv"
    flat.write_text("t,y\n0,1\n1,1\n2,1\n3,1\n")
    assert main(["fit-decay", str(flat)]) == EXIT_CODES["fit"]
    assert _err(capsys)["error"] == "fit"


def test_config_template_round_trips(capsys):
    assert main(["config-template", "fig3"]) == 0
    cfg, _ = loads_config(capsys.readouterr().out)
    assert cfg.mbs1.eta_total == pytest.approx(0.122)
