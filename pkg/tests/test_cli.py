import json

import pytest

from rsfields.cli import main


def run(tmp_path, *args):
    return main(list(args) + ["--output", str(tmp_path)])


def read(path):
    return json.loads(path.read_text())


def test_integrate_box_matches_bracket(tmp_path, capsys):
    assert run(tmp_path, "integrate", "--kind", "box", "--f", "exp", "--g", "one") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(out["bracket"], rel=1e-12)
    assert (tmp_path / "integral-box.json").exists()


def test_integrate_triangle_and_additivity(tmp_path, capsys):
    assert run(tmp_path, "integrate", "--kind", "triangle", "--apex", "0.5,-0.5") == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.0
    assert run(tmp_path, "integrate", "--kind", "additivity", "--apex", "0.6,0.3", "--g", "exp", "--f", "sin") == 0
    assert read(tmp_path / "integral-additivity.json")["passed"]


def test_integrate_mixed(tmp_path):
    assert run(tmp_path, "integrate", "--kind", "mixed", "--N", "3", "--lower", "0", "--upper", "1", "--v", "1,2") == 0


def test_bad_inputs_exit_two(tmp_path):
    assert run(tmp_path, "integrate", "--f", "cosh") == 2
    assert run(tmp_path, "integrate", "--lower", "0,a") == 2
    assert run(tmp_path, "simulate", "--driver", "fbm") == 2
    assert run(tmp_path, "simulate", "--theta", "1,-1") == 2
    assert run(tmp_path, "verify", "--suite", "nonsense") == 2
    assert run(tmp_path, "integrate", "--config", str(tmp_path / "missing.cfg")) == 2
    assert run(tmp_path, "bogus") == 2


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--M", "20", "--grid-cells", "4", "--truncation", "2", "--history-step", "0.5",
            "--seed", "3", "--pipeline", "lamperti"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, *args) == 0
    assert run(b, *args, "--jobs", "2") == 0
    for name in ("driver", "ou", "lamperti"):
        fa = sorted((a / name).iterdir())
        assert [p.name for p in fa] == [p.name for p in sorted((b / name).iterdir())]
        assert all(p.read_bytes() == (b / name / p.name).read_bytes() for p in fa)
    assert read(a / "simulate.json")["outputs"]["ou"]["M"] == 20


def test_simulate_fbm_and_m_theta(tmp_path):
    assert run(tmp_path, "simulate", "--driver", "fbm", "--hurst", "0.7,0.4", "--M", "5", "--grid-cells", "4",
               "--truncation", "1", "--history-step", "0.5", "--pipeline", "m-theta") == 0
    assert (tmp_path / "m-theta" / "manifest.json").exists()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# box integral\nkind = box\nf = product\nupper = 2,3\n")
    assert run(tmp_path, "integrate", "--config", str(cfg)) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(6.0)
    assert run(tmp_path, "integrate", "--config", str(cfg), "--upper", "1,1") == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.0)
    cfg.write_text("kind box\n")
    assert run(tmp_path, "integrate", "--config", str(cfg)) == 2


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("RSFIELDS_OUTPUT", str(tmp_path / "env"))
    assert main(["integrate"]) == 0
    assert (tmp_path / "env" / "integral-box.json").exists()


def test_verify_suites(tmp_path):
    assert run(tmp_path, "verify", "--suite", "identities,roundtrip,langevin") == 0
    assert read(tmp_path / "verify.json")["pass"]
    assert run(tmp_path, "report", "--input", str(tmp_path / "verify.json")) == 0


def test_verify_stationarity_on_ensembles(tmp_path):
    sim = ["--M", "400", "--grid-cells", "8", "--truncation", "5", "--history-step", "0.25", "--upper", "2,2"]
    assert run(tmp_path / "ou", "simulate", *sim) == 0
    assert run(tmp_path / "v1", "verify", "--suite", "stationarity", "--input", str(tmp_path / "ou" / "ou")) == 0
    assert run(tmp_path / "v2", "verify", "--suite", "stationarity", "--input", str(tmp_path / "ou" / "driver")) == 1


def test_report_on_ensemble(tmp_path, capsys):
    run(tmp_path, "simulate", "--M", "3", "--grid-cells", "2", "--truncation", "1", "--history-step", "0.5",
        "--pipeline", "driver")
    capsys.readouterr()
    assert run(tmp_path, "report", "--input", str(tmp_path / "driver")) == 0
    assert "M=3" in capsys.readouterr().out
    assert run(tmp_path / "empty", "report", "--input", str(tmp_path / "empty")) == 2
