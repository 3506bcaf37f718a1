import pytest

from c1flow.cli import main
from c1flow.config import load_config
from c1flow.output import read_csv


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--preset", "mms1d", "--tend", "1e-4", "--out", str(out)])
    assert code == 0
    for name in ("config.toml", "norms.csv", "errors.csv", "initial.vtk", "final.vtk"):
        assert (out / name).exists(), name
    rows = read_csv(out / "norms.csv")
    assert len(rows) == 6 and rows[-1]["step"] == 5
    cfg = load_config(out / "config.toml")
    assert cfg.preset == "mms1d" and cfg.t_end == 1e-4
    assert "max error" in capsys.readouterr().out


def test_deterministic_runs_are_byte_identical(tmp_path):
    args = ["run", "--preset", "experiment1", "--nx", "2", "--deterministic"]
    for d in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / d)]) == 0
    for name in ("norms.csv", "final.vtk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('preset = "experiment3"\nnx = 2\n')
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--k", "1e-9", "--tend", "3e-9", "--scheme", "bdf2",
                 "--out", str(out)]) == 0
    resolved = load_config(out / "config.toml")
    assert resolved.scheme == "bdf2" and resolved.nx == 2
    assert len(read_csv(out / "norms.csv")) == 4


def test_rates_command(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["rates", "--preset", "mms1d", "--nx", "4", "--tend", "1e-4", "--levels", "3",
                 "--out", str(out)]) == 0
    assert (out / "rates.csv").exists() and (out / "convergence.svg").exists()
    assert "h2_broken" in capsys.readouterr().out


def test_lambda_command(capsys):
    assert main(["lambda", "--preset", "experiment1"]) == 0
    text = capsys.readouterr().out
    assert "lambda = 5" in text and "k < 2.5" in text
    assert main(["lambda", "--preset", "experiment1", "--k", "3"]) == 1


def test_check_command(capsys):
    assert main(["check", "--seed", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)


def test_bad_config_exits_with_code_2(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("beta4 = 0.1\nm = 1\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "config error" in capsys.readouterr().err


def test_config_and_preset_are_exclusive(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("nx = 2\n")
    with pytest.raises(SystemExit):
        main(["run", "--config", str(cfg), "--preset", "mms1d"])


def test_thread_cap_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("C1FLOW_THREADS", "1")
    assert main(["lambda", "--preset", "mms1d"]) == 0


def test_console_script_is_installed():
    import shutil
    import subprocess

    exe = shutil.which("c1flow")
    assert exe is not None
    res = subprocess.run([exe, "--help"], capture_output=True, text=True, check=True)
    assert "run" in res.stdout and "rates" in res.stdout
