"""The lyapunov-lab command line: subcommands and exit codes."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from lyapunov_lab.cli import main

HEAT_YAML = """\
name: cli_heat
equation: heat
n: 32
dt: 5e-3
t_end: 0.2
monitor_stride: 4
monitors: [L2, Boltzmann]
convex: [L2]
initial: {preset: cosine, offset: 2, amplitude: 0.5}
"""


@pytest.fixture
def heat_config(tmp_path):
    path = tmp_path / "heat.yaml"
    path.write_text(HEAT_YAML)
    return path


def test_run_writes_outputs(heat_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(heat_config), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["all_pass"] and summary["verdicts"]["L2"] == "convex-nonincreasing"
    for name in ("series.csv", "report.json", "timing.json"):
        assert (out / name).exists()


def test_verdict_reuses_report(heat_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(heat_config), "--out", str(out)])
    capsys.readouterr()
    assert main(["verdict", str(out / "series.csv")]) == 0
    verdicts = json.loads(capsys.readouterr().out)
    report = json.loads((out / "report.json").read_text())
    assert verdicts == report["verdicts"]


def test_verdict_needs_dt_without_report(tmp_path, capsys):
    csv = tmp_path / "series.csv"
    csv.write_text("t,L2,L2_dissipation\n0,3,nan\n0.1,2,nan\n0.2,1,nan\n")
    assert main(["verdict", str(csv)]) == 2
    assert main(["verdict", str(csv), "--dt", "0.1"]) == 0
    csv.write_text("t,L2,L2_dissipation\n0,1,nan\n0.1,2,nan\n0.2,3,nan\n")
    assert main(["verdict", str(csv), "--dt", "0.1"]) == 1


@pytest.mark.parametrize("text, code", [
    ("equation: heat\nn: 32\ndt: 1e-3\nt_end: 0.1\ncolour: red\n", 2),
    ("equation: thin_film\nn: 32\ndt: 1e-3\nt_end: 0.1\ninitial: {amplitude: 2, offset: 1}\n", 2),
])
def test_bad_config_exit_code(tmp_path, capsys, text, code):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == code
    assert "lyapunov-lab:" in capsys.readouterr().err


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_constants(capsys):
    assert main(["constants", "--d", "1", "--m", "1", "--alpha", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["c_d"]["value"] == pytest.approx(0.001185113659196298, rel=1e-12)
    assert out["entropy"]["c_thinfilm"] == pytest.approx(0.0, abs=1e-15)
    assert out["bvy_coercivity"]["value"] == pytest.approx(1 / 9)


def test_constants_domain_error(capsys):
    assert main(["constants", "--m", "-1"]) == 2


def test_constants_needs_an_option():
    with pytest.raises(SystemExit):
        main(["constants"])


def test_fuzz(tmp_path, capsys):
    spec = tmp_path / "fuzz.yaml"
    spec.write_text("target: sobolev\ndim: 1\nn: 32\ntrials: 20\nseed: 5\nmu: [-1, 0.5]\n"
                    "offset: 2\namplitude: 1\n")
    assert main(["fuzz", str(spec)]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert [r["name"] for r in reports] == ["sobolev(mu=-1),d=1", "sobolev(mu=0.5),d=1"]
    assert all(r["violations"] == 0 and r["trials"] == 20 for r in reports)


@pytest.mark.parametrize("text", ["target: poincare\n", "target: sobolev\nbogus: 1\n",
                                  "target: sobolev\noffset: 0\n", "- 1\n"])
def test_fuzz_bad_spec(tmp_path, text):
    spec = tmp_path / "fuzz.yaml"
    spec.write_text(text)
    assert main(["fuzz", str(spec)]) == 2


def test_suite_filter(tmp_path, capsys):
    assert main(["suite", "--filter", "heat", "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "heat" in table
    assert (tmp_path / "heat" / "report.json").exists()


def test_suite_filter_without_match():
    assert main(["suite", "--filter", "no-such-experiment"]) == 2


def test_module_entry_point(heat_config, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lyapunov_lab", "run", str(heat_config),
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", ["heat.yaml", "hele_shaw.yaml", "thin_film.yaml"])
def test_shipped_configs_validate(name):
    from lyapunov_lab.config import parse_config

    cfg = parse_config((CONFIG_DIR / name).read_text())
    assert cfg.monitors


def test_shipped_fuzz_spec_runs(capsys):
    assert main(["fuzz", str(CONFIG_DIR / "fuzz_sobolev.yaml")]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 3
