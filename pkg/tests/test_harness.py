import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from yamabe_lab import Chart, build_field, is_undefined
from yamabe_lab.errors import ConfigError
from yamabe_lab.harness import persist
from yamabe_lab.harness.cli import main
from yamabe_lab.harness.config import parse_config
from yamabe_lab.harness.runner import CHECKPOINT_FILE, RECORDS_FILE, simulate

FLAT = """
n = 3
chart = RadialRn
N = 64
r_max = 2.0
t_end = 0.1
record_every = 100
"""

SPHERE = """
n = 3
chart = StereographicSphere
N = 96
profile = sphere_bubble
cfl_safety = 1.0
record_every = 1000
"""

BUBBLE = """
n = 3
chart = StereographicSphere
N = 64
profile = sphere_bubble
perturbation_amplitude = 0.05
record_every = 500
checkpoint_every = 5000
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_config_parses_and_round_trips():
    cfg = parse_config(BUBBLE)
    assert cfg.chart is Chart.SPHERE and cfg.N == 64 and cfg.perturbation_amplitude == 0.05
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(FLAT + "delta_mode = fixed(0.3)\n").fixed_delta == 0.3


@pytest.mark.parametrize("extra", [
    "colour = blue", "n = 4", "N = 8", "delta_mode = fixed(2)", "delta_mode = sometimes",
    "profile = banana", "t_end = -1", "checkpoint_every = 150", "cfl_safety = 2", "garbage",
])
def test_config_errors(extra):
    with pytest.raises(ConfigError):
        parse_config(FLAT + extra + "\n")


def test_config_requires_core_keys():
    with pytest.raises(ConfigError):
        parse_config("n = 3\nN = 64\n")


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    f = build_field(Chart.SPHERE, 3, 65, profile="sphere_bubble", perturbation=(0.05, 1.0), t=0.123456789)
    ck = persist.Checkpoint(f, 1.2345e-6, 77, 0.5, math.inf, 0.3, 0.3, float("nan"), 5)
    persist.write_checkpoint(tmp_path / "ck.txt", ck)
    back = persist.read_checkpoint(tmp_path / "ck.txt")
    assert back.field.phi.tobytes() == f.phi.tobytes()
    assert (back.field.t, back.dt, back.step_index, back.record_count) == (f.t, ck.dt, 77, 5)
    assert back.blow_threshold == math.inf and is_undefined(back.gap0)


def test_checkpoint_rejects_other_files(tmp_path):
    p = write(tmp_path, "bad.txt", "format = something\nphi\n0x0p+0\n")
    with pytest.raises(persist.RecordsFormatError):
        persist.read_checkpoint(p)


def test_records_round_trip_with_na(tmp_path):
    cfg = parse_config(FLAT)
    summary = simulate(cfg, tmp_path)
    back = persist.read_records(tmp_path / RECORDS_FILE)
    assert persist.records_text(back) == persist.records_text(summary.records)
    text = (tmp_path / RECORDS_FILE).read_text().splitlines()
    assert text[0] == ",".join(persist.MonitorRecord.columns())
    col = persist.MonitorRecord.columns().index("eps_min")
    assert all(line.split(",")[col] == "NA" for line in text[1:])
    sup = persist.MonitorRecord.columns().index("sup_R")
    assert all(line.split(",")[sup] == "0.0" for line in text[1:])


def test_records_reject_bad_header(tmp_path):
    p = write(tmp_path, "r.csv", "a,b,c\n1,2,3\n")
    with pytest.raises(persist.RecordsFormatError):
        persist.read_records(p)


def test_cli_simulate_flat(tmp_path, capsys):
    cfg = write(tmp_path, "flat.cfg", FLAT)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    out = capsys.readouterr().out
    assert "stop_reason = ReachedTEnd" in out
    assert main(["classify", str(tmp_path / "run")]) == 0
    assert "NoSingularity" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "bad.cfg", FLAT + "colour = blue\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 3
    assert main(["classify", str(tmp_path / "missing.csv")]) == 3
    assert main(["report", str(bad)]) == 3
    # 8 rows is not enough history to classify
    run = tmp_path / "run"
    simulate(parse_config(FLAT), run)
    lines = (run / RECORDS_FILE).read_text().splitlines()
    short = write(tmp_path, "short.csv", "\n".join(lines[:9]) + "\n")
    assert main(["classify", str(short)]) == 1
    assert "InsufficientHistory" in capsys.readouterr().err


def test_cli_verify_small(tmp_path, capsys):
    assert main(["verify", "--samples", "2000", "--seed", "42", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "verify.txt").read_text()
    assert "FAIL" not in text and "pinched_margin n=8" in text


def test_cli_report_writes_svgs(tmp_path):
    cfg = write(tmp_path, "b.cfg", BUBBLE)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["report", str(tmp_path / "run")]) == 0
    names = {p.name for p in (tmp_path / "run").glob("*.svg")}
    assert {"sup_R.svg", "pinching.svg", "harnack.svg", "eps_min.svg", "type_one.svg"} <= names
    assert (tmp_path / "run" / "sup_R.svg").read_text().lstrip().startswith("<?xml")


def test_identical_config_gives_identical_bytes(tmp_path):
    cfg = parse_config(BUBBLE)
    simulate(cfg, tmp_path / "a")
    simulate(cfg, tmp_path / "b")
    assert (tmp_path / "a" / RECORDS_FILE).read_bytes() == (tmp_path / "b" / RECORDS_FILE).read_bytes()


def test_resume_from_checkpoint_matches(tmp_path):
    cfg = parse_config(BUBBLE)
    full = simulate(cfg, tmp_path / "full")
    ck = persist.read_checkpoint(tmp_path / "full" / CHECKPOINT_FILE)
    assert 0 < ck.step_index < full.steps
    resumed_dir = tmp_path / "resumed"
    resumed_dir.mkdir()
    shutil.copy(tmp_path / "full" / CHECKPOINT_FILE, resumed_dir / "start.txt")
    shutil.copy(tmp_path / "full" / RECORDS_FILE, resumed_dir / RECORDS_FILE)
    res = simulate(cfg, resumed_dir, resumed_dir / "start.txt")
    assert len(res.records) == len(full.records)
    a = np.array([[getattr(r, c) for c in persist.MonitorRecord.columns()] for r in full.records])
    b = np.array([[getattr(r, c) for c in persist.MonitorRecord.columns()] for r in res.records])
    np.testing.assert_allclose(b, a, rtol=0, atol=1e-12, equal_nan=True)


def test_resume_rejects_mismatched_grid(tmp_path):
    cfg = parse_config(BUBBLE)
    simulate(cfg, tmp_path)
    other = parse_config(BUBBLE.replace("N = 64", "N = 80"))
    with pytest.raises(ConfigError):
        simulate(other, tmp_path / "x", tmp_path / CHECKPOINT_FILE)


def test_cli_sphere_run_is_type_one(tmp_path, capsys):
    cfg = write(tmp_path, "s.cfg", SPHERE)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    out = capsys.readouterr().out
    assert "stop_reason = BlowUpReached" in out and "verdict = TypeI\n" in out
    recs = persist.read_records(tmp_path / "run" / RECORDS_FILE)
    assert len(recs) >= 16
    assert all(r.f_max <= 1e-8 for r in recs)
    assert Path(tmp_path / "run" / "run.txt").exists()
