import numpy as np
import pytest

from dynflow.apps import io
from dynflow.apps.kernels import random_taps
from dynflow.cli import ConfigError, main, parse_pins, relative_error


def porcelain(capsys, argv):
    code = main(argv + ["--porcelain"])
    out = capsys.readouterr().out
    values = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, values


SMALL_MOTION = ["--width", "16", "--height", "12", "--frames", "8"]
SMALL_DPD = ["--samples", "200", "--period", "32"]


def test_verify_motion_passes(capsys):
    code, v = porcelain(capsys, ["verify", "motion", *SMALL_MOTION, "--rate", "2"])
    assert code == 0 and v["result"] == "PASS"


def test_verify_dpd_passes(capsys):
    code, v = porcelain(capsys, ["verify", "dpd", *SMALL_DPD, "--seed", "3"])
    assert code == 0 and v["result"] == "PASS"
    assert float(v["max_relative_error"]) <= 1e-5


def test_verify_dpd_negative_control(capsys, tmp_path):
    taps = random_taps(np.random.default_rng(0))
    taps[0, 0] += 0.1
    p = tmp_path / "bad.taps"
    p.write_text(io.format_taps(taps))
    code, v = porcelain(capsys, ["verify", "dpd", *SMALL_DPD, "--oracle-taps", str(p)])
    assert code == 1
    assert v["result"] == "FAIL"
    assert v["first_divergence"].startswith("sample 0")


def test_motion_command_reports_throughput(capsys, tmp_path):
    out = tmp_path / "out.raw"
    code, v = porcelain(capsys, ["motion", *SMALL_MOTION, "--output", str(out), "--reps", "2"])
    assert code == 0
    assert int(v["frames"]) == 8
    assert float(v["frames_per_s"]) > 0
    assert v["firings.sink"] == "8"
    assert out.stat().st_size == 8 * 16 * 12


def test_dpd_command_with_schedule_file(capsys, tmp_path):
    s = tmp_path / "s.txt"
    s.write_text("2\n3: 1,5,10\n")
    code, v = porcelain(capsys, ["dpd", *SMALL_DPD, "--schedule", str(s)])
    assert code == 0
    assert v["schedule_entries"] == "2"
    assert v["dynamic_rate"] == "1"
    assert float(v["msamples_per_s"]) > 0


def test_schedule_out_of_range_is_config_error(capsys, tmp_path):
    s = tmp_path / "s.txt"
    s.write_text("4\n11\n")
    assert main(["dpd", *SMALL_DPD, "--schedule", str(s)]) == 2
    assert "schedule line 2" in capsys.readouterr().err


def test_missing_input_file(capsys, tmp_path):
    assert main(["motion", "--input", str(tmp_path / "nope.pgm")]) == 2


def test_frame_size_mismatch(capsys, tmp_path):
    p = tmp_path / "f.pgm"
    io.write_pgm(p, [np.zeros((5, 5), np.uint8)])
    assert main(["motion", "--input", str(p)]) == 2
    assert "does not match" in capsys.readouterr().err


def test_bad_rate(capsys):
    assert main(["motion", "--rate", "0"]) == 2


def test_mem_motion_default_and_rate_doubling(capsys):
    code, v1 = porcelain(capsys, ["mem", "motion"])
    assert code == 0
    assert v1["total_bytes"] == "921600"
    _, v2 = porcelain(capsys, ["mem", "motion", "--rate", "2"])
    for key in v1:
        if key.startswith("bytes.") and "prev" not in key:
            assert int(v2[key]) == 2 * int(v1[key])
    # delay channel: (3r + 1) slots
    assert int(v2["bytes.gauss->thres.prev"]) == 7 * 76800


def test_mem_dpd(capsys):
    code, v = porcelain(capsys, ["mem", "dpd"])
    assert code == 0
    assert v["channels"] == "46"
    assert int(v["total_bytes"]) == 23068680


def test_human_readable_output_has_table(capsys):
    assert main(["mem", "motion"]) == 0
    out = capsys.readouterr().out
    assert "channel" in out and "total" in out


def test_unavailable_pin_warns_and_runs(capsys):
    code = main(["verify", "motion", *SMALL_MOTION, "--pin", "gauss=4096"])
    captured = capsys.readouterr()
    assert code == 0
    assert "PASS" in captured.out


def test_parse_pins():
    assert parse_pins(["a=1,b=2", "c=0"]) == {"a": 1, "b": 2, "c": 0}
    with pytest.raises(ConfigError):
        parse_pins(["a"])
    with pytest.raises(ConfigError):
        parse_pins(["a=x"])


def test_relative_error_definition():
    rel = relative_error(np.array([1, 0, 2 + 1e-6j]), np.array([1, 0, 2]))
    assert rel[0] == 0 and rel[1] == 0
    assert rel[2] == pytest.approx(5e-7)


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as ei:
        main(["bogus"])
    assert ei.value.code == 2
