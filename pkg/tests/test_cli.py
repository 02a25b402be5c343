import csv
import json

import numpy as np
import pytest

from circspace.cli import main, parse_args
from circspace.ensembles import Histogram


def read_csv(path):
    with open(path) as fh:
        header = json.loads(fh.readline()[len("# config: "):])
        rows = list(csv.DictReader(fh))
    return header, rows


def test_theory_both_routes_agree(tmp_path, capsys):
    status = main(["theory", "--ensemble", "cue", "--statistic", "kth:0", "--xi", "1", "--route", "both",
                   "--out", str(tmp_path)])
    assert status == 0
    hdr, op = read_csv(tmp_path / "theory_operator.csv")
    _, pv = read_csv(tmp_path / "theory_painleve.csv")
    assert hdr["route_used"] == "operator" and hdr["xi"] == 1.0
    p = np.array([[float(r["p"]) for r in rows] for rows in (op, pv)])
    r = np.array([[float(r["r"]) for r in rows] for rows in (op, pv)])
    assert np.max(np.abs(p[0] - p[1])) <= 1e-6
    assert np.max(np.abs(r[0] - r[1])) <= 1e-6
    assert "route agreement" in capsys.readouterr().out


def test_simulate_is_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert main(["simulate", "--beta", "2", "--N", "20", "--M", "1000000", "--seed", "1",
                     "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    h = Histogram.from_csv(tmp_path / "a.csv")
    assert h.meta["seed"] == 1 and h.meta["ensemble"] == "CUE" and h.total_draws == 20 * 10**6


def test_thread_count_does_not_change_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--beta", "1", "--N", "10", "--M", "3000", "--chunk", "1000", "--out", str(a)])
    main(["simulate", "--beta", "1", "--N", "10", "--M", "3000", "--chunk", "1000", "--threads", "2",
          "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_compare_residual_file(tmp_path):
    hist = tmp_path / "h.csv"
    main(["simulate", "--beta", "2", "--N", "12", "--M", "2000", "--bin-width", "0.05", "--out", str(hist)])
    out = tmp_path / "cmp"
    status = main(["compare", "--histogram", str(hist), "--height", "1.306643440879362112e22",
                   "--out", str(out)])
    assert status == 0
    hdr, rows = read_csv(tmp_path / "cmp_residuals.csv")
    assert list(rows[0]) == ["s", "scaled_residual", "r_interior", "r_exterior", "r_none"]
    assert len(rows) == 60 and hdr["N"] == 12.0
    assert all(np.isfinite(float(rows[5][k])) for k in rows[5])
    report = json.loads((tmp_path / "cmp.json").read_text())
    assert report["config"]["histogram_config"]["M"] == 2000
    assert len(report["scaled_residuals"]) == 60


def test_compare_fails_correlation_gate(tmp_path):
    hist = tmp_path / "h.csv"
    main(["simulate", "--beta", "2", "--N", "12", "--M", "200", "--bin-width", "0.05", "--out", str(hist)])
    assert main(["compare", "--histogram", str(hist), "--min-correlation", "1.01",
                 "--out", str(tmp_path / "c")]) == 1


def test_painleve_route_rejects_nn(tmp_path, capsys):
    status = main(["theory", "--statistic", "nn", "--route", "painleve", "--out", str(tmp_path)])
    assert status == 2
    assert "nearest-neighbour" in capsys.readouterr().err


def test_rescaling_needs_height(tmp_path):
    assert main(["theory", "--rescaling", "exterior", "--out", str(tmp_path)]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for a small run\nxi = 0.6\ns-max = 1.0\nstep = 0.1\n")
    args = parse_args(["theory", "--config", str(cfg), "--xi", "1"])
    assert args.xi == 1.0 and args.s_max == 1.0 and args.step == 0.1
    assert main(["theory", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    hdr, rows = read_csv(tmp_path / "theory_operator.csv")
    assert hdr["xi"] == 0.6 and len(rows) == 11


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["theory", "--config", str(cfg)]) == 2
    cfg.write_text("just words\n")
    assert main(["theory", "--config", str(cfg)]) == 2


def test_zeros_command(tmp_path):
    from circspace.zeros import low_zeros_path

    out = tmp_path / "z.csv"
    assert main(["zeros", "--input", str(low_zeros_path()), "--mode", "smooth_counting", "--bin-width", "0.05",
                 "--out", str(out)]) == 0
    h = Histogram.from_csv(out)
    assert h.total_draws > 9000
    assert h.meta["N"] > 0 and h.meta["zeros"] == 10_000


def test_zeros_bad_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("20.0\n19.0\n")
    assert main(["zeros", "--input", str(bad), "--out", str(tmp_path / "z.csv")]) == 2


@pytest.mark.parametrize("argv", [["theory", "--ensemble", "gue"], ["nonsense"]])
def test_argument_errors_exit_nonzero(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code != 0
