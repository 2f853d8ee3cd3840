import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiercoop import cli
from hiercoop.sweep import (SweepSpec, average_rows, fit_exponent, geometric_grid, run_sweep, tradeoff_curve,
                            tradeoff_params, write_csv)


def test_fit_pure_power_law():
    rows = [{"n": x, "y": x ** 0.75} for x in geometric_grid(16, 2 ** 16)]
    fit = fit_exponent(rows, "n", "y")
    assert fit.slope == pytest.approx(0.75, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert len(fit.residuals) == len(rows)


@given(st.floats(-3, 3), st.floats(0.01, 100))
@settings(max_examples=30)
def test_fit_recovers_exponent(alpha, c):
    rows = [{"n": x, "y": c * x ** alpha} for x in (4, 16, 64, 256)]
    assert fit_exponent(rows, "n", "y").slope == pytest.approx(alpha, abs=1e-9)


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_exponent([{"n": 2, "y": 1}, {"n": 4, "y": 2}, {"n": 4, "y": 3}], "n", "y")


def test_fit_burn_in_drops_smallest():
    rows = [{"n": 2, "y": 100}] + [{"n": x, "y": x} for x in (4, 8, 16)]
    assert fit_exponent(rows, "n", "y", burn_in=1).slope == pytest.approx(1.0)


def test_analytic_three_phase_monotone():
    rows = run_sweep(SweepSpec("threePhase", geometric_grid(2 ** 6, 2 ** 16)))
    T = [r["throughput"] for r in rows]
    assert all(a < b for a, b in zip(T, T[1:]))


def test_modified_hier_slope_band():
    rows = run_sweep(SweepSpec("modifiedHier", geometric_grid(2 ** 8, 2 ** 20), h=2))
    assert 0.62 <= fit_exponent(rows).slope <= 0.70


def _dt_ratio(rows):
    return np.array([r["meanDelay"] / r["throughput"] / np.log2(r["n"]) ** 2 for r in rows])


def test_session_tradeoff_ratio_band():
    grid = geometric_grid(2 ** 8, 2 ** 20)
    # D/T tracks (log n)^2 up to a constant near Q^2
    q2 = _dt_ratio(run_sweep(SweepSpec("session", grid, b=0.5, Q=2)))
    assert q2.max() / q2.min() <= 2
    q1 = _dt_ratio(run_sweep(SweepSpec("session", grid, b=0.5, Q=1)))
    assert np.all((q1 >= 0.5) & (q1 <= 2))


def test_trace_cap():
    with pytest.raises(ValueError, match="analytic"):
        SweepSpec("threePhase", [2 ** 15], mode="trace")


def test_grid_must_increase():
    with pytest.raises(ValueError):
        SweepSpec("threePhase", [64, 64, 128])


def test_trace_sweep_deterministic_csv():
    spec = SweepSpec("modifiedHier", [256, 1024], h=2, seeds=range(2), mode="trace")
    a, b = io.StringIO(), io.StringIO()
    write_csv(run_sweep(spec), a)
    write_csv(run_sweep(spec), b)
    assert a.getvalue() == b.getvalue()
    assert len(a.getvalue().splitlines()) == 5


def test_average_rows():
    rows = [{"n": 4, "throughput": 1.0}, {"n": 4, "throughput": 3.0}, {"n": 8, "throughput": 5.0}]
    avg = average_rows(rows)
    assert [r["throughput"] for r in avg] == [2.0, 5.0]


def test_tradeoff_param_choice():
    assert tradeoff_params(2 ** 16, 0.5)["h"] == 1
    assert tradeoff_params(2 ** 16, 0.6)["h"] == 2
    assert tradeoff_params(2 ** 16, 0.67)["h"] == 3  # 2/3 < 0.67
    with pytest.raises(ValueError):
        tradeoff_params(2 ** 16, 1.0)


def test_tradeoff_curve_monotone():
    rows = tradeoff_curve([0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 2 ** 16)
    assert rows[0]["T"] == rows[0]["D"] == 1.0
    for a, b in zip(rows, rows[1:]):
        assert b["T"] >= a["T"] and b["D"] >= a["D"]


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["mac", "--n", "256", "--h", "2", "--targets", "15", "--reuse", "1"]) == 2
    assert cli.main(["trace", "--scheme", "threePhase", "--n", "64", "--m1", "8", "--instance", "ideal",
                     "--reuse", "1", "--verify"]) == 3
    out = tmp_path / "t.csv"
    assert cli.main(["trace", "--scheme", "threePhase", "--n", "64", "--m1", "16", "--instance", "ideal",
                     "--reuse", "1", "--verify", "--out", str(out)]) == 0
    assert out.read_text().startswith("scheme,mode,n")


def test_cli_config_and_override(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# sweep\nscheme = modifiedHier\nh = 2\nn-grid = 256 1024 4096\nout = {}\n".format(tmp_path / "a.csv"))
    assert cli.main(["--config", str(conf), "analytic"]) == 0
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[1].startswith("modifiedHier")
    assert cli.main(["--config", str(conf), "analytic", "--h", "3", "--out", str(tmp_path / "b.csv")]) == 0
    assert ",3,2," in (tmp_path / "b.csv").read_text().splitlines()[1]


def test_cli_fit_and_bins(tmp_path, capsys):
    csv_path = tmp_path / "a.csv"
    assert cli.main(["analytic", "--scheme", "hLevel", "--h", "2", "--n-grid", "256:65536", "--out", str(csv_path)]) == 0
    assert cli.main(["fit", str(csv_path), "--y", "meanDelay"]) == 0
    slope = float(capsys.readouterr().out.split()[0].split("=")[1])
    assert abs(slope - 4 / 3) < 0.05
    assert cli.main(["bins", "--n", "64", "--trials", "10", "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().count("\n") == 11


def test_cli_trace_jsonl(tmp_path):
    path = tmp_path / "t.jsonl"
    assert cli.main(["trace", "--scheme", "session", "--n", "256", "--trace-out", str(path)]) == 0
    assert path.read_text().count("\n") > 256


def test_read_config_rejects_garbage(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("just words\n")
    with pytest.raises(ValueError):
        cli.read_config(str(p))
