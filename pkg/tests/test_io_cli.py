import csv
import json

import numpy as np
import pytest

from mfportfolio import SamplerSpec, example_market, simulate, solve_dual
from mfportfolio import io
from mfportfolio.cli import main
from mfportfolio.errors import InputFileError


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_market_shapes_agree(tmp_path):
    ref = example_market()
    periods = {"periods": [{"s": 1.05, "mean_return": [1.14, 1.16, 1.17],
                            "covariance": ref.covariance[0].tolist()}] * 5}
    excess = io.market_to_dict(ref)
    single = {"T": 5, "s": 1.05, "excess_mean": ref.excess_mean[0].tolist(),
              "excess_second_moment": ref.excess_second_moment[0].tolist()}
    for d in (periods, excess, single):
        mk = io.market_from_dict(d)
        np.testing.assert_allclose(mk.excess_second_moment, ref.excess_second_moment, rtol=1e-14)
        np.testing.assert_allclose(mk.B, ref.B, rtol=1e-13)


def test_market_errors(tmp_path):
    with pytest.raises(InputFileError, match="periods\\[0\\].s"):
        io.market_from_dict({"periods": [{"mean_return": [1.1]}]})
    with pytest.raises(InputFileError, match="line 2"):
        bad = tmp_path / "bad.json"
        bad.write_text('{"T": 1,\n  oops}')
        io.read_market(bad)
    with pytest.raises(InputFileError):
        io.market_from_dict({"T": 2})
    with pytest.raises(InputFileError, match="kind"):
        io.objective_from_dict({"kind": "other"}, 2)


def test_policy_round_trip_is_bit_exact(tmp_path, market, gmv_spec):
    res = solve_dual(gmv_spec, market)
    path = tmp_path / "res.json"
    io.write_json(io.dual_result_to_dict(res), path)
    pol = io.read_policy(path)
    np.testing.assert_array_equal(pol.intercepts, res.policy.intercepts)
    np.testing.assert_array_equal(pol.directions, res.policy.directions)
    a = simulate(pol, market, 1.0, SamplerSpec("gaussian", 9), 5000)
    b = simulate(res.policy, market, 1.0, SamplerSpec("gaussian", 9), 5000)
    np.testing.assert_array_equal(a.mean_hat, b.mean_hat)
    np.testing.assert_array_equal(a.var_hat, b.var_hat)


def test_csv_seventeen_digits(tmp_path):
    path = tmp_path / "x.csv"
    io.write_csv(path, ("a", "b"), [(0.1, 1)])
    row = list(csv.reader(path.open()))[1]
    assert row == ["0.10000000000000001", "1"]
    assert float(row[0]) == 0.1


def test_cli_solve_gmv(tmp_path, capsys):
    out, trace = tmp_path / "g.json", tmp_path / "t.csv"
    rc = main(["solve-gmv", "--market", "@example_market", "--objective", "@example_gmv", "-o", str(out),
               "--trace", str(trace)])
    assert rc == 0
    res = json.loads(out.read_text())
    assert res["converged"] and len(res["omega_star"]) == 4
    assert {"omega_star", "H", "policy", "moments", "slackness"} <= set(res)
    assert trace.read_text().splitlines()[0] == "iter,mu,H,grad_norm"
    assert "H=" in capsys.readouterr().out


def test_cli_solve_mmv_stdout_is_json(capsys):
    rc = main(["solve-mmv", "--market", "@example_market", "--objective", "@example_classical"])
    assert rc == 0
    captured = capsys.readouterr()
    sol = json.loads(captured.out)
    assert len(sol["policy"]["steps"]) == 5
    assert "objective=" in captured.err


def test_cli_solve_ir(tmp_path):
    out = tmp_path / "ir.json"
    assert main(["solve-ir", "--market", "@example_market", "--objective", "@example_intertemporal",
                 "-o", str(out)]) == 0
    segs = json.loads(out.read_text())["segments"]
    assert [s["tau"] for s in segs] == [2, 5]


def test_cli_frontier(tmp_path):
    out, png = tmp_path / "f.csv", tmp_path / "f.png"
    rc = main(["frontier", "--market", "@example_market", "--objective", "@example_gmv", "--points", "6",
               "--omega-min", "0.2", "--omega-max", "5", "--log-scale", "-o", str(out), "--plot", str(png)])
    assert rc == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["omega_T", "mean_T", "var_T", "model"]
    assert {r[3] for r in rows[1:]} == {"MV", "GMV"} and len(rows) == 13
    assert png.stat().st_size > 1000


def test_cli_simulate_riskless(tmp_path):
    mk = example_market()
    pol = {"steps": [{"t": t, "c": 0.0, "s": 1.05, "K": [0.0, 0.0, 0.0]} for t in range(5)]}
    pfile = _write(tmp_path / "p.json", pol)
    out, per = tmp_path / "s.json", tmp_path / "s.csv"
    assert main(["simulate", "--market", "@example_market", "--policy", pfile, "--paths", "100", "--seed", "3",
                 "-o", str(out), "--csv", str(per)]) == 0
    rep = json.loads(out.read_text())
    np.testing.assert_allclose(rep["mean_hat"], np.cumprod(np.r_[1.0, mk.s]), rtol=1e-14)
    assert max(rep["var_hat"]) == 0.0
    assert per.read_text().startswith("t,mean_hat")


def test_cli_verify(tmp_path):
    out = tmp_path / "v.json"
    rc = main(["verify", "--market", "@example_market", "--objective", "@example_gmv", "--paths", "50000",
               "--trials", "20", "-o", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["passed"]


def test_cli_exit_codes(tmp_path, caplog):
    bad = tmp_path / "bad.json"
    bad.write_text('{"T": 2,\n "replicate": }')
    assert main(["solve-mmv", "--market", str(bad), "--objective", "@example_classical"]) == 2
    assert "line 2" in caplog.text
    assert main(["solve-mmv", "--market", str(tmp_path / "missing.json"), "--objective", "@example_classical"]) == 2
    infeasible = _write(tmp_path / "inf.json", {"T": 2, "replicate": {"s": 1.05, "excess_mean": [0.1],
                                                                        "excess_second_moment": [[0.01 * (1 + 1e-14)]]}})
    assert main(["solve-mmv", "--market", infeasible, "--objective", "@example_classical"]) == 3
    out = tmp_path / "g.json"
    rc = main(["solve-gmv", "--market", "@example_market", "--objective", "@example_gmv", "--max-iters", "2",
               "-o", str(out)])
    assert rc == 4
    assert out.exists()
    gmv_obj = _write(tmp_path / "o.json", {"kind": "gmv", "omega_T": 1.0, "a": [0.1], "b": [0.0]})
    assert main(["solve-gmv", "--market", "@example_market", "--objective", gmv_obj]) == 2
