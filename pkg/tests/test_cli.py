import csv
import io
import json

import numpy as np
import pytest

from graphvortex.cli import main

K2_GRAPH = {"vertices": [{"id": "a"}, {"id": "b"}], "edges": [{"u": "a", "v": "b", "w": 1.0}]}
C3_GRAPH = {
    "vertices": [{"id": "v1"}, {"id": "v2"}, {"id": "v3"}],
    "edges": [{"u": "v1", "v": "v2"}, {"u": "v2", "v": "v3"}, {"u": "v3", "v": "v1"}],
}
A1 = {"cartan": {"preset": "A1"}, "vortices": {"points": [["a"]]}}


@pytest.fixture
def files(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(path)

    return write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_converges(files, capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                     "--lambda", 100, "--out", out)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["converged"] and rep["residual_inf"] <= 1e-8
    assert rep["identity_313_err"] <= 1e-8
    assert set(rep["u_orig"][0]) == {"a", "b"}


def test_solve_report_round_trip(files, capsys, tmp_path):
    from graphvortex.cartan import make_vortex, preset
    from graphvortex.graph import WeightedGraph
    from graphvortex.minimizer import ProblemInstance, minimize

    out = tmp_path / "r.json"
    run(capsys, "solve", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
        "--lambda", 100, "--out", out)
    rep = json.loads(out.read_text())
    g = WeightedGraph.from_dict(K2_GRAPH)
    s = preset("A1")
    direct = minimize(ProblemInstance.build(g, s, make_vortex(s, points=[["a"]], graph=g), 100.0))
    assert rep["J"] == direct.J_value
    assert rep["t"] == direct.t.tolist()
    assert rep["u_hat"][0]["a"] == direct.u_hat[0, 0]


def test_solve_below_threshold(files, capsys):
    code, _, err = run(capsys, "solve", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--lambda", 4 * np.pi)
    assert code == 2
    assert repr(8 * np.pi) in err


def test_solve_malformed_json(files, capsys):
    code, _, err = run(capsys, "solve", "--graph", files("g.json", "{oops"), "--problem", files("p.json", A1),
                       "--lambda", 100)
    assert code == 1
    assert "malformed" in err


def test_solve_missing_file(files, capsys, tmp_path):
    code, _, _ = run(capsys, "solve", "--graph", tmp_path / "nope.json", "--problem", files("p.json", A1),
                     "--lambda", 100)
    assert code == 1


def test_solve_bad_graph(files, capsys):
    bad = {"vertices": [{"id": "a"}, {"id": "b"}], "edges": [{"u": "a", "v": "a", "w": 1}]}
    code, _, _ = run(capsys, "solve", "--graph", files("g.json", bad), "--problem", files("p.json", A1),
                     "--lambda", 100)
    assert code == 1


def test_solve_nonconvergence_exit(files, capsys):
    code, out, _ = run(capsys, "solve", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--lambda", 40)
    assert code == 3
    assert json.loads(out)["converged"] is False


def test_usage_error_is_input_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--graph", "x.json"])
    assert info.value.code == 1


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_trend(files, capsys):
    code, out, _ = run(capsys, "sweep", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--lambda-min", 8 * np.pi, "--lambda-max", 80 * np.pi, "--steps", 10, "--log")
    assert code == 0
    assert out.splitlines()[0] == "lambda,converged,J,residual_inf,min_t,max_u_orig,iterations"
    rows = _rows(out)
    lams = [float(r["lambda"]) for r in rows]
    assert lams == sorted(lams) and len(rows) == 10
    flags = [r["converged"] == "true" for r in rows]
    k = flags.index(True)
    assert not any(flags[:k]) and all(flags[k:])


def test_sweep_single_step_matches_solve(files, capsys):
    g, p = files("g.json", K2_GRAPH), files("p.json", A1)
    _, out, _ = run(capsys, "sweep", "--graph", g, "--problem", p, "--lambda-min", 100, "--lambda-max", 100,
                    "--steps", 1)
    _, rep, _ = run(capsys, "solve", "--graph", g, "--problem", p, "--lambda", 100)
    rows, rep = _rows(out), json.loads(rep)
    assert len(rows) == 1
    assert float(rows[0]["J"]) == rep["J"]
    assert float(rows[0]["residual_inf"]) == rep["residual_inf"]
    assert int(rows[0]["iterations"]) == rep["iterations"]
    assert float(rows[0]["min_t"]) == min(rep["t"])


def test_sweep_no_vortices(files, capsys):
    prob = {"cartan": {"preset": "A2"}, "vortices": {"points": [[], []]}}
    code, out, _ = run(capsys, "sweep", "--graph", files("g.json", C3_GRAPH), "--problem", files("p.json", prob),
                       "--lambda-min", 1, "--lambda-max", 50, "--steps", 4)
    assert code == 0
    for r in _rows(out):
        assert r["converged"] == "true" and float(r["J"]) == 0.0


def test_sweep_parallel_identical(files, capsys, monkeypatch):
    args = ["sweep", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
            "--lambda-min", 30, "--lambda-max", 300, "--steps", 5, "--log"]
    monkeypatch.setenv("VORTEX_THREADS", "1")
    _, serial, _ = run(capsys, *args)
    monkeypatch.setenv("VORTEX_THREADS", "3")
    _, parallel, _ = run(capsys, *args)
    assert serial == parallel


def test_sweep_bad_range(files, capsys):
    code, _, _ = run(capsys, "sweep", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                     "--lambda-min", 10, "--lambda-max", 5, "--steps", 3)
    assert code == 1


def test_abelian_solve(files, capsys):
    code, out, _ = run(capsys, "abelian", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--lambda", 100)
    rep = json.loads(out)
    assert code == 0
    assert max(rep["u"].values()) <= 0
    assert rep["integral_check"] <= 1e-8


def test_abelian_find_critical(files, capsys):
    code, out, _ = run(capsys, "abelian", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--find-critical")
    rep = json.loads(out)
    assert code == 0
    assert rep["lo"] >= 8 * np.pi - 1e-3
    assert rep["hi"] - rep["lo"] <= 1e-3
    assert rep["lower_bound_16piM_over_V"] == pytest.approx(8 * np.pi)


def test_abelian_find_critical_needs_points(files, capsys):
    prob = {"vortices": {"points": [[]]}}
    code, _, _ = run(capsys, "abelian", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", prob),
                     "--find-critical")
    assert code == 1


def test_validate_A2(files, capsys):
    code, out, _ = run(capsys, "validate", "--problem", files("p.json", {"cartan": {"preset": "A2"}}))
    rep = json.loads(out)
    assert code == 0 and rep["status"] == "PASS"
    np.testing.assert_allclose(rep["R"], [1.0, 1.0])


def test_validate_G2(files, capsys):
    code, out, _ = run(capsys, "validate", "--problem", files("p.json", {"cartan": {"preset": "G2"}}))
    rep = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(rep["P"], [3.0, 1.0])


def test_validate_singular(files, capsys):
    code, out, _ = run(capsys, "validate", "--problem", files("p.json", {"cartan": {"K": [[2, -2], [-2, 2]]}}))
    rep = json.loads(out)
    assert code == 1
    assert rep["status"] == "FAIL" and rep["error"] == "NotPositiveDefinite"


def test_validate_with_margins(files, capsys):
    code, out, _ = run(capsys, "validate", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1),
                       "--lambda", 100)
    rep = json.loads(out)
    assert code == 0
    assert rep["lambda0"] == pytest.approx(8 * np.pi)
    assert rep["seed_margins"][0] == pytest.approx(2 - 16 * np.pi / 100)
    assert rep["seed_admissible"]


def test_lambda0_command(files, capsys):
    code, out, _ = run(capsys, "lambda0", "--graph", files("g.json", K2_GRAPH), "--problem", files("p.json", A1))
    assert code == 0
    assert json.loads(out)["lambda0"] == pytest.approx(8 * np.pi, abs=1e-12)


def test_deterministic_output(files, capsys, tmp_path):
    g, p = files("g.json", C3_GRAPH), files("p.json", {"cartan": {"preset": "A2"}, "vortices": {"points": [["v1"], []]}})
    for name in ("a.json", "b.json"):
        run(capsys, "solve", "--graph", g, "--problem", p, "--lambda", 200, "--out", tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
