import csv
import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from workpenalty import BUNDLED_CONFIGS, bundled_config_path
from workpenalty.cli import TRAJECTORY_COLUMNS, main, run, sweep_cmd
from workpenalty.config import load_config, parse_config, serialize_config
from workpenalty.errors import ConfigValidationError, ParseError

MINIMAL = {
    "kind": "classical",
    "dim": 2,
    "beta": 1.0,
    "tau": 1.0,
    "coupling": 1.0,
    "schedule": [{"t": 0.0, "levels": [0.0, 0.0]}, {"t": 1.0, "levels": [0.0, 1.0]}],
}

QUANTUM = {
    "kind": "quantum",
    "dim": 2,
    "beta": 1.0,
    "tau": 1.0,
    "coupling": 1.0,
    "schedule": [
        {"t": 0.0, "hamiltonian": [[0.0, [0.1, 0.2]], [[0.1, -0.2], 1.0]]},
        {"t": 1.0, "hamiltonian": [[0.0, 0.0], [0.0, 2.0]]},
    ],
}


def with_(base, **changes):
    d = json.loads(json.dumps(base))
    d.update(changes)
    return json.dumps(d)


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


# parsing ------------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.steps == 2000
    assert cfg.initial_state == "gibbs"
    assert cfg.rates == "gibbs-target"
    assert cfg.seed == 0


def test_negative_beta_is_named():
    with pytest.raises(ConfigValidationError, match="beta must be > 0"):
        parse_config(with_(MINIMAL, beta=-1))


def test_non_hermitian_knot_is_named():
    bad = json.loads(json.dumps(QUANTUM))
    bad["schedule"][0]["hamiltonian"] = [[0.0, 0.5], [0.2, 1.0]]
    with pytest.raises(ConfigValidationError, match="hermiticity"):
        parse_config(json.dumps(bad))


def test_unknown_fields_rejected():
    with pytest.raises(ConfigValidationError, match="colour: Extra inputs"):
        parse_config(with_(MINIMAL, colour="blue"))


def test_parse_error_has_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_config('{\n  "kind": "classical",\n  "dim": 2,,\n}')


@pytest.mark.parametrize("change, needle", [
    ({"schedule": [{"t": 0.0, "levels": [0, 0]}, {"t": 2.0, "levels": [0, 1]}]}, "tau"),
    ({"schedule": [{"t": 0.0, "levels": [0, 0, 0]}, {"t": 1.0, "levels": [0, 1, 0]}]}, "levels"),
    ({"initial_state": [0.7, 0.7]}, "sum"),
    ({"steps": 0}, "steps"),
    ({"coupling": 0}, "coupling"),
])
def test_invalid_classical_configs(change, needle):
    with pytest.raises(ConfigValidationError, match=needle):
        parse_config(with_(MINIMAL, **change))


def test_quantum_initial_state_checked():
    with pytest.raises(ConfigValidationError, match="positivity"):
        parse_config(with_(QUANTUM, initial_state=[[1.5, 0.0], [0.0, -0.5]]))
    cfg = parse_config(with_(QUANTUM, initial_state=[[0.5, [0.0, 0.1]], [[0.0, -0.1], 0.5]]))
    assert cfg.initial().dim == 2


@pytest.mark.parametrize("name", BUNDLED_CONFIGS)
def test_round_trip_bundled(name):
    cfg = load_config(bundled_config_path(name))
    assert parse_config(serialize_config(cfg)) == cfg


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.floats(0.1, 10), st.floats(0.1, 10), st.lists(finite, min_size=8, max_size=8),
       st.integers(1, 5000), st.integers(0, 2**31))
def test_round_trip_generated(dim, beta, tau, vals, steps, seed):
    doc = {
        "kind": "classical", "dim": dim, "beta": beta, "tau": tau, "coupling": 1.0, "steps": steps,
        "seed": seed,
        "schedule": [{"t": 0.0, "levels": vals[:dim]}, {"t": tau, "levels": vals[4:4 + dim]}],
    }
    cfg = parse_config(json.dumps(doc))
    assert parse_config(serialize_config(cfg)) == cfg


# run / verify / sweep ----------------------------------------------------------

def test_run_equilibrium_static_is_zero(tmp_path):
    cfg = load_config(bundled_config_path("equilibrium_static"))
    report, _ = run(cfg)
    for k in ("W", "W_qs", "W_pn_direct", "Sigma", "dS_rel", "identity_residual"):
        assert abs(getattr(report, k)) <= 1e-9


def test_run_writes_files(tmp_path):
    rep_path, traj_path = tmp_path / "out" / "report.json", tmp_path / "out" / "traj.csv"
    code = main(["run", bundled_config_path("sudden_quench"), "--report", str(rep_path),
                 "--trajectory", str(traj_path)])
    assert code == 0
    doc = json.loads(rep_path.read_text())
    assert doc["W"] == pytest.approx(math.log(2) / 2, abs=1e-4)
    assert doc["W_pn_direct"] == pytest.approx(0.05889, abs=1e-4)
    assert doc["conventions"]["k_B"] == 1
    assert doc["conventions"]["entropy_unit"] == "nats"
    rows = list(csv.reader(io.StringIO(traj_path.read_text())))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 2002
    # 17 significant digits round-trip exactly
    assert float(rows[-1][5]) == doc["W"]


def test_run_uses_config_output_paths(tmp_path):
    doc = json.loads(open(bundled_config_path("sudden_quench")).read())
    doc["outputs"] = {"report": str(tmp_path / "r.json"), "trajectory": str(tmp_path / "t.csv")}
    assert main(["run", write(tmp_path, doc)]) == 0
    assert (tmp_path / "r.json").exists() and (tmp_path / "t.csv").exists()


def test_verify_exit_codes(tmp_path, capsys):
    ramp = bundled_config_path("reset_ramp")
    assert main(["verify", ramp]) == 0
    capsys.readouterr()
    assert main(["verify", ramp, "--identity-tol", "0", "--first-law-tol", "0", "--second-law-tol", "0"]) == 1
    summary = json.loads(capsys.readouterr().err)
    assert "identity" in summary["failures"]
    assert main(["verify", write(tmp_path, "{not json")]) == 2
    assert main(["verify", write(tmp_path, with_(MINIMAL, beta=-1))]) == 2
    assert main(["verify", str(tmp_path / "missing.json")]) == 2


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_sweep_four_points(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", bundled_config_path("reset_ramp_classical"), "--taus", "0.1,1,10,100",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 4
    w = [float(r["W_pn_direct"]) for r in rows]
    assert all(b <= a + 1e-7 for a, b in zip(w, w[1:]))


def test_sweep_single_tau_equals_run():
    cfg = load_config(bundled_config_path("reset_ramp_classical"))
    result, _ = sweep_cmd(cfg, [cfg.tau])
    report, _ = run(cfg)
    assert result.reports[0] == report


def test_sweep_empty_taus(tmp_path):
    cfg = load_config(bundled_config_path("reset_ramp_classical"))
    with pytest.raises(ValueError):
        sweep_cmd(cfg, [])
    assert main(["sweep", bundled_config_path("reset_ramp_classical"), "--taus", ""]) == 2


def test_optimize_command(tmp_path, capsys):
    out = tmp_path / "opt.json"
    assert main(["optimize", bundled_config_path("reset_ramp_classical"), "--budget", "10",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["best_W_pn"] <= doc["linear_ramp_W_pn"]
    assert doc["evaluations"] <= 10 + 3


def test_outputs_are_deterministic(tmp_path):
    paths = []
    for i in range(2):
        r, t = tmp_path / f"r{i}.json", tmp_path / f"t{i}.csv"
        assert main(["run", bundled_config_path("qubit_ramp"), "--report", str(r), "--trajectory", str(t)]) == 0
        paths.append((r.read_bytes(), t.read_bytes()))
    assert paths[0] == paths[1]
