"""Batch command line: run, verify, sweep and optimize scenario configs.

Exit codes: 0 success, 1 verification failure, 2 usage/config/runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import fields

import numpy as np

from .config import ScenarioConfig, load_config
from .dynamics import ClassicalProtocol, QuantumProtocol, Schedule, TrajectoryLedger
from .identity import DecompositionReport, optimize_protocol, simulate, tau_sweep
from .spectral import hermitize

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

TRAJECTORY_COLUMNS = ("t", "E", "S1", "F1", "S_rel", "W_cum", "Q_cum", "Sigma_running")
REPORT_FIELDS = tuple(f.name for f in fields(DecompositionReport))
CONVENTIONS = {
    "k_B": 1,
    "entropy_unit": "nats",
    "heat_sign": "positive into system",
    "W_qs": "equilibrium free-energy difference of the endpoint Hamiltonians",
    "dF1": "nonequilibrium free-energy difference of the endpoint states",
}


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_json(report: DecompositionReport, cfg: ScenarioConfig) -> str:
    doc = {k: getattr(report, k) for k in REPORT_FIELDS}
    doc["conventions"] = dict(CONVENTIONS)
    doc["scenario"] = {"kind": cfg.kind, "dim": cfg.dim, "beta": cfg.beta, "tau": cfg.tau,
                       "steps": cfg.steps, "coupling": cfg.coupling, "seed": cfg.seed}
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def trajectory_csv(ledger: TrajectoryLedger) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    cols = (ledger.times, ledger.E, ledger.S1, ledger.F1, ledger.S_rel,
            ledger.W_cum, ledger.Q_cum, ledger.sigma_running)
    for row in zip(*cols):
        w.writerow([_g(x) for x in row])
    return buf.getvalue()


def run(cfg: ScenarioConfig, report_path=None, trajectory_path=None):
    """Simulate ``cfg``; write the report and trajectory files once everything is computed."""
    report, ledger = simulate(cfg.protocol(), cfg.initial(), cfg.steps)
    report_path = report_path or cfg.outputs.report
    trajectory_path = trajectory_path or cfg.outputs.trajectory
    if report_path:
        _write_atomic(report_path, report_json(report, cfg))
    if trajectory_path:
        _write_atomic(trajectory_path, trajectory_csv(ledger))
    return report, ledger


def verify(cfg: ScenarioConfig, identity: float = 1e-6, first_law: float = 1e-6,
           second_law: float = 1e-8) -> tuple[int, dict]:
    report, _ = run(cfg)
    checks = {
        "identity": (abs(report.identity_residual), identity, abs(report.identity_residual) <= identity),
        "first_law": (abs(report.first_law_residual), first_law, abs(report.first_law_residual) <= first_law),
        "second_law": (report.Sigma, -second_law, report.Sigma >= -second_law),
    }
    failures = {k: {"value": v, "threshold": t} for k, (v, t, ok) in checks.items() if not ok}
    return (EXIT_OK if not failures else EXIT_FAIL), {"failures": failures, "report": report.to_dict()}


class _StretchedFamily:
    """cfg's protocol stretched to duration tau; picklable for worker pools."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def __call__(self, tau: float):
        return self.cfg.protocol(tau)


def sweep_csv(taus, result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("tau",) + REPORT_FIELDS)
    for tau, rep in zip(taus, result.reports):
        w.writerow([_g(tau)] + [_g(getattr(rep, k)) for k in REPORT_FIELDS])
    return buf.getvalue()


def sweep_cmd(cfg: ScenarioConfig, taus, steps_per_unit_time=None, workers=None, out=None):
    if not taus:
        raise ValueError("taus must not be empty")
    spu = steps_per_unit_time or cfg.steps / cfg.tau
    result = tau_sweep(_StretchedFamily(cfg), taus, spu, state0=cfg.initial(),
                       min_steps=min(200, cfg.steps), max_workers=workers)
    text = sweep_csv(result.taus, result)
    out = out or cfg.outputs.sweep
    if out:
        _write_atomic(out, text)
    return result, text


class RampShapeFamily:
    """Protocols whose interior knots sit at fractions ``params`` of the endpoint change.

    Knot k holds H0 + params[k] * (H1 - H0) (levels likewise); the endpoints
    come from the config. params = knot_time / tau is the linear ramp.
    """

    def __init__(self, cfg: ScenarioConfig, interior_fractions):
        self.cfg = cfg
        self.fractions = [float(f) for f in interior_fractions]
        proto = cfg.protocol()
        if isinstance(proto, ClassicalProtocol):
            self.start, self.stop = proto.levels(0.0), proto.levels(proto.duration)
        else:
            self.start = proto.hamiltonian_path[0][1].matrix
            self.stop = proto.hamiltonian_path[-1][1].matrix

    def linear_params(self) -> np.ndarray:
        return np.array(self.fractions)

    def __call__(self, params, tau: float):
        cfg = self.cfg
        times = [0.0] + [f * tau for f in self.fractions] + [tau]
        lam = [0.0] + [float(x) for x in params] + [1.0]
        pts = [self.start + l * (self.stop - self.start) for l in lam]
        if cfg.kind == "classical":
            scheds = tuple(Schedule(tuple((t, p[i]) for t, p in zip(times, pts))) for i in range(cfg.dim))
            return ClassicalProtocol(tau, scheds, cfg.coupling, cfg.temp, rates=cfg.rates)
        path = tuple((t, hermitize(p)) for t, p in zip(times, pts))
        return QuantumProtocol(tau, path, cfg.coupling, cfg.temp)


def optimize_cmd(cfg: ScenarioConfig, budget: int, interior_knots: int = 1, out=None):
    fracs = [(k + 1) / (interior_knots + 1) for k in range(interior_knots)]
    family = RampShapeFamily(cfg, fracs)
    x0 = family.linear_params()
    res = optimize_protocol(family, cfg.tau, [(0.0, 1.0)] * interior_knots, budget,
                            steps=cfg.steps, x0=x0, state0=cfg.initial())
    linear, _ = simulate(family(x0, cfg.tau), cfg.initial(), cfg.steps)
    doc = {
        "knot_fractions": fracs,
        "best_parameters": [float(x) for x in res.best_parameters],
        "best_W_pn": res.best_W_pn,
        "linear_ramp_W_pn": linear.W_pn_direct,
        "evaluations": res.evaluations,
        "converged": res.converged,
        "budget_exhausted": res.budget_exhausted,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        _write_atomic(out, text)
    return res, doc


def _taus(text: str) -> list[float]:
    if not text.strip():
        return []
    return [float(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="workpenalty", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write report/trajectory")
    r.add_argument("config")
    r.add_argument("--report", help="report JSON path (overrides config)")
    r.add_argument("--trajectory", help="trajectory CSV path (overrides config)")

    v = sub.add_parser("verify", help="exit 0 iff the scenario passes all thresholds")
    v.add_argument("config")
    v.add_argument("--identity-tol", type=float, default=1e-6)
    v.add_argument("--first-law-tol", type=float, default=1e-6)
    v.add_argument("--second-law-tol", type=float, default=1e-8)

    s = sub.add_parser("sweep", help="decompose the scenario stretched to several durations")
    s.add_argument("config")
    s.add_argument("--taus", required=True, help="comma-separated durations, e.g. 0.1,1,10,100")
    s.add_argument("--steps-per-unit-time", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help="CSV path (overrides config)")

    o = sub.add_parser("optimize", help="minimise the work penalty over interior knot values")
    o.add_argument("config")
    o.add_argument("--budget", type=int, default=500)
    o.add_argument("--interior-knots", type=int, default=1)
    o.add_argument("--out", help="result JSON path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            report, _ = run(cfg, args.report, args.trajectory)
            sys.stdout.write(report_json(report, cfg))
            return EXIT_OK
        if args.command == "verify":
            code, summary = verify(cfg, args.identity_tol, args.first_law_tol, args.second_law_tol)
            if code != EXIT_OK:
                sys.stderr.write(json.dumps(summary, allow_nan=True) + "\n")
            else:
                sys.stdout.write("PASS\n")
            return code
        if args.command == "sweep":
            _, text = sweep_cmd(cfg, _taus(args.taus), args.steps_per_unit_time, args.workers, args.out)
            if not (args.out or cfg.outputs.sweep):
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "optimize":
            if args.budget < 1 or args.interior_knots < 1:
                raise ValueError("--budget and --interior-knots must be >= 1")
            _, doc = optimize_cmd(cfg, args.budget, args.interior_knots, args.out)
            sys.stdout.write(json.dumps(doc, indent=2) + "\n")
            return EXIT_OK
    except Exception as e:  # noqa: BLE001 - any failure is a runtime error (exit 2)
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
