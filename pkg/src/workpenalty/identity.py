"""Work-penalty decomposition, tau sweeps and protocol optimisation.

The central check: the excess work over the free-energy difference,
W - dF, equals T * (change in relative entropy to the instantaneous Gibbs
state + entropy production). ``decompose`` computes both sides from a
ledger through separate paths and reports the residual.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .dynamics import (
    ClassicalProtocol,
    QuantumProtocol,
    TrajectoryLedger,
    first_law_residual,
    integrate_classical,
    integrate_quantum,
)
from .errors import DimMismatch, NotDiagonal
from .spectral import DensityMatrix, HermitianOperator
from .thermo import (
    ClassicalDistribution,
    Temperature,
    equilibrium_free_energy,
    gibbs_distribution,
    gibbs_state,
    kl_divergence,
    relative_entropy,
    shannon_entropy,
    von_neumann_entropy,
)

Protocol = Union[ClassicalProtocol, QuantumProtocol]
DIAG_TOL = 1e-12


@dataclass(frozen=True)
class DecompositionReport:
    W: float
    W_qs: float
    W_pn_direct: float
    Sigma: float
    dS_rel: float
    W_pn_identity: float
    identity_residual: float
    first_law_residual: float
    Q: float = 0.0
    # dF_1 between the actual endpoint states: the quasi-static reference
    # when the endpoints are not equilibrium states
    dF1: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepResult:
    taus: tuple[float, ...]
    reports: tuple[DecompositionReport, ...]

    def __post_init__(self):
        if len(self.taus) != len(self.reports):
            raise ValueError("taus and reports differ in length")

    @property
    def W_pn(self) -> np.ndarray:
        return np.array([r.W_pn_direct for r in self.reports])


@dataclass(frozen=True)
class OptimizationResult:
    best_parameters: np.ndarray
    best_W_pn: float
    evaluations: int
    converged: bool
    budget_exhausted: bool = False


def entropy_production(ledger: TrajectoryLedger, temp: Temperature) -> float:
    """Sigma = dS - Q/T from endpoint entropies and the integrated heat."""
    return float(ledger.S1[-1] - ledger.S1[0]) - temp.beta * float(ledger.Q_cum[-1])


def _levels_of(h) -> np.ndarray:
    if isinstance(h, HermitianOperator):
        m = h.matrix
        if np.max(np.abs(m - np.diag(np.diagonal(m)))) > DIAG_TOL:
            raise NotDiagonal("classical ledgers need diagonal Hamiltonians")
        return np.real(np.diagonal(m)).copy()
    return np.asarray(h, dtype=float)


def decompose(ledger: TrajectoryLedger, h_initial, h_final, temp: Temperature) -> DecompositionReport:
    """Both sides of W - dF = T (dS_rel + Sigma) for one trajectory.

    The direct side uses the integrated work and partition functions; the
    identity side uses state entropies, relative entropies to the Gibbs
    states of the endpoint Hamiltonians, and the integrated heat.
    """
    T = temp.T
    if ledger.kind == "classical":
        e0, e1 = _levels_of(h_initial), _levels_of(h_final)
        if e0.size != ledger.states.shape[1]:
            raise DimMismatch("Hamiltonian and ledger dimensions differ")
        p0, p1 = ledger.state(0), ledger.state(ledger.steps)
        s0, s1 = shannon_entropy(p0), shannon_entropy(p1)
        rel0 = kl_divergence(p0, gibbs_distribution(e0, temp))
        rel1 = kl_divergence(p1, gibbs_distribution(e1, temp))
        f1_0 = float(p0.probs @ e0) - T * s0
        f1_1 = float(p1.probs @ e1) - T * s1
    else:
        if h_initial.dim != ledger.states.shape[1]:
            raise DimMismatch("Hamiltonian and ledger dimensions differ")
        r0, r1 = ledger.state(0), ledger.state(ledger.steps)
        s0, s1 = von_neumann_entropy(r0), von_neumann_entropy(r1)
        rel0 = relative_entropy(r0, gibbs_state(h_initial, temp))
        rel1 = relative_entropy(r1, gibbs_state(h_final, temp))
        f1_0 = float(np.real(np.sum(r0.matrix * h_initial.matrix.T))) - T * s0
        f1_1 = float(np.real(np.sum(r1.matrix * h_final.matrix.T))) - T * s1
    W = float(ledger.W_cum[-1])
    Q = float(ledger.Q_cum[-1])
    W_qs = equilibrium_free_energy(h_final if ledger.kind == "quantum" else e1, temp) \
        - equilibrium_free_energy(h_initial if ledger.kind == "quantum" else e0, temp)
    sigma = (s1 - s0) - Q / T
    d_rel = rel1 - rel0
    w_pn = W - W_qs
    w_pn_id = T * (d_rel + sigma)
    return DecompositionReport(
        W=W,
        W_qs=W_qs,
        W_pn_direct=w_pn,
        Sigma=sigma,
        dS_rel=d_rel,
        W_pn_identity=w_pn_id,
        identity_residual=w_pn - w_pn_id,
        first_law_residual=first_law_residual(ledger, h_initial, h_final),
        Q=Q,
        dF1=f1_1 - f1_0,
    )


def endpoints(proto: Protocol):
    """Initial and final Hamiltonians (level vectors for classical protocols)."""
    if isinstance(proto, ClassicalProtocol):
        return proto.levels(0.0), proto.levels(proto.duration)
    return proto.hamiltonian_path[0][1], proto.hamiltonian_path[-1][1]


def equilibrium_start(proto: Protocol):
    h0, _ = endpoints(proto)
    if isinstance(proto, ClassicalProtocol):
        return gibbs_distribution(h0, proto.temp)
    return gibbs_state(h0, proto.temp)


def simulate(proto: Protocol, state0, steps: int) -> tuple[DecompositionReport, TrajectoryLedger]:
    """Integrate ``proto`` from ``state0`` (None = Gibbs start) and decompose."""
    if state0 is None:
        state0 = equilibrium_start(proto)
    if isinstance(proto, ClassicalProtocol):
        ledger = integrate_classical(proto, state0, steps)
    else:
        ledger = integrate_quantum(proto, state0, steps)
    h0, h1 = endpoints(proto)
    return decompose(ledger, h0, h1, proto.temp), ledger


def _is_diagonal(m: np.ndarray) -> bool:
    return float(np.max(np.abs(m - np.diag(np.diagonal(m))))) <= DIAG_TOL


def diagonal_reduction_check(qproto: QuantumProtocol, cproto: ClassicalProtocol,
                             rho0: DensityMatrix, steps: int) -> float:
    """Largest deviation in {W, Q, Sigma, dS_rel, W_pn} between the two engines.

    ``cproto`` must carry the quantum drive's diagonal as its levels and use
    the ``"lindblad"`` rate convention (see ``classical_counterpart``).
    """
    for t, h in qproto.hamiltonian_path:
        if not _is_diagonal(h.matrix):
            raise NotDiagonal(f"Hamiltonian knot at t = {t} is not diagonal")
    if not _is_diagonal(rho0.matrix):
        raise NotDiagonal("initial density matrix is not diagonal")
    if cproto.dim != qproto.dim:
        raise DimMismatch("protocols differ in dimension")
    if cproto.rates != "lindblad":
        raise ValueError("the classical counterpart of the quantum dissipator uses rates='lindblad'")
    if abs(cproto.duration - qproto.duration) > DIAG_TOL * qproto.duration:
        raise ValueError("protocols differ in duration")
    knot_times = sorted({t for t, _ in qproto.hamiltonian_path}
                        | {t for s in cproto.level_schedules for t in s.times})
    for t in knot_times:
        diag = np.real(np.diagonal(qproto.hamiltonian(t).matrix))
        if np.max(np.abs(cproto.levels(t) - diag)) > DIAG_TOL:
            raise NotDiagonal(f"classical levels differ from the quantum diagonal at t = {t}")
    p0 = ClassicalDistribution(np.clip(np.real(np.diagonal(rho0.matrix)), 0.0, None))
    qrep, _ = simulate(qproto, rho0, steps)
    crep, _ = simulate(cproto, p0, steps)
    keys = ("W", "Q", "Sigma", "dS_rel", "W_pn_direct")
    return max(abs(getattr(qrep, k) - getattr(crep, k)) for k in keys)


def _sweep_point(args):
    family, tau, steps, state0 = args
    rep, _ = simulate(family(tau), state0, steps)
    return rep


def tau_sweep(protocol_family: Callable[[float], Protocol], taus: Sequence[float],
              steps_per_unit_time: float, state0=None, min_steps: int = 200,
              max_workers: int | None = None) -> SweepResult:
    """Decompose one protocol per duration.

    ``protocol_family(tau)`` builds the protocol; each run uses
    max(min_steps, ceil(steps_per_unit_time * tau)) steps. With
    ``max_workers > 1`` runs go to a process pool (the family must pickle).
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("taus must not be empty")
    if any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be positive and strictly ascending")
    jobs = [(protocol_family, tau, max(min_steps, math.ceil(steps_per_unit_time * tau)), state0)
            for tau in taus]
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    return SweepResult(tuple(taus), tuple(reports))


# --------------------------------------------------------------------------
# derivative-free search


@dataclass
class _Simplex:
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def order(self):
        idx = sorted(range(len(self.values)), key=lambda i: self.values[i])
        self.points = [self.points[i] for i in idx]
        self.values = [self.values[i] for i in idx]

    def diameter(self) -> float:
        pts = np.array(self.points)
        return float(max(np.linalg.norm(a - b) for a in pts for b in pts))


def nelder_mead(f: Callable[[np.ndarray], float], x0, bounds, budget: int,
                step: float = 0.1, xtol: float = 1e-4) -> OptimizationResult:
    """Bounded Nelder-Mead with coefficients 1, 2, 0.5, 0.5.

    Trial points are clipped into ``bounds``. ``budget`` caps the total
    number of objective evaluations, but the initial simplex (x0 plus one
    vertex per coordinate, offset by ``step`` times the bound width) is
    always completed, so a budget below n + 1 returns its best vertex.
    ``converged`` means the simplex diameter fell below ``xtol``.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi >= lo)):
        raise ValueError("bounds must be finite intervals")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    n = x0.size

    def clip(x):
        return np.clip(x, lo, hi)

    sx = _Simplex([x0], [f(x0)])
    for i in range(n):
        x = x0.copy()
        d = step * (hi[i] - lo[i]) or step
        x[i] = x[i] + d if x[i] + d <= hi[i] else x[i] - d
        x = clip(x)
        sx.points.append(x)
        sx.values.append(f(x))
    evals = n + 1
    sx.order()
    converged = sx.diameter() < xtol
    while not converged and evals < budget:
        best, worst = sx.values[0], sx.values[-1]
        centroid = np.mean(sx.points[:-1], axis=0)
        xr = clip(centroid + (centroid - sx.points[-1]))
        fr = f(xr)
        evals += 1
        if fr < best:
            xe = clip(centroid + 2.0 * (centroid - sx.points[-1]))
            fe = f(xe)
            evals += 1
            sx.points[-1], sx.values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < sx.values[-2]:
            sx.points[-1], sx.values[-1] = xr, fr
        else:
            if fr < worst:
                xc = clip(centroid + 0.5 * (xr - centroid))
            else:
                xc = clip(centroid + 0.5 * (sx.points[-1] - centroid))
            fc = f(xc)
            evals += 1
            if fc < min(fr, worst):
                sx.points[-1], sx.values[-1] = xc, fc
            else:
                x_best = sx.points[0]
                for i in range(1, n + 1):
                    sx.points[i] = clip(x_best + 0.5 * (sx.points[i] - x_best))
                    sx.values[i] = f(sx.points[i])
                    evals += 1
        sx.order()
        converged = sx.diameter() < xtol
    return OptimizationResult(
        best_parameters=np.array(sx.points[0]),
        best_W_pn=float(sx.values[0]),
        evaluations=evals,
        converged=bool(converged),
        budget_exhausted=not converged,
    )


def optimize_protocol(family: Callable[[np.ndarray, float], Protocol], tau: float, bounds,
                      budget: int, steps: int = 2000, x0=None, state0=None) -> OptimizationResult:
    """Minimise the work penalty over the free knot values of ``family``.

    ``family(params, tau)`` returns a protocol; the objective is
    ``W_pn_direct`` of the resulting trajectory. ``x0`` defaults to the
    centre of ``bounds``.
    """
    if x0 is None:
        x0 = [0.5 * (a + b) for a, b in bounds]

    def objective(x):
        rep, _ = simulate(family(np.asarray(x, dtype=float), tau), state0, steps)
        return rep.W_pn_direct

    return nelder_mead(objective, x0, bounds, budget)
