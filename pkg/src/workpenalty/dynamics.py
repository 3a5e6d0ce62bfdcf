"""Driven open-system dynamics with thermodynamic bookkeeping.

Two engines share one fixed-step RK4 driver:

* ``integrate_classical``: Pauli master equation dp/dt = R(t) p with
  detailed-balance rates.
* ``integrate_quantum``: Lindblad equation with thermal jumps between the
  instantaneous eigenstates of H(t).

Work and heat rates are integrated as extra components of the RK4 state,
so W and Q carry the same fourth-order accuracy as the state itself and
the first-law residual E(t) - E(0) - W - Q converges as dt**4.

Sign convention: Q > 0 is heat flowing from the bath into the system.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSpectrum, DimMismatch, OutOfRange, StepTooLarge
from .spectral import (
    DensityMatrix,
    HermitianOperator,
    density_from,
    hermitize,
)
from .thermo import (
    ClassicalDistribution,
    Temperature,
    gibbs_weights,
)

GAP_TOL = 1e-9
SIMPLEX_TOL = 1e-8
POSITIVITY_GUARD = 1e-8
RATE_CONVENTIONS = ("gibbs-target", "lindblad")


def first_law_tolerance(steps: int) -> float:
    """Default first-law tolerance: 1e-6 at 2000 steps, scaled as (2000/steps)**2."""
    return 1e-6 * (2000.0 / steps) ** 2


# --------------------------------------------------------------------------
# drive descriptions


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear function of time given by (time, value) knots."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ks = tuple((float(t), float(v)) for t, v in self.knots)
        if len(ks) < 2:
            raise ValueError("a schedule needs at least two knots")
        ts = [t for t, _ in ks]
        if ts[0] != 0.0:
            raise ValueError("first knot must be at t = 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "knots", ks)

    @property
    def duration(self) -> float:
        return self.knots[-1][0]

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.knots]

    def __call__(self, t: float) -> float:
        return sample_schedule(self, t)

    @classmethod
    def linear(cls, start: float, stop: float, tau: float) -> "Schedule":
        return cls(((0.0, start), (tau, stop)))

    @classmethod
    def constant(cls, value: float, tau: float) -> "Schedule":
        return cls(((0.0, value), (tau, value)))


def _segment(times: Sequence[float], t: float) -> tuple[int, float]:
    tau = times[-1]
    slack = 1e-12 * max(1.0, tau)
    if t < -slack or t > tau + slack:
        raise OutOfRange(f"t = {t!r} outside [0, {tau!r}]")
    t = min(max(t, 0.0), tau)
    i = min(bisect.bisect_right(times, t) - 1, len(times) - 2)
    u = (t - times[i]) / (times[i + 1] - times[i])
    return i, u


def sample_schedule(s: Schedule, t: float) -> float:
    ts = s.times
    i, u = _segment(ts, t)
    if u == 0.0:
        return s.knots[i][1]
    if u == 1.0:
        return s.knots[i + 1][1]
    a, b = s.knots[i][1], s.knots[i + 1][1]
    return a + u * (b - a)


@dataclass(frozen=True)
class ClassicalProtocol:
    duration: float
    level_schedules: tuple[Schedule, ...]
    coupling: float
    temp: Temperature
    rates: str = "gibbs-target"

    def __post_init__(self):
        object.__setattr__(self, "level_schedules", tuple(self.level_schedules))
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError("duration must be > 0")
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise ValueError("coupling must be > 0 and finite")
        if len(self.level_schedules) < 2:
            raise ValueError("need at least two levels")
        for s in self.level_schedules:
            if abs(s.duration - self.duration) > 1e-12 * self.duration:
                raise ValueError("all schedules must end at the protocol duration")
        if self.rates not in RATE_CONVENTIONS:
            raise ValueError(f"rates must be one of {RATE_CONVENTIONS}")

    @property
    def dim(self) -> int:
        return len(self.level_schedules)

    def levels(self, t: float) -> np.ndarray:
        return np.array([sample_schedule(s, t) for s in self.level_schedules])


@dataclass(frozen=True)
class QuantumProtocol:
    """H(t) interpolated entrywise between Hamiltonian knots."""

    duration: float
    hamiltonian_path: tuple[tuple[float, HermitianOperator], ...]
    coupling: float
    temp: Temperature
    dissipator_mode: str = "instantaneous-eigenbasis-thermal"
    _times: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        path = tuple((float(t), h) for t, h in self.hamiltonian_path)
        object.__setattr__(self, "hamiltonian_path", path)
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError("duration must be > 0")
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise ValueError("coupling must be > 0 and finite")
        if self.dissipator_mode != "instantaneous-eigenbasis-thermal":
            raise ValueError(f"unsupported dissipator mode {self.dissipator_mode!r}")
        if len(path) < 2:
            raise ValueError("a Hamiltonian path needs at least two knots")
        ts = [t for t, _ in path]
        if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must start at 0 and strictly increase")
        if abs(ts[-1] - self.duration) > 1e-12 * self.duration:
            raise ValueError("last knot must be at the protocol duration")
        if len({h.dim for _, h in path}) != 1:
            raise DimMismatch("all Hamiltonian knots must share one dimension")
        object.__setattr__(self, "_times", ts)

    @property
    def dim(self) -> int:
        return self.hamiltonian_path[0][1].dim

    def hamiltonian(self, t: float) -> HermitianOperator:
        i, u = _segment(self._times, t)
        a = self.hamiltonian_path[i][1]
        if u == 0.0:
            return a
        b = self.hamiltonian_path[i + 1][1]
        if u == 1.0:
            return b
        return hermitize(a.matrix + u * (b.matrix - a.matrix))


# --------------------------------------------------------------------------
# generators


def classical_rate_matrix(levels, temp: Temperature, coupling: float,
                          convention: str = "gibbs-target") -> np.ndarray:
    """Rate matrix R with R[i, j] the rate of j -> i; columns sum to zero.

    ``"gibbs-target"``: R[i, j] = coupling * gamma_i.
    ``"lindblad"``: downhill jumps at ``coupling``, uphill ones suppressed by
    exp(-beta * gap); the population dynamics of the quantum dissipator.
    Both satisfy detailed balance with respect to the Gibbs weights gamma.
    """
    if not coupling > 0:
        raise ValueError("coupling must be > 0")
    eps = np.asarray(levels, dtype=float)
    n = eps.size
    if convention == "gibbs-target":
        g = gibbs_weights(eps, temp)
        r = np.repeat((coupling * g)[:, None], n, axis=1)
    elif convention == "lindblad":
        up = eps[:, None] - eps[None, :]  # energy gained by a j -> i jump
        r = coupling * np.exp(-temp.beta * np.clip(up, 0.0, None))
    else:
        raise ValueError(f"unknown rate convention {convention!r}")
    np.fill_diagonal(r, 0.0)
    np.fill_diagonal(r, -r.sum(axis=0))
    return r


def _thermal_jump_rates(evals: np.ndarray, beta: float, gamma0: float) -> np.ndarray:
    """rates[l, k] for jumps k -> l between eigenstates (ascending evals)."""
    gaps = np.diff(evals)
    if gaps.size and float(np.min(gaps)) < GAP_TOL:
        raise DegenerateSpectrum(f"eigenvalue gap {float(np.min(gaps)):.3e} < {GAP_TOL:.0e}")
    up = evals[:, None] - evals[None, :]
    r = gamma0 * np.exp(-beta * np.clip(up, 0.0, None))
    np.fill_diagonal(r, 0.0)
    return r


def _dissipator_eigenbasis(rt: np.ndarray, rates: np.ndarray) -> np.ndarray:
    # sum over jump pairs of D[|l><k|] acting on rho written in the eigenbasis
    out_rate = rates.sum(axis=0)
    d = -0.5 * (out_rate[:, None] + out_rate[None, :]) * rt
    d.flat[:: d.shape[0] + 1] += rates @ np.diagonal(rt).real
    return d


def lindblad_rhs(rho: DensityMatrix, h: HermitianOperator, temp: Temperature, gamma0: float) -> np.ndarray:
    """-i[H, rho] plus thermal jumps between instantaneous eigenstates of H.

    For each eigenpair l < k the jump k -> l has rate gamma0 and the reverse
    rate gamma0 * exp(-beta (lambda_k - lambda_l)).
    """
    if rho.dim != h.dim:
        raise DimMismatch(f"dims {rho.dim} and {h.dim} differ")
    sd = h.spectrum
    rates = _thermal_jump_rates(sd.eigenvalues, temp.beta, gamma0)
    v = sd.eigenvectors
    r = rho.matrix
    hm = h.matrix
    rt = v.conj().T @ r @ v
    d = v @ _dissipator_eigenbasis(rt, rates) @ v.conj().T
    return -1j * (hm @ r - r @ hm) + d


# --------------------------------------------------------------------------
# ledger


@dataclass(frozen=True, eq=False)
class TrajectoryLedger:
    """States and thermodynamic snapshots on the integration grid.

    ``states`` has shape (M+1, N) for classical runs and (M+1, N, N) for
    quantum ones. W_cum and Q_cum start at zero.
    """

    kind: str
    times: np.ndarray
    states: np.ndarray
    W_cum: np.ndarray
    Q_cum: np.ndarray
    E: np.ndarray
    S1: np.ndarray
    F1: np.ndarray
    S_rel: np.ndarray
    temp: Temperature
    first_law_tol: float

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def sigma_running(self) -> np.ndarray:
        return (self.S1 - self.S1[0]) - self.temp.beta * self.Q_cum

    @property
    def first_law_residuals(self) -> np.ndarray:
        return (self.E - self.E[0]) - self.W_cum - self.Q_cum

    def state(self, i: int):
        if self.kind == "classical":
            p = np.clip(self.states[i], 0.0, None)
            return ClassicalDistribution(p / p.sum())
        return density_from(self.states[i], tol=POSITIVITY_GUARD)

    def check(self) -> None:
        worst = float(np.max(np.abs(self.first_law_residuals)))
        if worst > self.first_law_tol:
            raise StepTooLarge(
                f"first-law residual {worst:.3e} exceeds {self.first_law_tol:.1e}; increase steps"
            )


def _energy_of(ledger: TrajectoryLedger, i: int, h) -> float:
    if ledger.kind == "classical":
        levels = np.real(np.diagonal(h.matrix)) if isinstance(h, HermitianOperator) else np.asarray(h, float)
        return float(np.dot(ledger.states[i], levels))
    hm = h.matrix if isinstance(h, HermitianOperator) else np.asarray(h)
    return float(np.real(np.sum(ledger.states[i] * hm.T)))


def first_law_residual(ledger: TrajectoryLedger, h_initial, h_final) -> float:
    """(E_final - E_initial) - W - Q with energies recomputed from the endpoint Hamiltonians.

    Classical ledgers accept level vectors (or diagonal operators).
    """
    de = _energy_of(ledger, ledger.steps, h_final) - _energy_of(ledger, 0, h_initial)
    return de - float(ledger.W_cum[-1]) - float(ledger.Q_cum[-1])


# --------------------------------------------------------------------------
# integrators


def _entropy_from_probs(p: np.ndarray) -> float:
    p = p[p > 0.0]
    return float(-np.sum(p * np.log(p)))


def _warn_off_grid(knot_times, tau: float, steps: int) -> None:
    # a kink inside a step costs two orders of accuracy in W and Q
    for t in knot_times:
        x = t * steps / tau
        if abs(x - round(x)) > 1e-9 * max(1.0, x):
            warnings.warn(f"knot at t = {t} is not on the integration grid; "
                          "work/heat accuracy drops to second order", stacklevel=3)
            return


def _rk4_run(y0, steps: int, tau: float, context_at, rhs, check):
    """Fixed-step RK4 on (y, W, Q).

    ``context_at(t)`` precomputes the drive at a grid or half-step time;
    ``rhs(y, ctx, ctx_deriv)`` returns (dy, dW, dQ). Drive derivatives are
    finite differences taken inside the current step only, so knots lying on
    grid points never smear across a kink.
    """
    times = tau * np.arange(steps + 1) / steps
    ys = [y0]
    wq = np.zeros((steps + 1, 2))
    c0 = context_at(times[0])
    y = y0
    w = q = 0.0
    for n in range(steps):
        t0, t1 = times[n], times[n + 1]
        dt = t1 - t0
        h = 0.5 * dt
        cm = context_at(t0 + h)
        c1 = context_at(t1)
        d0 = (cm.x - c0.x) / h
        dm = (c1.x - c0.x) / dt
        d1 = (c1.x - cm.x) / h
        k1 = rhs(y, c0, d0)
        y2 = y + h * k1[0]
        check(y2)
        k2 = rhs(y2, cm, dm)
        y3 = y + h * k2[0]
        check(y3)
        k3 = rhs(y3, cm, dm)
        y4 = y + dt * k3[0]
        check(y4)
        k4 = rhs(y4, c1, d1)
        y = y + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        w += (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        q += (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        check(y)
        ys.append(y)
        wq[n + 1] = (w, q)
        c0 = c1
    return times, ys, wq


@dataclass
class _ClassicalCtx:
    x: np.ndarray      # levels
    rates: np.ndarray


def integrate_classical(proto: ClassicalProtocol, p0: ClassicalDistribution, steps: int) -> TrajectoryLedger:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if p0.dim != proto.dim:
        raise DimMismatch(f"initial state has dim {p0.dim}, protocol {proto.dim}")
    temp = proto.temp
    _warn_off_grid({t for sch in proto.level_schedules for t in sch.times}, proto.duration, steps)

    def context_at(t):
        eps = proto.levels(t)
        return _ClassicalCtx(eps, classical_rate_matrix(eps, temp, proto.coupling, proto.rates))

    def rhs(p, ctx, deps):
        dp = ctx.rates @ p
        return dp, float(p @ deps), float(dp @ ctx.x)

    def check(p):
        if float(np.min(p)) < -SIMPLEX_TOL or abs(float(p.sum()) - 1.0) > SIMPLEX_TOL:
            raise StepTooLarge("probability vector left the simplex; increase steps")

    times, ys, wq = _rk4_run(np.array(p0.probs, dtype=float), steps, proto.duration, context_at, rhs, check)
    states = np.array(ys)
    beta = temp.beta
    E = np.empty(steps + 1)
    S = np.empty(steps + 1)
    S_rel = np.empty(steps + 1)
    for i, t in enumerate(times):
        eps = proto.levels(t)
        p = np.clip(states[i], 0.0, None)
        E[i] = float(states[i] @ eps)
        S[i] = _entropy_from_probs(p)
        g = gibbs_weights(eps, temp)
        S_rel[i] = max(0.0, -S[i] - float(p @ np.log(g)))
    ledger = TrajectoryLedger(
        kind="classical", times=times, states=states,
        W_cum=wq[:, 0].copy(), Q_cum=wq[:, 1].copy(),
        E=E, S1=S, F1=E - S / beta, S_rel=S_rel,
        temp=temp, first_law_tol=first_law_tolerance(steps),
    )
    ledger.check()
    return ledger


@dataclass
class _QuantumCtx:
    x: np.ndarray          # Hamiltonian matrix
    evals: np.ndarray
    vecs: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        self.vecs_h = self.vecs.conj().T


def integrate_quantum(proto: QuantumProtocol, rho0: DensityMatrix, steps: int) -> TrajectoryLedger:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if rho0.dim != proto.dim:
        raise DimMismatch(f"initial state has dim {rho0.dim}, protocol {proto.dim}")
    temp = proto.temp
    beta = temp.beta
    gamma0 = proto.coupling
    _warn_off_grid([t for t, _ in proto.hamiltonian_path], proto.duration, steps)

    grid_ctx = {}

    def context_at(t):
        h = proto.hamiltonian(t)
        sd = h.spectrum
        ctx = _QuantumCtx(h.matrix, sd.eigenvalues, sd.eigenvectors,
                          _thermal_jump_rates(sd.eigenvalues, beta, gamma0))
        grid_ctx[t] = ctx
        return ctx

    def rhs(r, ctx, dh):
        v, vh = ctx.vecs, ctx.vecs_h
        rt = vh @ r @ v
        dt_eig = _dissipator_eigenbasis(rt, ctx.rates)
        hm = ctx.x
        dr = -1j * (hm @ r - r @ hm) + v @ dt_eig @ vh
        w = float(np.real(np.sum(r * dh.T)))
        q = float(np.real(np.diagonal(dt_eig)) @ ctx.evals)
        return dr, w, q

    def check(r):
        pass  # positivity is checked on the grid, where the spectrum is needed anyway

    times, ys, wq = _rk4_run(np.array(rho0.matrix), steps, proto.duration, context_at, rhs, check)
    states = np.array(ys)
    E = np.empty(steps + 1)
    S = np.empty(steps + 1)
    S_rel = np.empty(steps + 1)
    for i, t in enumerate(times):
        r = 0.5 * (states[i] + states[i].conj().T)
        states[i] = r
        if abs(float(np.trace(r).real) - 1.0) > 1e-9:
            raise StepTooLarge(f"trace drifted to {np.trace(r).real!r} at t = {t}")
        lam = np.linalg.eigvalsh(r) if r.shape[0] > 16 else DensityMatrix(r).eigenvalues
        if float(lam[0]) < -POSITIVITY_GUARD:
            raise StepTooLarge(f"smallest eigenvalue {lam[0]:.3e} at t = {t}; increase steps")
        ctx = grid_ctx.get(t) or context_at(t)
        E[i] = float(np.real(np.sum(r * ctx.x.T)))
        S[i] = _entropy_from_probs(np.clip(lam, 0.0, None))
        logg = np.log(gibbs_weights(ctx.evals, temp))
        pops = np.real(np.einsum("ik,ij,jk->k", ctx.vecs.conj(), r, ctx.vecs))
        S_rel[i] = max(0.0, -S[i] - float(pops @ logg))
    ledger = TrajectoryLedger(
        kind="quantum", times=times, states=states,
        W_cum=wq[:, 0].copy(), Q_cum=wq[:, 1].copy(),
        E=E, S1=S, F1=E - S / beta, S_rel=S_rel,
        temp=temp, first_law_tol=first_law_tolerance(steps),
    )
    ledger.check()
    return ledger


def classical_counterpart(proto: QuantumProtocol) -> ClassicalProtocol:
    """Pauli master equation obtained by keeping only the diagonal of a diagonal drive.

    Uses the ``"lindblad"`` rate convention so populations follow exactly
    the quantum dissipator's jump rates.
    """
    n = proto.dim
    scheds = []
    for k in range(n):
        knots = tuple((t, float(h.matrix[k, k].real)) for t, h in proto.hamiltonian_path)
        scheds.append(Schedule(knots))
    return ClassicalProtocol(proto.duration, tuple(scheds), proto.coupling, proto.temp, rates="lindblad")
