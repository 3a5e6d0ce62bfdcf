"""Equilibrium and nonequilibrium thermodynamic functionals.

Units: k_B = 1, entropies in nats, energies in the same units as the
Hamiltonian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, ThermoOverflow
from .spectral import (
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    trace_product,
)

EXPONENT_GUARD = 700.0
SUPPORT_EIG_TOL = 1e-14
SUPPORT_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Temperature:
    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not (math.isfinite(b) and b > 0.0):
            raise ValueError("beta must be > 0 and finite")
        object.__setattr__(self, "beta", b)

    @property
    def T(self) -> float:
        return 1.0 / self.beta

    @classmethod
    def from_T(cls, T: float) -> "Temperature":
        return cls(1.0 / T)


@dataclass(frozen=True, eq=False)
class ClassicalDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probabilities must be a non-empty vector")
        if np.any(p < 0.0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and >= 0")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return self.probs.size


def _levels(h) -> np.ndarray:
    if isinstance(h, HermitianOperator):
        return h.eigenvalues
    return np.asarray(h, dtype=float)


def _log_partition(levels: np.ndarray, beta: float) -> float:
    x = -beta * levels
    top = float(np.max(x))
    if top > EXPONENT_GUARD:
        raise ThermoOverflow(f"beta * min eigenvalue = {-top:.1f} < -{EXPONENT_GUARD:.0f}")
    return top + math.log(float(np.sum(np.exp(x - top))))


def partition_function(h: HermitianOperator, temp: Temperature) -> float:
    """Z = sum_k exp(-beta lambda_k). Also accepts a vector of levels."""
    return math.exp(_log_partition(_levels(h), temp.beta))


def equilibrium_free_energy(h: HermitianOperator, temp: Temperature) -> float:
    return -temp.T * _log_partition(_levels(h), temp.beta)


def gibbs_weights(levels, temp: Temperature) -> np.ndarray:
    x = -temp.beta * np.asarray(levels, dtype=float)
    top = float(np.max(x))
    if top > EXPONENT_GUARD:
        raise ThermoOverflow(f"beta * min level = {-top:.1f} < -{EXPONENT_GUARD:.0f}")
    w = np.exp(x - top)
    return w / w.sum()


def gibbs_state(h: HermitianOperator, temp: Temperature) -> DensityMatrix:
    """exp(-beta H)/Z, built in the eigenbasis of H."""
    sd = h.spectrum
    w = gibbs_weights(sd.eigenvalues, temp)
    log_w = -temp.beta * sd.eigenvalues - _log_partition(sd.eigenvalues, temp.beta)
    v = sd.eigenvectors
    m = (v * w) @ v.conj().T
    rho = DensityMatrix(0.5 * (m + m.conj().T))
    # valid by construction and the spectrum is known; skip re-diagonalising
    rho.__dict__["spectrum"] = SpectralDecomposition(w, v)
    # exact log-weights: a full-rank state whose tail underflows is not a support loss
    rho.__dict__["log_eigenvalues"] = log_w
    return rho


def gibbs_distribution(levels, temp: Temperature) -> ClassicalDistribution:
    return ClassicalDistribution(gibbs_weights(levels, temp))


def energy(rho: DensityMatrix, h: HermitianOperator) -> float:
    return trace_product(rho, h)


def _xlogx_sum(p: np.ndarray) -> float:
    p = np.where(p < 0.0, 0.0, p)  # round-off negatives count as zero
    nz = p[p > 0.0]
    return float(np.sum(nz * np.log(nz)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    return max(0.0, -_xlogx_sum(rho.eigenvalues))


def shannon_entropy(p: ClassicalDistribution) -> float:
    return max(0.0, -_xlogx_sum(p.probs))


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """S(rho || sigma) = -S(rho) - Tr(rho ln sigma); +inf on support violation.

    Evaluated in the eigenbasis of sigma so that zero eigenvalues of rho
    never reach a logarithm.
    """
    if rho.dim != sigma.dim:
        raise DimMismatch(f"dims {rho.dim} and {sigma.dim} differ")
    sd = sigma.spectrum
    v = sd.eigenvectors
    # <k| rho |k> for each eigenvector k of sigma
    weights = np.einsum("ik,ij,jk->k", v.conj(), rho.matrix, v).real
    s = sd.eigenvalues
    log_s = sigma.__dict__.get("log_eigenvalues")
    if log_s is not None:
        cross = float(np.sum(weights * log_s))
        return max(0.0, -von_neumann_entropy(rho) - cross)
    small = s < SUPPORT_EIG_TOL
    if np.any(weights[small] > SUPPORT_WEIGHT_TOL):
        return math.inf
    cross = float(np.sum(weights[~small] * np.log(s[~small])))
    return max(0.0, -von_neumann_entropy(rho) - cross)


def kl_divergence(p: ClassicalDistribution, q: ClassicalDistribution) -> float:
    if p.dim != q.dim:
        raise DimMismatch(f"dims {p.dim} and {q.dim} differ")
    pp, qq = p.probs, q.probs
    mask = pp > 0.0
    if np.any(qq[mask] == 0.0):
        return math.inf
    return max(0.0, float(np.sum(pp[mask] * np.log(pp[mask] / qq[mask]))))


def noneq_free_energy(rho: DensityMatrix, h: HermitianOperator, temp: Temperature) -> float:
    """F_1 = E - T S."""
    return energy(rho, h) - temp.T * von_neumann_entropy(rho)


def free_energy_split_residual(rho: DensityMatrix, h: HermitianOperator, temp: Temperature) -> float:
    """F_1 - F - T S(rho || rho_G); zero up to round-off for every valid input."""
    f1 = noneq_free_energy(rho, h, temp)
    f = equilibrium_free_energy(h, temp)
    return f1 - f - temp.T * relative_entropy(rho, gibbs_state(h, temp))


# classical counterparts, used by the Pauli master-equation engine

def classical_energy(p: ClassicalDistribution, levels) -> float:
    return float(np.dot(p.probs, np.asarray(levels, dtype=float)))


def classical_noneq_free_energy(p: ClassicalDistribution, levels, temp: Temperature) -> float:
    return classical_energy(p, levels) - temp.T * shannon_entropy(p)
