"""Dense Hermitian linear algebra for small operators.

Diagonalisation is done with cyclic complex Jacobi rotations, which is
plenty for the N <= 16 operators used by the thermodynamics code and keeps
every result deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimMismatch,
    DomainError,
    NonHermitian,
    NotADensityMatrix,
)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
MAX_SWEEPS = 100
OFFDIAG_TOL = 1e-13


def _as_square(m) -> np.ndarray:
    a = np.array(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray   # ascending, real
    eigenvectors: np.ndarray  # columns orthonormal

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """An N x N Hermitian matrix (N >= 2), stored read-only.

    Build instances through :func:`hermitize` unless the matrix is already
    known to be exactly Hermitian.
    """

    matrix: np.ndarray

    def __post_init__(self):
        a = _as_square(self.matrix)
        if a.shape[0] < 2:
            raise DimMismatch("operators must have dimension >= 2")
        dev = np.max(np.abs(a - a.conj().T))
        if dev > HERMITIAN_TOL:
            raise NonHermitian(f"max |M - M^dagger| = {dev:.3e}")
        object.__setattr__(self, "matrix", _frozen(a))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> SpectralDecomposition:
        return eigh(self)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class DensityMatrix(HermitianOperator):
    """Hermitian, unit-trace, positive semidefinite operator.

    Use :func:`density_from` to build one; the constructor only checks
    hermiticity.
    """


def hermitize(m, tol: float = HERMITIAN_TOL) -> HermitianOperator:
    a = _as_square(m)
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > tol:
        raise NonHermitian(f"max |M - M^dagger| = {dev:.3e} exceeds {tol:.1e}")
    return HermitianOperator(0.5 * (a + a.conj().T))


def _jacobi(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # plain-list rotations: several times faster than numpy slicing at N <= 8
    n = m.shape[0]
    a = m.tolist()
    v = [[1.0 + 0j if i == j else 0j for j in range(n)] for i in range(n)]
    scale = math.sqrt(sum(abs(x) ** 2 for row in a for x in row)) or 1e-300
    thresh = (OFFDIAG_TOL * scale) ** 2
    for _ in range(MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            row = a[p]
            for q in range(p + 1, n):
                z = row[q]
                off += z.real * z.real + z.imag * z.imag
        if 2.0 * off <= thresh:
            w = np.array([a[i][i].real for i in range(n)])
            return w, np.array(v, dtype=np.complex128)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                r = abs(apq)
                if r == 0.0:
                    continue
                ph = apq / r
                cph = ph.conjugate()
                app = a[p][p].real
                aqq = a[q][q].real
                theta = (aqq - app) / (2.0 * r)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^dagger A J,  J = [[c, s], [-s conj(ph), c conj(ph)]] on (p, q)
                sc = s * cph
                cc = c * cph
                sp = s * ph
                cp = c * ph
                for row in a:
                    x, y = row[p], row[q]
                    row[p] = c * x - sc * y
                    row[q] = s * x + cc * y
                rp, rq = a[p], a[q]
                for k in range(n):
                    x, y = rp[k], rq[k]
                    rp[k] = c * x - sp * y
                    rq[k] = s * x + cp * y
                rp[q] = 0j
                rq[p] = 0j
                rp[p] = complex(app - t * r)
                rq[q] = complex(aqq + t * r)
                for row in v:
                    x, y = row[p], row[q]
                    row[p] = c * x - sc * y
                    row[q] = s * x + cc * y
    raise ConvergenceFailure(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")


def eigh(h: HermitianOperator) -> SpectralDecomposition:
    """Eigendecomposition with ascending eigenvalues."""
    w, v = _jacobi(h.matrix)
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(_frozen(w[order]), _frozen(v[:, order]))


def apply_matrix_function(h: HermitianOperator, f: Callable[[np.ndarray], np.ndarray]) -> HermitianOperator:
    """Return V f(Lambda) V^dagger.

    ``f`` is applied elementwise to the eigenvalue array. A non-finite value
    anywhere (log of zero, log of a negative number, ...) is a DomainError.
    """
    sd = h.spectrum
    with np.errstate(all="ignore"):
        fw = np.asarray(f(sd.eigenvalues.copy()), dtype=float)
    if fw.shape != sd.eigenvalues.shape or not np.all(np.isfinite(fw)):
        raise DomainError(f"function undefined on spectrum {sd.eigenvalues}")
    v = sd.eigenvectors
    return hermitize((v * fw) @ v.conj().T, tol=1e-9)


def trace_product(a: HermitianOperator, b: HermitianOperator) -> float:
    """Re Tr(AB) for two Hermitian operators of equal dimension."""
    if a.dim != b.dim:
        raise DimMismatch(f"dims {a.dim} and {b.dim} differ")
    val = np.sum(a.matrix * b.matrix.T)
    # Tr(AB) of Hermitian A, B is real; anything else means corrupted input
    assert abs(val.imag) <= 1e-10 * max(1.0, abs(val.real)), val
    return float(val.real)


def density_from(m, tol: float = TRACE_TOL) -> DensityMatrix:
    """Validate ``m`` as a density matrix.

    ``tol`` bounds both the trace deviation from one and how negative the
    smallest eigenvalue may be. Hermiticity is always checked at 1e-12.
    """
    a = _as_square(m)
    dev = float(np.max(np.abs(a - a.conj().T)))
    if dev > HERMITIAN_TOL:
        raise NotADensityMatrix("hermiticity", f"max |M - M^dagger| = {dev:.3e}")
    rho = DensityMatrix(0.5 * (a + a.conj().T))
    tr = float(np.trace(rho.matrix).real)
    if abs(tr - 1.0) > tol:
        raise NotADensityMatrix("trace", f"trace = {tr!r}")
    lmin = float(rho.eigenvalues[0])
    if lmin < -tol:
        raise NotADensityMatrix("positivity", f"smallest eigenvalue {lmin:.3e}")
    return rho


def diagonal_operator(values) -> HermitianOperator:
    return HermitianOperator(np.diag(np.asarray(values, dtype=float)).astype(np.complex128))


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return hermitize(scale * 0.5 * (g + g.conj().T))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random density matrix from a Ginibre ensemble of the given rank."""
    k = n if rank is None else rank
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    m = g @ g.conj().T
    return density_from(m / np.trace(m).real)
