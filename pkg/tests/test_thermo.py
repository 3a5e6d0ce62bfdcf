import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from workpenalty.errors import ThermoOverflow
from workpenalty.spectral import (
    density_from,
    diagonal_operator,
    eigh,
    hermitize,
    random_density,
    random_hermitian,
)
from workpenalty.thermo import (
    ClassicalDistribution,
    Temperature,
    energy,
    equilibrium_free_energy,
    free_energy_split_residual,
    gibbs_state,
    kl_divergence,
    noneq_free_energy,
    partition_function,
    relative_entropy,
    shannon_entropy,
    von_neumann_entropy,
)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
LN2 = math.log(2.0)


def random_unitary(n, rng):
    return eigh(random_hermitian(n, rng)).eigenvectors


def test_temperature_validation():
    assert Temperature(2.0).T == 0.5
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            Temperature(bad)


def test_partition_function_examples():
    assert partition_function(hermitize(np.zeros((2, 2))), Temperature(3.3)) == pytest.approx(2.0, abs=1e-15)
    assert partition_function(diagonal_operator([0.0, LN2]), Temperature(1.0)) == pytest.approx(1.5, abs=1e-15)
    eps, beta = 0.8, 1.7
    z = partition_function(hermitize(eps * PAULI_X), Temperature(beta))
    assert z == pytest.approx(math.exp(beta * eps) + math.exp(-beta * eps), rel=1e-14)
    with pytest.raises(ThermoOverflow):
        partition_function(diagonal_operator([-800.0, 0.0]), Temperature(1.0))


def test_free_energy_examples(rng):
    assert equilibrium_free_energy(hermitize(np.zeros((2, 2))), Temperature(1.0)) == pytest.approx(-LN2, abs=1e-15)
    assert equilibrium_free_energy(diagonal_operator([0.0, LN2]), Temperature(1.0)) == pytest.approx(-math.log(1.5), abs=1e-15)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        h = random_hermitian(n, rng)
        temp = Temperature(rng.uniform(0.1, 5.0))
        g = gibbs_state(h, temp)
        f = equilibrium_free_energy(h, temp)
        e_g = energy(g, h)
        assert f <= e_g + 1e-12
        assert abs(f - (e_g - temp.T * von_neumann_entropy(g))) <= 1e-10


def test_gibbs_state_examples(rng):
    g = gibbs_state(hermitize(np.zeros((3, 3))), Temperature(0.4))
    assert np.allclose(g.matrix, np.eye(3) / 3, atol=1e-15)
    g = gibbs_state(diagonal_operator([0.0, LN2]), Temperature(1.0))
    assert np.allclose(g.matrix, np.diag([2 / 3, 1 / 3]), atol=1e-15)
    g = gibbs_state(diagonal_operator([0.0, 1.0]), Temperature(50.0))
    assert g.matrix[0, 0].real >= 1 - 1e-20
    assert g.matrix[1, 1].real <= math.exp(-50.0) * (1 + 1e-12)
    h = random_hermitian(4, rng)
    g = gibbs_state(h, Temperature(0.9))
    assert np.max(np.abs(g.matrix @ h.matrix - h.matrix @ g.matrix)) <= 1e-10
    assert g.eigenvalues[0] > 0


def test_energy_examples(rng):
    assert energy(density_from(np.eye(2) / 2), diagonal_operator([0.0, 1.0])) == pytest.approx(0.5, abs=1e-16)
    h = random_hermitian(3, rng)
    sd = h.spectrum
    ground = np.outer(sd.eigenvectors[:, 0], sd.eigenvectors[:, 0].conj())
    assert energy(density_from(ground), h) == pytest.approx(sd.eigenvalues[0], abs=1e-12)


def test_entropy_examples(rng):
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi /= np.linalg.norm(psi)
    assert von_neumann_entropy(density_from(np.outer(psi, psi.conj()))) <= 1e-12
    assert von_neumann_entropy(density_from(np.eye(2) / 2)) == pytest.approx(LN2, abs=1e-15)
    expected = (2 / 3) * math.log(3 / 2) + (1 / 3) * math.log(3)
    assert von_neumann_entropy(density_from(np.diag([2 / 3, 1 / 3]))) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.63651, abs=1e-5)


def test_shannon_examples():
    assert shannon_entropy(ClassicalDistribution([0.0, 1.0, 0.0])) == 0.0
    assert shannon_entropy(ClassicalDistribution([0.25] * 4)) == pytest.approx(math.log(4), abs=1e-15)
    assert shannon_entropy(ClassicalDistribution([2 / 3, 1 / 3])) == pytest.approx(
        von_neumann_entropy(density_from(np.diag([2 / 3, 1 / 3]))), abs=1e-15)


def test_kl_examples():
    p = ClassicalDistribution([0.3, 0.7])
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence(ClassicalDistribution([1, 0]), ClassicalDistribution([0.5, 0.5])) == pytest.approx(LN2, abs=1e-15)
    assert kl_divergence(ClassicalDistribution([0.5, 0.5]), ClassicalDistribution([1, 0])) == math.inf


def test_relative_entropy_examples(rng):
    rho = random_density(3, rng)
    assert relative_entropy(rho, rho) <= 1e-12
    a = rng.dirichlet(np.ones(4))
    b = rng.dirichlet(np.ones(4))
    kl = sum(x * math.log(x / y) for x, y in zip(a, b))
    assert relative_entropy(density_from(np.diag(a)), density_from(np.diag(b))) == pytest.approx(kl, abs=1e-10)
    up = density_from(np.diag([1.0, 0.0]))
    down = density_from(np.diag([0.0, 1.0]))
    assert relative_entropy(up, down) == math.inf
    # rho inside sigma's support is finite even if sigma is singular
    assert math.isfinite(relative_entropy(up, density_from(np.diag([0.5, 0.5]))))


def test_noneq_free_energy_examples(rng):
    h = random_hermitian(3, rng)
    temp = Temperature(1.3)
    assert noneq_free_energy(gibbs_state(h, temp), h, temp) == pytest.approx(equilibrium_free_energy(h, temp), abs=1e-12)
    sd = h.spectrum
    ground = density_from(np.outer(sd.eigenvectors[:, 0], sd.eigenvectors[:, 0].conj()))
    assert noneq_free_energy(ground, h, temp) == pytest.approx(sd.eigenvalues[0], abs=1e-10)
    rho = random_density(3, rng)
    f = equilibrium_free_energy(h, temp)
    assert noneq_free_energy(rho, h, temp) == pytest.approx(
        f + temp.T * relative_entropy(rho, gibbs_state(h, temp)), abs=1e-10)


def test_split_residual_examples(rng):
    for n in (2, 3, 4, 8):
        h = random_hermitian(n, rng)
        temp = Temperature(rng.uniform(0.2, 3))
        assert abs(free_energy_split_residual(gibbs_state(h, temp), h, temp)) <= 1e-12
        assert abs(free_energy_split_residual(density_from(np.eye(n) / n), h, temp)) <= 1e-9


def test_gibbs_variational_and_klein(rng):
    for _ in range(200):
        n = int(rng.choice([2, 3, 4, 8]))
        h = random_hermitian(n, rng)
        temp = Temperature(rng.uniform(0.2, 3))
        rho = random_density(n, rng, rank=int(rng.integers(1, n + 1)))
        g = gibbs_state(h, temp)
        d = relative_entropy(rho, g)
        assert d >= 0
        if d > 1e-6:
            assert noneq_free_energy(rho, h, temp) - equilibrium_free_energy(h, temp) > 1e-12
    for _ in range(50):
        rho, sigma = random_density(3, rng), random_density(3, rng)
        assert relative_entropy(rho, rho) <= 1e-12
        if np.max(np.abs(rho.matrix - sigma.matrix)) > 1e-2:
            assert relative_entropy(rho, sigma) > 0


def test_unitary_invariance(rng):
    for n in (2, 3, 4, 8):
        rho = random_density(n, rng)
        u = random_unitary(n, rng)
        rotated = density_from(u @ rho.matrix @ u.conj().T)
        assert abs(von_neumann_entropy(rotated) - von_neumann_entropy(rho)) <= 1e-10


probs = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda v: sum(v) > 1e-3))


@settings(max_examples=200, deadline=None)
@given(probs, probs)
def test_diagonal_consistency(a, b):
    n = min(len(a), len(b))
    a = np.array(a[:n]) + 1e-3
    b = np.array(b[:n]) + 1e-3
    a /= a.sum()
    b /= b.sum()
    p, q = ClassicalDistribution(a), ClassicalDistribution(b)
    rho, sigma = density_from(np.diag(a)), density_from(np.diag(b))
    assert abs(relative_entropy(rho, sigma) - kl_divergence(p, q)) <= 1e-10
    assert abs(von_neumann_entropy(rho) - shannon_entropy(p)) <= 1e-10
    assert 0.0 <= shannon_entropy(p) <= math.log(n) + 1e-12


def test_gibbs_tail_underflow_is_not_support_loss():
    h = diagonal_operator([0.0, 40.0, 80.0])
    temp = Temperature(2.0)
    rho = density_from(np.full((3, 3), 1 / 3))
    expected = -von_neumann_entropy(rho) + temp.beta * energy(rho, h) + math.log(partition_function(h, temp))
    assert relative_entropy(rho, gibbs_state(h, temp)) == pytest.approx(expected, rel=1e-12)
    assert abs(free_energy_split_residual(rho, h, temp)) < 1e-9
