from functools import reduce
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoffoli.spinmodel import (SpinModelParams, diagonal_energies, dynamical_phases, energy_gap,
                                energy_of_bitstring, ideal_itoffoli, resonance_nu,
                                spin_hamiltonian, spins, target_pair)

Z = np.diag([1.0, -1.0])


def brute_force_ising(J, nu):
    """Explicit Kronecker construction of the phonon-free Hamiltonian."""
    n = J.shape[0]

    def z_on(*sites):
        return reduce(np.kron, [Z if k in sites else np.eye(2) for k in range(n)])

    h = sum(-0.5 * nu * z_on(i) for i in range(n))
    for i, j in itertools.permutations(range(n), 2):
        h = h + J[i, j] * z_on(i, j)
    return h


def random_coupling(rng, n):
    a = rng.normal(size=(n, n))
    J = a + a.T
    np.fill_diagonal(J, 0)
    return J


def test_gap_formula_against_diagonalization():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        J = random_coupling(rng, n)
        nu = rng.normal()
        t = int(rng.integers(n))
        w, v = np.linalg.eigh(brute_force_ising(J, nu))
        # every eigenvector is a basis state; read off its energy by index
        energy = np.empty(2**n)
        energy[np.argmax(np.abs(v), axis=0)] = w
        bits_c = tuple(rng.integers(0, 2, size=n - 1))
        full0 = list(bits_c)
        full0.insert(t, 0)
        full1 = list(bits_c)
        full1.insert(t, 1)
        idx0 = int("".join(map(str, full0)), 2)
        idx1 = int("".join(map(str, full1)), 2)
        brute = energy[idx0] - energy[idx1]
        assert abs(brute - (energy_gap(J, t, bits_c) - nu)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_diagonal_energies_match_bitstrings(n, seed):
    rng = np.random.default_rng(seed)
    J = random_coupling(rng, n)
    e = diagonal_energies(J, 0.3, n)
    for x, bits in enumerate(itertools.product((0, 1), repeat=n)):
        assert abs(e[x] - energy_of_bitstring(J, 0.3, bits)) < 1e-12
    np.testing.assert_allclose(e, np.diag(brute_force_ising(J, 0.3)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_resonance_makes_target_pair_degenerate(n, seed):
    rng = np.random.default_rng(seed)
    J = random_coupling(rng, n)
    t = int(rng.integers(n))
    nu = resonance_nu(J, t)
    e = diagonal_energies(J, nu, n)
    a, b = target_pair(n, t)
    assert abs(e[a] - e[b]) < 1e-10


def test_scalar_coupling_and_spins():
    s = spins(2)
    np.testing.assert_array_equal(s, [[1, 1], [1, -1], [-1, 1], [-1, -1]])
    e = diagonal_energies(1.0, 0.0, 2)
    np.testing.assert_allclose(e, [2, -2, -2, 2])
    with pytest.raises(ValueError):
        diagonal_energies(np.zeros((3, 3)), 0.0, 2)


def test_spin_hamiltonian_drive():
    p = SpinModelParams(3, 0.5, 0.0, 0.8, 1)
    h = spin_hamiltonian(p)
    np.testing.assert_allclose(h, h.conj().T)
    # |0 0 0> couples only to |0 1 0>
    row = h[0].copy()
    row[0] = 0
    np.testing.assert_allclose(np.flatnonzero(np.abs(row) > 0), [2])
    assert h[0, 2] == pytest.approx(0.4)
    with pytest.raises(IndexError):
        SpinModelParams(3, 0.5, 0.0, 0.8, 3)
    with pytest.raises(ValueError):
        SpinModelParams(3, 0.5, 0.0, -1.0, 0)


@pytest.mark.parametrize("n,t", [(2, 0), (3, 1), (4, 2), (5, 0)])
def test_ideal_itoffoli(n, t):
    u = ideal_itoffoli(n, t)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(2**n))
    a, b = target_pair(n, t)
    assert u[a, b] == 1j and u[b, a] == 1j
    mask = np.ones(2**n, bool)
    mask[[a, b]] = False
    np.testing.assert_allclose(np.diag(u)[mask], 1)
    # all controls set, target bit differs
    assert bin(a ^ b).count("1") == 1 and b == 2**n - 1


def test_ideal_itoffoli_from_resonant_drive():
    # a pi pulse on the degenerate pair swaps it and leaves gapped states alone
    n, t, g = 3, 1, 1.0
    J = 50.0
    nu = resonance_nu(J, t, n)
    h = spin_hamiltonian(SpinModelParams(n, J, nu, g, t))
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * w * np.pi / g)) @ v.conj().T
    a, b = target_pair(n, t)
    assert abs(abs(u[a, b]) - 1) < 1e-3
    others = [x for x in range(2**n) if x not in (a, b)]
    assert np.all(np.abs(np.diag(u)[others]) > 0.999)


def test_dynamical_phases_split():
    ph = dynamical_phases(1.0, 0.0, 2, 10.0, 4.0)
    np.testing.assert_allclose(ph, -4.0 * np.array([2, -2, -2, 2]))
