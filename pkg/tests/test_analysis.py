import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_unitary
from itoffoli.analysis import (Channel, average_fidelity, channel_from_columns, control_gaps,
                               degeneracy_flags, diagnostics, dressed_excitation, fidelity_report,
                               fingerprint, pauli_strings, process_matrix, thermal_cutoff,
                               unitary_fidelity)
from itoffoli.evolution import basis_inputs
from itoffoli.hamiltonians import make_config
from itoffoli.hilbert import displacement_matrix
from itoffoli.spinmodel import ideal_itoffoli

KHZ = 2 * np.pi * 1e3


def closed_form(u, v):
    d = u.shape[0]
    return (abs(np.trace(u.conj().T @ v)) ** 2 + d) / (d * d + d)


def test_pauli_sum_matches_closed_form_for_unitaries():
    rng = np.random.default_rng(7)
    for k in range(50):
        d = 2 ** (1 + k % 3)
        u, v = random_unitary(d, rng), random_unitary(d, rng)
        chan = Channel.from_unitary(u)
        assert abs(average_fidelity(chan, v, "pauli") - closed_form(u, v)) < 1e-10
        assert abs(average_fidelity(chan, v, "kraus") - closed_form(u, v)) < 1e-10
        assert abs(unitary_fidelity(u, v) - closed_form(u, v)) < 1e-10


def test_known_values():
    # identity against the three-qubit i-Toffoli: trace 6 of 8
    assert average_fidelity(Channel.from_unitary(np.eye(8)), ideal_itoffoli(3, 1)) == \
        pytest.approx(44 / 72, abs=1e-12)
    x = np.array([[0, 1], [1, 0]])
    assert average_fidelity(Channel.from_unitary(x), np.eye(2)) == pytest.approx(1 / 3)
    assert average_fidelity(Channel.from_unitary(ideal_itoffoli(3, 1)), ideal_itoffoli(3, 1)) == \
        pytest.approx(1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(1, 2))
def test_depolarizing_channel(p, n):
    d = 2**n
    paulis = list(pauli_strings(n))
    weights = np.full(len(paulis), p / d**2)
    weights[0] += 1 - p
    chan = Channel(np.array([np.sqrt(w) * P for w, P in zip(weights, paulis)]))
    assert chan.trace_defect() < 1e-12
    expected = 1 - p + p / d
    assert average_fidelity(chan, np.eye(d), "pauli") == pytest.approx(expected, abs=1e-12)
    assert average_fidelity(chan, np.eye(d), "kraus") == pytest.approx(expected, abs=1e-12)


def test_channel_from_product_columns():
    # U on qubits times any unitary on the phonon: tracing out leaves U
    rng = np.random.default_rng(11)
    u = random_unitary(4, rng)
    w = displacement_matrix(0.4j, 12)
    vac = np.zeros(12)
    vac[0] = 1
    cols = np.array([np.kron(u[:, a], w @ vac) for a in range(4)])
    chan = channel_from_columns(cols, 4)
    assert chan.trace_defect() < 1e-10
    assert average_fidelity(chan, u) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(process_matrix(cols, 4), u * w[0, 0])


def test_unknown_method():
    with pytest.raises(ValueError):
        average_fidelity(Channel.from_unitary(np.eye(2)), np.eye(2), "choi")


def test_thermal_cutoff():
    assert thermal_cutoff(0.0) == 0
    # geometric weights 2^-(n+1): tail beyond 13 is 2^-14 < 1e-4, beyond 12 is not
    assert thermal_cutoff(1.0) == 13
    assert thermal_cutoff(1.0, 1e-2) == 6


def test_fingerprint_stable():
    a = fingerprint({"x": 1.0, "y": [1, 2], "z": "a"})
    assert a == fingerprint({"z": "a", "y": (1, 2), "x": np.float64(1.0)})
    assert a != fingerprint({"x": 1.0 + 1e-9, "y": [1, 2], "z": "a"})
    assert len(a) == 16


def test_control_gaps_and_degeneracy_flags():
    cfg = make_config(3, 1e3 * KHZ, 50 * KHZ, 3.1 * KHZ, J=6.2 * KHZ)
    gaps = control_gaps(cfg)
    J = cfg.J_mean
    assert gaps[(1, 1)] == pytest.approx(0, abs=1e-6)
    assert gaps[(0, 1)] == pytest.approx(8 * J)
    assert gaps[(0, 0)] == pytest.approx(16 * J)
    flags = degeneracy_flags(cfg)
    assert any(f.order == 1 and f.control_bits in ((0, 1), (1, 0)) for f in flags)
    assert any(f.order == 2 and f.control_bits == (0, 0) for f in flags)
    quiet = make_config(3, 1e3 * KHZ, 50 * KHZ, 2.0 * KHZ, J=4.0 * KHZ)
    assert degeneracy_flags(quiet) == []


def test_dressed_excitation_of_dressed_vacuum(fig2_config):
    cfg = fig2_config.with_(fock_cutoffs=(25,))
    space = cfg.space
    psi = basis_inputs(space)
    coupling = np.array([1 - 2 * np.array(b) for b in itertools.product((0, 1), repeat=3)]) \
        @ cfg.eta.T
    for x in range(space.qubit_dim):
        alpha = 1j * cfg.omega_rabi * coupling[x, 0] / (2 * cfg.detunings[0])
        psi[x, x] = displacement_matrix(alpha, 26)[:, 0]
    exc = dressed_excitation(psi, cfg, 1.0)
    assert np.max(np.abs(exc)) < 1e-10
    assert np.all(dressed_excitation(psi, cfg, 0.0) > 0.1)


def test_fig2_report_and_diagnostics(fig2_result):
    rep = fidelity_report(fig2_result)
    assert 0.98 < rep.average_fidelity <= 1
    assert rep.process_error == pytest.approx(1 - rep.average_fidelity)
    assert np.all(rep.populations > 0.95)
    assert rep.leakage < 0.02
    diag = diagnostics(fig2_result)
    assert diag.max_offresonant_phase < 0.2
    assert diag.effective_time_exact < diag.effective_time_nominal
    assert not diag.flagged
