import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from itoffoli.evolution import (StructuredPropagator, basis_inputs, default_timestep,
                                evolve_dense, gate_segments, itoffoli_sequence,
                                rotate_phonon_frame, to_dense, to_structured, trotter_step)
from itoffoli.hamiltonians import GateHamiltonian, make_config

KHZ = 2 * np.pi * 1e3


@pytest.fixture(scope="module")
def small_config():
    return make_config(2, 1e3 * KHZ, 30 * KHZ, 5 * KHZ, J=4 * KHZ, t_a=60e-6, fock_nmax=18)


def vacuum_columns(config):
    space = config.space
    psi = np.zeros((space.qubit_dim, space.dim), complex)
    for x in range(space.qubit_dim):
        psi[x, x * space.fock_dim] = 1
    return psi


def test_layout_roundtrip(small_config):
    space = small_config.space
    rng = np.random.default_rng(0)
    cols = rng.normal(size=(3, space.dim)) + 1j * rng.normal(size=(3, space.dim))
    np.testing.assert_array_equal(to_dense(to_structured(space, cols)), cols)
    np.testing.assert_array_equal(to_dense(basis_inputs(space)), vacuum_columns(small_config))


def test_segments_cover_gate():
    segs = gate_segments(1.0, 2.0, 0.3, "sin2")
    assert [s.drive for s in segs] == [False, True, False]
    assert [s.constant_rabi for s in segs] == [False, True, False]
    assert segs[0].t0 == 0 and segs[-1].t1 == 4.0
    assert all(s.dt <= 0.3 for s in segs)
    assert all(s.constant_rabi for s in gate_segments(1.0, 2.0, 0.3, "quench"))
    assert len(gate_segments(0.0, 2.0, 0.3)) == 1


def test_ramp_exact_against_ode(small_config):
    # without drive each oscillator step is exact, so a coarse grid matches the ODE
    c = small_config
    ham = GateHamiltonian.from_config(c, drive=False)
    psi0 = vacuum_columns(c)
    ref = evolve_dense(ham, psi0, 0.0, c.t_a)
    seg = gate_segments(c.t_a, c.tau_g, 2e-6, "sin2", drive=False)[0]
    out = StructuredPropagator(ham).run_segment(to_structured(c.space, psi0), seg)
    assert np.max(np.abs(to_dense(out) - ref)) < 1e-8


@pytest.mark.parametrize("order,rate", [(1, 2.0), (2, 4.0)])
def test_splitting_order_with_drive(small_config, order, rate):
    c = small_config.with_(fock_cutoffs=(12,))
    ham = GateHamiltonian.from_config(c)
    ref = vacuum_columns(c)
    for a, b in [(0, c.t_a), (c.t_a, c.t_a + c.tau_g), (c.t_a + c.tau_g, c.t_total)]:
        ref = evolve_dense(ham, ref, a, b)
    errs = [np.max(np.abs(itoffoli_sequence(c, dt=dt, order=order).columns - ref))
            for dt in (1e-6, 5e-7)]
    assert errs[0] / errs[1] == pytest.approx(rate, rel=0.15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trotter_step_orders(seed):
    rng = np.random.default_rng(seed)

    def herm(d):
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        return a + a.conj().T

    a, b = herm(4), herm(4)
    exact = scipy.linalg.expm(-1j * 0.01 * (a + b))
    e1 = np.linalg.norm(trotter_step(a, b, 0.01, 1) - exact)
    e2 = np.linalg.norm(trotter_step(a, b, 0.01, 2) - exact)
    assert e2 < e1
    with pytest.raises(ValueError):
        trotter_step(a, b, 0.01, 3)


def test_norm_preserved(fig2_result):
    norms = np.linalg.norm(fig2_result.columns, axis=1)
    np.testing.assert_allclose(norms, 1, atol=1e-10)


def test_frame_rotation_inverse(small_config):
    rng = np.random.default_rng(3)
    psi = rng.normal(size=small_config.space.shape[:1] + (2,) + small_config.space.fock_shape)
    back = rotate_phonon_frame(rotate_phonon_frame(psi, [1.3], 0.7), [-1.3], 0.7)
    np.testing.assert_allclose(back, psi)


def test_default_timestep(fig2_config):
    dt = default_timestep(fig2_config)
    assert dt <= fig2_config.t_a / 2000
    assert default_timestep(fig2_config, 0.5) == pytest.approx(dt / 2)
    assert default_timestep(fig2_config, resolve_detunings=True) <= 2 * np.pi / (50 * 20 * KHZ)


def test_sequence_rejects_bad_arguments(small_config):
    with pytest.raises(ValueError):
        itoffoli_sequence(small_config, order=3)
    with pytest.raises(ValueError):
        itoffoli_sequence(small_config, echo="multibeat")
    with pytest.raises(ValueError):
        itoffoli_sequence(small_config, echo="spin_lock")


def test_traces_recorded(small_config):
    res = itoffoli_sequence(small_config, trace_inputs=[3], trace_points=50)
    tr = res.traces[3].as_arrays()
    assert tr["times"][-1] == pytest.approx(small_config.t_total)
    assert len(tr["times"]) >= 50
    np.testing.assert_allclose(tr["bloch"][0], [0, 0, -1], atol=1e-14)
    np.testing.assert_allclose(tr["populations"][0], [0, 0, 0, 1])
