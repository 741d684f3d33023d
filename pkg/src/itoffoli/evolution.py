"""Time evolution of the gate, its ramps and the echo.

States are held as arrays of shape ``(2^N, B, d_0, ..., d_{M-1})``: the
qubit configuration first, then ``B`` independent inputs, then one axis per
phonon mode.  For each qubit configuration the phonon part of the generator
is a set of linearly forced oscillators,

    h_{x,m}(t) = -delta_m n_m + r(t) K_{x,m} P_m,   P = i(a^+ - a),

whose propagator over a step is exact after two Magnus terms in the
interaction picture of ``-delta n``:

    U = exp(i delta n h) D(K I_1) exp(-i K^2 I_2),
    I_1 = int_0^h r(t0+s) e^{-i delta s} ds,
    I_2 = int_0^h ds int_0^s ds' r(t0+s) r(t0+s') sin(delta (s - s')).

Only the target-qubit drive is split from this (symmetric Strang splitting),
so the step length is limited by the drive and not by the detunings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import time

import numpy as np
from scipy.integrate import solve_ivp

from .hamiltonians import GateConfig, GateHamiltonian, ramp_value
from .hilbert import CompositeSpace, annihilation, expm_hermitian

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1)
_GL_W = 0.5 * _GL_W


# ------------------------------------------------------------ layout

def to_structured(space: CompositeSpace, columns) -> np.ndarray:
    """Dense vectors ``(B, dim)`` to the internal ``(2^N, B, *fock)`` layout."""
    columns = np.atleast_2d(np.asarray(columns, dtype=complex))
    b = columns.shape[0]
    psi = columns.reshape((b,) + space.shape)
    return np.ascontiguousarray(np.moveaxis(psi, 0, 1))


def to_dense(psi: np.ndarray) -> np.ndarray:
    """Internal layout back to dense vectors ``(B, dim)``."""
    b = psi.shape[1]
    return np.moveaxis(psi, 1, 0).reshape(b, -1)


def basis_inputs(space: CompositeSpace, occupations=None) -> np.ndarray:
    """All qubit basis states with fixed phonon occupations, internal layout."""
    q = space.qubit_dim
    psi = np.zeros((q, q) + space.fock_shape, dtype=complex)
    occ = (0,) * space.n_modes if occupations is None else tuple(occupations)
    for x in range(q):
        psi[(x, x) + occ] = 1.0
    return psi


# ------------------------------------------------------- time grid

@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    n_steps: int
    drive: bool
    constant_rabi: bool

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps


def default_timestep(config: GateConfig, dt_scale: float = 1.0, resolve_detunings: bool = False) -> float:
    """Step length used when none is given.

    With ``resolve_detunings`` the step also resolves the fastest detuning
    (``2 pi / (50 max|delta|)``).  Since the oscillators are integrated
    exactly this is not needed for accuracy and is off by default; the
    remaining bound is ``t_a / 2000`` together with the drive and
    single-qubit rates.
    """
    bounds = [config.t_a / 2000 if config.t_a > 0 else config.tau_g / 2000]
    rate = max(abs(config.nu), config.g_applied, config.omega_rabi * np.abs(config.eta).max())
    bounds.append(2 * np.pi / (50 * rate))
    if resolve_detunings:
        bounds.append(2 * np.pi / (50 * np.abs(config.detunings).max()))
    return min(bounds) * dt_scale


def gate_segments(t_a: float, tau_g: float, dt: float, ramp_shape: str = "sin2",
                  drive: bool = True) -> list[Segment]:
    """Ramp up, hold (with drive) and ramp down, each on its own step grid."""
    quench = ramp_shape == "quench"
    spans = [(0.0, t_a, False, quench), (t_a, t_a + tau_g, drive, True),
             (t_a + tau_g, 2 * t_a + tau_g, False, quench)]
    return [Segment(a, b, max(1, math.ceil((b - a) / dt - 1e-9)), d, c)
            for a, b, d, c in spans if b > a]


def _ramp_integrals(ham: GateHamiltonian, seg: Segment, start: int, stop: int):
    """``I_1`` and ``I_2`` for steps ``start:stop`` of a segment, shape (steps, M)."""
    h = seg.dt
    delta = ham.detunings
    if seg.constant_rabi:
        i1 = (1 - np.exp(-1j * delta * h)) / (1j * delta)
        i2 = h / delta - np.sin(delta * h) / delta**2
        return np.broadcast_to(i1, (stop - start, len(delta))), np.broadcast_to(i2, (stop - start, len(delta)))
    t0 = seg.t0 + h * np.arange(start, stop)
    tt = np.clip(t0[:, None] + h * _GL_X[None, :], seg.t0, seg.t1)
    r = ramp_value(ham.ramp, tt, ham.t_a, ham.tau_g)
    s = h * _GL_X
    i1 = h * np.einsum("kl,l,lm->km", r, _GL_W, np.exp(-1j * np.outer(s, delta)))
    # inner integral over [0, s_l] with nodes s_l * x_p
    inner_t = np.clip(t0[:, None, None] + s[None, :, None] * _GL_X[None, None, :], seg.t0, seg.t1)
    r_in = ramp_value(ham.ramp, inner_t, ham.t_a, ham.tau_g)
    lag = s[:, None] * (1 - _GL_X[None, :])
    sin_lag = np.sin(lag[None, :, :] * delta[:, None, None])
    weights = (h * _GL_W)[:, None] * (s[:, None] * _GL_W[None, :])
    i2 = np.einsum("kl,klp,lp,mlp->km", r, r_in, weights, sin_lag)
    return i1, i2


class _ModeKernel:
    """Builds ``exp(i delta n h) D(A)`` on one truncated mode, batched over ``A``."""

    def __init__(self, dim: int, delta: float):
        a = annihilation(dim)
        self.w, self.v = np.linalg.eigh(1j * (a.conj().T - a))
        self.n = np.arange(dim)
        self.delta = delta

    def unitaries(self, amps: np.ndarray, h: float) -> np.ndarray:
        amps = np.asarray(amps, dtype=complex)
        core = (self.v[None] * np.exp(-1j * np.abs(amps)[:, None, None] * self.w[None, None, :])) \
            @ self.v.conj().T
        rot = np.exp(1j * np.angle(amps)[:, None] * self.n[None, :])
        free = np.exp(1j * self.delta * self.n * h)
        return (free * rot)[:, :, None] * core * rot.conj()[:, None, :]


def apply_mode_operator(psi: np.ndarray, ops: np.ndarray, mode: int) -> np.ndarray:
    """Apply ``ops[x]`` to phonon axis ``mode`` of each qubit block."""
    q, b = psi.shape[:2]
    fock = psi.shape[2:]
    pre = b * int(np.prod(fock[:mode], dtype=int))
    post = int(np.prod(fock[mode + 1:], dtype=int))
    out = np.matmul(ops[:, None], psi.reshape(q, pre, fock[mode], post))
    return out.reshape(psi.shape)


def apply_qubit_operator(psi: np.ndarray, op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Apply a 2x2 operator to one qubit of every input."""
    lead = 2**qubit
    view = psi.reshape(lead, 2, -1)
    return np.einsum("ij,ajr->air", op, view).reshape(psi.shape)


def _drive_unitary(ham: GateHamiltonian, h: float) -> np.ndarray:
    angle = 0.5 * ham.drive_strength * h
    return math.cos(angle) * np.eye(2) - 1j * math.sin(angle) * ham.drive_matrix()


# ---------------------------------------------------------- traces

@dataclass
class Trace:
    """Observables of one tracked input sampled during a run."""

    times: list = field(default_factory=list)
    x: list = field(default_factory=list)
    p: list = field(default_factory=list)
    populations: list = field(default_factory=list)
    bloch: list = field(default_factory=list)

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("times", "x", "p", "populations", "bloch")}


def _observe(psi_b: np.ndarray, n_qubits: int, target: int) -> tuple:
    """(<X_m>, <P_m>, qubit populations, target Bloch vector) of one input."""
    q = psi_b.shape[0]
    fock = psi_b.shape[1:]
    xs, ps = [], []
    for m, d in enumerate(fock):
        a = annihilation(d)
        moved = np.moveaxis(psi_b, m + 1, -1)
        mean_a = np.vdot(moved, moved @ a.T)
        xs.append(2 * mean_a.real)
        ps.append(2 * mean_a.imag)
    pops = np.sum(np.abs(psi_b.reshape(q, -1)) ** 2, axis=1)
    view = psi_b.reshape(2**target, 2, -1)
    rho01 = np.vdot(view[:, 1], view[:, 0])
    rho00 = np.vdot(view[:, 0], view[:, 0]).real
    rho11 = np.vdot(view[:, 1], view[:, 1]).real
    bloch = (2 * rho01.real, -2 * rho01.imag, rho00 - rho11)
    return xs, ps, pops, bloch


class Recorder:
    """Samples observables of selected inputs every ``every`` steps."""

    def __init__(self, inputs, n_qubits: int, target: int, every: int = 1):
        self.inputs = list(inputs)
        self.traces = {b: Trace() for b in self.inputs}
        self.n_qubits, self.target, self.every = n_qubits, target, max(1, int(every))
        self._count = 0

    def __call__(self, t: float, psi: np.ndarray, force: bool = False):
        if not force and self._count % self.every:
            self._count += 1
            return
        self._count += 1
        for b in self.inputs:
            xs, ps, pops, bloch = _observe(psi[:, b], self.n_qubits, self.target)
            tr = self.traces[b]
            tr.times.append(t)
            tr.x.append(xs)
            tr.p.append(ps)
            tr.populations.append(pops)
            tr.bloch.append(bloch)

    def finish(self, t: float, psi: np.ndarray):
        """Record the final state unless it was just sampled."""
        first = self.traces[self.inputs[0]] if self.inputs else None
        if first is not None and (not first.times or first.times[-1] != t):
            self(t, psi, force=True)


# -------------------------------------------------------- propagator

class StructuredPropagator:
    """Step-exact evolution of the structured generator."""

    def __init__(self, ham: GateHamiltonian):
        self.ham = ham
        self.kernels = [_ModeKernel(n + 1, d) for n, d in zip(ham.fock_cutoffs, ham.detunings)]
        self.unique = []
        for m in range(len(ham.detunings)):
            vals, inv = np.unique(np.round(ham.coupling[:, m], 14), return_inverse=True)
            self.unique.append((0.5 * ham.omega_rabi * vals, inv.ravel()))

    def _diag_ops(self, i1, i2, h):
        """Per-mode block unitaries and the per-configuration phase for one step."""
        ops = []
        phase = -self.ham.single * h
        for m, (k_vals, inv) in enumerate(self.unique):
            ops.append(self.kernels[m].unitaries(k_vals * i1[m], h)[inv])
            phase = phase - (k_vals**2 * i2[m])[inv]
        return ops, np.exp(1j * phase)

    def _apply_diag(self, psi, ops, phase):
        for m, op in enumerate(ops):
            psi = apply_mode_operator(psi, op, m)
        return psi * phase.reshape((-1,) + (1,) * (psi.ndim - 1))

    def run_segment(self, psi: np.ndarray, seg: Segment, order: int = 2,
                    recorder: Recorder | None = None) -> np.ndarray:
        ham, h = self.ham, seg.dt
        drive = seg.drive and ham.drive_strength != 0
        n_q, target = ham.n_qubits, ham.target_index
        if drive:
            full = _drive_unitary(ham, h)
            half = _drive_unitary(ham, 0.5 * h)
        if drive and order == 2:
            psi = apply_qubit_operator(psi, half, target, n_q)
        chunk = 4096
        cached = None
        for start in range(0, seg.n_steps, chunk):
            stop = min(seg.n_steps, start + chunk)
            if seg.constant_rabi and cached is not None:
                i1 = i2 = None
            else:
                i1, i2 = _ramp_integrals(ham, seg, start, stop)
            for k in range(start, stop):
                if seg.constant_rabi:
                    if cached is None:
                        cached = self._diag_ops(i1[0], i2[0], h)
                    ops, phase = cached
                else:
                    ops, phase = self._diag_ops(i1[k - start], i2[k - start], h)
                psi = self._apply_diag(psi, ops, phase)
                if drive:
                    last = k == seg.n_steps - 1
                    if order == 1:
                        psi = apply_qubit_operator(psi, full, target, n_q)
                    elif not last:
                        psi = apply_qubit_operator(psi, full, target, n_q)
                if recorder is not None:
                    recorder(seg.t0 + (k + 1) * h, psi)
        if drive and order == 2:
            psi = apply_qubit_operator(psi, half, target, n_q)
        return psi

    def run(self, psi, segments, order=2, recorder=None):
        if recorder is not None:
            recorder(segments[0].t0, psi, force=True)
        for seg in segments:
            psi = self.run_segment(psi, seg, order, recorder)
        if recorder is not None:
            recorder.finish(segments[-1].t1, psi)
        return psi


def rotate_phonon_frame(psi: np.ndarray, detunings, t: float) -> np.ndarray:
    """Multiply by ``exp(-i delta_m t n_m)``: beat-note frame to mode frame."""
    for m, delta in enumerate(detunings):
        d = psi.shape[2 + m]
        shape = [1] * psi.ndim
        shape[2 + m] = d
        psi = psi * np.exp(-1j * delta * t * np.arange(d)).reshape(shape)
    return psi


# ------------------------------------------------------------ result

@dataclass
class EvolutionResult:
    config: GateConfig
    states: np.ndarray
    dt: float
    n_steps: int
    order: int
    traces: dict = field(default_factory=dict)
    wall_time: float = 0.0
    echo: str | None = None

    @property
    def space(self) -> CompositeSpace:
        return self.config.space

    @property
    def columns(self) -> np.ndarray:
        """Final states as dense vectors, shape (B, dim)."""
        return to_dense(self.states)


def _prepare(config: GateConfig, inputs):
    space = config.space
    if inputs is None:
        return basis_inputs(space)
    inputs = np.asarray(inputs)
    if inputs.ndim >= 2 and inputs.shape[0] == space.qubit_dim and inputs.shape[2:] == space.fock_shape:
        return inputs.astype(complex)
    return to_structured(space, inputs)


def itoffoli_sequence(config: GateConfig, inputs=None, *, dt: float | None = None,
                      dt_scale: float = 1.0, order: int = 2, echo: str | None = None,
                      multibeat=None, trace_inputs=(), trace_points: int = 400) -> EvolutionResult:
    """Ramp up, drive the target for ``tau_g``, ramp down; optionally echo.

    Parameters
    ----------
    inputs
        Dense input vectors ``(B, dim)`` or internal-layout array; default is
        every qubit basis state with all modes in vacuum.
    echo
        ``None``, ``"sign_flip"`` or ``"multibeat"`` (needs ``multibeat``, a
        solved :class:`~itoffoli.multibeat.MultibeatSolution`).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    start = time.perf_counter()
    dt = default_timestep(config, dt_scale) if dt is None else dt
    psi = _prepare(config, inputs)
    ham = GateHamiltonian.from_config(config)
    segs = gate_segments(config.t_a, config.tau_g, dt, config.ramp.shape)
    n_steps = sum(s.n_steps for s in segs)
    every = max(1, n_steps // trace_points)
    rec = Recorder(trace_inputs, config.n_qubits, config.target_index, every) if trace_inputs else None
    psi = StructuredPropagator(ham).run(psi, segs, order, rec)
    if echo is not None:
        psi = echo_step(config, psi, echo, multibeat=multibeat, dt=dt, order=order)
    return EvolutionResult(config, psi, dt, n_steps, order,
                           rec.traces if rec else {}, time.perf_counter() - start, echo)


def adiabatic_ramp(config: GateConfig, psi: np.ndarray, direction: str = "up", *,
                   dt: float | None = None, dt_scale: float = 1.0) -> np.ndarray:
    """Switch the spin-phonon coupling on (``"up"``) or off (``"down"``), no drive."""
    dt = default_timestep(config, dt_scale) if dt is None else dt
    ham = GateHamiltonian.from_config(config, drive=False)
    segs = gate_segments(config.t_a, config.tau_g, dt, config.ramp.shape, drive=False)
    if config.t_a <= 0:
        return psi
    seg = segs[0] if direction == "up" else segs[-1]
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    return StructuredPropagator(ham).run_segment(psi, seg)


def echo_step(config: GateConfig, psi: np.ndarray, kind: str = "sign_flip", *,
              multibeat=None, dt: float | None = None, order: int = 2) -> np.ndarray:
    """Undo the dynamical phases of a completed gate.

    ``"sign_flip"`` repeats the ramp profile with ``nu`` and every detuning
    reversed and no drive.  ``"multibeat"`` applies the solved multi-tone
    pulses.  The state enters and leaves in the beat-note frame of the gate.
    """
    t_total = config.t_total
    psi = rotate_phonon_frame(psi, config.detunings, t_total)
    if kind == "sign_flip":
        dt = default_timestep(config) if dt is None else dt
        ham = GateHamiltonian.from_config(config, sign=-1.0, drive=False)
        segs = gate_segments(config.t_a, config.tau_g, dt, config.ramp.shape, drive=False)
        psi = StructuredPropagator(ham).run(psi, segs, order)
        # the reversed detuning frame advances the opposite way
        psi = rotate_phonon_frame(psi, -config.detunings, t_total)
    elif kind == "multibeat":
        if multibeat is None:
            raise ValueError("multibeat echo needs a solved MultibeatSolution")
        from .multibeat import apply_echo
        psi = apply_echo(config, psi, multibeat)
    else:
        raise ValueError(f"unknown echo kind {kind!r}")
    # back to the frame the gate ended in
    return rotate_phonon_frame(psi, -config.detunings, t_total)


# --------------------------------------------- dense reference methods

def trotter_step(h_a: np.ndarray, h_b: np.ndarray, dt: float, order: int = 2) -> np.ndarray:
    """One Lie (order 1) or Strang (order 2) step for ``H = h_a + h_b``."""
    if order == 1:
        return expm_hermitian(h_b, dt) @ expm_hermitian(h_a, dt)
    if order == 2:
        half = expm_hermitian(h_a, 0.5 * dt)
        return half @ expm_hermitian(h_b, dt) @ half
    raise ValueError("order must be 1 or 2")


def evolve_dense(ham: GateHamiltonian, psi0: np.ndarray, t0: float, t1: float,
                 rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Reference integration of dense vectors ``(B, dim)`` with an adaptive ODE solver."""
    psi0 = np.atleast_2d(psi0)
    shape = psi0.shape
    mid = 0.5 * (t0 + t1)
    drive = ham.drive_on(mid)

    def rhs(t, y):
        h = ham.dense(t, drive=drive)
        return (-1j * (h @ y.reshape(shape).T)).T.ravel()

    sol = solve_ivp(rhs, (t0, t1), psi0.ravel().astype(complex), method="DOP853",
                    rtol=rtol, atol=atol)
    return sol.y[:, -1].reshape(shape)
