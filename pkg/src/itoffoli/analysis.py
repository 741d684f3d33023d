"""Process reconstruction, average fidelity and gate diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import itertools
import json
import math

import numpy as np
from scipy.stats import geom

from .hamiltonians import GateConfig
from .hilbert import SIGMA
from .spinmodel import ideal_itoffoli, spins, target_pair


# ------------------------------------------------------------- channels

@dataclass
class Channel:
    """Qubit channel in Kraus form, ``E(rho) = sum_f K_f rho K_f^+``."""

    kraus: np.ndarray  # (n_ops, d, d)

    @property
    def dim(self) -> int:
        return self.kraus.shape[-1]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("fij,jk,flk->il", self.kraus, rho, self.kraus.conj())

    def trace_defect(self) -> float:
        s = np.einsum("fji,fjk->ik", self.kraus.conj(), self.kraus)
        return float(np.max(np.abs(s - np.eye(self.dim))))

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "Channel":
        return cls(np.asarray(u, dtype=complex)[None])


def channel_from_columns(columns: np.ndarray, qubit_dim: int) -> Channel:
    """Channel of the evolution ``|a>|phonons_in> -> columns[a]`` with phonons traced out.

    ``columns[a]`` is the final composite state for qubit input ``a``; the
    Kraus operators are ``K_f[x, a] = <x, f|psi_a>``.
    """
    columns = np.asarray(columns)
    psi = columns.reshape(columns.shape[0], qubit_dim, -1)
    return Channel(np.ascontiguousarray(np.transpose(psi, (2, 1, 0))))


def pauli_strings(n_qubits: int):
    """All ``4^N`` Pauli strings as dense matrices (generator)."""
    single = [np.eye(2, dtype=complex), SIGMA["x"], SIGMA["y"], SIGMA["z"]]
    for combo in itertools.product(single, repeat=n_qubits):
        op = np.eye(1, dtype=complex)
        for p in combo:
            op = np.kron(op, p)
        yield op


def unitary_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average fidelity of unitary ``u`` against ``v``: ``(|tr(v^+ u)|^2 + d) / (d^2 + d)``."""
    d = u.shape[0]
    return float((abs(np.trace(v.conj().T @ u)) ** 2 + d) / (d * d + d))


def average_fidelity(channel: Channel, ideal: np.ndarray, method: str = "auto") -> float:
    """Average gate fidelity of a channel against an ideal unitary.

    ``method="pauli"`` sums ``tr(V U_j^+ V^+ E(U_j))`` over the Pauli basis;
    ``method="kraus"`` uses ``(sum_f |tr(V^+ K_f)|^2 + d) / (d(d+1))``, which
    is equivalent for trace-preserving channels.  ``"auto"`` picks the
    Pauli sum up to four qubits.
    """
    d = channel.dim
    if method == "auto":
        method = "pauli" if d <= 16 else "kraus"
    v = np.asarray(ideal, dtype=complex)
    if method == "kraus":
        overlaps = np.einsum("ij,fij->f", v.conj(), channel.kraus)
        return float((np.sum(np.abs(overlaps) ** 2) + d) / (d * (d + 1)))
    if method != "pauli":
        raise ValueError(f"unknown fidelity method {method!r}")
    n = int(round(math.log2(d)))
    total = 0.0
    for u in pauli_strings(n):
        total += np.trace(v @ u.conj().T @ v.conj().T @ channel.apply(u)).real
    return float(total / (d * d * (d + 1)) + 1 / (d + 1))


# ---------------------------------------------------------- gate reports

def process_matrix(columns: np.ndarray, qubit_dim: int) -> np.ndarray:
    """Vacuum-to-vacuum block ``U[x, a] = <x, 0|psi_a>``."""
    psi = np.asarray(columns).reshape(len(columns), qubit_dim, -1)
    return psi[:, :, 0].T.copy()


def align_global_phase(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``u`` times the phase that maximizes ``Re tr(v^+ u)``."""
    ov = np.trace(v.conj().T @ u)
    return u * (np.conj(ov) / abs(ov) if abs(ov) > 0 else 1.0)


def fingerprint(params: dict) -> str:
    """Deterministic hash of a parameter dictionary (key order independent)."""
    def norm(v):
        if isinstance(v, (np.floating, float)):
            return float(f"{float(v):.12g}")
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (list, tuple, np.ndarray)):
            return [norm(x) for x in v]
        if isinstance(v, dict):
            return {k: norm(x) for k, x in v.items()}
        return v
    blob = json.dumps(norm(params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class FidelityReport:
    average_fidelity: float
    populations: np.ndarray
    phases: np.ndarray
    leakage: float
    phonon_excitation: np.ndarray
    fingerprint: str
    per_n: dict = field(default_factory=dict)

    @property
    def process_error(self) -> float:
        return 1.0 - self.average_fidelity


def fidelity_report(result, ideal: np.ndarray | None = None, method: str = "auto") -> FidelityReport:
    """Average fidelity and per-state summary of a vacuum-input run."""
    config: GateConfig = result.config
    q = config.space.qubit_dim
    ideal = ideal_itoffoli(config.n_qubits, config.target_index) if ideal is None else ideal
    cols = result.columns
    chan = channel_from_columns(cols, q)
    f = average_fidelity(chan, ideal, method)
    u = align_global_phase(process_matrix(cols, q), ideal)
    expected = np.argmax(np.abs(ideal), axis=0)
    pops = np.array([abs(u[expected[a], a]) ** 2 for a in range(q)])
    phases = np.array([np.angle(u[expected[a], a] / ideal[expected[a], a]) for a in range(q)])
    leak = float(np.mean(1 - np.sum(np.abs(u) ** 2, axis=0)))
    exc = phonon_excitation(cols, config)
    return FidelityReport(f, pops, phases, leak, exc, fingerprint(config.fingerprint_params()))


def phonon_excitation(columns: np.ndarray, config: GateConfig) -> np.ndarray:
    """Mean phonon number per mode, averaged over the inputs."""
    shape = (len(columns), config.space.qubit_dim) + config.space.fock_shape
    prob = np.abs(np.asarray(columns).reshape(shape)) ** 2
    out = []
    for m, d in enumerate(config.space.fock_shape):
        axes = tuple(i for i in range(prob.ndim) if i not in (0, 2 + m))
        marg = prob.sum(axis=axes)
        out.append(float(np.mean(marg @ np.arange(d))))
    return np.array(out)


def dressed_excitation(psi: np.ndarray, config: GateConfig, ramp: float = 1.0) -> np.ndarray:
    """Phonons above the dressed vacuum, ``<(a - alpha_x)^+ (a - alpha_x)>`` per input.

    ``psi`` is in the internal layout ``(2^N, B, *fock)`` and ``ramp`` the
    current coupling ramp value.  Returns shape ``(B, M)``.
    """
    coupling = spins(config.n_qubits) @ config.eta.T
    alpha = 1j * ramp * config.omega_rabi * coupling / (2 * config.detunings)
    out = np.zeros((psi.shape[1], len(config.detunings)))
    for m, d in enumerate(config.space.fock_shape):
        moved = np.moveaxis(psi, 2 + m, -1)
        n = np.arange(d)
        a_psi = moved[..., 1:] * np.sqrt(n[1:])
        mean_n = np.sum(np.abs(moved) ** 2 * n, axis=tuple(range(2, moved.ndim)))
        mean_a = np.sum(moved[..., :-1].conj() * a_psi, axis=tuple(range(2, moved.ndim)))
        norm = np.sum(np.abs(moved) ** 2, axis=tuple(range(2, moved.ndim)))
        al = alpha[:, m][:, None]
        val = mean_n - 2 * np.real(np.conj(al) * mean_a) + np.abs(al) ** 2 * norm
        out[:, m] = val.sum(axis=0)
    return out


# ------------------------------------------------------------ diagnostics

@dataclass
class DegeneracyFlag:
    control_bits: tuple
    mode: int
    order: int
    gap: float
    mismatch: float


def control_gaps(config: GateConfig) -> dict:
    """Rotating-frame gap of the target pair for every control configuration."""
    J = config.ising.J
    t = config.target_index
    controls = [i for i in range(config.n_qubits) if i != t]
    out = {}
    for bits in itertools.product((0, 1), repeat=len(controls)):
        s = 1 - 2 * np.array(bits)
        out[bits] = float(-config.nu + 4 * np.sum(J[t, controls] * s))
    return out


def degeneracy_flags(config: GateConfig, width: float | None = None, k_max: int | None = None) -> list:
    """Control configurations whose gap nears a phonon sideband.

    Flags ``| |Delta_xc| - k |delta_m| | < width`` (default ``3 g``) for
    ``k = 1 .. k_max`` (default: the Fock cutoff of the mode).
    """
    width = 3 * config.g if width is None else width
    flags = []
    for bits, gap in control_gaps(config).items():
        if abs(gap) < 1e-9 * max(1.0, abs(config.nu)):
            continue
        for m, delta in enumerate(config.detunings):
            kmax = config.fock_cutoffs[m] if k_max is None else k_max
            for k in range(1, kmax + 1):
                mis = abs(abs(gap) - k * abs(delta))
                if mis < width:
                    flags.append(DegeneracyFlag(bits, config.modes[m], k, gap, mis))
    return flags


@dataclass
class Diagnostics:
    leakage: np.ndarray
    residual_phases: np.ndarray
    degeneracy: list
    max_offresonant_phase: float
    effective_time_nominal: float
    effective_time_exact: float

    @property
    def flagged(self) -> bool:
        return bool(self.degeneracy)


def diagnostics(result, config: GateConfig | None = None) -> Diagnostics:
    """Per-state leakage, residual phases against the ideal gate and degeneracy flags.

    Residual phases are taken relative to the first basis state, so a global
    phase does not count.
    """
    config = result.config if config is None else config
    q = config.space.qubit_dim
    u = process_matrix(result.columns, q)
    ideal = ideal_itoffoli(config.n_qubits, config.target_index)
    expected = np.argmax(np.abs(ideal), axis=0)
    amp = np.array([u[expected[a], a] / ideal[expected[a], a] for a in range(q)])
    phases = np.angle(amp * np.conj(amp[0]) / abs(amp[0]))
    leakage = 1 - np.sum(np.abs(u) ** 2, axis=0)
    pair = set(target_pair(config.n_qubits, config.target_index))
    off = [a for a in range(q) if a not in pair]
    return Diagnostics(leakage, phases, degeneracy_flags(config),
                       float(np.max(np.abs(phases[off]))), config.effective_total_time,
                       config.coupling_weighted_time)


# -------------------------------------------------------------- thermal

def thermal_cutoff(nbar: float, tail: float = 1e-4) -> int:
    """Largest input occupation kept for a thermal state with mean ``nbar``."""
    if nbar <= 0:
        return 0
    # scipy's geometric law counts from 1, i.e. n + 1
    return int(geom.isf(tail, 1 / (1 + nbar))) - 1


def thermal_fidelity(config: GateConfig, nbar: float, *, echo: str | None = None,
                     multibeat=None, dt: float | None = None, dt_scale: float = 1.0,
                     tail: float = 1e-4, mode: int = 0, method: str = "kraus"):
    """Average fidelity with a thermal input on one mode and vacuum elsewhere.

    The drive keeps its vacuum calibration.  Returns ``(F, per_n)`` where
    ``per_n[n] = (weight, F_n)``; the weights are renormalized over the kept
    occupations.
    """
    from .evolution import basis_inputs, itoffoli_sequence

    slot = list(config.modes).index(mode)
    n_in = thermal_cutoff(nbar, tail)
    alpha = config.alpha_max[slot]
    cut = list(config.fock_cutoffs)
    cut[slot] = n_in + int(math.ceil(alpha**2 + 6 * alpha * math.sqrt(n_in + 1) + 4))
    cfg = config.with_(fock_cutoffs=tuple(cut))
    space = cfg.space
    occ = [0] * space.n_modes
    inputs = []
    for n in range(n_in + 1):
        occ[slot] = n
        inputs.append(basis_inputs(space, occ))
    psi = np.concatenate(inputs, axis=1)
    res = itoffoli_sequence(cfg, psi, dt=dt, dt_scale=dt_scale, echo=echo, multibeat=multibeat)
    q = space.qubit_dim
    ideal = ideal_itoffoli(cfg.n_qubits, cfg.target_index)
    cols = res.columns
    weights = np.array([nbar**n / (1 + nbar) ** (n + 1) for n in range(n_in + 1)])
    weights /= weights.sum()
    per_n = {}
    total = 0.0
    for n in range(n_in + 1):
        f_n = average_fidelity(channel_from_columns(cols[n * q:(n + 1) * q], q), ideal, method)
        per_n[n] = (float(weights[n]), f_n)
        total += weights[n] * f_n
    return float(total), per_n


# ---------------------------------------------------------- adiabaticity

@dataclass
class AdiabaticityReport:
    """Phonon excitation left by switching the coupling on and off.

    ``dressed_excitation`` is measured at the end of the activation ramp
    relative to the dressed vacuum; ``residual_population`` is the bare
    phonon number after activation and deactivation; ``max_excursion`` is the
    largest distance of ``<a>`` from the dressed centre during activation
    (in units where ``<x> = 2 Re<a>``).
    """

    dressed_excitation: float
    residual_population: float
    max_excursion: float


def adiabaticity_report(config: GateConfig, input_bits=None, dt: float | None = None,
                        samples: int = 400) -> AdiabaticityReport:
    """Ramp-only experiment on one qubit basis state (no drive)."""
    from .evolution import Recorder, StructuredPropagator, default_timestep, gate_segments
    from .hamiltonians import GateHamiltonian, ramp_value

    space = config.space
    x = (space.qubit_dim - 1) if input_bits is None else int("".join(map(str, input_bits)), 2)
    psi = np.zeros((space.qubit_dim, 1) + space.fock_shape, dtype=complex)
    psi[(x, 0) + (0,) * space.n_modes] = 1.0
    dt = default_timestep(config) if dt is None else dt
    ham = GateHamiltonian.from_config(config, drive=False)
    segs = gate_segments(config.t_a, config.tau_g, dt, config.ramp.shape, drive=False)
    prop = StructuredPropagator(ham)
    rec = Recorder([0], config.n_qubits, config.target_index, max(1, segs[0].n_steps // samples))
    rec(0.0, psi, force=True)
    up = prop.run_segment(psi, segs[0], recorder=rec)
    r_end = float(ramp_value(config.ramp, config.t_a, config.t_a, config.tau_g))
    dressed = float(dressed_excitation(up, config, r_end)[0].sum())
    tr = rec.traces[0].as_arrays()
    coupling = spins(config.n_qubits)[x] @ config.eta.T
    r = ramp_value(config.ramp, tr["times"], config.t_a, config.tau_g)
    centre = np.outer(r, config.omega_rabi * coupling / (2 * config.detunings))  # Im alpha
    mean_a = 0.5 * (tr["x"] + 1j * tr["p"])
    excursion = float(np.max(np.abs(mean_a - 1j * centre)))
    # deactivate directly after activation
    down_seg = type(segs[-1])(config.t_a + config.tau_g, config.t_total, segs[-1].n_steps,
                              False, segs[-1].constant_rabi)
    down = prop.run_segment(up, down_seg)
    prob = np.abs(down[x, 0]) ** 2
    residual = 0.0
    for m, d in enumerate(space.fock_shape):
        marg = prob.sum(axis=tuple(i for i in range(prob.ndim) if i != m))
        residual += float(marg @ np.arange(d))
    return AdiabaticityReport(dressed, residual, excursion)
