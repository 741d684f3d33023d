"""Gate configuration and the time-dependent spin-phonon Hamiltonians.

The simulated model is the Lamb-Dicke, rotating-wave Hamiltonian in the
frame rotating at the beatnote,

    H(t) = -nu/2 sum_i s_i + (i Omega(t)/2) sum_{m,i} eta_m^i (a_m^+ - a_m) s_i
           - sum_m delta_m a_m^+ a_m + drive(t) (g_applied/2) sigma_phi^(t),

with ``Omega(t) = Omega * ramp(t)``.  Because the coupling is diagonal in the
qubit basis, each qubit configuration ``x`` sees a set of independent
linearly forced oscillators.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .crystal import CrystalModel, IsingMatrix, ising_matrix
from .hilbert import (CompositeSpace, annihilation, displacement_matrix, ladder_embed,
                      pauli_embed)
from .spinmodel import resonance_nu, spins

TWO_PI = 2 * np.pi


class DriveCorrectionError(ValueError):
    """The dressed-state overlap is too small to correct the drive."""


# ---------------------------------------------------------------- ramps

@dataclass(frozen=True)
class RampProfile:
    shape: str = "sin2"

    def __post_init__(self):
        if self.shape not in ("sin2", "quench"):
            raise ValueError(f"unknown ramp shape {self.shape!r}")

    def effective_time(self, t_a: float) -> float:
        """Nominal effective ramp time (half the ramp for sin^2)."""
        return 0.5 * t_a if self.shape == "sin2" else t_a

    def coupling_area(self, t_a: float) -> float:
        """``int_0^t_a ramp(t)^2 dt``, the weight of ``J(t)`` over one ramp."""
        return 0.375 * t_a if self.shape == "sin2" else t_a


def ramp_value(profile: RampProfile | str, t, t_a: float, tau_g: float):
    """Multiplier on the Rabi frequency at time ``t`` of an activate-hold-deactivate pulse."""
    shape = profile.shape if isinstance(profile, RampProfile) else profile
    t = np.asarray(t, dtype=float)
    t_total = 2 * t_a + tau_g
    eps = 1e-12 * max(t_total, 1.0)
    if np.any(t < -eps) or np.any(t > t_total + eps):
        raise ValueError(f"time outside [0, {t_total}]")
    if shape == "quench":
        return np.ones_like(t)[()]
    rise = np.sin(0.5 * np.pi * t / t_a) ** 2
    fall = np.cos(0.5 * np.pi * (t - t_a - tau_g) / t_a) ** 2
    out = np.where(t < t_a, rise, np.where(t > t_a + tau_g, fall, 1.0))
    return out[()]


# ---------------------------------------------------- displaced overlaps

def fock_overlap(n_out: int, n_in: int, beta: complex) -> complex:
    """``<n_out| D(beta) |n_in>`` in closed form (associated Laguerre)."""
    x = abs(beta) ** 2
    lo, hi = min(n_out, n_in), max(n_out, n_in)
    norm = math.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x)
    lag = eval_genlaguerre(lo, hi - lo, x)
    factor = beta ** (hi - lo) if n_out >= n_in else (-np.conj(beta)) ** (hi - lo)
    return complex(norm * factor * lag)


def overlap_factor(betas, n_in=None, n_out=None) -> complex:
    """Product over modes of ``<n_out|D(beta_m)|n_in>``.

    With ``n_in == n_out == 0`` this is ``prod_m exp(-beta_m^2 / 2)``.
    """
    betas = np.atleast_1d(betas)
    n_in = np.zeros(len(betas), int) if n_in is None else np.atleast_1d(n_in)
    n_out = n_in if n_out is None else np.atleast_1d(n_out)
    return complex(np.prod([fock_overlap(int(o), int(i), b) for o, i, b in zip(n_out, n_in, betas)]))


# ------------------------------------------------------------- config

def auto_cutoff(alpha_max: float) -> int:
    return int(math.ceil(alpha_max**2 + 6 * alpha_max + 4))


@dataclass(frozen=True)
class GateConfig:
    """Every physical parameter of one gate run (angular units, seconds).

    ``g`` is the Rabi frequency wanted on the dressed target pair, and the
    gate time is ``pi / g``.  The field actually applied to the target ion is
    ``g_applied = g / lambda_c`` when ``correct_drive`` is set.
    """

    crystal: CrystalModel
    modes: tuple[int, ...]
    omega_rabi: float
    detunings: np.ndarray
    g: float
    nu: float
    t_a: float
    tau_g: float
    target_index: int
    fock_cutoffs: tuple[int, ...]
    ramp: RampProfile = RampProfile()
    correct_drive: bool = True
    drive_phase: float = np.pi
    k1: int | None = None
    k2: int | None = None
    label: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    # derived quantities
    @property
    def n_qubits(self) -> int:
        return self.crystal.n_ions

    @property
    def n_controls(self) -> int:
        return self.n_qubits - 1

    @property
    def t_total(self) -> float:
        return 2 * self.t_a + self.tau_g

    @property
    def eta(self) -> np.ndarray:
        """Lamb-Dicke rows of the simulated modes, shape (M, N)."""
        return self.crystal.lamb_dicke[list(self.modes)]

    @property
    def mode_freqs(self) -> np.ndarray:
        return self.crystal.mode_freqs[list(self.modes)]

    @property
    def ising(self) -> IsingMatrix:
        return ising_matrix(self.crystal, self.omega_rabi, self.detunings, list(self.modes))

    @property
    def J_mean(self) -> float:
        """Mean coupling between target and controls."""
        row = np.delete(self.ising.J[self.target_index], self.target_index)
        return float(row.mean())

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace(self.n_qubits, self.fock_cutoffs)

    @property
    def betas(self) -> np.ndarray:
        """Displacement difference of the two target states, per mode."""
        return self.omega_rabi * self.eta[:, self.target_index] / self.detunings

    @property
    def lambda_c(self) -> float:
        return corrected_drive_overlap(self)

    @property
    def g_applied(self) -> float:
        return self.g / self.lambda_c if self.correct_drive else self.g

    @property
    def alpha_max(self) -> np.ndarray:
        """Largest state-dependent displacement of each mode."""
        return self.omega_rabi * np.abs(self.eta).sum(axis=1) / (2 * np.abs(self.detunings))

    @property
    def effective_total_time(self) -> float:
        """Nominal effective duration (ramps counted at half length)."""
        return 2 * self.ramp.effective_time(self.t_a) + self.tau_g

    @property
    def coupling_weighted_time(self) -> float:
        """``int_0^t_T ramp(t)^2 dt``: the exact weight of the Ising term."""
        return 2 * self.ramp.coupling_area(self.t_a) + self.tau_g

    def with_(self, **changes) -> "GateConfig":
        return replace(self, **changes)

    def fingerprint_params(self) -> dict:
        return {
            "n_ions": self.n_qubits,
            "omega_cm": self.crystal.omega_cm,
            "eta0": self.crystal.eta0,
            "modes": list(self.modes),
            "omega_rabi": self.omega_rabi,
            "detunings": [float(d) for d in self.detunings],
            "g": self.g,
            "nu": self.nu,
            "t_a": self.t_a,
            "tau_g": self.tau_g,
            "target_index": self.target_index,
            "fock_cutoffs": list(self.fock_cutoffs),
            "ramp": self.ramp.shape,
            "correct_drive": self.correct_drive,
            "drive_phase": self.drive_phase,
        }


def corrected_drive_overlap(config: GateConfig, occupations=None) -> float:
    """``lambda_c`` for the target pair with the given phonon occupations."""
    lam = overlap_factor(config.betas, occupations).real
    if lam <= 0 or abs(lam) < 0.05:
        raise DriveCorrectionError(f"dressed-state overlap {lam:.3g} too small to correct")
    return lam


def corrected_drive(config: GateConfig, occupations=None) -> float:
    """Applied drive ``g / lambda_c`` giving a pi rotation in ``pi / g``."""
    return config.g / corrected_drive_overlap(config, occupations)


def make_config(n_ions: int, omega_cm: float, delta_cm: float, g: float, *,
                J: float | None = None, omega_rabi: float | None = None,
                eta_cm_per_ion: float = 0.1, mode_set: str = "cm_only",
                t_a: float | None = None, target_index: int | None = None,
                fock_nmax="auto", ramp: str = "sin2", correct_drive: bool = True,
                drive_phase: float = np.pi, nu: float | None = None,
                extra_levels: int = 0, k1=None, k2=None, label: str = "",
                j_tolerance: float = 1e-3) -> GateConfig:
    """Resolve a gate configuration from experiment-level parameters.

    ``J`` is the mean target-control Ising coupling (its magnitude; the sign
    follows the detuning).  Exactly one of ``J`` and ``omega_rabi`` is
    required unless both agree to ``j_tolerance``.  ``nu`` defaults to the
    resonance value of the full coupling matrix.
    """
    crystal = CrystalModel.build(n_ions, omega_cm, eta_cm_per_ion=eta_cm_per_ion)
    if mode_set == "cm_only":
        modes = (0,)
    elif mode_set == "all_axial":
        modes = tuple(range(crystal.n_modes))
    else:
        raise ValueError(f"unknown mode_set {mode_set!r}")
    if target_index is None:
        target_index = n_ions // 2
    mu = omega_cm + delta_cm
    detunings = crystal.detunings(mu)[list(modes)]

    if J is None and omega_rabi is None:
        raise ValueError("one of J or omega_rabi is required")
    # mean target row coupling per unit Omega^2
    unit = ising_matrix(crystal, 1.0, detunings, list(modes)).J
    unit_mean = np.delete(unit[target_index], target_index).mean()
    if J is not None:
        from_j = math.sqrt(abs(J) / abs(unit_mean))
        if omega_rabi is not None and abs(omega_rabi - from_j) > j_tolerance * from_j:
            raise ValueError(
                f"inconsistent J and omega_rabi: J implies Omega/2pi = {from_j / TWO_PI:.6g} Hz")
        omega_rabi = from_j

    ising = ising_matrix(crystal, omega_rabi, detunings, list(modes))
    if nu is None:
        nu = resonance_nu(ising.J, target_index)
    tau_g = np.pi / g
    t_a = tau_g if t_a is None else t_a
    draft = GateConfig(crystal, modes, omega_rabi, detunings, g, nu, t_a, tau_g,
                       target_index, (0,) * len(modes), RampProfile(ramp), correct_drive,
                       drive_phase, k1, k2, label)
    if fock_nmax == "auto":
        cutoffs = tuple(auto_cutoff(a) + extra_levels for a in draft.alpha_max)
    else:
        cutoffs = (int(fock_nmax),) * len(modes)
    return draft.with_(fock_cutoffs=cutoffs)


# ----------------------------------------------------------- generator

@dataclass
class GateHamiltonian:
    """Structured time-dependent generator of a gate or echo segment.

    ``coupling[x, m]`` is ``sum_i eta_m^i s_i(x)``; ``single[x]`` is the
    qubit-only energy ``-nu/2 sum_i s_i``.
    """

    n_qubits: int
    fock_cutoffs: tuple[int, ...]
    omega_rabi: float
    detunings: np.ndarray
    single: np.ndarray
    coupling: np.ndarray
    ramp: RampProfile
    t_a: float
    tau_g: float
    drive_strength: float
    drive_phase: float
    target_index: int

    @classmethod
    def from_config(cls, config: GateConfig, *, sign: float = 1.0, drive: bool = True,
                    nu: float | None = None) -> "GateHamiltonian":
        """Gate generator; ``sign=-1`` flips nu and every detuning (echo)."""
        s = spins(config.n_qubits)
        nu = config.nu if nu is None else nu
        return cls(config.n_qubits, config.fock_cutoffs, config.omega_rabi,
                   sign * np.asarray(config.detunings, float), -0.5 * sign * nu * s.sum(axis=1),
                   s @ config.eta.T, config.ramp, config.t_a, config.tau_g,
                   config.g_applied if drive else 0.0, config.drive_phase, config.target_index)

    @property
    def t_total(self) -> float:
        return 2 * self.t_a + self.tau_g

    def rabi(self, t) -> float:
        return self.omega_rabi * ramp_value(self.ramp, t, self.t_a, self.tau_g)

    def drive_on(self, t: float) -> bool:
        return self.drive_strength != 0 and self.t_a <= t <= self.t_a + self.tau_g

    def drive_matrix(self) -> np.ndarray:
        """Single-qubit drive operator ``cos(phi) sigma_x + sin(phi) sigma_y``."""
        c, s = np.cos(self.drive_phase), np.sin(self.drive_phase)
        return np.array([[0, c - 1j * s], [c + 1j * s, 0]], dtype=complex)

    def dense(self, t: float, drive: bool | None = None) -> np.ndarray:
        """Full matrix at time ``t`` on the composite space."""
        space = CompositeSpace(self.n_qubits, self.fock_cutoffs)
        q, f = space.qubit_dim, space.fock_dim
        h = np.kron(np.diag(self.single), np.eye(f)).astype(complex)
        rabi = self.rabi(t)
        for m, delta in enumerate(self.detunings):
            a = ladder_embed(space, m, "annihilate")
            p = 1j * (a.conj().T - a)
            h -= delta * ladder_embed(space, m, "number")
            couple = np.kron(np.diag(self.coupling[:, m]), np.eye(f))
            h += 0.5 * rabi * couple @ p
        drive = self.drive_on(t) if drive is None else drive
        if drive:
            c, s = np.cos(self.drive_phase), np.sin(self.drive_phase)
            sx = pauli_embed(space, self.target_index, "x")
            sy = pauli_embed(space, self.target_index, "y")
            h += 0.5 * self.drive_strength * (c * sx + s * sy)
        return h


def single_mode_hamiltonian(config: GateConfig, t: float, picture: str = "lab") -> np.ndarray:
    """Centre-of-mass-only Hamiltonian at time ``t``.

    ``picture="lab"`` is the spin-phonon generator that is simulated.
    ``picture="effective"`` is the phonon-free reference model
    ``-nu/2 sum s + J(t) sum_{i!=j} s s - delta a^+a + drive (g/2) sigma_phi``.
    """
    if len(config.modes) != 1:
        raise ValueError("single_mode_hamiltonian needs a one-mode configuration")
    if picture == "lab":
        return GateHamiltonian.from_config(config).dense(t)
    if picture != "effective":
        raise ValueError(f"unknown picture {picture!r}")
    h_ising, h_0 = ising_pieces(config, t)
    ham = GateHamiltonian.from_config(config)
    if ham.drive_on(t):
        space = config.space
        c, s = np.cos(config.drive_phase), np.sin(config.drive_phase)
        h_0 = h_0 + 0.5 * config.g * (c * pauli_embed(space, config.target_index, "x")
                                      + s * pauli_embed(space, config.target_index, "y"))
    return h_ising + h_0


def multi_mode_hamiltonian(config: GateConfig, t: float) -> np.ndarray:
    return GateHamiltonian.from_config(config).dense(t)


def ising_pieces(config: GateConfig, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Phonon-free split ``(J(t) sum_{i!=j} J_ij s_i s_j, -nu/2 sum s - sum delta n)``."""
    space = config.space
    f = space.fock_dim
    s = spins(config.n_qubits)
    J = config.ising.J
    r2 = ramp_value(config.ramp, t, config.t_a, config.tau_g) ** 2
    h_ising = np.kron(np.diag(r2 * np.einsum("xi,ij,xj->x", s, J, s)), np.eye(f)).astype(complex)
    h_0 = np.kron(np.diag(-0.5 * config.nu * s.sum(axis=1)), np.eye(f)).astype(complex)
    for m, delta in enumerate(config.detunings):
        h_0 -= delta * ladder_embed(space, m, "number")
    return h_ising, h_0


def lang_firsov_unitary(config: GateConfig, t: float) -> np.ndarray:
    """State-dependent displacement mapping bare Fock states to dressed states."""
    space = config.space
    rabi = config.omega_rabi * ramp_value(config.ramp, t, config.t_a, config.tau_g)
    coupling = spins(config.n_qubits) @ config.eta.T
    blocks = []
    for x in range(space.qubit_dim):
        op = np.eye(1, dtype=complex)
        for m, delta in enumerate(config.detunings):
            alpha = 1j * rabi * coupling[x, m] / (2 * delta)
            op = np.kron(op, displacement_matrix(alpha, space.fock_shape[m]))
        blocks.append(op)
    out = np.zeros((space.dim, space.dim), dtype=complex)
    f = space.fock_dim
    for x, b in enumerate(blocks):
        out[x * f:(x + 1) * f, x * f:(x + 1) * f] = b
    return out


def dressed_hamiltonian(config: GateConfig, t: float) -> np.ndarray:
    """Lang-Firsov transformed generator ``U^+ H U``."""
    u = lang_firsov_unitary(config, t)
    return u.conj().T @ multi_mode_hamiltonian(config, t) @ u


def momentum_operator(dim: int) -> np.ndarray:
    a = annihilation(dim)
    return 1j * (a.conj().T - a)
