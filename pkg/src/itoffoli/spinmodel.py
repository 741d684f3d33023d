"""Phonon-free Ising model with a resonant drive on one target qubit."""
from __future__ import annotations

from dataclasses import dataclass
import itertools

import numpy as np

from .hilbert import SIGMA


def as_coupling_matrix(J, n_qubits: int) -> np.ndarray:
    """Accept a scalar (homogeneous) or an ``(N, N)`` coupling matrix."""
    if hasattr(J, "J"):
        J = J.J
    J = np.asarray(J, dtype=float)
    if J.ndim == 0:
        J = float(J) * (np.ones((n_qubits, n_qubits)) - np.eye(n_qubits))
    if J.shape != (n_qubits, n_qubits):
        raise ValueError(f"coupling matrix shape {J.shape} for {n_qubits} qubits")
    return J


def spins(n_qubits: int) -> np.ndarray:
    """``s[x, i] = (-1)^{bit i of x}`` for all ``2^N`` basis states."""
    bits = np.array(list(itertools.product((0, 1), repeat=n_qubits)), dtype=int)
    return 1 - 2 * bits


@dataclass(frozen=True)
class SpinModelParams:
    n_qubits: int
    J: np.ndarray
    nu: float
    g: float
    target_index: int

    def __post_init__(self):
        object.__setattr__(self, "J", as_coupling_matrix(self.J, self.n_qubits))
        if not 0 <= self.target_index < self.n_qubits:
            raise IndexError("target_index out of range")
        if self.g < 0:
            raise ValueError("drive strength must be non-negative")


def diagonal_energies(J, nu: float, n_qubits: int) -> np.ndarray:
    """``-nu/2 sum_i s_i + sum_{i != j} J_ij s_i s_j`` for every basis state."""
    J = as_coupling_matrix(J, n_qubits)
    s = spins(n_qubits)
    offdiag = J - np.diag(np.diag(J))
    return -0.5 * nu * s.sum(axis=1) + np.einsum("xi,ij,xj->x", s, offdiag, s)


def energy_of_bitstring(J, nu: float, bits) -> float:
    bits = np.asarray(bits)
    s = 1 - 2 * bits
    J = as_coupling_matrix(J, len(bits))
    offdiag = J - np.diag(np.diag(J))
    return float(-0.5 * nu * s.sum() + s @ offdiag @ s)


def spin_hamiltonian(params: SpinModelParams) -> np.ndarray:
    n = params.n_qubits
    h = np.diag(diagonal_energies(params.J, params.nu, n)).astype(complex)
    ops = [np.eye(2)] * n
    ops[params.target_index] = SIGMA["x"]
    drive = ops[0]
    for op in ops[1:]:
        drive = np.kron(drive, op)
    return h + 0.5 * params.g * drive


def energy_gap(J, target_index: int, control_bits) -> float:
    """Rotating-frame gap ``E(0, x_c) - E(1, x_c)`` at ``nu = 0``.

    ``control_bits`` lists the non-target qubits in increasing index order.
    """
    control_bits = list(control_bits)
    n = len(control_bits) + 1
    J = as_coupling_matrix(J, n)
    controls = [i for i in range(n) if i != target_index]
    s = 1 - 2 * np.asarray(control_bits)
    return float(4 * np.sum(J[target_index, controls] * s))


def resonance_nu(J, target_index: int, n_qubits: int | None = None) -> float:
    """Drive detuning making ``|0, 1..1>`` and ``|1, 1..1>`` degenerate."""
    if n_qubits is None:
        n_qubits = np.shape(getattr(J, "J", J))[0]
    J = as_coupling_matrix(J, n_qubits)
    row = np.delete(J[target_index], target_index)
    return float(-4 * row.sum())


def target_pair(n_qubits: int, target_index: int) -> tuple[int, int]:
    """Basis indices of ``|0_t, 1^Nc>`` and ``|1_t, 1^Nc>``."""
    full = 2**n_qubits - 1
    return full - 2 ** (n_qubits - 1 - target_index), full


def ideal_itoffoli(n_qubits: int, target_index: int) -> np.ndarray:
    """Identity except ``i sigma_x`` on the all-controls-set target pair."""
    u = np.eye(2**n_qubits, dtype=complex)
    a, b = target_pair(n_qubits, target_index)
    u[a, a] = u[b, b] = 0.0
    u[a, b] = u[b, a] = 1j
    return u


def dynamical_phases(J, nu: float, n_qubits: int, t_total: float, t_effective: float) -> np.ndarray:
    """Phases ``-E t`` accumulated by each basis state over a ramped gate.

    The single-qubit term acts for ``t_total`` while the Ising part acts for
    the ramp-weighted ``t_effective``.
    """
    J = as_coupling_matrix(J, n_qubits)
    single = diagonal_energies(np.zeros_like(J), nu, n_qubits)
    ising = diagonal_energies(J, 0.0, n_qubits)
    return -(single * t_total + ising * t_effective)
