"""Dense operators on the qubit register times truncated phonon modes.

Basis ordering: qubit 0 is the most significant index, followed by the
qubits in order, then phonon mode 0, ..., with the last mode fastest.
Qubit state ``|0>`` is the ``+1`` eigenstate of sigma_z.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
import warnings

import numpy as np
from scipy.stats import poisson

SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class TruncationError(ValueError):
    """The Fock cutoff is too small for the requested operator."""


@dataclass(frozen=True)
class CompositeSpace:
    n_qubits: int
    fock_cutoffs: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fock_cutoffs", tuple(int(n) for n in self.fock_cutoffs))
        if self.n_qubits < 0 or any(n < 0 for n in self.fock_cutoffs):
            raise ValueError("negative size in CompositeSpace")

    @property
    def n_modes(self) -> int:
        return len(self.fock_cutoffs)

    @property
    def qubit_dim(self) -> int:
        return 2**self.n_qubits

    @property
    def fock_shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.fock_cutoffs)

    @property
    def fock_dim(self) -> int:
        return int(np.prod(self.fock_shape, dtype=int))

    @property
    def dim(self) -> int:
        return self.qubit_dim * self.fock_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.qubit_dim,) + self.fock_shape

    def index(self, bits, occupations=()) -> int:
        """Flat basis index of ``|bits> (x) |n_0, n_1, ...>``."""
        bits = tuple(bits)
        if len(bits) != self.n_qubits or len(occupations) != self.n_modes:
            raise ValueError("wrong number of qubit bits or mode occupations")
        q = int("".join(str(int(b)) for b in bits), 2) if bits else 0
        return int(np.ravel_multi_index((q,) + tuple(occupations), self.shape))

    def unpack(self, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        q, *occ = np.unravel_index(index, self.shape)
        bits = tuple(int(c) for c in format(int(q), f"0{self.n_qubits}b")) if self.n_qubits else ()
        return bits, tuple(int(n) for n in occ)

    def basis_state(self, bits, occupations=None) -> np.ndarray:
        occupations = (0,) * self.n_modes if occupations is None else occupations
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(bits, occupations)] = 1.0
        return psi

    def _embed(self, factors: dict[int, np.ndarray]) -> np.ndarray:
        """Kronecker product with ``factors[k]`` in slot k and identities elsewhere."""
        dims = [2] * self.n_qubits + list(self.fock_shape)
        ops = [factors.get(k, np.eye(d)) for k, d in enumerate(dims)]
        return reduce(np.kron, ops, np.eye(1, dtype=complex)).astype(complex)


def _check_qubit(space: CompositeSpace, i: int):
    if not 0 <= i < space.n_qubits:
        raise IndexError(f"qubit index {i} out of range for {space.n_qubits} qubits")


def _check_mode(space: CompositeSpace, m: int):
    if not 0 <= m < space.n_modes:
        raise IndexError(f"mode index {m} out of range for {space.n_modes} modes")


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def pauli_embed(space: CompositeSpace, ion_index: int, axis: str) -> np.ndarray:
    _check_qubit(space, ion_index)
    return space._embed({ion_index: SIGMA[axis]})


def ladder_embed(space: CompositeSpace, mode_index: int, kind: str) -> np.ndarray:
    _check_mode(space, mode_index)
    a = annihilation(space.fock_shape[mode_index])
    local = {"annihilate": a, "create": a.conj().T, "number": a.conj().T @ a}[kind]
    return space._embed({space.n_qubits + mode_index: local})


def displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    """Truncated ``exp(alpha a^dag - alpha^* a)`` on a ``dim``-level oscillator.

    Warns when ``|alpha|^2 > (dim-1)/4`` and raises :class:`TruncationError`
    when the displaced vacuum puts more than 1e-6 of its weight at or beyond
    the top level.
    """
    n_max = dim - 1
    if abs(alpha) ** 2 > n_max / 4:
        warnings.warn(f"|alpha|^2 = {abs(alpha)**2:.3g} is large for cutoff {n_max}", stacklevel=2)
        tail = poisson.sf(n_max - 1, abs(alpha) ** 2)
        if tail > 1e-6:
            raise TruncationError(f"cutoff {n_max} too small for alpha={alpha:.4g} (tail {tail:.2e})")
    a = annihilation(dim)
    gen = 1j * (alpha * a.conj().T - np.conj(alpha) * a)
    w, v = np.linalg.eigh(gen)
    return (v * np.exp(-1j * w)) @ v.conj().T


def displacement(space: CompositeSpace, mode_index: int, alpha: complex) -> np.ndarray:
    _check_mode(space, mode_index)
    d = displacement_matrix(alpha, space.fock_shape[mode_index])
    return space._embed({space.n_qubits + mode_index: d})


def partial_trace_fock(space: CompositeSpace, operator: np.ndarray) -> np.ndarray:
    """Trace out every phonon mode of a composite-space operator."""
    q, f = space.qubit_dim, space.fock_dim
    return np.einsum("afbf->ab", np.asarray(operator).reshape(q, f, q, f))


def ground_projector(space: CompositeSpace) -> np.ndarray:
    """``I_qubits (x) |0...0><0...0|`` over all modes."""
    vac = np.zeros(space.fock_dim)
    vac[0] = 1.0
    return np.kron(np.eye(space.qubit_dim), np.diag(vac)).astype(complex)


def expectation(operator: np.ndarray, state: np.ndarray) -> complex:
    return complex(np.vdot(state, operator @ state))


def is_hermitian(op: np.ndarray, atol: float = 1e-10) -> bool:
    return bool(np.allclose(op, op.conj().T, atol=atol, rtol=0))


def is_unitary(op: np.ndarray, atol: float = 1e-10) -> bool:
    return bool(np.allclose(op.conj().T @ op, np.eye(op.shape[0]), atol=atol, rtol=0))


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i t h)`` for Hermitian ``h`` (batched over leading axes)."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * t * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)
