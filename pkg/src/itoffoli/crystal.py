"""Linear Coulomb crystals: equilibrium geometry, axial modes and couplings.

Positions are dimensionless, in units of the length scale
``l = (e^2 / (4 pi eps0 M omega_cm^2))^(1/3)``.  Frequencies are angular
(rad/s) throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when the equilibrium solver fails to converge."""


def _forces(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    coulomb = np.sign(diff) / diff**2
    return u - coulomb.sum(axis=1)


def _hessian(u: np.ndarray) -> np.ndarray:
    dist = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(dist, np.inf)
    off = -2.0 / dist**3
    hess = off.copy()
    np.fill_diagonal(hess, 1.0 - off.sum(axis=1))
    return hess


def equilibrium_positions(n_ions: int, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Equilibrium coordinates of ``n_ions`` ions in a harmonic axial well.

    Solves ``u_i = sum_{j<i} 1/(u_i-u_j)^2 - sum_{j>i} 1/(u_j-u_i)^2`` with a
    damped Newton iteration started from uniform spacing.

    Raises
    ------
    SolverError
        If the force residual does not drop below ``tol``.
    """
    if n_ions < 2:
        raise ValueError(f"need at least 2 ions, got {n_ions}")
    half = 1.0 * n_ions**0.44
    u = np.linspace(-half, half, n_ions)
    res = np.max(np.abs(_forces(u)))
    for _ in range(max_iter):
        if res < tol:
            break
        step = np.linalg.solve(_hessian(u), -_forces(u))
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                trial_res = np.max(np.abs(_forces(trial)))
                if trial_res < res:
                    break
            lam *= 0.5
        u, res = trial, trial_res
    if res >= tol:
        raise SolverError(f"equilibrium solver did not converge (residual {res:.3e})")
    # enforce exact antisymmetry, which Newton only gives to ~1e-15
    u = 0.5 * (u - u[::-1])
    return u


def axial_modes(positions) -> tuple[np.ndarray, np.ndarray]:
    """Axial normal modes of a chain at the given equilibrium positions.

    Returns
    -------
    ratios : ndarray, shape (N,)
        ``omega_m / omega_cm`` in ascending order, ``ratios[0] == 1``.
    vectors : ndarray, shape (N, N)
        Row ``m`` is the orthonormal participation vector ``b_m``.
    """
    u = np.asarray(positions, dtype=float)
    evals, evecs = np.linalg.eigh(_hessian(u))
    if np.any(np.diff(evals) < 1e-9):
        log.warning("near-degenerate axial modes: %s", evals)
    vectors = evecs.T.copy()
    for b in vectors:
        lead = np.flatnonzero(np.abs(b) > 1e-8)[0]
        if b[lead] < 0:
            b *= -1
    ratios = np.sqrt(evals)
    # the centre-of-mass mode is exactly at the trap frequency
    ratios[0] = 1.0
    vectors[0] = 1.0 / np.sqrt(len(u))
    return ratios, vectors


@dataclass(frozen=True)
class CrystalModel:
    """A linear chain with its axial modes and Lamb-Dicke matrix.

    ``eta0`` is the collective Lamb-Dicke scale: an ion's coupling to the
    centre-of-mass mode is ``eta0 / sqrt(n_ions)``.
    """

    n_ions: int
    omega_cm: float
    eta0: float
    positions: np.ndarray = field(repr=False)
    mode_ratios: np.ndarray = field(repr=False)
    mode_vectors: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n_ions: int, omega_cm: float, eta0: float | None = None,
              eta_cm_per_ion: float | None = None) -> "CrystalModel":
        if (eta0 is None) == (eta_cm_per_ion is None):
            raise ValueError("give exactly one of eta0 or eta_cm_per_ion")
        if eta0 is None:
            eta0 = eta_cm_per_ion * np.sqrt(n_ions)
        if eta0 <= 0:
            raise ValueError("eta0 must be positive")
        u = equilibrium_positions(n_ions)
        ratios, vectors = axial_modes(u)
        return cls(n_ions, float(omega_cm), float(eta0), u, ratios, vectors)

    @property
    def mode_freqs(self) -> np.ndarray:
        return self.omega_cm * self.mode_ratios

    @property
    def n_modes(self) -> int:
        return len(self.mode_ratios)

    @property
    def eta_cm_per_ion(self) -> float:
        return self.eta0 / np.sqrt(self.n_ions)

    @property
    def lamb_dicke(self) -> np.ndarray:
        return lamb_dicke_matrix(self)

    def detunings(self, mu: float) -> np.ndarray:
        """Beatnote detunings ``delta_m = mu - omega_m``."""
        return mu - self.mode_freqs


def lamb_dicke_matrix(model: CrystalModel) -> np.ndarray:
    """``eta[m, i] = b_m^(i) * eta0 * sqrt(omega_cm / omega_m)``."""
    scale = model.eta0 / np.sqrt(model.mode_ratios)
    return model.mode_vectors * scale[:, None]


@dataclass(frozen=True)
class IsingMatrix:
    J: np.ndarray
    per_mode: np.ndarray

    @property
    def n(self) -> int:
        return self.J.shape[0]


def ising_matrix(model: CrystalModel, omega_rabi: float, detunings, modes=None) -> IsingMatrix:
    """Phonon-mediated couplings ``J_ij = Omega^2 sum_m eta_m^i eta_m^j / (4 delta_m)``.

    ``detunings`` holds one value per entry of ``modes`` (default: all modes).
    """
    modes = np.arange(model.n_modes) if modes is None else np.atleast_1d(modes)
    delta = np.atleast_1d(np.asarray(detunings, dtype=float))
    if delta.shape != modes.shape:
        raise ValueError(f"{len(delta)} detunings for {len(modes)} modes")
    if np.any(delta == 0):
        raise ValueError("zero detuning: resonant drive of a phonon mode")
    eta = lamb_dicke_matrix(model)[modes]
    per_mode = omega_rabi**2 * eta[:, :, None] * eta[:, None, :] / (4 * delta[:, None, None])
    idx = np.arange(model.n_ions)
    per_mode[:, idx, idx] = 0.0
    return IsingMatrix(per_mode.sum(axis=0), per_mode)
