"""Environment mode generators for the shipped physical models.

Units: frequencies and couplings in ps^-1 for the spin-boson model
(hbar = 1, so Hamiltonians are stored as ``H / hbar``), dimensionless for the
fermionic resonant-level model.

Basis conventions
-----------------
* spin-boson system: index 0 = ground state ``|g>``, 1 = excited ``|e>``
* fermionic site and bath modes: index 0 = empty, 1 = occupied
* joint (system x mode) Hilbert index ``s * M + m``; Liouville index is the
  row-major vectorisation of the joint density matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import InvalidInputError, matrix_exponential, unitary_superoperator

#: hbar / k_B in K ps (CODATA: hbar = 1.054571817e-34 J s, k_B = 1.380649e-23 J/K).
HBAR_OVER_KB = 7.6382


@dataclass(eq=False)
class EnvironmentMode:
    """Single-step propagator data of one environment mode.

    ``propagator`` acts on the joint (system x mode) Liouville space of
    dimension ``(sys_dim * mode_dim) ** 2``. ``hamiltonian`` (joint Hilbert
    space) is kept when the mode dynamics is unitary and is used by the
    exact dense reference; ``parity`` holds the local parity dressing of
    fermionic modes.
    """

    omega: float
    coupling: float
    mode_dim: int
    sys_dim: int
    propagator: np.ndarray
    initial_state: np.ndarray
    half_propagator: np.ndarray | None = None
    hamiltonian: np.ndarray | None = None
    parity: np.ndarray | None = None
    kind: str = "generic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = (self.sys_dim * self.mode_dim) ** 2
        self.propagator = np.asarray(self.propagator, dtype=np.complex128)
        if self.propagator.shape != (dim, dim):
            raise InvalidInputError(
                f"propagator shape {self.propagator.shape}, expected ({dim}, {dim})")
        rho = np.asarray(self.initial_state, dtype=np.complex128)
        if rho.shape != (self.mode_dim, self.mode_dim):
            raise InvalidInputError(f"initial state shape {rho.shape}")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise InvalidInputError("mode initial state must have unit trace")
        if np.abs(rho - rho.conj().T).max() > 1e-12:
            raise InvalidInputError("mode initial state must be Hermitian")
        if np.linalg.eigvalsh(rho).min() < -1e-12:
            raise InvalidInputError("mode initial state must be positive semidefinite")
        self.initial_state = rho


@dataclass(frozen=True)
class SpectralDensityQD:
    """Super-Ohmic quantum-dot/LA-phonon spectral density (GaAs, 4 nm radius)."""

    c_e: float = 0.1271
    c_h: float = -0.0635
    omega_e: float = 2.555
    omega_h: float = 2.938


def spectral_density(sd: SpectralDensityQD, omega):
    """``J(w) = w^3 (c_e exp(-w^2/w_e^2) - c_h exp(-w^2/w_h^2))^2``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise InvalidInputError("spectral density needs omega >= 0")
    amp = sd.c_e * np.exp(-w ** 2 / sd.omega_e ** 2) - sd.c_h * np.exp(-w ** 2 / sd.omega_h ** 2)
    val = w ** 3 * amp ** 2
    return float(val) if val.ndim == 0 else val


def midpoint_grid(lo: float, hi: float, count: int) -> np.ndarray:
    """Cell midpoints ``lo + (k - 1/2) (hi - lo) / count`` for k = 1..count."""
    k = np.arange(1, count + 1)
    return lo + (k - 0.5) * (hi - lo) / count


def thermal_state(omega: float, mode_dim: int, temperature: float) -> np.ndarray:
    """Truncated Bose occupation, renormalised to unit trace."""
    p = np.zeros(mode_dim)
    if temperature <= 0:
        p[0] = 1.0
    else:
        x = HBAR_OVER_KB * omega / temperature
        p = np.exp(-x * np.arange(mode_dim))
        p /= p.sum()
    return np.diag(p).astype(np.complex128)


def _ladder(mode_dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, mode_dim)), 1).astype(np.complex128)


def bosonic_mode(omega: float, coupling: float, mode_dim: int, temperature: float, dt: float,
                 system_coupling_op=None, counter_term: bool = True) -> EnvironmentMode:
    """One displaced-oscillator mode ``w b^dag b + g (b^dag + b) A + (g^2/w) A``."""
    if mode_dim < 2:
        raise InvalidInputError("mode_dim must be >= 2")
    a_op = np.diag([0.0, 1.0]) if system_coupling_op is None else np.asarray(system_coupling_op)
    D = a_op.shape[0]
    b = _ladder(mode_dim)
    eye_m, eye_s = np.eye(mode_dim), np.eye(D)
    h = omega * np.kron(eye_s, b.conj().T @ b) + coupling * np.kron(a_op, b + b.conj().T)
    if counter_term and omega != 0:
        h = h + (coupling ** 2 / omega) * np.kron(a_op, eye_m)
    u = matrix_exponential(-1j * h, dt)
    u_half = matrix_exponential(-1j * h, dt / 2)
    return EnvironmentMode(
        omega=float(omega), coupling=float(coupling), mode_dim=mode_dim, sys_dim=D,
        propagator=unitary_superoperator(u), half_propagator=unitary_superoperator(u_half),
        initial_state=thermal_state(omega, mode_dim, temperature), hamiltonian=h,
        kind="boson")


def discretize_bosonic(sd: SpectralDensityQD, omega_max: float, n_modes: int, mode_dim: int,
                       temperature: float, dt: float, system_coupling_op=None,
                       coupling_scale: float = 1.0) -> list[EnvironmentMode]:
    """Uniform midpoint discretisation of ``[0, omega_max]`` with ``g_k = sqrt(J(w_k) dw)``.

    ``coupling_scale`` multiplies every ``g_k`` (0 decouples the bath).
    """
    if omega_max <= 0:
        raise InvalidInputError("omega_max must be positive")
    if n_modes < 1:
        raise InvalidInputError("need at least one mode")
    if mode_dim < 2:
        raise InvalidInputError("mode_dim must be >= 2")
    omegas = midpoint_grid(0.0, omega_max, n_modes)
    dw = omega_max / n_modes
    couplings = coupling_scale * np.sqrt(spectral_density(sd, omegas) * dw)
    return [bosonic_mode(w, g, mode_dim, temperature, dt, system_coupling_op)
            for w, g in zip(omegas, couplings)]


SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |1><0|
SIGMA_MINUS = SIGMA_PLUS.T.copy()
NUMBER = np.diag([0.0, 1.0]).astype(np.complex128)
#: -1 iff both the system site and the mode are occupied, basis {00, 01, 10, 11}.
LOCAL_PARITY = np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)


def fermionic_coupling(omega_min: float, omega_max: float, n_modes: int, gamma: float = 1.0) -> float:
    """Flat-band coupling giving the Markovian hopping rate ``gamma = 2 pi g^2 / dw``."""
    return float(np.sqrt(gamma * (omega_max - omega_min) / (2 * np.pi * n_modes)))


def fermionic_mode(omega: float, coupling: float, dt: float, occupied: bool = True,
                   parity: bool = True) -> EnvironmentMode:
    """Two-level mode with hopping to the site, dressed by the local parity.

    The spin-model propagator ``exp(-i H dt)`` is multiplied by the local
    parity on both the forward and backward side; the parity commutes with
    the number-conserving mode Hamiltonian.
    """
    h = omega * np.kron(np.eye(2), NUMBER) + coupling * (
        np.kron(SIGMA_MINUS, SIGMA_PLUS) + np.kron(SIGMA_PLUS, SIGMA_MINUS))
    u = matrix_exponential(-1j * h, dt)
    if parity:
        u = LOCAL_PARITY @ u
    rho = np.diag([0.0, 1.0] if occupied else [1.0, 0.0]).astype(np.complex128)
    return EnvironmentMode(
        omega=float(omega), coupling=float(coupling), mode_dim=2, sys_dim=2,
        propagator=unitary_superoperator(u), initial_state=rho, hamiltonian=None,
        parity=LOCAL_PARITY.copy() if parity else None, kind="fermion",
        meta={"spin_hamiltonian": h})


def fermionic_modes(omega_min: float, omega_max: float, n_modes: int, dt: float,
                    initially_occupied: bool = True, gamma: float = 1.0,
                    parity: bool = True) -> list[EnvironmentMode]:
    """Resonant-level bath on a uniform midpoint grid of ``[omega_min, omega_max]``.

    The site energy is zero; add a site energy via the system Hamiltonian.
    Contractions of these modes must use the alternating operator order.
    """
    if n_modes < 1:
        raise InvalidInputError("need at least one mode")
    g = fermionic_coupling(omega_min, omega_max, n_modes, gamma)
    return [fermionic_mode(w, g, dt, initially_occupied, parity)
            for w in midpoint_grid(omega_min, omega_max, n_modes)]
