"""Brute-force references propagating the full joint density matrix.

These are independent of the PT-MPO code path and only feasible for a few
small modes.
"""
from __future__ import annotations

from functools import reduce

import numpy as np

from .models import EnvironmentMode
from .propagation import Trajectory
from .tensor_core import InvalidInputError, commutator_superoperator, matrix_exponential

MAX_LIOUVILLE_DIM = 4096

EXACT = "exact"
TROTTER = "trotter_matching"


def _apply_local(state: np.ndarray, superop: np.ndarray, axes: tuple, dims: tuple) -> np.ndarray:
    """Apply a superoperator on the sub-system ``axes`` of a ket/bra-split state tensor."""
    half = len(dims)
    kets = list(axes)
    bras = [a + half for a in axes]
    sub = [dims[a] for a in axes]
    op = superop.reshape(sub + sub + sub + sub)
    k = 2 * len(axes)
    out = np.tensordot(op, state, axes=(list(range(k, 2 * k)), kets + bras))
    # out axes: touched ket/bra axes first, remaining axes in original order
    rest = [a for a in range(2 * half) if a not in kets + bras]
    order = kets + bras + rest
    return np.moveaxis(out, list(range(len(order))), order)


def _env_order(n_modes: int, step: int, trotter: str) -> list:
    """Mode application order for 1-based ``step``.

    The first listed mode acts last on odd steps (matching the PT-MPO fold);
    with the alternating scheme even steps run the reverse.
    """
    order = list(range(n_modes - 1, -1, -1))
    if trotter == "symmetric_alternating" and step % 2 == 0:
        order.reverse()
    return order


def _halfstep_sequence(n_modes: int) -> list:
    """``(mode, half)`` application order of the nested symmetric split.

    Mode 0 takes a full step in the middle; every later mode is split into
    half steps wrapped around everything before it.
    """
    outer = list(range(n_modes - 1, 0, -1))
    return [(k, True) for k in outer] + [(0, False)] + [(k, True) for k in reversed(outer)]


def _embed_hamiltonian(h_local: np.ndarray, mode: int, dims: tuple) -> np.ndarray:
    """Embed a (system x mode) operator into the full system x modes Hilbert space."""
    total = int(np.prod(dims))
    D, M = dims[0], dims[mode + 1]
    op = h_local.reshape(D, M, D, M)
    eye = np.eye(total).reshape(dims + dims)
    half = len(dims)
    out = np.tensordot(op, eye, axes=([2, 3], [0, mode + 1]))
    out = np.moveaxis(out, [0, 1], [0, mode + 1])
    return out.reshape(total, total)


def dense_oracle(modes: list, system_hamiltonian, rho0, n: int, dt: float,
                 splitting: str = TROTTER, trotter: str = "symmetric_alternating",
                 half_step: bool = True, observables=None) -> Trajectory:
    """Reduced dynamics from the full joint density matrix.

    ``trotter_matching`` applies the same ordered per-mode propagators as the
    PT-MPO pipeline (including parity dressing and alternating order), so it
    differs from a PT-MPO result only by compression error. ``exact`` uses
    ``exp((L_S + sum_k L_k) dt)`` and needs mode Hamiltonians.
    """
    if not modes:
        raise InvalidInputError("need at least one mode")
    D = modes[0].sys_dim
    dims = (D,) + tuple(m.mode_dim for m in modes)
    hdim = int(np.prod(dims))
    if hdim * hdim > MAX_LIOUVILLE_DIM:
        raise InvalidInputError(
            f"joint Liouville dimension {hdim * hdim} exceeds guard {MAX_LIOUVILLE_DIM}")
    h_sys = np.zeros((D, D)) if system_hamiltonian is None else np.asarray(system_hamiltonian)
    rho0 = np.asarray(rho0, dtype=np.complex128)
    full = reduce(np.kron, [rho0] + [m.initial_state for m in modes])
    half = len(dims)
    state = full.reshape(dims + dims)

    if splitting == EXACT:
        if any(m.hamiltonian is None for m in modes):
            raise InvalidInputError("exact splitting requires mode Hamiltonians")
        h_tot = _embed_hamiltonian(np.kron(h_sys, np.eye(dims[1])), 0, dims)
        for k, m in enumerate(modes):
            h_tot = h_tot + _embed_hamiltonian(m.hamiltonian, k, dims)
        u = matrix_exponential(-1j * h_tot, dt)
    elif splitting != TROTTER:
        raise ValueError(f"unknown splitting {splitting!r}")
    else:
        l_sys = commutator_superoperator(h_sys)
        if half_step:
            sys_map = matrix_exponential(l_sys, dt / 2)
        else:
            sys_map = matrix_exponential(l_sys, dt)

    if trotter == "symmetric_halfstep":
        if any(m.half_propagator is None for m in modes[1:]):
            raise InvalidInputError("symmetric_halfstep needs half-step mode propagators")
        sequence = lambda step: _halfstep_sequence(len(modes))  # noqa: E731
    else:
        sequence = lambda step: [(k, False) for k in _env_order(len(modes), step, trotter)]  # noqa: E731

    states = [rho0.copy()]
    for step in range(1, n + 1):
        if splitting == EXACT:
            mat = state.reshape(hdim, hdim)
            state = (u @ mat @ u.conj().T).reshape(dims + dims)
        else:
            state = _apply_local(state, sys_map, (0,), dims)
            for k, use_half in sequence(step):
                prop = modes[k].half_propagator if use_half else modes[k].propagator
                state = _apply_local(state, prop, (0, k + 1), dims)
            if half_step:
                state = _apply_local(state, sys_map, (0,), dims)
        mat = state.reshape(D, hdim // D, D, hdim // D)
        states.append(np.einsum("iaja->ij", mat))
    states = np.array(states)
    obs = {name: np.einsum("ij,tji->t", np.asarray(op), states)
           for name, op in (observables or {}).items()}
    return Trajectory(dt * np.arange(n + 1), states, obs)


def jordan_wigner_annihilators(n_sites: int) -> list:
    """Annihilators ``c_j = (prod_{i<j} Z_i) sigma^-_j`` with ``Z = (-1)^n``."""
    z = np.diag([1.0, -1.0])
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1|
    eye = np.eye(2)
    ops = []
    for j in range(n_sites):
        factors = [z] * j + [lower] + [eye] * (n_sites - j - 1)
        ops.append(reduce(np.kron, factors).astype(np.complex128))
    return ops


def fermionic_fock_oracle(omegas, couplings, n: int, dt: float, site_occupied: bool = False,
                         bath_occupied: bool = True, splitting: str = TROTTER,
                         trotter: str = "symmetric_alternating", site_energy: float = 0.0) -> Trajectory:
    """Resonant-level model in the full antisymmetrised Fock space.

    Site is fermion 0, bath mode ``k`` (0-based position in ``omegas``) is
    fermion ``k + 1``; ``bath_occupied`` is one flag or one per mode. With ``trotter_matching`` the true fermionic mode
    propagators are applied in the same order as the PT-MPO pipeline; the
    site energy (if any) is applied as a half step before and after.
    Observable ``n_0`` is the site occupation.
    """
    n_modes = len(omegas)
    sites = n_modes + 1
    if (2 ** sites) ** 2 > MAX_LIOUVILLE_DIM:
        raise InvalidInputError("Fock space too large for the dense oracle")
    c = jordan_wigner_annihilators(sites)
    num = [op.conj().T @ op for op in c]
    h_modes = [w * num[k + 1] + g * (c[k + 1].conj().T @ c[0] + c[0].conj().T @ c[k + 1])
               for k, (w, g) in enumerate(zip(omegas, couplings))]
    h_site = site_energy * num[0]
    if np.ndim(bath_occupied) == 0:
        bath_occupied = [bool(bath_occupied)] * n_modes
    occ = [site_occupied] + list(bath_occupied)
    psi = reduce(np.kron, [np.array([0.0, 1.0]) if o else np.array([1.0, 0.0]) for o in occ])
    rho = np.outer(psi, psi).astype(np.complex128)
    if splitting == EXACT:
        u_steps = [matrix_exponential(-1j * (h_site + sum(h_modes)), dt)]
    elif splitting == TROTTER:
        u_modes = [matrix_exponential(-1j * h, dt) for h in h_modes]
        u_half_site = matrix_exponential(-1j * h_site, dt / 2)
        u_steps = []
        for parity in (1, 2):
            u = u_half_site
            for k in _env_order(n_modes, parity, trotter):
                u = u_modes[k] @ u
            u_steps.append(u_half_site @ u)
    else:
        raise ValueError(f"unknown splitting {splitting!r}")
    states = []
    for step in range(n + 1):
        if step > 0:
            u = u_steps[(step - 1) % len(u_steps)]
            rho = u @ rho @ u.conj().T
        r = rho.reshape(2, 2 ** n_modes, 2, 2 ** n_modes)
        states.append(np.einsum("iaja->ij", r))
    states = np.array(states)
    n0 = np.real(states[:, 1, 1]).astype(np.complex128)
    return Trajectory(dt * np.arange(n + 1), states, {"n_0": n0})
