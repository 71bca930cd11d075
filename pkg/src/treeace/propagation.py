"""Reduced-density-matrix propagation through a finished PT-MPO."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .ptmpo import PTMPO, DimensionMismatchError
from .tensor_core import commutator_superoperator, matrix_exponential


class NumericalInstabilityError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass
class SystemPropagator:
    """Free-system maps over the ``D**2`` Liouville space.

    With ``half_step`` the list holds two half-step maps per time step (applied
    before and after the environment tensor), otherwise one map per step.
    """

    maps: list
    sys_dim: int
    half_step: bool = True

    @property
    def steps(self) -> int:
        return len(self.maps) // 2 if self.half_step else len(self.maps)

    @classmethod
    def from_hamiltonian(cls, hamiltonian, dt: float, n: int, half_step: bool = True):
        """Build the maps from ``H / hbar`` (a matrix, or a callable of time).

        Time-dependent Hamiltonians are sampled at the midpoint of each
        (half) step.
        """
        if callable(hamiltonian):
            h_of_t = hamiltonian
        else:
            h_const = np.asarray(hamiltonian, dtype=np.complex128)
            h_of_t = lambda t: h_const  # noqa: E731
        sys_dim = np.asarray(h_of_t(0.0)).shape[0]
        maps = []
        if half_step:
            cache = None
            for l in range(n):
                for half in (0, 1):
                    t = (l + 0.25 + 0.5 * half) * dt
                    if callable(hamiltonian) or cache is None:
                        cache = matrix_exponential(commutator_superoperator(h_of_t(t)), dt / 2)
                    maps.append(cache)
        else:
            cache = None
            for l in range(n):
                if callable(hamiltonian) or cache is None:
                    cache = matrix_exponential(commutator_superoperator(h_of_t((l + 0.5) * dt)), dt)
                maps.append(cache)
        return cls(maps, sys_dim, half_step)

    @classmethod
    def identity(cls, sys_dim: int, n: int, half_step: bool = False):
        eye = np.eye(sys_dim ** 2, dtype=np.complex128)
        return cls([eye] * (2 * n if half_step else n), sys_dim, half_step)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n + 1, D, D)
    observables: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.complex128)

    @property
    def trace_deviation(self) -> np.ndarray:
        return np.abs(np.trace(self.states, axis1=1, axis2=2) - 1.0)

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))

    def population_violation(self) -> float:
        """Largest excursion of any population outside ``[0, 1]`` (0 if none)."""
        p = self.populations()
        return float(max(0.0, p.max() - 1.0, -p.min()))

    def is_physical(self, delta: float = 1e-6) -> bool:
        return self.population_violation() <= delta

    def observable(self, name: str) -> np.ndarray:
        return self.observables[name]

    def to_csv(self, path, names=None) -> None:
        """Columns ``t``, ``Re_<name>``, ``Im_<name>`` per observable, ``trace_dev``."""
        names = list(self.observables) if names is None else list(names)
        header = ["t"]
        for name in names:
            header += [f"Re_{name}", f"Im_{name}"]
        header.append("trace_dev")
        dev = self.trace_deviation
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [f"{t:.17g}"]
                for name in names:
                    v = self.observables[name][i]
                    row += [f"{v.real:.17g}", f"{v.imag:.17g}"]
                row.append(f"{dev[i]:.17g}")
                w.writerow(row)


def read_trajectory_csv(path) -> tuple[np.ndarray, dict]:
    """Read back ``(times, {name: complex series})`` from :meth:`Trajectory.to_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    times = body[:, 0]
    series = {}
    for j, col in enumerate(header):
        if col.startswith("Re_"):
            series[col[3:]] = body[:, j] + 1j * body[:, j + 1]
    return times, series


def _rescale(x: np.ndarray) -> tuple[np.ndarray, float]:
    """``x`` divided by its largest magnitude, and the log of that factor."""
    top = np.max(np.abs(x)) if x.size else 0.0
    if top > 0 and np.isfinite(top):
        return x / top, float(np.log(top))
    return x, 0.0


def closures(pt: PTMPO, with_scale: bool = False):
    """Bond-space read-out vectors ``c_0 .. c_n``.

    ``c_n = [1]``; earlier closures follow from trace preservation of the
    remaining step, ``c_{l-1} = (1/D) sum_{diag a, diag a'} c_l Q_l``. For an
    uncompressed mode this is exactly the environment trace.

    With ``with_scale`` the vectors are kept at unit maximum and a list of
    log-scales is returned alongside, so long PT-MPOs cannot overflow.
    """
    D = pt.sys_dim
    diag = np.arange(D) * (D + 1)
    out = [None] * (pt.steps + 1)
    logs = [0.0] * (pt.steps + 1)
    c = np.ones(1, dtype=np.complex128)
    out[-1] = c
    for l in range(pt.steps, 0, -1):
        q = pt.tensors[l - 1][:, :, diag][:, :, :, diag]
        c, ls = _rescale(np.einsum("x,xdij->d", c, q) / D)
        out[l - 1] = c
        logs[l - 1] = logs[l] + ls
    if with_scale:
        return out, logs
    return [c * np.exp(ls) for c, ls in zip(out, logs)]


def propagate(pt: PTMPO, sys: SystemPropagator, rho0, observables: Mapping | None = None,
              dt: float | None = None, t0: float = 0.0) -> Trajectory:
    """Propagate ``rho0`` through ``pt``, reading out the reduced state at every step.

    ``observables`` maps names to ``D x D`` operators; their expectation
    values ``Tr(O rho)`` are stored as complex series.
    """
    D = pt.sys_dim
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (D, D):
        raise DimensionMismatchError(f"rho0 shape {rho0.shape}, expected ({D}, {D})")
    if sys.sys_dim != D:
        raise DimensionMismatchError("system propagator and PT-MPO disagree on D")
    if sys.steps != pt.steps:
        raise DimensionMismatchError(
            f"system propagator has {sys.steps} steps, PT-MPO has {pt.steps}")
    close, close_log = closures(pt, with_scale=True)
    v = rho0.reshape(1, D * D)
    v_log = 0.0
    states = [rho0.copy()]
    for l, q in enumerate(pt.tensors, start=1):
        if sys.half_step:
            v = v @ sys.maps[2 * l - 2].T
        else:
            v = v @ sys.maps[l - 1].T
        v = np.tensordot(q, v, axes=([1, 3], [0, 1]))
        if sys.half_step:
            v = v @ sys.maps[2 * l - 1].T
        v, ls = _rescale(v)
        v_log += ls
        rho = (close[l] @ v).reshape(D, D) * np.exp(v_log + close_log[l])
        if not np.all(np.isfinite(rho)):
            raise NumericalInstabilityError(f"non-finite state at step {l}", step=l)
        states.append(rho)
    states = np.array(states)
    step = 1.0 if dt is None else dt
    times = t0 + step * np.arange(pt.steps + 1)
    obs = {}
    for name, op in (observables or {}).items():
        op = np.asarray(op, dtype=np.complex128)
        obs[name] = np.einsum("ij,tji->t", op, states)
    return Trajectory(times, states, obs)


def compression_error(traj: Trajectory, reference: Trajectory, name: str = "n_e") -> float:
    """Maximum over time of ``|Re O(t) - Re O_ref(t)|``."""
    if traj.times.shape != reference.times.shape or not np.allclose(traj.times, reference.times):
        raise ValueError("trajectories live on different time grids")
    return float(np.max(np.abs(traj.observables[name].real - reference.observables[name].real)))
