"""Dense linear-algebra primitives shared by the PT-MPO machinery.

All routines work on complex double arrays and are pure functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class InvalidInputError(ValueError):
    """Raised when an input array contains non-finite entries or has a bad shape."""


class NonFiniteError(InvalidInputError):
    """An array that should be finite holds NaN or inf."""


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD ``A ~= U @ diag(singular_values) @ Vdag``."""

    U: np.ndarray
    singular_values: np.ndarray
    Vdag: np.ndarray

    @property
    def kept(self) -> int:
        return self.singular_values.shape[0]


def _check_finite(a: np.ndarray, what: str = "matrix") -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what} contains non-finite entries")


def _svd(a: np.ndarray):
    try:
        return scipy.linalg.svd(a, full_matrices=False, check_finite=False,
                                lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, check_finite=False,
                                lapack_driver="gesvd")


def truncated_svd(a, epsilon: float = 0.0, reference: float | None = None) -> SvdResult:
    """SVD keeping singular values ``s_k >= epsilon * reference``.

    ``reference`` defaults to the largest singular value of ``a``. At least
    one singular value is always kept. An all-zero matrix yields a single
    zero singular value with canonical unit vectors.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got shape {a.shape}")
    if epsilon < 0:
        raise InvalidInputError("epsilon must be non-negative")
    _check_finite(a)
    m, n = a.shape
    if m == 0 or n == 0:
        raise InvalidInputError(f"empty matrix of shape {a.shape}")
    u, s, vh = _svd(a)
    s0 = s[0]
    if s0 == 0.0:
        u = np.zeros((m, 1), dtype=np.complex128)
        u[0, 0] = 1.0
        vh = np.zeros((1, n), dtype=np.complex128)
        vh[0, 0] = 1.0
        return SvdResult(u, np.zeros(1), vh)
    ref = s0 if reference is None else reference
    kept = max(1, int(np.count_nonzero(s >= epsilon * ref)))
    return SvdResult(u[:, :kept], s[:kept], vh[:kept, :])


def matrix_exponential(generator, dt: float = 1.0) -> np.ndarray:
    """``exp(generator * dt)`` by scaling and squaring with Pade approximants."""
    g = np.asarray(generator, dtype=np.complex128)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidInputError(f"generator must be square, got shape {g.shape}")
    _check_finite(g, "generator")
    out = scipy.linalg.expm(g * dt)
    if not np.all(np.isfinite(out)):
        raise OverflowError("matrix exponential overflowed")
    return out


def commutator_superoperator(h: np.ndarray) -> np.ndarray:
    """Liouvillian ``rho -> -i [h, rho]`` for row-major vectorised ``rho``.

    With ``vec(rho)[i*d + j] = rho[i, j]`` the map ``A rho B`` is
    ``kron(A, B.T)``.
    """
    h = np.asarray(h, dtype=np.complex128)
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def unitary_superoperator(u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
    """Superoperator of ``rho -> u rho v`` (``v`` defaults to ``u^dagger``)."""
    u = np.asarray(u, dtype=np.complex128)
    if v is None:
        return np.kron(u, u.conj())
    return np.kron(u, np.asarray(v, dtype=np.complex128).T)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=np.complex128).reshape(-1)


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim)
