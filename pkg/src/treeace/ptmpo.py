"""Process-tensor matrix product operators (PT-MPOs) and their algebra.

A PT-MPO over ``n`` time steps is a list of rank-4 tensors ``Q[l]`` with
index layout ``(out_bond, in_bond, alpha_out, alpha_in)``. The outer
indices run over the system Liouville space (dimension ``D**2``, row-major
vectorisation of the density matrix) and the inner bonds link consecutive
time steps. Boundary bonds have dimension one.

Composite inner indices created by :func:`combine` are ordered ``(e, f)``
with the first operand's index ``e`` varying slowest.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor_core import InvalidInputError, truncated_svd

NORMAL = "normal"
SWAPPED = "swapped_even_steps"

#: Per-bond singular values, entry ``b - 1`` belongs to bond ``b`` (1 <= b < n).
BondWeights = list


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PTMPO:
    tensors: tuple
    sys_dim: int

    def __post_init__(self):
        tensors = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        object.__setattr__(self, "tensors", tensors)
        if not tensors:
            raise InvalidInputError("a PT-MPO needs at least one time step")
        d2 = self.sys_dim ** 2
        for l, t in enumerate(tensors):
            if t.ndim != 4 or t.shape[2:] != (d2, d2):
                raise DimensionMismatchError(
                    f"tensor {l + 1} has shape {t.shape}, expected outer dims ({d2}, {d2})")
        if tensors[0].shape[1] != 1 or tensors[-1].shape[0] != 1:
            raise DimensionMismatchError("boundary bonds must have dimension 1")
        for l in range(len(tensors) - 1):
            if tensors[l].shape[0] != tensors[l + 1].shape[1]:
                raise DimensionMismatchError(
                    f"bond {l + 1}: out-bond {tensors[l].shape[0]} != "
                    f"in-bond {tensors[l + 1].shape[1]}")

    @property
    def steps(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimensions ``d_0, ..., d_n``."""
        return [self.tensors[0].shape[1]] + [t.shape[0] for t in self.tensors]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors)

    def scaled(self, factor: complex, step: int | None = None) -> "PTMPO":
        """Multiply one step's tensor (1-based ``step``) or, if omitted, the first one."""
        tensors = list(self.tensors)
        idx = 0 if step is None else step - 1
        tensors[idx] = tensors[idx] * factor
        return PTMPO(tuple(tensors), self.sys_dim)


def identity_ptmpo(n: int, sys_dim: int) -> PTMPO:
    """Bond-dimension-one PT-MPO acting as the identity channel at every step."""
    eye = np.eye(sys_dim ** 2, dtype=np.complex128)[None, None]
    return PTMPO(tuple(eye.copy() for _ in range(n)), sys_dim)


def _mode_tensor(propagator: np.ndarray, sys_dim: int, mode_dim: int) -> np.ndarray:
    """Reorder a joint (system x mode) Liouville propagator into Q layout."""
    D, M = sys_dim, mode_dim
    e = propagator.reshape(D, M, D, M, D, M, D, M)
    # (s, m, s', m' | t, k, t', k') -> (mm', kk', ss', tt')
    e = e.transpose(1, 3, 5, 7, 0, 2, 4, 6)
    return e.reshape(M * M, M * M, D * D, D * D)


def single_mode_ptmpo(mode, n: int) -> PTMPO:
    """PT-MPO of a single environment mode over ``n`` steps.

    The first tensor absorbs the initial mode state, the last one traces the
    mode out, interior tensors are the bare joint propagator.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    D, M = mode.sys_dim, mode.mode_dim
    prop = np.asarray(mode.propagator, dtype=np.complex128)
    if prop.shape != ((D * M) ** 2, (D * M) ** 2):
        raise DimensionMismatchError(
            f"propagator shape {prop.shape} does not match D={D}, M={M}")
    bulk = _mode_tensor(prop, D, M)
    rho_vec = np.asarray(mode.initial_state, dtype=np.complex128).reshape(-1)
    trace_vec = np.eye(M, dtype=np.complex128).reshape(-1)
    first = np.tensordot(bulk, rho_vec, axes=([1], [0]))[:, None]
    last = np.tensordot(trace_vec, bulk, axes=([0], [0]))[None]
    if n == 1:
        only = np.tensordot(trace_vec, first, axes=([0], [0]))[None]
        return PTMPO((only,), D)
    tensors = [first] + [bulk] * (n - 2) + [last]
    return PTMPO(tuple(tensors), D)


def wrap_half_steps(q: PTMPO, mode) -> PTMPO:
    """Sandwich every step of ``q`` between two half-step propagators of ``mode``.

    The mode state is carried through ``q`` on the bond, so both halves act
    on the same mode. New bonds are ``(q bond, mode)`` with ``q`` major.
    """
    D, M = mode.sys_dim, mode.mode_dim
    if q.sys_dim != D:
        raise DimensionMismatchError("mode and PT-MPO disagree on the system dimension")
    if mode.half_propagator is None:
        raise InvalidInputError("mode has no half-step propagator")
    half = _mode_tensor(np.asarray(mode.half_propagator, dtype=np.complex128), D, M)
    rho_vec = np.asarray(mode.initial_state, dtype=np.complex128).reshape(-1)
    trace_vec = np.eye(M, dtype=np.complex128).reshape(-1)
    out = []
    for l, t in enumerate(q.tensors, start=1):
        w = np.einsum("xyij,abjk,yzkl->axbzil", half, t, half)
        if l == 1:
            w = np.tensordot(w, rho_vec, axes=([3], [0]))[:, :, :, None]
        if l == q.steps:
            w = np.tensordot(trace_vec, w, axes=([0], [1]))[:, None]
        s = w.shape
        out.append(w.reshape(s[0] * s[1], s[2] * s[3], s[4], s[5]))
    return PTMPO(tuple(out), D)


def _check_compatible(q: PTMPO, p: PTMPO) -> None:
    if q.steps != p.steps:
        raise DimensionMismatchError(f"step counts differ: {q.steps} vs {p.steps}")
    if q.sys_dim != p.sys_dim:
        raise DimensionMismatchError(f"system dims differ: {q.sys_dim} vs {p.sys_dim}")


def _swapped(order: str, l: int) -> bool:
    """Whether 1-based step ``l`` uses the reversed operator order."""
    if order == NORMAL:
        return False
    if order == SWAPPED:
        return l % 2 == 0
    raise ValueError(f"unknown combination order {order!r}")


def combine(q: PTMPO, p: PTMPO, order: str = NORMAL) -> PTMPO:
    """Exact combination; ``q`` acts after ``p`` (reversed on even steps if swapped)."""
    _check_compatible(q, p)
    out = []
    for l, (a, b) in enumerate(zip(q.tensors, p.tensors), start=1):
        if _swapped(order, l):
            site = np.einsum("abjk,cdij->acbdik", a, b)
        else:
            site = np.einsum("abij,cdjk->acbdik", a, b)
        s = site.shape
        out.append(site.reshape(s[0] * s[1], s[2] * s[3], s[4], s[5]))
    return PTMPO(tuple(out), q.sys_dim)


def _normalised(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Singular values divided by the largest one, and the log of that factor."""
    top = values[0]
    if top > 0:
        return values / top, float(np.log(top))
    return values, 0.0


def _spread(tensors: list, log_scale: float) -> None:
    """Multiply every tensor by ``exp(log_scale / n)``.

    Sweeps peel the leading singular value off each carry so that long
    PT-MPOs cannot overflow; the removed norm is shared evenly afterwards.
    """
    if log_scale:
        factor = np.exp(log_scale / len(tensors))
        for l, t in enumerate(tensors):
            tensors[l] = t * factor


def _forward_sweep(tensors: list, epsilon: float) -> BondWeights:
    """Left-to-right truncating sweep; returns weights normalised to the largest per bond."""
    weights = []
    log_scale = 0.0
    for l in range(len(tensors) - 1):
        t = tensors[l]
        do, di, a, b = t.shape
        res = truncated_svd(t.reshape(do, di * a * b), epsilon)
        tensors[l] = res.Vdag.reshape(res.kept, di, a, b)
        sv, ls = _normalised(res.singular_values)
        log_scale += ls
        carry = res.U * sv
        nxt = np.tensordot(tensors[l + 1], carry, axes=([1], [0]))
        tensors[l + 1] = np.moveaxis(nxt, 3, 1)
        weights.append(sv)
    _spread(tensors, log_scale)
    return weights


def _backward_sweep(tensors: list, epsilon: float, stop: int = 1) -> BondWeights:
    """Right-to-left truncating sweep down to bond ``stop``; returns weights by bond."""
    n = len(tensors)
    weights = [None] * (n - 1)
    log_scale = 0.0
    for l in range(n - 1, stop - 1, -1):
        t = tensors[l]
        do, di, a, b = t.shape
        mat = t.transpose(0, 2, 3, 1).reshape(do * a * b, di)
        res = truncated_svd(mat, epsilon)
        tensors[l] = res.U.reshape(do, a, b, res.kept).transpose(0, 3, 1, 2)
        sv, ls = _normalised(res.singular_values)
        log_scale += ls
        carry = sv[:, None] * res.Vdag
        tensors[l - 1] = np.tensordot(carry, tensors[l - 1], axes=([1], [0]))
        weights[l - 1] = sv
    _spread(tensors, log_scale)
    return weights


def sweep_compress(q: PTMPO, epsilon: float, n_sweeps: int = 1) -> tuple[PTMPO, BondWeights]:
    """``n_sweeps`` pairs of truncating forward and backward SVD sweeps.

    Returns the compressed PT-MPO and the singular values of the final
    backward sweep for every interior bond.
    """
    if n_sweeps < 1:
        raise InvalidInputError("n_sweeps must be >= 1")
    tensors = list(q.tensors)
    weights: BondWeights = []
    for _ in range(n_sweeps):
        _forward_sweep(tensors, epsilon)
        weights = _backward_sweep(tensors, epsilon)
    return PTMPO(tuple(tensors), q.sys_dim), weights


def _site_with_carry(a: np.ndarray, b: np.ndarray, carry: np.ndarray, swapped: bool) -> np.ndarray:
    """Combined site tensor of ``a`` and ``b`` with ``carry[(e, f), k]`` absorbed into the in-bond.

    Avoids building the full composite in-bond.
    """
    c = carry.reshape(a.shape[1], b.shape[1], carry.shape[1])
    if swapped:
        t = np.tensordot(a, c, axes=([1], [0]))  # (e, j, k', f, k)
        out = np.tensordot(b, t, axes=([1, 3], [3, 1]))  # (f_out, i, e_out, k', k)
        out = out.transpose(2, 0, 4, 1, 3)
    else:
        t = np.tensordot(b, c, axes=([1], [1]))  # (f, j, k', e, k)
        out = np.tensordot(a, t, axes=([1, 3], [3, 1]))  # (e_out, i, f_out, k', k)
        out = out.transpose(0, 2, 4, 1, 3)
    s = out.shape
    return out.reshape(s[0] * s[1], s[2], s[3], s[4])


def combine_compress(q: PTMPO, p: PTMPO, epsilon: float, n_sweeps: int = 1,
                     order: str = NORMAL) -> tuple[PTMPO, BondWeights]:
    """Same result as ``sweep_compress(combine(q, p, order), epsilon, n_sweeps)``.

    The combination is fused into the first forward sweep, so the full
    composite bonds only ever exist on one side of one site.
    """
    _check_compatible(q, p)
    if n_sweeps < 1:
        raise InvalidInputError("n_sweeps must be >= 1")
    n = q.steps
    tensors = [None] * n
    carry = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for l in range(1, n + 1):
        site = _site_with_carry(q.tensors[l - 1], p.tensors[l - 1], carry, _swapped(order, l))
        if l == n:
            tensors[l - 1] = site
            break
        do, k, a, b = site.shape
        res = truncated_svd(site.reshape(do, k * a * b), epsilon)
        tensors[l - 1] = res.Vdag.reshape(res.kept, k, a, b)
        sv, ls = _normalised(res.singular_values)
        log_scale += ls
        carry = res.U * sv
    _spread(tensors, log_scale)
    weights = _backward_sweep(tensors, epsilon)
    for _ in range(n_sweeps - 1):
        _forward_sweep(tensors, epsilon)
        weights = _backward_sweep(tensors, epsilon)
    return PTMPO(tuple(tensors), q.sys_dim), weights


def preselect_pairs(w1: np.ndarray, w2: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite bond indices ``(e, f)`` with ``w1[e] * w2[f] >= epsilon * w1[0] * w2[0]``.

    Returned in ``e``-major order, matching the layout of :func:`combine`.
    """
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    keep = np.outer(w1, w2) >= epsilon * w1[0] * w2[0]
    e, f = np.nonzero(keep)
    return e, f


def combine_preselect(q: PTMPO, p: PTMPO, epsilon: float, order: str = NORMAL) -> PTMPO:
    """Combine two PT-MPOs keeping only preselected composite bond indices.

    Both inputs first get an independent truncating forward sweep; their
    singular values decide which composite indices are materialised while
    the combined MPO is assembled site by site during a truncating backward
    sweep.
    """
    _check_compatible(q, p)
    n = q.steps
    qt, pt = list(q.tensors), list(p.tensors)
    w1 = _forward_sweep(qt, epsilon)
    w2 = _forward_sweep(pt, epsilon)
    trivial = (np.zeros(1, dtype=np.intp), np.zeros(1, dtype=np.intp))
    sel = [trivial] + [preselect_pairs(a, b, epsilon) for a, b in zip(w1, w2)] + [trivial]
    out = [None] * n
    carry = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for l in range(n, 0, -1):
        site = _preselected_site(qt[l - 1], pt[l - 1], sel[l], sel[l - 1], carry,
                                 _swapped(order, l))
        if l == 1:
            out[0] = site
            break
        do, di, a, b = site.shape
        res = truncated_svd(site.transpose(0, 2, 3, 1).reshape(do * a * b, di), epsilon)
        out[l - 1] = res.U.reshape(do, a, b, res.kept).transpose(0, 3, 1, 2)
        sv, ls = _normalised(res.singular_values)
        log_scale += ls
        carry = sv[:, None] * res.Vdag
    _spread(out, log_scale)
    return PTMPO(tuple(out), q.sys_dim)


#: soft cap on the complex entries of one composite-site block
_BLOCK_ENTRIES = 1 << 22


def _preselected_site(qa, pa, sel_out, sel_in, carry, swapped):
    """``carry @ site`` for the preselected composite indices, built in column blocks.

    Only ``carry.shape[0] x len(sel_in)`` outputs are kept; the
    ``len(sel_out) x len(sel_in)`` composite site never exists at once.
    """
    e_out, f_out = sel_out
    e_in, f_in = sel_in
    a, b = qa.shape[2], pa.shape[3]
    out = np.empty((carry.shape[0], len(e_in), a, b), dtype=np.complex128)
    step = max(1, _BLOCK_ENTRIES // max(1, len(e_out) * a * b))
    for start in range(0, len(e_in), step):
        cols = slice(start, start + step)
        qs = qa[e_out[:, None], e_in[None, cols]]
        ps = pa[f_out[:, None], f_in[None, cols]]
        block = np.matmul(ps, qs) if swapped else np.matmul(qs, ps)
        out[:, cols] = np.tensordot(carry, block, axes=([1], [0]))
    return out


def _overlap(a: PTMPO, b: PTMPO) -> tuple[complex, float]:
    """``<a|b>`` as ``(mantissa, log_scale)`` with the value ``mantissa * exp(log_scale)``."""
    env = np.ones((1, 1), dtype=np.complex128)
    log_scale = 0.0
    for ta, tb in zip(a.tensors, b.tensors):
        tmp = np.tensordot(env, tb, axes=([1], [1]))  # (a, b', i, j)
        env = np.tensordot(ta.conj(), tmp, axes=([1, 2, 3], [0, 2, 3]))
        norm = np.abs(env).max()
        if norm > 0:
            env = env / norm
            log_scale += np.log(norm)
    return complex(env[0, 0]), log_scale


def tensor_distance(a: PTMPO, b: PTMPO) -> float:
    """Normalised squared distance ``|A - B|^2 / (|A| |B|)`` via transfer matrices.

    Not clamped: cancellation can make it slightly negative for nearly
    identical inputs.
    """
    _check_compatible(a, b)
    for l, (ta, tb) in enumerate(zip(a.tensors, b.tensors)):
        if ta.shape[2:] != tb.shape[2:]:
            raise DimensionMismatchError(f"outer dims differ at step {l + 1}")
    maa, laa = _overlap(a, a)
    mbb, lbb = _overlap(b, b)
    mab, lab = _overlap(a, b)
    maa, mbb = maa.real, mbb.real
    if maa <= 0 or mbb <= 0:
        raise InvalidInputError("distance undefined for a zero PT-MPO")
    half = 0.5 * (laa - lbb)
    ratio = np.sqrt(maa / mbb)
    term_aa = ratio * np.exp(half)
    term_bb = np.exp(-half) / ratio
    cross = 2.0 * mab.real / np.sqrt(maa * mbb) * np.exp(lab - 0.5 * (laa + lbb))
    return float(term_aa + term_bb - cross)


def sv_spectrum(q: PTMPO, bond: int) -> np.ndarray:
    """Normalised singular values at interior ``bond`` (1 <= bond < n).

    The PT-MPO is brought into canonical form around the bond with
    non-truncating sweeps first.
    """
    n = q.steps
    if not 1 <= bond <= n - 1:
        raise InvalidInputError(f"bond {bond} out of range 1..{n - 1}")
    tensors = list(q.tensors)
    _forward_sweep(tensors, 0.0)
    weights = _backward_sweep(tensors, 0.0, stop=bond)
    s = weights[bond - 1]
    return s / s[0] if s[0] > 0 else s


def to_dense(q: PTMPO) -> np.ndarray:
    """Contract all inner bonds; result indexed ``(alpha_1, alpha'_1, ..., alpha_n, alpha'_n)``.

    Only meant for small test instances.
    """
    acc = q.tensors[0][:, 0]  # (d1, a, b)
    for t in q.tensors[1:]:
        acc = np.tensordot(t, acc, axes=([1], [0]))  # (d, a_l, b_l, ...prev)
        acc = np.moveaxis(acc, (1, 2), (-2, -1))
    return acc[0]


_MAGIC = b"PTMPO\x00v1"


def save_ptmpo(q: PTMPO, path) -> None:
    """Write the binary container.

    Layout (little-endian): 8-byte magic ``PTMPO\\0v1``, uint64 ``n``,
    uint64 ``D``, ``n + 1`` uint64 bond dims ``d_0 .. d_n``, then each
    tensor as complex128 in C order ``(out_bond, in_bond, alpha_out, alpha_in)``.
    """
    dims = q.bond_dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(f"<QQ{len(dims)}Q", q.steps, q.sys_dim, *dims))
        for t in q.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_ptmpo(path) -> PTMPO:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise InvalidInputError(f"{path}: not a PT-MPO container")
    if len(data) < 24:
        raise InvalidInputError(f"{path}: truncated header")
    n, d = struct.unpack_from("<QQ", data, 8)
    if len(data) < 24 + 8 * (n + 1):
        raise InvalidInputError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{n + 1}Q", data, 24)
    offset = 24 + 8 * (n + 1)
    d2 = d * d
    tensors = []
    for l in range(n):
        shape = (dims[l + 1], dims[l], d2, d2)
        count = int(np.prod(shape))
        if offset + 16 * count > len(data):
            raise InvalidInputError(f"{path}: truncated payload")
        arr = np.frombuffer(data, dtype="<c16", count=count, offset=offset)
        tensors.append(arr.reshape(shape).astype(np.complex128))
        offset += 16 * count
    if offset != len(data):
        raise InvalidInputError(f"{path}: trailing or missing payload bytes")
    return PTMPO(tuple(tensors), int(d))


def bond_weight_counts(weights: Sequence[np.ndarray], epsilon: float) -> list[int]:
    """Number of normalised weights ``>= epsilon`` per bond."""
    return [int(np.count_nonzero(w >= epsilon * w[0])) for w in weights]
