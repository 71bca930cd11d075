"""Contraction schedules turning a list of single-mode PT-MPOs into one PT-MPO."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .ptmpo import (NORMAL, PTMPO, SWAPPED, combine_compress, combine_preselect,
                    single_mode_ptmpo, sweep_compress, wrap_half_steps)
from .tensor_core import InvalidInputError

log = logging.getLogger(__name__)

SEQUENTIAL = "sequential"
SEQUENTIAL_PRESELECT = "sequential_preselect"
TREE = "tree"
SCHEMES = (SEQUENTIAL, SEQUENTIAL_PRESELECT, TREE)

ORDERINGS = ("increasing_frequency", "decreasing_frequency", "increasing_coupling",
             "random", "as_given")
TROTTER_SCHEMES = ("first_order", "symmetric_alternating", "symmetric_halfstep")


@dataclass(frozen=True)
class CompressionPolicy:
    """Nominal threshold ``epsilon_max``, range factor ``r = eps_max / eps_min``,
    sweep pairs per combination and whether combinations preselect."""

    epsilon_max: float
    range_factor: float = 1.0
    n_sweeps: int = 1
    preselect: bool = False

    def __post_init__(self):
        if not self.epsilon_max > 0:
            raise InvalidInputError("epsilon_max must be positive")
        if not self.range_factor >= 1:
            raise InvalidInputError("range_factor must be >= 1")
        if self.n_sweeps < 1:
            raise InvalidInputError("n_sweeps must be >= 1")

    @property
    def epsilon_min(self) -> float:
        return self.epsilon_max / self.range_factor


@dataclass(frozen=True)
class ContractionPlan:
    scheme: str = TREE
    ordering: str = "increasing_frequency"
    trotter: str = "symmetric_alternating"
    seed: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.scheme!r}")
        if self.ordering not in ORDERINGS:
            raise InvalidInputError(f"unknown ordering {self.ordering!r}")
        if self.trotter not in TROTTER_SCHEMES:
            raise InvalidInputError(f"unknown trotter scheme {self.trotter!r}")
        if self.ordering == "random" and self.seed is None:
            raise InvalidInputError("random ordering requires a seed")
        if self.trotter == "symmetric_halfstep" and self.scheme == TREE:
            raise InvalidInputError("the tree scheme symmetrises via alternating order only")

    @property
    def combine_order(self) -> str:
        return SWAPPED if self.trotter == "symmetric_alternating" else NORMAL


def layer_threshold(layer: int, total_layers: int, policy: CompressionPolicy) -> float:
    """Geometric interpolation from ``eps_min`` (first layer) to ``eps_max`` (last)."""
    if not 1 <= layer <= total_layers:
        raise InvalidInputError(f"layer {layer} outside 1..{total_layers}")
    if total_layers == 1:
        return policy.epsilon_max
    frac = (layer - 1) / (total_layers - 1)
    return policy.epsilon_min * policy.range_factor ** frac


def order_modes(modes: list, ordering: str, seed: int | None = None) -> list:
    """Stable sort by frequency or coupling, a seeded shuffle, or the input order.

    ``random`` uses ``numpy.random.default_rng(seed).permutation``.
    """
    if ordering == "as_given":
        return list(modes)
    if ordering == "random":
        if seed is None:
            raise InvalidInputError("random ordering requires a seed")
        perm = np.random.default_rng(seed).permutation(len(modes))
        return [modes[i] for i in perm]
    keys = {
        "increasing_frequency": lambda m: m.omega,
        "decreasing_frequency": lambda m: -m.omega,
        "increasing_coupling": lambda m: abs(m.coupling),
    }
    if ordering not in keys:
        raise InvalidInputError(f"unknown ordering {ordering!r}")
    attr = "coupling" if ordering == "increasing_coupling" else "omega"
    if any(getattr(m, attr, None) is None for m in modes):
        raise InvalidInputError(f"ordering {ordering!r} needs '{attr}' on every mode")
    return sorted(modes, key=keys[ordering])


def _combine_step(a: PTMPO, b: PTMPO, epsilon: float, policy: CompressionPolicy,
                  order: str) -> PTMPO:
    if policy.preselect:
        out = combine_preselect(a, b, epsilon, order)
        if policy.n_sweeps > 1:
            out, _ = sweep_compress(out, epsilon, policy.n_sweeps - 1)
        return out
    out, _ = combine_compress(a, b, epsilon, policy.n_sweeps, order)
    return out


def _record(trace, layer, pair, a, b, out, elapsed):
    rec = {"layer": layer, "pair": list(pair),
           "pre_max_bond": max(a.max_bond, b.max_bond),
           "post_max_bond": out.max_bond, "elapsed": elapsed}
    log.debug("combination %s", rec)
    if trace is not None:
        trace.append(rec)


def _check_modes(modes: list) -> None:
    if not modes:
        raise InvalidInputError("need at least one environment mode")
    d = modes[0].sys_dim
    if any(m.sys_dim != d for m in modes):
        raise InvalidInputError("modes disagree on the system dimension")


def sequential_threshold(index: int, total: int, policy: CompressionPolicy) -> float:
    """Threshold of combination ``index`` (1-based) out of ``total`` in the sequential scheme."""
    return layer_threshold(index, total, policy) if total >= 1 else policy.epsilon_max


def contract_sequential(modes: list, n: int, policy: CompressionPolicy,
                        plan: ContractionPlan, trace: list | None = None) -> PTMPO:
    """Fold modes one at a time into a growing PT-MPO, compressing after each."""
    _check_modes(modes)
    modes = order_modes(modes, plan.ordering, plan.seed)
    total = len(modes) - 1
    first_eps = sequential_threshold(1, total, policy) if total else policy.epsilon_max
    if plan.trotter == "symmetric_halfstep":
        return _sequential_halfstep(modes, n, policy, trace, first_eps)
    order = plan.combine_order
    t0 = time.perf_counter()
    acc, _ = sweep_compress(single_mode_ptmpo(modes[0], n), first_eps, policy.n_sweeps)
    if not total:
        return acc
    for i, mode in enumerate(modes[1:], start=1):
        eps = sequential_threshold(i, total, policy)
        start = time.perf_counter()
        nxt = single_mode_ptmpo(mode, n)
        out = _combine_step(acc, nxt, eps, policy, order)
        _record(trace, i, (0, i), acc, nxt, out, time.perf_counter() - start)
        acc = out
    log.info("sequential contraction of %d modes: chi=%d in %.3fs",
             len(modes), acc.max_bond, time.perf_counter() - t0)
    return acc


def _sequential_halfstep(modes, n, policy, trace, first_eps):
    """Symmetric split: each new mode takes a half step on both sides of the accumulated PT-MPO."""
    total = len(modes) - 1
    acc, _ = sweep_compress(single_mode_ptmpo(modes[0], n), first_eps, policy.n_sweeps)
    for i, mode in enumerate(modes[1:], start=1):
        eps = sequential_threshold(i, total, policy)
        start = time.perf_counter()
        out, _ = sweep_compress(wrap_half_steps(acc, mode), eps, policy.n_sweeps)
        _record(trace, i, (0, i), acc, acc, out, time.perf_counter() - start)
        acc = out
    return acc


def tree_layers(count: int) -> int:
    """Number of pairwise layers needed to reduce ``count`` items to one."""
    return math.ceil(math.log2(count)) if count > 1 else 0


def contract_tree(modes: list, n: int, policy: CompressionPolicy, plan: ContractionPlan,
                  trace: list | None = None, threads: int = 1) -> PTMPO:
    """Pairwise layer-by-layer combination of neighbouring PT-MPOs.

    Every combination preselects. Layer ``j`` uses :func:`layer_threshold`; an unpaired last element is
    carried to the next layer untouched. Same-layer combinations are
    independent and may run on ``threads`` workers without changing the
    result.
    """
    _check_modes(modes)
    if not policy.preselect:
        policy = replace(policy, preselect=True)
    modes = order_modes(modes, plan.ordering, plan.seed)
    order = plan.combine_order
    items = [single_mode_ptmpo(m, n) for m in modes]
    total_layers = tree_layers(len(items))
    if total_layers == 0:
        out, _ = sweep_compress(items[0], policy.epsilon_max, policy.n_sweeps)
        return out
    t0 = time.perf_counter()
    for layer in range(1, total_layers + 1):
        eps = layer_threshold(layer, total_layers, policy)
        pairs = [(i, i + 1) for i in range(0, len(items) - 1, 2)]

        def work(pair, eps=eps, items=items):
            a, b = items[pair[0]], items[pair[1]]
            start = time.perf_counter()
            out = _combine_step(a, b, eps, policy, order)
            return out, time.perf_counter() - start

        if threads > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, pairs))
        else:
            results = [work(p) for p in pairs]
        nxt = []
        for pair, (out, elapsed) in zip(pairs, results):
            _record(trace, layer, pair, items[pair[0]], items[pair[1]], out, elapsed)
            nxt.append(out)
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    log.info("tree contraction of %d modes: chi=%d in %.3fs",
             len(modes), items[0].max_bond, time.perf_counter() - t0)
    return items[0]


def contract(modes: list, n: int, policy: CompressionPolicy, plan: ContractionPlan,
             trace: list | None = None, threads: int = 1) -> PTMPO:
    """Dispatch on ``plan.scheme``; ``sequential_preselect`` forces preselection on."""
    if plan.scheme == TREE:
        return contract_tree(modes, n, policy, plan, trace, threads)
    if plan.scheme == SEQUENTIAL_PRESELECT and not policy.preselect:
        policy = replace(policy, preselect=True)
    return contract_sequential(modes, n, policy, plan, trace)
