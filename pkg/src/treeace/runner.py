"""Build, contract and propagate one experiment; write its artifacts."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import ExperimentConfig
from .contraction import CompressionPolicy, ContractionPlan, contract
from .models import SpectralDensityQD, discretize_bosonic, fermionic_modes
from .propagation import (NumericalInstabilityError, SystemPropagator, Trajectory, compression_error,
                          propagate, read_trajectory_csv)
from .ptmpo import PTMPO, save_ptmpo, sv_spectrum
from .tensor_core import NonFiniteError

log = logging.getLogger(__name__)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Z = np.diag([1.0, -1.0]).astype(np.complex128)
EXCITED = np.diag([0.0, 1.0]).astype(np.complex128)
POPULATION_TOLERANCE = 1e-6

TRAJECTORY_FILE = "trajectory.csv"
SPECTRUM_FILE = "spectrum.csv"
TIMING_FILE = "timing.json"
SUMMARY_FILE = "summary.json"
CACHE_FILE = "ptmpo.bin"
CONFIG_FILE = "config.yaml"


@dataclass
class RunResult:
    pt: PTMPO
    trajectory: Trajectory
    summary: dict
    trace: list

    @property
    def unstable(self) -> bool:
        return bool(self.summary["unstable"])


def build_modes(cfg: ExperimentConfig) -> list:
    m, dt = cfg.model, cfg.grid.dt
    if m.kind == "spin_boson":
        return discretize_bosonic(SpectralDensityQD(), m.omega_max, m.n_modes, m.mode_dim,
                                  m.temperature, dt, coupling_scale=m.coupling_scale)
    return fermionic_modes(m.omega_min, m.omega_max, m.n_modes, dt,
                           initially_occupied=m.bath_occupied, gamma=m.gamma)


def system_hamiltonian(cfg: ExperimentConfig) -> np.ndarray:
    p = cfg.propagation
    sx = p.sx_coefficient
    if sx is None:
        sx = 1.0 if cfg.model.kind == "spin_boson" else 0.0
    return 0.5 * sx * SIGMA_X + 0.5 * p.sz_coefficient * SIGMA_Z


def initial_state(cfg: ExperimentConfig) -> np.ndarray:
    return EXCITED.copy() if cfg.propagation.initial_state == "excited" else np.eye(2) - EXCITED


def policy_of(cfg: ExperimentConfig) -> CompressionPolicy:
    p = cfg.policy
    return CompressionPolicy(p.epsilon, p.range_factor, p.n_sweeps, p.preselect)


def plan_of(cfg: ExperimentConfig) -> ContractionPlan:
    p = cfg.plan
    return ContractionPlan(p.scheme, p.ordering, p.trotter, p.seed)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_spectrum(values: np.ndarray, path, bond: int) -> None:
    with open(path, "w") as fh:
        fh.write("bond,index,sigma\n")
        for i, s in enumerate(values):
            fh.write(f"{bond},{i},{_fmt(s)}\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> RunResult:
    """Execute build, contraction and propagation; write artifacts to ``out_dir``.

    The reported contraction time covers the contraction call only.
    """
    out = Path(out_dir if out_dir is not None else cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    n, dt = cfg.grid.steps, cfg.grid.dt
    modes = build_modes(cfg)
    trace: list = []
    t0 = time.perf_counter()
    try:
        pt = contract(modes, n, policy_of(cfg), plan_of(cfg), trace=trace, threads=threads)
    except NonFiniteError as err:
        raise NumericalInstabilityError(f"contraction produced non-finite tensors: {err}") from err
    contraction_time = time.perf_counter() - t0

    sys = SystemPropagator.from_hamiltonian(system_hamiltonian(cfg), dt, n)
    traj = propagate(pt, sys, initial_state(cfg), {"n_e": EXCITED}, dt=dt)
    violation = traj.population_violation()
    mid = n // 2

    summary = {
        "name": cfg.name,
        "scheme": cfg.plan.scheme,
        "epsilon": cfg.policy.epsilon,
        "range_factor": cfg.policy.range_factor,
        "n_sweeps": cfg.policy.n_sweeps,
        "n_modes": cfg.model.n_modes,
        "dt": dt,
        "n": n,
        "max_bond": pt.max_bond,
        "mid_bond": pt.bond_dims[mid],
        "contraction_seconds": contraction_time,
        "population_violation": violation,
        "unstable": violation > POPULATION_TOLERANCE,
    }
    traj.to_csv(out / TRAJECTORY_FILE)
    if cfg.outputs.spectrum and n >= 2:
        spec = sv_spectrum(pt, mid)
        write_spectrum(spec, out / SPECTRUM_FILE, mid)
        summary["mid_count_above_epsilon"] = int(np.count_nonzero(spec >= cfg.policy.epsilon))
    if cfg.outputs.cache_ptmpo:
        save_ptmpo(pt, out / CACHE_FILE)
    if cfg.outputs.reference:
        ref_times, ref_series = read_trajectory_csv(Path(cfg.outputs.reference) / TRAJECTORY_FILE)
        ref = Trajectory(ref_times, traj.states, {"n_e": ref_series["n_e"]})
        summary["compression_error"] = compression_error(traj, ref)
    summary["total_seconds"] = time.perf_counter() - t_start

    (out / TIMING_FILE).write_text(json.dumps(
        {"contraction_seconds": contraction_time, "combinations": trace}, indent=2))
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=2))
    (out / CONFIG_FILE).write_text(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False))
    log.info("%s: chi=%d, contraction %.3fs", cfg.name, pt.max_bond, contraction_time)
    return RunResult(pt, traj, summary, trace)
