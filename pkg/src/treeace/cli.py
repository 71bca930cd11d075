"""Command line front-end: ``treeace run|compare|spectrum|presets``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, load_config, merge, parse_config
from .propagation import NumericalInstabilityError, Trajectory, compression_error, read_trajectory_csv
from .ptmpo import load_ptmpo, sv_spectrum, tensor_distance
from .runner import (CACHE_FILE, SUMMARY_FILE, TRAJECTORY_FILE, run_experiment, write_spectrum)
from .tensor_core import InvalidInputError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3

#: distances below this magnitude are dominated by cancellation
CANCELLATION_LEVEL = 1e-10

log = logging.getLogger("treeace")


def load_presets() -> dict:
    text = resources.files("treeace").joinpath("presets.yaml").read_text()
    return yaml.safe_load(text)["presets"]


def expand_preset(name: str, presets: dict | None = None) -> list[tuple[str, dict]]:
    """``(variant name, raw config dict)`` pairs, reference variant first."""
    presets = load_presets() if presets is None else presets
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}")
    spec = presets[name]
    out = []
    for var in spec["variants"]:
        var = dict(var)
        vname = var.pop("name")
        cfg = merge(spec["base"], var)
        cfg["name"] = f"{name}/{vname}"
        out.append((vname, cfg))
    ref = spec.get("reference")
    out.sort(key=lambda item: item[0] != ref)
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.output or cfg.outputs.directory
    result = run_experiment(cfg, out, threads=args.threads)
    print(json.dumps(result.summary, indent=2))
    if result.unstable:
        log.error("population outside [0, 1] by %.3g", result.summary["population_violation"])
        return EXIT_UNSTABLE
    return EXIT_OK


def compare_runs(run_a, run_b) -> dict:
    """Compression error, tensor distance (if both caches exist), chi and time ratios."""
    a, b = Path(run_a), Path(run_b)
    ta, sa = read_trajectory_csv(a / TRAJECTORY_FILE)
    tb, sb = read_trajectory_csv(b / TRAJECTORY_FILE)
    if ta.shape != tb.shape or not np.allclose(ta, tb):
        raise ConfigError("runs live on different time grids")
    dummy = np.zeros((len(ta), 2, 2))
    err = compression_error(Trajectory(ta, dummy, {"n_e": sa["n_e"]}),
                            Trajectory(tb, dummy, {"n_e": sb["n_e"]}))
    suma = json.loads((a / SUMMARY_FILE).read_text())
    sumb = json.loads((b / SUMMARY_FILE).read_text())
    report = {
        "run_a": str(a), "run_b": str(b),
        "compression_error": err,
        "chi_ratio": suma["max_bond"] / sumb["max_bond"],
        "time_ratio": (suma["contraction_seconds"] / sumb["contraction_seconds"]
                       if sumb["contraction_seconds"] > 0 else float("nan")),
        "tensor_distance": None,
        "cancellation_warning": False,
    }
    if (a / CACHE_FILE).exists() and (b / CACHE_FILE).exists():
        pa, pb = load_ptmpo(a / CACHE_FILE), load_ptmpo(b / CACHE_FILE)
        if pa.steps != pb.steps or pa.sys_dim != pb.sys_dim:
            raise ConfigError("cached PT-MPOs have different dimensions")
        dist = tensor_distance(pa, pb)
        report["tensor_distance"] = dist
        report["cancellation_warning"] = dist < 0 or (0 < abs(dist) < CANCELLATION_LEVEL)
    return report


def cmd_compare(args) -> int:
    report = compare_runs(args.run_a, args.run_b)
    print(json.dumps(report, indent=2))
    if report["cancellation_warning"]:
        log.warning("tensor distance %.3g is at the cancellation level", report["tensor_distance"])
    return EXIT_OK


def cmd_spectrum(args) -> int:
    pt = load_ptmpo(args.cache)
    bond = args.bond if args.bond is not None else pt.steps // 2
    values = sv_spectrum(pt, bond)
    if args.output:
        write_spectrum(values, args.output, bond)
    else:
        print("bond,index,sigma")
        for i, s in enumerate(values):
            print(f"{bond},{i},{s:.17g}")
    return EXIT_OK


def cmd_presets(args) -> int:
    presets = load_presets()
    if args.action == "list":
        for name, spec in presets.items():
            print(f"{name}\t{len(spec['variants'])} runs\t{spec['description']}")
        return EXIT_OK
    if not args.name:
        raise ConfigError("presets run needs a preset name")
    variants = expand_preset(args.name, presets)
    if args.only:
        keep = set(args.only.split(","))
        ref = presets[args.name].get("reference")
        variants = [v for v in variants if v[0] in keep or v[0] == ref]
    root = Path(args.output or "runs") / args.name
    ref_name = presets[args.name].get("reference")
    configs = []
    for vname, raw in variants:
        if ref_name and vname != ref_name:
            raw = merge(raw, {"outputs": {"reference": str(root / ref_name)}})
        configs.append((vname, parse_config(raw)))
    rows, status = [], EXIT_OK
    for vname, cfg in configs:
        try:
            res = run_experiment(cfg, root / vname, threads=args.threads)
            summ = res.summary
            if res.unstable:
                status = EXIT_UNSTABLE
        except NumericalInstabilityError as err:
            log.error("%s: %s", vname, err)
            summ, status = {"name": cfg.name, "unstable": True}, EXIT_UNSTABLE
        rows.append({"variant": vname, **summ})
        log.info("%s done", vname)
    fields = ["variant", "scheme", "epsilon", "range_factor", "n_sweeps", "max_bond",
              "mid_count_above_epsilon", "contraction_seconds", "compression_error", "unstable"]
    with open(root / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    print((root / "table.csv").read_text(), end="")
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="workers for same-layer tree combinations (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    ap = argparse.ArgumentParser(prog="treeace", description=__doc__, parents=[common])
    ap.set_defaults(threads=1, verbose=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="compare two run directories")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("spectrum", parents=[common], help="singular values of a cached PT-MPO")
    p.add_argument("cache")
    p.add_argument("--bond", type=int, help="interior bond (default n/2)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("presets", parents=[common], help="list or run the desk-scale experiment grid")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("name", nargs="?")
    p.add_argument("-o", "--output", help="root directory (default runs/)")
    p.add_argument("--only", help="comma-separated variant names (reference always runs)")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalInstabilityError as err:
        print(f"numerical instability: {err}", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
