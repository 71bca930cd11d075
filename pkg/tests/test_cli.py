import json

import numpy as np
import pytest
import yaml

from treeace.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNSTABLE, expand_preset, load_presets, main
from treeace.config import ConfigError, parse_config
from treeace import runner
from treeace.runner import run_experiment
from treeace.tensor_core import NonFiniteError

SMALL = {
    "schema_version": 1,
    "name": "small",
    "model": {"kind": "spin_boson", "n_modes": 3, "mode_dim": 2},
    "grid": {"dt": 0.1, "t_end": 1.5},
    "policy": {"epsilon": 1e-9},
}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


class TestConfig:
    def test_defaults_and_steps(self):
        cfg = parse_config(SMALL)
        assert cfg.grid.steps == 15
        assert cfg.plan.scheme == "tree"

    def test_unknown_key_rejected_with_path(self):
        bad = dict(SMALL, policy={"epsilon": 1e-9, "epsilson_max": 1})
        with pytest.raises(ConfigError, match="policy.epsilson_max"):
            parse_config(bad)

    def test_inconsistent_step_count(self):
        with pytest.raises(ConfigError, match="grid"):
            parse_config(dict(SMALL, grid={"dt": 0.1, "t_end": 1.5, "n": 14}))

    def test_non_multiple_end_time(self):
        with pytest.raises(ConfigError):
            parse_config(dict(SMALL, grid={"dt": 0.1, "t_end": 1.55}))

    def test_schema_version_checked(self):
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config(dict(SMALL, schema_version=2))

    def test_missing_section(self):
        data = {k: v for k, v in SMALL.items() if k != "policy"}
        with pytest.raises(ConfigError, match="policy"):
            parse_config(data)


class TestRun:
    def test_artifacts(self, tmp_path):
        res = run_experiment(parse_config(dict(SMALL, outputs={"cache_ptmpo": True})), tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert {"trajectory.csv", "spectrum.csv", "timing.json", "summary.json", "ptmpo.bin",
                "config.yaml"} <= names
        timing = json.loads((tmp_path / "timing.json").read_text())
        assert len(timing["combinations"]) == 2
        assert res.summary["max_bond"] == res.pt.max_bond
        assert (tmp_path / "spectrum.csv").read_text().startswith("bond,index,sigma\n7,0,1\n")

    def test_zero_coupling_is_constant(self, tmp_path):
        data = dict(SMALL, model={"kind": "spin_boson", "n_modes": 3, "mode_dim": 2,
                                  "coupling_scale": 0.0},
                    propagation={"sx_coefficient": 0.0})
        for scheme in ("sequential", "sequential_preselect", "tree"):
            res = run_experiment(parse_config(dict(data, plan={"scheme": scheme})), tmp_path / scheme)
            assert res.summary["max_bond"] == 1
            np.testing.assert_allclose(res.trajectory.observables["n_e"], 0.0, atol=1e-14)

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        cfg = parse_config(dict(SMALL, plan={"ordering": "random", "seed": 3}))
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        for name in ("trajectory.csv", "spectrum.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_fermionic_defaults_to_no_drive(self, tmp_path):
        data = {"model": {"kind": "fermionic", "n_modes": 4, "omega_min": -2.0, "omega_max": 2.0},
                "grid": {"dt": 0.1, "t_end": 1.0}, "policy": {"epsilon": 1e-10}}
        res = run_experiment(parse_config(data), tmp_path)
        n_e = res.trajectory.observables["n_e"].real
        assert n_e[0] == 0.0 and np.all(np.diff(n_e) > 0)


class TestCommands:
    def test_run_and_compare_self(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(SMALL, outputs={"cache_ptmpo": True}))
        assert main(["run", str(cfg), "-o", str(tmp_path / "a")]) == EXIT_OK
        capsys.readouterr()
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "a")]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["compression_error"] == 0.0
        assert report["chi_ratio"] == 1.0 and report["time_ratio"] == 1.0
        assert abs(report["tensor_distance"]) < 1e-10

    def test_distance_ordering_across_thresholds(self, tmp_path, capsys):
        runs = {}
        for eps in (1e-3, 1e-6, 1e-9):
            data = dict(SMALL, policy={"epsilon": eps}, outputs={"cache_ptmpo": True})
            run_experiment(parse_config(data), tmp_path / str(eps))
            runs[eps] = tmp_path / str(eps)
        dist = {}
        for eps in (1e-3, 1e-6):
            main(["compare", str(runs[eps]), str(runs[1e-9])])
            dist[eps] = json.loads(capsys.readouterr().out)["tensor_distance"]
        assert dist[1e-3] > dist[1e-6]
        assert dist[1e-3] > 0

    def test_compare_rejects_other_grid(self, tmp_path):
        run_experiment(parse_config(SMALL), tmp_path / "a")
        run_experiment(parse_config(dict(SMALL, grid={"dt": 0.1, "t_end": 1.0})), tmp_path / "b")
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == EXIT_CONFIG

    def test_spectrum_command(self, tmp_path, capsys):
        run_experiment(parse_config(dict(SMALL, outputs={"cache_ptmpo": True})), tmp_path)
        assert main(["spectrum", str(tmp_path / "ptmpo.bin"), "--bond", "3"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "bond,index,sigma"
        assert lines[1] == "3,0,1"

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(SMALL, typo=1))
        assert main(["run", str(cfg)]) == EXIT_CONFIG
        assert "typo" in capsys.readouterr().err

    def test_occupation_above_one_is_instability(self, tmp_path, monkeypatch):
        real = runner.propagate

        def overshoot(*args, **kwargs):
            traj = real(*args, **kwargs)
            traj.states[-1] = np.diag([-1e-3, 1.0 + 1e-3])
            return traj

        monkeypatch.setattr(runner, "propagate", overshoot)
        cfg = write_config(tmp_path, SMALL)
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == EXIT_UNSTABLE
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["unstable"] and summary["population_violation"] == pytest.approx(1e-3)

    def test_non_finite_contraction_is_instability(self, tmp_path, monkeypatch):
        def blow_up(*args, **kwargs):
            raise NonFiniteError("matrix contains non-finite entries")

        monkeypatch.setattr(runner, "contract", blow_up)
        cfg = write_config(tmp_path, SMALL)
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == EXIT_UNSTABLE

    def test_threads_flag_after_subcommand(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        assert main(["run", str(cfg), "--threads", "2", "-o", str(tmp_path / "t2")]) == EXIT_OK
        assert main(["--threads", "1", "run", str(cfg), "-o", str(tmp_path / "t1")]) == EXIT_OK
        a = (tmp_path / "t1" / "trajectory.csv").read_bytes()
        assert a == (tmp_path / "t2" / "trajectory.csv").read_bytes()


class TestPresets:
    def test_every_preset_validates(self):
        presets = load_presets()
        assert {"schemes-desk", "small-dt-desk", "fermionic-desk", "spectra-desk", "range-factor-desk",
                "sweeps-desk", "ordering-desk", "distance-desk"} <= set(presets)
        for name in presets:
            for _, raw in expand_preset(name, presets):
                parse_config(raw)

    def test_scheme_grid_covers_schemes(self):
        schemes = {(raw["plan"]["scheme"], raw["policy"].get("range_factor", 1))
                   for _, raw in expand_preset("schemes-desk")}
        assert {("sequential", 1), ("sequential_preselect", 1), ("tree", 1), ("tree", 100)} <= schemes

    def test_reference_first(self):
        assert expand_preset("range-factor-desk")[0][0] == "reference"

    def test_list_and_smoke_run(self, tmp_path, capsys):
        assert main(["presets", "list"]) == EXIT_OK
        assert "schemes-desk" in capsys.readouterr().out
        assert main(["presets", "run", "smoke", "-o", str(tmp_path)]) == EXIT_OK
        table = (tmp_path / "smoke" / "table.csv").read_text().splitlines()
        assert len(table) == 3

    def test_unknown_preset(self):
        assert main(["presets", "run", "nope"]) == EXIT_CONFIG
