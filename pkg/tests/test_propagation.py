import numpy as np
import pytest

from treeace.contraction import CompressionPolicy, ContractionPlan, contract
from treeace.models import bosonic_mode
from treeace.oracle import dense_oracle
from treeace.propagation import (NumericalInstabilityError, SystemPropagator, Trajectory, closures,
                                 compression_error, propagate, read_trajectory_csv)
from treeace.ptmpo import DimensionMismatchError, PTMPO, identity_ptmpo, single_mode_ptmpo

from conftest import EXCITED_PROJ, GROUND, SIGMA_X


def n_e(traj):
    return traj.observables["n_e"].real


class TestFreeEvolution:
    def test_identity_pt_is_free_evolution(self):
        n, dt = 30, 0.1
        traj = propagate(identity_ptmpo(n, 2), SystemPropagator.from_hamiltonian(0.5 * SIGMA_X, dt, n),
                         GROUND, {"n_e": EXCITED_PROJ}, dt=dt)
        np.testing.assert_allclose(n_e(traj), np.sin(traj.times / 2) ** 2, atol=1e-12)

    def test_rabi_with_weak_mode(self):
        # g -> 0 leaves the Rabi oscillation sin^2(Omega t / 2) intact
        n, dt, omega = 300, 0.01, 1.3
        pt = single_mode_ptmpo(bosonic_mode(1.0, 0.0, 2, 4.0, dt), n)
        sys = SystemPropagator.from_hamiltonian(0.5 * omega * SIGMA_X, dt, n)
        traj = propagate(pt, sys, GROUND, {"n_e": EXCITED_PROJ}, dt=dt)
        np.testing.assert_allclose(n_e(traj), np.sin(omega * traj.times / 2) ** 2, atol=1e-4)

    def test_time_dependent_hamiltonian_sampled_at_midpoints(self):
        seen = []

        def h(t):
            seen.append(t)
            return 0.5 * SIGMA_X

        SystemPropagator.from_hamiltonian(h, 0.2, 2, half_step=False)
        assert seen[-2:] == pytest.approx([0.1, 0.3])


class TestLinearAlgebra:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup():
        n, dt = 15, 0.1
        modes = [bosonic_mode(w, g, 2, 4.0, dt) for w, g in ((0.6, 0.3), (1.4, 0.4))]
        pt = contract(modes, n, CompressionPolicy(1e-12), ContractionPlan())
        sys = SystemPropagator.from_hamiltonian(0.5 * SIGMA_X, dt, n)
        return pt, sys

    def test_linear_in_initial_state(self, setup):
        pt, sys = setup
        a = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
        b = np.array([[0.1, -0.3j], [0.3j, 0.9]], dtype=complex)
        lhs = propagate(pt, sys, 0.4 * a + 0.6 * b).states
        rhs = 0.4 * propagate(pt, sys, a).states + 0.6 * propagate(pt, sys, b).states
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)

    def test_trace_preserved(self, setup):
        pt, sys = setup
        traj = propagate(pt, sys, GROUND)
        assert np.max(traj.trace_deviation) < 1e-10
        assert traj.is_physical()

    def test_closures_of_single_mode_are_environment_trace(self):
        mode = bosonic_mode(0.8, 0.5, 3, 4.0, 0.1)
        pt = single_mode_ptmpo(mode, 3)
        close = closures(pt)
        np.testing.assert_allclose(close[1], np.eye(3).ravel(), atol=1e-12)
        assert close[3].shape == (1,)

    def test_step_mismatch(self, setup):
        pt, _ = setup
        with pytest.raises(DimensionMismatchError):
            propagate(pt, SystemPropagator.identity(2, pt.steps - 1), GROUND)

    def test_rho_shape_mismatch(self, setup):
        pt, sys = setup
        with pytest.raises(DimensionMismatchError):
            propagate(pt, sys, np.eye(3) / 3)

    def test_nan_raises_instability(self):
        bad = identity_ptmpo(3, 2)
        t = list(bad.tensors)
        t[1] = t[1] * np.nan
        with pytest.raises(NumericalInstabilityError) as err:
            propagate(PTMPO(tuple(t), 2), SystemPropagator.identity(2, 3), GROUND)
        # the read-out closures see the bad tensor from the first step on
        assert err.value.step == 1


class TestHalfStep:
    def test_half_step_is_second_order(self):
        # against the exact joint evolution the symmetric split gains one order
        t_end = 2.0

        def err(dt, half):
            m = bosonic_mode(0.9, 0.5, 3, 4.0, dt)
            n = int(round(t_end / dt))
            sys = SystemPropagator.from_hamiltonian(0.5 * SIGMA_X, dt, n, half_step=half)
            got = propagate(single_mode_ptmpo(m, n), sys, GROUND).states
            ref = dense_oracle([m], 0.5 * SIGMA_X, GROUND, n, dt, splitting="exact").states
            return np.abs(got - ref).max()

        assert err(0.1, True) / err(0.05, True) == pytest.approx(4.0, rel=0.1)
        assert err(0.1, False) / err(0.05, False) == pytest.approx(2.0, rel=0.1)


class TestOutputs:
    def test_csv_round_trip(self, tmp_path):
        times = np.array([0.0, 0.1])
        states = np.array([GROUND, EXCITED_PROJ])
        traj = Trajectory(times, states, {"n_e": np.array([0.0, 1.0 + 1e-17j])})
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        t, series = read_trajectory_csv(path)
        np.testing.assert_array_equal(t, times)
        np.testing.assert_allclose(series["n_e"], traj.observables["n_e"], atol=0)
        header = path.read_text().splitlines()[0].split(",")
        assert header == ["t", "Re_n_e", "Im_n_e", "trace_dev"]

    def test_population_violation(self):
        states = np.array([GROUND, np.diag([1.1, -0.1])])
        traj = Trajectory([0, 1], states)
        assert traj.population_violation() == pytest.approx(0.1)
        assert not traj.is_physical()

    def test_compression_error_and_grid_check(self):
        a = Trajectory([0, 1], np.array([GROUND] * 2), {"n_e": np.array([0.0, 0.5])})
        b = Trajectory([0, 1], np.array([GROUND] * 2), {"n_e": np.array([0.0, 0.2])})
        assert compression_error(a, b) == pytest.approx(0.3)
        c = Trajectory([0, 2], np.array([GROUND] * 2), {"n_e": np.array([0.0, 0.2])})
        with pytest.raises(ValueError):
            compression_error(a, c)

    def test_error_series_shrinks_with_threshold(self):
        n, dt = 20, 0.1
        modes = [bosonic_mode(w, 0.35, 2, 4.0, dt) for w in (0.4, 0.9, 1.5, 2.2)]
        sys = SystemPropagator.from_hamiltonian(0.5 * SIGMA_X, dt, n)
        ref = propagate(contract(modes, n, CompressionPolicy(1e-13), ContractionPlan()), sys, GROUND,
                        {"n_e": EXCITED_PROJ})
        errs = []
        for eps in (1e-3, 1e-5, 1e-7):
            pt = contract(modes, n, CompressionPolicy(eps), ContractionPlan())
            errs.append(compression_error(propagate(pt, sys, GROUND, {"n_e": EXCITED_PROJ}), ref))
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[2] < 1e-4
