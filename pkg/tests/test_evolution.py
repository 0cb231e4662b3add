import numpy as np
import pytest

from mfgmp.core.evolution import initial_state, myopic_model, solve_myopic, solve_system, step_system
from mfgmp.core.grid import CFLError, GridSpec
from mfgmp.core.model import ModelEvaluationError
from mfgmp.core.models import lq_model, multiplicative_model, zero_model
from mfgmp.core.options import SolverOptions


def outflow_coupling(x, y, U, alpha):
    # points out of the histogram box on every face
    return x - 0.5


def trapezoid_weights(n):
    w = np.ones(n)
    w[[0, -1]] = 0.5
    return w / w.sum()


class TestZeroModel:
    def test_fields_stay_zero(self, zero_spec, small_grid):
        snapshots = solve_system(zero_spec, small_grid, SolverOptions(snapshot_every=1))
        assert len(snapshots) == small_grid.n_steps + 1
        for state in snapshots:
            assert np.all(state.phi.data == 0)
            assert np.all(state.U.data == 0)
            assert np.all(state.controls.alpha == 0)
        diagnostics = snapshots[-1].diagnostics
        assert not diagnostics.blowup_tripped
        assert diagnostics.effective_horizon == pytest.approx(small_grid.T)
        assert diagnostics.fp_failures == 0


class TestSystemSolve:
    def test_snapshot_cadence(self, lq_spec, small_grid):
        snapshots = solve_system(lq_spec, small_grid, SolverOptions(snapshot_every=3))
        assert [s.step for s in snapshots] == [0, 3, 6, 9, 10]
        assert snapshots[-1].t == pytest.approx(0.1)

    def test_snapshots_not_aliased(self, lq_spec, small_grid):
        snapshots = solve_system(lq_spec, small_grid, SolverOptions(snapshot_every=1))
        first = snapshots[0].phi.data.copy()
        assert np.array_equal(snapshots[0].phi.data, first)
        assert not np.shares_memory(snapshots[0].phi.data, snapshots[1].phi.data)
        assert not np.array_equal(snapshots[0].phi.data, snapshots[-1].phi.data)

    def test_step_system_matches_solve(self, lq_spec, small_grid):
        snapshots = solve_system(lq_spec, small_grid, SolverOptions(snapshot_every=1))
        state = step_system(initial_state(lq_spec, small_grid), lq_spec, small_grid)
        assert state.step == 1
        assert np.array_equal(state.phi.data, snapshots[1].phi.data)
        assert np.array_equal(state.U.data, snapshots[1].U.data)

    def test_fixed_point_residuals(self, lq_spec, small_grid):
        diagnostics = solve_system(lq_spec, small_grid)[-1].diagnostics
        assert len(diagnostics.step_residuals) == small_grid.n_steps + 1
        assert max(diagnostics.step_residuals) <= 1e-10

    def test_deterministic(self, lq_spec, small_grid):
        a = solve_system(lq_spec, small_grid)[-1]
        b = solve_system(lq_spec, small_grid)[-1]
        assert np.array_equal(a.phi.data, b.phi.data)
        assert np.array_equal(a.U.data, b.U.data)

    def test_inner_iterations(self, lq_spec, small_grid):
        plain = solve_system(lq_spec, small_grid)[-1]
        inner = solve_system(lq_spec, small_grid, SolverOptions(inner_iterations=2))[-1]
        assert np.all(np.isfinite(inner.phi.data))
        assert np.max(np.abs(inner.phi.data - plain.phi.data)) < 0.05

    def test_cfl_refused(self, lq_spec, small_grid):
        with pytest.raises(CFLError):
            solve_system(lq_spec, small_grid.replace(dt=0.1))


class TestHeatLimit:
    def test_relaxes_to_average(self):
        def phi0(x, y):
            return np.cos(np.pi * y[..., 0]) + 0.0 * x[..., 0]

        spec = zero_model(k=1, d=1, nu=1.0).replace(phi0=phi0)
        grid = GridSpec([0.0], [1.0], [1], [-1.0], [1.0], [21], T=2.0, dt=0.01, k=1, d=1)
        snapshots = solve_system(spec, grid)
        initial = snapshots[0].phi.data[0]
        final = snapshots[-1].phi.data[0]
        average = initial @ trapezoid_weights(21)
        assert final @ trapezoid_weights(21) == pytest.approx(average, abs=1e-12)
        assert np.max(np.abs(final - average)) < 1e-6


class TestSignConvention:
    def test_crowd_source_and_discount(self):
        # dU/dt + lambda U = B
        spec = zero_model(k=1, d=1, nu=1.0, lam=10.0).replace(B=lambda x, y, U, alpha: np.ones(np.shape(U)))
        grid = GridSpec([0.0], [1.0], [2], [-1.0], [1.0], [3], T=0.5, dt=1e-3, k=1, d=1)
        final = solve_system(spec, grid)[-1]
        assert np.allclose(final.U.data, (1.0 - np.exp(-5.0)) / 10.0, atol=1e-3)

    def test_major_hamiltonian(self):
        # d_t phi = -F
        spec = zero_model(k=1, d=1, nu=1.0).replace(F=lambda x, y, U, p, alpha: np.full(np.shape(x)[:-1], -2.0))
        grid = GridSpec([0.0], [1.0], [2], [-1.0], [1.0], [3], T=0.1, dt=0.01, k=1, d=1)
        final = solve_system(spec, grid)[-1]
        assert np.allclose(final.phi.data, 0.2)


class TestBlowupGuard:
    def test_guard_freezes_run(self):
        spec = zero_model(k=1, d=1).replace(F=lambda x, y, U, p, alpha: -np.ones(np.shape(x)[:-1]))
        grid = GridSpec([0.0], [1.0], [2], [-1.0], [1.0], [3], T=0.1, dt=0.01, k=1, d=1)
        snapshots = solve_system(spec, grid, SolverOptions(blowup_bound=0.055, snapshot_every=1))
        diagnostics = snapshots[-1].diagnostics
        assert diagnostics.blowup_tripped
        assert diagnostics.effective_horizon == pytest.approx(0.05)
        assert diagnostics.effective_horizon < grid.T
        assert snapshots[-1].step == 5
        assert snapshots[-1].phi.sup_norm() <= 0.055


class TestEvaluationErrors:
    def test_partial_diagnostics_attached(self):
        def B(x, y, U, alpha):
            return np.where(U > 0.015, np.nan, 1.0)

        spec = zero_model(k=2, d=1).replace(B=B)
        grid = GridSpec([0.0, 0.0], [1.0, 1.0], [2, 2], [-1.0], [1.0], [3], T=0.1, dt=0.01)
        with pytest.raises(ModelEvaluationError) as excinfo:
            solve_system(spec, grid)
        assert excinfo.value.handle == 'B'
        assert excinfo.value.diagnostics.times == pytest.approx([0.0, 0.01, 0.02])


class TestMyopic:
    def test_crowd_frozen_at_zero(self, lq_spec, small_grid):
        snapshots = solve_myopic(lq_spec, small_grid)
        for state in snapshots:
            assert np.all(state.U.data == 0)

    def test_matches_sourceless_system(self, small_grid):
        myopic = solve_myopic(lq_model(), small_grid)[-1]
        sourceless = solve_system(lq_model(gamma=0.0, eta=0.0), small_grid)[-1]
        assert np.all(sourceless.U.data == 0)
        assert np.array_equal(myopic.phi.data, sourceless.phi.data)

    def test_myopic_model(self, lq_spec):
        model = myopic_model(lq_spec)
        x = np.array([[0.3, 0.7]])
        y = np.array([[0.5]])
        assert np.all(model.U0(x, y) == 0)
        assert np.all(model.B(x, y, np.ones((1, 2)), np.zeros((1, 1))) == 0)


class TestStructuredTransport:
    def test_inhibited_crowd_follows_drift(self, small_grid):
        zero = zero_model()
        spec = multiplicative_model(v0=1.0).replace(F=zero.F, gradpF=zero.gradpF, phi0=zero.phi0)
        v0 = 1.0

        def V(x, y, U, alpha):
            return v0 * np.stack([-x[..., 0], x[..., 0]], axis=-1)

        inhibited = solve_system(spec, small_grid, SolverOptions(snapshot_every=1))
        drift_only = solve_system(spec.replace(A=V), small_grid, SolverOptions(snapshot_every=1))
        assert np.all(inhibited[-1].controls.alpha == 0)
        for a, b in zip(inhibited, drift_only):
            assert np.max(np.abs(a.U.data - b.U.data)) <= 1e-12
        assert np.max(np.abs(inhibited[-1].U.data)) > 0


class TestComparison:
    def test_ordered_data_stay_ordered(self, small_grid):
        def U0_low(x, y):
            return np.stack([np.sin(3.0 * x[..., 0]) * np.cos(2.0 * y[..., 0]), x[..., 1] * y[..., 0]], axis=-1)

        def U0_high(x, y):
            return U0_low(x, y) + 0.1 * (1.0 + x[..., 1:] * y**2)

        base = zero_model(nu=0.2, lam=0.5).replace(A=outflow_coupling)
        low = solve_system(base.replace(U0=U0_low), small_grid, SolverOptions(snapshot_every=1))
        high = solve_system(base.replace(U0=U0_high), small_grid, SolverOptions(snapshot_every=1))
        for a, b in zip(low, high):
            assert np.min(b.U.data - a.U.data) >= -1e-14
