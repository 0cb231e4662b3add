import numpy as np
import pytest

from mfgmp.core.evolution import initial_state, solve_system
from mfgmp.core.fixedpoint import compute_beta_star
from mfgmp.core.grid import GridSpec, implicit_diffusion, laplacian_y
from mfgmp.core.model import StoppingSpec
from mfgmp.core.models import canonical_stopping, inactive_stopping, lq_model, zero_model
from mfgmp.core.options import SolverOptions
from mfgmp.core.stopping import (
    CompatibilityWarning,
    complementarity_residual,
    phi_operator_residual,
    solve_obstacle,
    solve_penalized,
    step_penalized,
    ubar_compatibility,
)
from mfgmp.core.textio import CSVReportWriter, read_header


@pytest.fixture
def active_spec():
    # a positive drive pushes phi above the canonical stopping cost
    return lq_model(drive=2.0)


class TestComplementarityResidual:
    def test_interior_equation_holds(self):
        report = complementarity_residual(np.array([0.0]), np.array([1.0]), np.array([0.0]))
        assert report.complementarity_residual.tolist() == [0.0]
        assert not report.contact_set[0]

    def test_contact_with_negative_operator(self):
        report = complementarity_residual(np.array([1.0]), np.array([1.0]), np.array([-0.3]))
        assert report.complementarity_residual.tolist() == [0.0]
        assert report.contact_set[0]

    def test_obstacle_violation_flagged(self):
        report = complementarity_residual(np.array([0.0, 1.2]), np.array([0.0, 1.0]), np.zeros(2))
        assert report.complementarity_residual[1] >= 0.2 - 1e-15
        assert report.max_violation == pytest.approx(0.2)
        assert report.obstacle_violation == pytest.approx(0.2)

    def test_region_boundary(self):
        phi = np.zeros((4, 4))
        psi = np.ones((4, 4))
        psi[:2] = 0.0
        report = complementarity_residual(phi, psi, np.zeros((4, 4)))
        assert report.contact_fraction == 0.5
        assert sorted(report.region_boundary_nodes.tolist()) == [4, 5, 6, 7]

    def test_off_contact_excludes_neighbours(self):
        phi = np.zeros(6)
        psi = np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0])
        pde = np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0])
        report = complementarity_residual(phi, psi, pde)
        assert report.max_violation == 0.5
        assert report.off_contact_violation == 0.0


class TestPenalized:
    def test_inactive_obstacle_matches_system(self, lq_spec, small_grid):
        stop = inactive_stopping(2, 1, 0.1)
        system = solve_system(lq_spec, small_grid)[-1]
        snapshots, diagnostics = solve_penalized(lq_spec, small_grid, stop)
        assert np.max(np.abs(snapshots[-1].phi.data - system.phi.data)) <= 1e-12
        assert np.max(np.abs(snapshots[-1].U.data - system.U.data)) <= 1e-12
        assert np.all(snapshots[-1].controls.beta == 0)
        assert max(diagnostics.excess) == 0.0

    def test_beta_bounds(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.05)
        snapshots, _ = solve_penalized(active_spec, small_grid, stop, SolverOptions(snapshot_every=1))
        for state in snapshots:
            beta = state.controls.beta
            assert np.all((beta == 0) | (beta == 1.0 / 0.05))
        assert np.any(snapshots[-1].controls.beta > 0)

    def test_tie_band_negligible(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.05)
        options = SolverOptions(snapshot_every=1)
        psi = stop.psi(*small_grid.nodes())
        snapshots, _ = solve_penalized(active_spec, small_grid, stop, options)
        for state in snapshots:
            gap = state.phi.data - psi
            band = np.abs(gap) <= options.tie_tol
            assert band.mean() < 0.01
            beta = compute_beta_star(state.phi, psi, stop.epsilon, options.tie_tol)
            assert np.all(beta[band] == 0)
            assert np.all(beta[gap > options.tie_tol] == 1.0 / stop.epsilon)
            assert np.all(beta[gap < -options.tie_tol] == 0)

    def test_relaxation_toward_obstacle(self):
        from mfgmp.core.oracle import scalar_reduction_check

        assert scalar_reduction_check('PENALTY_RELAXATION', {'epsilon': 0.1, 'T': 1.0, 'dt': 1e-3}) < 5e-3

    def test_penalty_reduces_excess(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1)
        free = solve_system(active_spec, small_grid)[-1]
        _, loose = solve_penalized(active_spec, small_grid, stop)
        _, tight = solve_penalized(active_spec, small_grid, stop.with_epsilon(0.001))
        psi = stop.psi(*small_grid.nodes())
        free_excess = float(np.max(np.maximum(free.phi.data - psi, 0)))
        assert tight.excess[-1] < loose.excess[-1] < free_excess

    def test_step_penalized(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1)
        state = step_penalized(initial_state(active_spec, small_grid), active_spec, small_grid, stop)
        assert state.step == 1
        assert state.controls.beta is not None


class TestObstacle:
    def test_projection_is_exact(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1)
        psi = stop.psi(*small_grid.nodes())
        Ubar = np.moveaxis(stop.Ubar(*small_grid.nodes()), -1, 0)
        snapshots, report = solve_obstacle(active_spec, small_grid, stop, SolverOptions(snapshot_every=1))
        for state in snapshots:
            assert np.max(state.phi.data - psi) <= 1e-12
            contact = state.contact
            assert np.array_equal(state.U.data[:, contact], Ubar[:, contact])
        assert report.obstacle_violation <= 1e-12
        assert report.contact_fraction > 0
        assert report.off_contact_violation <= 10.0 * SolverOptions().scheme_tol

    def test_inactive_obstacle(self, lq_spec, small_grid):
        stop = inactive_stopping(2, 1, 0.1)
        system = solve_system(lq_spec, small_grid)[-1]
        snapshots, report = solve_obstacle(lq_spec, small_grid, stop)
        assert np.array_equal(snapshots[-1].phi.data, system.phi.data)
        assert not np.any(report.contact_set)

    def test_full_contact(self, active_spec, small_grid):
        # psi equal to phi0 and an unconstrained step that rises everywhere
        def psi(x, y):
            return active_spec.phi0(x, y)

        def Ubar(x, y):
            return np.full(np.shape(x), 0.25)

        spec = active_spec.replace(
            F=lambda x, y, U, p, alpha: np.full(np.shape(x)[:-1], -5.0),
            gradpF=lambda x, y, U, p, alpha: np.zeros(np.shape(p)),
        )
        stop = StoppingSpec(psi, Ubar, 0.1)
        snapshots, report = solve_obstacle(spec, small_grid, stop, SolverOptions(snapshot_every=1))
        # phi0 sits on psi, so the initial data is already in contact
        assert np.all(snapshots[0].contact)
        assert np.all(snapshots[0].U.data == 0.25)
        assert np.all(snapshots[1].contact)
        assert np.all(snapshots[1].U.data == 0.25)
        assert report.contact_fraction == 1.0

    def test_cross_check(self, active_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1)
        _, report = solve_obstacle(active_spec, small_grid, stop, cross_check_epsilon=1e-4)
        assert report.penalized_gap is not None
        assert report.penalized_gap < 0.05
        assert report.mixed_strategy_suspect in (True, False)

    def test_report_csv(self, active_spec, small_grid, tmp_path):
        stop = canonical_stopping(2, 1, 0.1)
        _, report = solve_obstacle(active_spec, small_grid, stop)
        filename = str(tmp_path / 'obstacle_report.csv')
        with CSVReportWriter(filename) as writer:
            report.write_csv(writer, small_grid)
        with open(filename) as f:
            header, body = read_header(f.read().splitlines())
        assert float(header['t']) == pytest.approx(small_grid.T)
        assert body[0] == 'node,x1,x2,y1,contact,residual'
        assert len([line for line in body if not line.startswith('#')]) == small_grid.n_nodes + 1
        assert body[-1].startswith('# max_violation:')


class TestUbarCompatibility:
    def test_incompatible_cost_warns(self, lq_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1, ubar=5.0)
        with pytest.warns(CompatibilityWarning):
            residual = ubar_compatibility(lq_spec, small_grid, stop)
        assert residual > 1.0

    def test_compatible_cost(self, zero_spec, small_grid):
        stop = canonical_stopping(2, 1, 0.1, ubar=0.0)
        assert ubar_compatibility(zero_spec, small_grid, stop) == 0.0


class TestPhiOperatorResidual:
    @pytest.fixture
    def plane_grid(self):
        return GridSpec([0.0], [1.0], [1], [-1.0, -1.0], [1.0, 1.0], [5, 7], 0.5, 0.1, k=1, d=2)

    @pytest.fixture
    def plane_spec(self):
        return zero_model(k=1, d=2, nu=0.3, rho=0.7)

    def test_vanishes_on_split_step(self, plane_grid, plane_spec):
        phi_explicit = np.random.default_rng(7).standard_normal(plane_grid.shape)
        phi_new = implicit_diffusion(phi_explicit, plane_grid, plane_spec.nu, plane_spec.rho)
        residual = phi_operator_residual(plane_spec, plane_grid, phi_new, phi_explicit)
        assert np.max(np.abs(residual)) < 1e-10

    def test_unsplit_operator_differs(self, plane_grid, plane_spec):
        # the product of the per-axis factors carries a dt^2 cross term
        dt = plane_grid.dt
        phi_explicit = np.random.default_rng(7).standard_normal(plane_grid.shape)
        phi_new = implicit_diffusion(phi_explicit, plane_grid, plane_spec.nu, plane_spec.rho)
        unsplit = ((1.0 + plane_spec.rho * dt) * phi_new - dt * plane_spec.nu * laplacian_y(phi_new, plane_grid) - phi_explicit) / dt
        assert np.max(np.abs(unsplit)) > 1e-3

    def test_vanishes_on_explicit_step(self, plane_grid, plane_spec):
        phi_explicit = np.random.default_rng(11).standard_normal(plane_grid.shape)
        phi_new = implicit_diffusion(phi_explicit, plane_grid, plane_spec.nu, plane_spec.rho, explicit=True)
        residual = phi_operator_residual(plane_spec, plane_grid, phi_new, phi_explicit, explicit=True)
        assert np.max(np.abs(residual)) < 1e-10

    def test_inactive_obstacle_run_on_plane(self, plane_grid, plane_spec):
        spec = plane_spec.replace(phi0=lambda x, y: np.cos(np.pi * y[..., 0]) * np.cos(np.pi * y[..., 1]))
        _snapshots, report = solve_obstacle(spec, plane_grid, inactive_stopping(1, 2, 0.1))
        assert report.contact_fraction == 0.0
        assert report.max_violation < 1e-9
