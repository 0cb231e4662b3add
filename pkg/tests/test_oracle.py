import numpy as np
import pytest

from mfgmp.core.model import ModelValidationError
from mfgmp.core.models import build_rate_matrix, exchange_model, exchange_rate_matrix, lq_model, zero_model
from mfgmp.core.oracle import (
    CHUNK_SIZE,
    FrozenControls,
    OracleError,
    RateMatrixCoupling,
    RateMatrixError,
    fd_check_gradp,
    integrate_characteristics,
    monte_carlo_rate_study,
    particle_simulate,
    scalar_reduction_check,
    transport_check,
)
from mfgmp.work_managers import ThreadsWorkManager


@pytest.fixture
def exchange_rates():
    return RateMatrixCoupling(build_rate_matrix(exchange_model()))


@pytest.fixture
def still():
    return FrozenControls([0.0], [0.0, 0.0], [0.0])


class TestRateMatrix:
    def test_frozen_exchange(self, exchange_rates, still):
        Q0, A = exchange_rates.frozen([1.0, 0.0], still.y, still.U, still.alpha)
        assert np.array_equal(Q0, [[-1.0, 1.0], [1.0, -1.0]])
        assert np.allclose(A(np.array([0.25, 0.75]), None, None, None), [0.5, -0.5])

    @pytest.mark.parametrize(
        'Q',
        [
            np.array([[-1.0, 1.0], [-0.5, 0.5]]),
            np.array([[-1.0, 0.5], [1.0, -1.0]]),
            np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]]),
            np.array([[np.nan, 1.0], [1.0, -1.0]]),
        ],
    )
    def test_bad_rates(self, Q, still):
        rc = RateMatrixCoupling(lambda x, y, U, alpha: Q)
        with pytest.raises(RateMatrixError):
            rc.frozen([1.0, 0.0], still.y, still.U, still.alpha)

    def test_bad_initial_histogram(self, exchange_rates, still):
        with pytest.raises(RateMatrixError):
            particle_simulate(exchange_rates, [0.0, 0.0], still, 100, 1.0, seed=0)


class TestParticles:
    def test_two_state_exchange(self, exchange_rates, still):
        traj, ode, z = transport_check(exchange_rates, [1.0, 0.0], still, 20000, 1.0, seed=3)
        exact = 0.5 * (1.0 + np.exp(-2.0 * traj.times))
        assert np.allclose(ode[:, 0], exact, atol=1e-10)
        assert np.array_equal(traj.histogram[0], [1.0, 0.0])
        assert z < 4.5

    def test_mass_scaling(self, exchange_rates, still):
        traj = particle_simulate(exchange_rates, [2.0, 1.0], still, 1000, 0.5, seed=1)
        assert np.allclose(traj.histogram.sum(axis=1), 3.0)

    def test_seeded_runs_repeat(self, exchange_rates, still):
        a = particle_simulate(exchange_rates, [1.0, 0.0], still, 5000, 1.0, seed=42)
        b = particle_simulate(exchange_rates, [1.0, 0.0], still, 5000, 1.0, seed=42)
        c = particle_simulate(exchange_rates, [1.0, 0.0], still, 5000, 1.0, seed=43)
        assert np.array_equal(a.histogram, b.histogram)
        assert not np.array_equal(a.histogram, c.histogram)

    def test_worker_count_independent(self, exchange_rates, still):
        N = 2 * CHUNK_SIZE + 500
        serial = particle_simulate(exchange_rates, [1.0, 0.0], still, N, 1.0, seed=7)
        with ThreadsWorkManager(3) as wm:
            threaded = particle_simulate(exchange_rates, [1.0, 0.0], still, N, 1.0, seed=7, work_manager=wm)
        assert np.array_equal(serial.histogram, threaded.histogram)

    def test_rate_study_slope(self, exchange_rates, still):
        result = monte_carlo_rate_study(exchange_rates, [1.0, 0.0], still, [100, 400, 1600, 6400], 1.0, seed=5)
        assert -0.8 < result.slope < -0.2


class TestCharacteristics:
    def test_mass_conserved(self):
        rc = RateMatrixCoupling(exchange_rate_matrix(0.5, 0.5))
        controls = FrozenControls([0.3], [0.2, -0.1], [0.4])
        times = np.linspace(0.0, 5.0, 11)
        x = integrate_characteristics(rc.coupling(), [0.3, 0.7], times, controls)
        assert np.allclose(x.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        assert np.all(x > 0)


class TestGradientCheck:
    @pytest.mark.parametrize('spec', [lq_model(), lq_model(c=0.9), zero_model()])
    def test_gradients_agree(self, spec):
        assert fd_check_gradp(spec) < 1e-6

    def test_missing_gradient(self):
        with pytest.raises(ModelValidationError):
            fd_check_gradp(zero_model().replace(gradpF=None))


class TestScalarReductions:
    def test_crowd_ode(self):
        assert scalar_reduction_check('CROWD_ODE', {'lam': 10.0, 'B': 1.0}) < 5e-3

    def test_crowd_ode_trivial(self):
        assert scalar_reduction_check('CROWD_ODE', {'lam': 0.0, 'B': 0.0, 'T': 0.1, 'dt': 0.01}) == 0.0

    def test_crowd_ode_undiscounted(self):
        assert scalar_reduction_check('CROWD_ODE', {'lam': 0.0, 'B': 1.0, 'T': 0.1, 'dt': 0.01}) < 1e-12

    def test_crowd_ode_from_model(self):
        spec = zero_model(lam=5.0).replace(B=lambda x, y, U, alpha: np.full(np.shape(U), 2.0))
        assert scalar_reduction_check('CROWD_ODE', {'spec': spec}) < 5e-3

    def test_coupled_model_refused(self):
        with pytest.raises(OracleError):
            scalar_reduction_check('CROWD_ODE', {'spec': lq_model()})

    def test_penalty_relaxation(self):
        assert scalar_reduction_check('PENALTY_RELAXATION', {'epsilon': 0.1, 'gap': 1.0}) < 5e-3

    @pytest.mark.parametrize(
        'case,params',
        [
            ('CROWD_ODE', {'lam': 10.0, 'B': 1.0, 'T': 1.0}),
            ('PENALTY_RELAXATION', {'epsilon': 0.1, 'gap': 1.0, 'T': 1.0}),
        ],
    )
    def test_error_first_order_in_dt(self, case, params):
        coarse = scalar_reduction_check(case, dict(params, dt=1e-3))
        fine = scalar_reduction_check(case, dict(params, dt=5e-4))
        assert 0.4 < fine / coarse < 0.6

    def test_penalty_relaxation_needs_gap(self):
        with pytest.raises(OracleError):
            scalar_reduction_check('PENALTY_RELAXATION', {'gap': 0.0})

    def test_unknown_case(self):
        with pytest.raises(OracleError):
            scalar_reduction_check('HEAT')
