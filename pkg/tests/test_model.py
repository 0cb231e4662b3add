import numpy as np
import pytest

from mfgmp.core.model import (
    CouplingConfigurationError,
    ModelEvaluationError,
    ModelValidationError,
    StructuredCrowdDynamics,
    build_coupling,
    check_finite,
    eval_gradpF,
    fd_gradp,
    validate_model,
)
from mfgmp.core.models import (
    MODELS,
    UnknownParameterError,
    build_model,
    build_stopping,
    exchange_model,
    gated_model,
    lq_model,
    multiplicative_model,
)
from mfgmp.core.oracle import fd_check_gradp


class TestModelSpec:
    def test_replace(self, lq_spec):
        other = lq_spec.replace(lam=10.0)
        assert other.lam == 10.0
        assert lq_spec.lam == 1.0
        assert other.F is lq_spec.F

    def test_replace_unknown_field(self, lq_spec):
        with pytest.raises(TypeError):
            lq_spec.replace(kappa=1.0)

    def test_unknown_builder_parameter(self):
        with pytest.raises(UnknownParameterError):
            lq_model(not_a_parameter=1.0)

    def test_build_model_by_name(self):
        spec = build_model('lq', {'c': 0.25})
        assert spec.name == 'lq'
        assert spec.params['c'] == 0.25

    def test_build_model_by_dotted_path(self):
        spec = build_model('mfgmp.core.models.exchange_model', {'rate': 2.0})
        assert spec.name == 'exchange'

    def test_build_stopping(self):
        stop = build_stopping('canonical', 2, 1, 0.1, {'base': 0.5})
        x = np.array([[0.5, 0.5]])
        y = np.array([[0.0]])
        assert stop.psi(x, y) == pytest.approx([0.55])
        assert stop.Ubar(x, y).shape == (1, 2)


class TestGradP:
    def test_fd_fallback_matches_quadratic(self, lq_spec):
        rng = np.random.default_rng(0)
        x = rng.random((50, 2))
        y = rng.uniform(-1, 1, (50, 1))
        U = rng.uniform(-1, 1, (50, 2))
        p = rng.uniform(-1, 1, (50, 1))
        alpha = rng.uniform(-1, 1, (50, 1))
        exact = p + 0.5 * alpha
        assert np.max(np.abs(fd_gradp(lq_spec, x, y, U, p, alpha) - exact)) < 1e-8

    def test_eval_uses_fd_without_gradpF(self, lq_spec):
        spec = lq_spec.replace(gradpF=None)
        x = np.array([[0.2, 0.8]])
        y = np.array([[0.1]])
        U = np.zeros((1, 2))
        p = np.array([[0.3]])
        alpha = np.array([[0.4]])
        assert eval_gradpF(spec, x, y, U, p, alpha) == pytest.approx([[0.5]], abs=1e-8)

    @pytest.mark.parametrize('name', sorted(MODELS))
    def test_builtin_models_pass_fd_check(self, name):
        assert fd_check_gradp(build_model(name), samples=100, seed=0) < 1e-6

    def test_wrong_gradpF_rejected(self, lq_spec):
        def gradpF(x, y, U, p, alpha):
            return 2.0 * p

        with pytest.raises(ModelValidationError) as excinfo:
            validate_model(lq_spec.replace(gradpF=gradpF))
        assert excinfo.value.field == 'gradpF'


class TestValidateModel:
    @pytest.mark.parametrize('field,value', [('nu', 0.0), ('rho', -1.0), ('lam', -0.5), ('k', 0)])
    def test_bad_scalars(self, lq_spec, field, value):
        with pytest.raises(ModelValidationError):
            validate_model(lq_spec.replace(**{field: value}))

    def test_non_callable_handle(self, lq_spec):
        with pytest.raises(ModelValidationError) as excinfo:
            validate_model(lq_spec.replace(B=1.0))
        assert excinfo.value.field == 'B'

    def test_nonfinite_handle(self, lq_spec):
        def B(x, y, U, alpha):
            return np.where(x > 0.5, np.nan, 0.0)

        with pytest.raises(ModelEvaluationError) as excinfo:
            validate_model(lq_spec.replace(B=B))
        assert excinfo.value.handle == 'B'

    def test_mass_conservation_flag(self, lq_spec, zero_spec):
        assert validate_model(lq_spec).mass_conserving
        assert validate_model(exchange_model()).mass_conserving

        def A(x, y, U, alpha):
            return np.ones(np.shape(x))

        assert not validate_model(zero_spec.replace(A=A)).mass_conserving

    def test_grid_box_sampling(self, lq_spec, small_grid):
        validate_model(lq_spec, small_grid)


class TestCheckFinite:
    def test_finite_passthrough(self):
        values = check_finite('F', np.arange(3.0))
        assert values.tolist() == [0.0, 1.0, 2.0]

    def test_reports_offending_node(self):
        x = np.array([[0.0, 1.0], [0.25, 0.75], [0.5, 0.5]])
        values = np.array([1.0, np.inf, 2.0])
        with pytest.raises(ModelEvaluationError) as excinfo:
            check_finite('F', values, x=x)
        assert excinfo.value.point['x'].tolist() == [0.25, 0.75]


class TestStructuredCoupling:
    def test_multiplicative_inhibited_is_pure_drift(self):
        spec = multiplicative_model(v0=0.7)
        rng = np.random.default_rng(5)
        x = rng.random((20, 2))
        y = rng.uniform(-1, 1, (20, 1))
        U = rng.uniform(-1, 1, (20, 2))
        A = spec.A(x, y, U, np.zeros((20, 1)))
        expected = 0.7 * np.stack([-x[:, 0], x[:, 0]], axis=-1)
        assert np.array_equal(A, expected)

    def test_gated_flux_independent_of_U_where_gate_shut(self):
        spec = gated_model()
        rng = np.random.default_rng(9)
        x = rng.random((30, 2))
        y = rng.uniform(-1.0, 0.0, (30, 1))
        alpha = rng.uniform(-1, 1, (30, 1))
        base = spec.A(x, y, np.zeros((30, 2)), alpha)
        for _ in range(5):
            perturbed = spec.A(x, y, rng.normal(size=(30, 2)), alpha)
            assert np.array_equal(perturbed - base, np.zeros_like(base))

    def test_gated_flux_depends_on_U_where_gate_open(self):
        spec = gated_model()
        x = np.array([[0.6, 0.4]])
        y = np.array([[0.9]])
        alpha = np.zeros((1, 1))
        assert not np.allclose(spec.A(x, y, np.zeros((1, 2)), alpha), spec.A(x, y, np.array([[2.0, -2.0]]), alpha))

    def test_bad_forms(self):
        with pytest.raises(CouplingConfigurationError):
            build_coupling(StructuredCrowdDynamics('BOGUS', lambda x, y, U: x))
        with pytest.raises(CouplingConfigurationError):
            build_coupling(StructuredCrowdDynamics(StructuredCrowdDynamics.GATED, lambda x, y, U: x, G=lambda x, y: 1.0))
        with pytest.raises(CouplingConfigurationError):
            build_coupling(
                StructuredCrowdDynamics(
                    StructuredCrowdDynamics.MULTIPLICATIVE_ALPHA,
                    lambda x, y, U: x,
                    V=lambda x: x,
                    a=lambda alpha: alpha,
                    G=lambda x, y: 1.0,
                )
            )
