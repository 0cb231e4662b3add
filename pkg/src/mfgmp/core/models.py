'''Built-in models and stopping data.

Model builders take keyword overrides and return a :class:`~mfgmp.core.model.ModelSpec`;
stopping builders take ``(k, d, epsilon, **params)`` and return a
:class:`~mfgmp.core.model.StoppingSpec`. Scenario files select them by name, or name any
importable callable with the same signature by its dotted path.
'''

import logging

import numpy as np

from . import extloader
from .model import (
    CouplingConfigurationError,
    ModelSpec,
    ModelValidationError,
    StoppingSpec,
    StructuredCrowdDynamics,
    build_coupling,
)

log = logging.getLogger(__name__)


class UnknownParameterError(TypeError):
    pass


def _merge(defaults, overrides, name):
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise UnknownParameterError('unknown parameters for {!r}: {}'.format(name, ', '.join(sorted(unknown))))
    merged = dict(defaults)
    merged.update(overrides)
    return merged


def _first(alpha):
    return np.asarray(alpha)[..., 0]


def _sq(v):
    return np.sum(np.square(v), axis=-1)


#
# Rate matrices (crowd transport with a particle reading: A = Q^T x)
#


def exchange_rate_matrix(r0, sigma, coupled=True):
    '''Two-state exchange rates q12 = r0 (1 + tanh(U1 - U2 + sigma alpha)) and
    q21 = r0 (1 + tanh(U2 - U1 - sigma alpha)); with ``coupled=False`` both rates are r0.'''

    def Q(x, y, U, alpha):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(U)[:-1], np.shape(alpha)[:-1])
        if coupled:
            drive = U[..., 0] - U[..., 1] + sigma * _first(alpha)
            q12 = r0 * (1.0 + np.tanh(drive))
            q21 = r0 * (1.0 + np.tanh(-drive))
        else:
            q12 = q21 = np.full(shape, float(r0))
        q12 = np.broadcast_to(q12, shape)
        q21 = np.broadcast_to(q21, shape)
        rates = np.empty(shape + (2, 2))
        rates[..., 0, 0] = -q12
        rates[..., 0, 1] = q12
        rates[..., 1, 0] = q21
        rates[..., 1, 1] = -q21
        return rates

    return Q


def coupling_from_rates(Q):
    def A(x, y, U, alpha):
        return np.einsum('...i,...ij->...j', x, Q(x, y, U, alpha))

    return A


#
# Models
#

LQ_DEFAULTS = dict(nu=0.05, rho=0.1, lam=1.0, c=0.5, kappa=0.5, drive=0.0, r0=0.5, sigma=0.5, gamma=1.0, eta=0.5)


def _lq_handles(c, kappa, drive):
    def F(x, y, U, p, alpha):
        q = p + c * alpha
        return 0.5 * _sq(q) + kappa * np.sum(x * U, axis=-1) - drive

    def gradpF(x, y, U, p, alpha):
        return np.broadcast_to(p + c * alpha, np.broadcast_shapes(np.shape(p), np.shape(alpha))).copy()

    return F, gradpF


def _lq_data(k, gamma, eta):
    def B(x, y, U, alpha):
        return gamma * x + eta * _sq(y)[..., None]

    def U0(x, y):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (k,))

    def phi0(x, y):
        return np.broadcast_to(0.5 * _sq(y), np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]))

    return B, U0, phi0


def zero_model(k=2, d=1, nu=0.05, rho=0.0, lam=0.0):
    '''Every coupling and all initial data vanish.'''

    def F(x, y, U, p, alpha):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(p)[:-1]))

    def gradpF(x, y, U, p, alpha):
        return np.zeros(np.broadcast_shapes(np.shape(p), np.shape(alpha)))

    def crowd(x, y, U, alpha):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(U)))

    def U0(x, y):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (k,))

    def phi0(x, y):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]))

    return ModelSpec(k, d, nu, rho, lam, F, crowd, crowd, U0, phi0, gradpF=gradpF, name='zero', params=dict(k=k, d=d, nu=nu, rho=rho, lam=lam))


def lq_model(**overrides):
    '''Two crowd states exchanging mass at rates steered by U and alpha, a major player in one
    dimension with quadratic Hamiltonian 1/2 |p + c alpha|^2 + kappa <x, U> - drive, crowd
    source B_i = gamma x_i + eta |y|^2, U0 = 0 and phi0 = |y|^2 / 2.'''
    params = _merge(LQ_DEFAULTS, overrides, 'lq')
    if not abs(params['c']) < 1:
        log.warning('lq model with |c| >= 1: the alpha* iteration is not a contraction')
    F, gradpF = _lq_handles(params['c'], params['kappa'], params['drive'])
    A = coupling_from_rates(exchange_rate_matrix(params['r0'], params['sigma']))
    B, U0, phi0 = _lq_data(2, params['gamma'], params['eta'])
    return ModelSpec(2, 1, params['nu'], params['rho'], params['lam'], F, A, B, U0, phi0, gradpF=gradpF, name='lq', params=params)


GATED_DEFAULTS = dict(LQ_DEFAULTS, y_gate=0.5, kappa_major=0.5)


def gated_model(**overrides):
    '''The lq model with the crowd's own exchange gated by G(y) = clip(y / y_gate, 0, 1): on
    y <= 0 the gate is shut and the crowd only moves along the drift kappa_major alpha (-x1, x1)
    imposed by the major player.'''
    params = _merge(GATED_DEFAULTS, overrides, 'gated')
    y_gate, kappa_major = params['y_gate'], params['kappa_major']

    def G(x, y):
        return np.clip(y[..., 0] / y_gate, 0.0, 1.0) * np.ones(np.shape(x)[:-1])

    def Cmaj(alpha, x):
        a = _first(alpha)
        return kappa_major * a[..., None] * np.stack([-x[..., 0], x[..., 0]], axis=-1)

    Q = exchange_rate_matrix(params['r0'], params['sigma'])

    def Atilde(x, y, U):
        return np.einsum('...i,...ij->...j', x, Q(x, y, U, np.zeros(np.shape(y))))

    A = build_coupling(StructuredCrowdDynamics(StructuredCrowdDynamics.GATED, Atilde, G=G, Cmaj=Cmaj))
    F, gradpF = _lq_handles(params['c'], params['kappa'], params['drive'])
    B, U0, phi0 = _lq_data(2, params['gamma'], params['eta'])
    return ModelSpec(2, 1, params['nu'], params['rho'], params['lam'], F, A, B, U0, phi0, gradpF=gradpF, name='gated', params=params)


MULTIPLICATIVE_DEFAULTS = dict(LQ_DEFAULTS, v0=1.0)


def multiplicative_model(**overrides):
    '''The lq model with the crowd's own exchange scaled by a(alpha) = |alpha|^2 / (1 + |alpha|^2)
    on top of the autonomous drift V(x) = v0 (-x1, x1); a(0) = 0 leaves only V.'''
    params = _merge(MULTIPLICATIVE_DEFAULTS, overrides, 'multiplicative')
    v0 = params['v0']

    def a(alpha):
        s = _sq(alpha)
        return s / (1.0 + s)

    def V(x):
        return v0 * np.stack([-x[..., 0], x[..., 0]], axis=-1)

    Q = exchange_rate_matrix(params['r0'], params['sigma'])

    def Atilde(x, y, U):
        return np.einsum('...i,...ij->...j', x, Q(x, y, U, np.zeros(np.shape(y))))

    A = build_coupling(StructuredCrowdDynamics(StructuredCrowdDynamics.MULTIPLICATIVE_ALPHA, Atilde, V=V, a=a))
    F, gradpF = _lq_handles(params['c'], params['kappa'], params['drive'])
    B, U0, phi0 = _lq_data(2, params['gamma'], params['eta'])
    return ModelSpec(2, 1, params['nu'], params['rho'], params['lam'], F, A, B, U0, phi0, gradpF=gradpF, name='multiplicative', params=params)


EXCHANGE_DEFAULTS = dict(nu=0.05, rho=0.0, lam=1.0, rate=1.0)


def exchange_model(**overrides):
    '''Symmetric two-state exchange at a fixed rate; nothing depends on U or alpha. The crowd
    histogram moves along dx/dt = Q^T x, the setting of the particle oracle.'''
    params = _merge(EXCHANGE_DEFAULTS, overrides, 'exchange')
    zero = zero_model(2, 1)
    A = coupling_from_rates(exchange_rate_matrix(params['rate'], 0.0, coupled=False))
    return ModelSpec(
        2, 1, params['nu'], params['rho'], params['lam'], zero.F, A, zero.B, zero.U0, zero.phi0, gradpF=zero.gradpF, name='exchange', params=params
    )


MODELS = {
    'zero': zero_model,
    'lq': lq_model,
    'gated': gated_model,
    'multiplicative': multiplicative_model,
    'exchange': exchange_model,
}

RATE_MATRICES = {
    'lq': lambda p: exchange_rate_matrix(p['r0'], p['sigma']),
    'exchange': lambda p: exchange_rate_matrix(p['rate'], 0.0, coupled=False),
}


def _call_builder(kind, name, builder, *args, **params):
    try:
        return builder(*args, **params)
    except (UnknownParameterError, ModelValidationError, CouplingConfigurationError):
        raise
    except (TypeError, ValueError) as e:
        raise ModelValidationError(name, '{} builder {!r} failed: {}'.format(kind, name, e)) from e


def build_model(name, params=None, search_path=None):
    builder = extloader.resolve(name, MODELS, search_path)
    spec = _call_builder('model', name, builder, **(params or {}))
    if not isinstance(spec, ModelSpec):
        raise ModelValidationError(name, 'model builder {!r} returned {!r}, not a ModelSpec'.format(name, type(spec)))
    return spec


def build_rate_matrix(spec):
    '''The rate matrix behind a built-in model's crowd transport, or None.'''
    factory = RATE_MATRICES.get(spec.name)
    if factory is None:
        return None
    return factory(spec.params)


#
# Stopping data
#


def canonical_stopping(k, d, epsilon, base=0.25, slope=0.1, ubar=0.5):
    '''psi = base + slope x1 and a constant post-stop crowd cost. Paired with a positive lq
    ``drive`` the value phi is pushed above psi and the obstacle binds.'''

    def psi(x, y):
        return base + slope * x[..., 0] + 0.0 * y[..., 0]

    def Ubar(x, y):
        return np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (k,), float(ubar))

    return StoppingSpec(psi, Ubar, epsilon, name='canonical', params=dict(base=base, slope=slope, ubar=ubar))


def inactive_stopping(k, d, epsilon, level=1.0e6, ubar=0.0):
    '''A stopping cost far above any value the solvers reach: stopping never pays.'''

    def psi(x, y):
        return np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]), float(level))

    def Ubar(x, y):
        return np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (k,), float(ubar))

    return StoppingSpec(psi, Ubar, epsilon, name='inactive', params=dict(level=level, ubar=ubar))


def discontinuous_stopping(k, d, epsilon, low=0.1, high=0.6, ubar=0.5):
    '''psi jumps from ``low`` to ``high`` across y1 = 0.'''

    def psi(x, y):
        return np.where(y[..., 0] > 0, high, low) * np.ones(np.shape(x)[:-1])

    def Ubar(x, y):
        return np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (k,), float(ubar))

    return StoppingSpec(psi, Ubar, epsilon, name='discontinuous', params=dict(low=low, high=high, ubar=ubar))


STOPPING = {
    'canonical': canonical_stopping,
    'inactive': inactive_stopping,
    'discontinuous': discontinuous_stopping,
}


def build_stopping(name, k, d, epsilon, params=None, search_path=None):
    builder = extloader.resolve(name, STOPPING, search_path)
    stop = _call_builder('stopping', name, builder, k, d, epsilon, **(params or {}))
    if not isinstance(stop, StoppingSpec):
        raise ModelValidationError(name, 'stopping builder {!r} returned {!r}, not a StoppingSpec'.format(name, type(stop)))
    return stop
