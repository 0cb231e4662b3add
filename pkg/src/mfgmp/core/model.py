'''Problem data for mean field games with a major player.

A :class:`ModelSpec` carries everything the coupled system needs: dimensions, discount
rates, noise intensity, the major player's Hamiltonian ``F`` (and optionally its
p-gradient), the crowd couplings ``A`` and ``B`` and the initial data. All handles are
vectorized over grid nodes with a trailing-axis convention::

    x: (..., k)   y: (..., d)   U: (..., k)   p: (..., d)   alpha: (..., d)

    F(x, y, U, p, alpha)      -> (...)
    gradpF(x, y, U, p, alpha) -> (..., d)
    A(x, y, U, alpha)         -> (..., k)
    B(x, y, U, alpha)         -> (..., k)
    U0(x, y)                  -> (..., k)
    phi0(x, y)                -> (...)
'''

import itertools
import logging

import numpy as np

from .diagnostics import RunDiagnostics

log = logging.getLogger(__name__)

#: relative agreement required between a supplied gradpF and central differences
GRADP_RTOL = 1.0e-6

#: mass conservation tolerance for sum_i A_i on samples
MASS_TOL = 1.0e-12


class ModelValidationError(ValueError):
    def __init__(self, field, message=None):
        self.field = field
        if message is None:
            message = 'invalid model field {!r}'.format(field)
        super().__init__(message)


class ModelEvaluationError(ArithmeticError):
    '''A user handle returned a non-finite value. ``point`` maps argument names to the
    values at the first offending node.'''

    def __init__(self, handle, point, message=None):
        self.handle = handle
        self.point = point
        if message is None:
            message = 'non-finite value from {} at {}'.format(
                handle, ', '.join('{}={}'.format(name, np.array2string(np.asarray(val), precision=6)) for name, val in point.items())
            )
        super().__init__(message)


class CouplingConfigurationError(ValueError):
    pass


class ModelSpec:
    '''All problem data of the major-player system.

    :ivar k:      Number of crowd states (length of the histogram x).
    :ivar d:      Dimension of the major player's state y.
    :ivar nu:     Intensity of the major player's noise (> 0).
    :ivar rho:    Major player's discount rate (>= 0).
    :ivar lam:    Crowd discount rate (>= 0); ``lambda`` is reserved in Python.
    :ivar F:      Major player's Hamiltonian.
    :ivar gradpF: Optional p-gradient of F; central differences are used when absent.
    :ivar A:      Crowd transport coupling.
    :ivar B:      Crowd source coupling.
    :ivar U0:     Initial crowd value.
    :ivar phi0:   Initial major value.
    :ivar name:   Label used in logs and manifests.
    :ivar params: Builder parameters, recorded for reproducibility.
    '''

    def __init__(self, k, d, nu, rho, lam, F, A, B, U0, phi0, gradpF=None, name='custom', params=None):
        self.k = k
        self.d = d
        self.nu = nu
        self.rho = rho
        self.lam = lam
        self.F = F
        self.gradpF = gradpF
        self.A = A
        self.B = B
        self.U0 = U0
        self.phi0 = phi0
        self.name = name
        self.params = dict(params or {})

    def __repr__(self):
        return '<{} {!r} k={} d={} nu={!r} rho={!r} lambda={!r}>'.format(
            self.__class__.__name__, self.name, self.k, self.d, self.nu, self.rho, self.lam
        )

    def replace(self, **kwargs):
        '''Return a copy with the given attributes replaced (``lam=...``, ``B=...``, etc.).'''
        fields = dict(
            k=self.k,
            d=self.d,
            nu=self.nu,
            rho=self.rho,
            lam=self.lam,
            F=self.F,
            A=self.A,
            B=self.B,
            U0=self.U0,
            phi0=self.phi0,
            gradpF=self.gradpF,
            name=self.name,
            params=self.params,
        )
        unknown = set(kwargs) - set(fields)
        if unknown:
            raise TypeError('unknown model fields: {}'.format(', '.join(sorted(unknown))))
        fields.update(kwargs)
        return ModelSpec(**fields)


class StructuredCrowdDynamics:
    '''Crowd transport in which the major player can inhibit the crowd's own control.

    ``MULTIPLICATIVE_ALPHA``: ``A = a(alpha) * Atilde(x, y, U) + V(x)``; when the major player
    sets ``a(alpha) = 0`` the crowd is carried by the autonomous drift V alone.

    ``GATED``: ``A = G(x, y) * Atilde(x, y, U) + Cmaj(alpha, x)``; where the gate G vanishes the
    crowd moves only according to the drift imposed by the major player.
    '''

    MULTIPLICATIVE_ALPHA = 'MULTIPLICATIVE_ALPHA'
    GATED = 'GATED'

    forms = (MULTIPLICATIVE_ALPHA, GATED)

    def __init__(self, form, Atilde, V=None, G=None, Cmaj=None, a=None):
        self.form = form
        self.Atilde = Atilde
        self.V = V
        self.G = G
        self.Cmaj = Cmaj
        self.a = a

    def __repr__(self):
        return '<{} form={}>'.format(self.__class__.__name__, self.form)


class StoppingSpec:
    '''Data of the major player's stopping problem.

    :ivar psi:     Stopping cost psi(x, y) -> (...).
    :ivar Ubar:    Crowd cost after the stop, Ubar(x, y) -> (..., k).
    :ivar epsilon: Penalization parameter; the stopping intensity is bounded by 1/epsilon.
    '''

    def __init__(self, psi, Ubar, epsilon, name='custom', params=None):
        if not epsilon > 0:
            raise ModelValidationError('epsilon', 'stopping epsilon must be positive, not {!r}'.format(epsilon))
        self.psi = psi
        self.Ubar = Ubar
        self.epsilon = epsilon
        self.name = name
        self.params = dict(params or {})

    def __repr__(self):
        return '<{} {!r} epsilon={!r}>'.format(self.__class__.__name__, self.name, self.epsilon)

    def with_epsilon(self, epsilon):
        return StoppingSpec(self.psi, self.Ubar, epsilon, name=self.name, params=self.params)


def _first_bad_index(values):
    bad = ~np.isfinite(values)
    if bad.ndim == 0:
        return ()
    idx = np.argwhere(bad)[0]
    return tuple(idx)


def check_finite(handle, values, **args):
    '''Raise :class:`ModelEvaluationError` if ``values`` contains a non-finite entry. ``args``
    are the (broadcast) inputs of the handle, indexed at the first offending node.'''
    values = np.asarray(values, dtype=np.float64)
    if np.all(np.isfinite(values)):
        return values
    idx = _first_bad_index(values)
    # for vector-valued outputs drop the component index before locating the node
    point = {}
    for name, arr in args.items():
        arr = np.asarray(arr)
        node_idx = idx[: max(arr.ndim - 1, 0)]
        try:
            point[name] = arr[node_idx]
        except IndexError:
            point[name] = arr
    raise ModelEvaluationError(handle, point)


def fd_gradp(spec, x, y, U, p, alpha):
    '''Central finite differences of F in p with the scale-aware step 1e-5 * (1 + |p|).'''
    p = np.asarray(p, dtype=np.float64)
    h = 1.0e-5 * (1.0 + np.linalg.norm(p, axis=-1))
    grad = np.empty_like(p)
    for j in range(p.shape[-1]):
        step = np.zeros_like(p)
        step[..., j] = h
        f_plus = check_finite('F', spec.F(x, y, U, p + step, alpha), x=x, y=y, U=U, p=p, alpha=alpha)
        f_minus = check_finite('F', spec.F(x, y, U, p - step, alpha), x=x, y=y, U=U, p=p, alpha=alpha)
        grad[..., j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def eval_gradpF(spec, x, y, U, p, alpha):
    '''Return d_pF(x, y, U, p, alpha): the supplied gradient when the model has one, otherwise
    central finite differences of F. Non-finite evaluations raise ModelEvaluationError.'''
    if spec.gradpF is not None:
        grad = spec.gradpF(x, y, U, p, alpha)
        return check_finite('gradpF', np.broadcast_to(grad, np.shape(p)), x=x, y=y, U=U, p=p, alpha=alpha)
    return fd_gradp(spec, x, y, U, p, alpha)


def gradp_discrepancy(spec, x, y, U, p, alpha):
    '''Per-point relative error between the supplied gradient and central differences.
    Points where the difference quotient vanishes report the absolute error.'''
    if spec.gradpF is None:
        raise ModelValidationError('gradpF', 'model supplies no gradpF to compare against')
    supplied = np.broadcast_to(spec.gradpF(x, y, U, p, alpha), np.shape(p))
    reference = fd_gradp(spec, x, y, U, p, alpha)
    diff = np.linalg.norm(supplied - reference, axis=-1)
    scale = np.linalg.norm(reference, axis=-1)
    return np.where(scale > 1e-12, diff / np.where(scale > 1e-12, scale, 1.0), diff)


def build_coupling(sdyn):
    '''Build the transport coupling A(x, y, U, alpha) of a :class:`StructuredCrowdDynamics`.'''

    if sdyn.form not in StructuredCrowdDynamics.forms:
        raise CouplingConfigurationError('unknown structural form {!r}'.format(sdyn.form))
    if not callable(sdyn.Atilde):
        raise CouplingConfigurationError('{} form requires a callable Atilde'.format(sdyn.form))

    if sdyn.form == StructuredCrowdDynamics.MULTIPLICATIVE_ALPHA:
        if not (callable(sdyn.a) and callable(sdyn.V)):
            raise CouplingConfigurationError('MULTIPLICATIVE_ALPHA form requires callables a and V')
        if sdyn.G is not None or sdyn.Cmaj is not None:
            raise CouplingConfigurationError('MULTIPLICATIVE_ALPHA form takes no gate G or imposed drift Cmaj')
        Atilde, V, a = sdyn.Atilde, sdyn.V, sdyn.a

        def coupling(x, y, U, alpha):
            factor = np.asarray(a(alpha), dtype=np.float64)[..., None]
            return factor * Atilde(x, y, U) + V(x)

    else:
        if not (callable(sdyn.G) and callable(sdyn.Cmaj)):
            raise CouplingConfigurationError('GATED form requires callables G and Cmaj')
        if sdyn.a is not None or sdyn.V is not None:
            raise CouplingConfigurationError('GATED form takes no inhibition factor a or drift V')
        Atilde, G, Cmaj = sdyn.Atilde, sdyn.G, sdyn.Cmaj

        def coupling(x, y, U, alpha):
            gate = np.asarray(G(x, y), dtype=np.float64)[..., None]
            return gate * Atilde(x, y, U) + Cmaj(alpha, x)

    coupling.form = sdyn.form
    return coupling


def _sample_points(spec, grid=None, n_random=32, seed=20240):
    '''Box corners (of the grid when given, else x in [0,1]^k and y in [-1,1]^d) followed by
    ``n_random`` uniform interior points.'''
    if grid is not None:
        lo = np.concatenate([grid.x_min, grid.y_min])
        hi = np.concatenate([grid.x_max, grid.y_max])
    else:
        lo = np.concatenate([np.zeros(spec.k), -np.ones(spec.d)])
        hi = np.concatenate([np.ones(spec.k), np.ones(spec.d)])
    corners = np.array([[hi[i] if bit else lo[i] for i, bit in enumerate(bits)] for bits in itertools.product((0, 1), repeat=len(lo))])
    rng = np.random.default_rng(seed)
    interior = lo + (hi - lo) * rng.random((n_random, len(lo)))
    points = np.concatenate([corners, interior])
    return points[:, : spec.k], points[:, spec.k :], len(corners)


def validate_model(spec, grid=None):
    '''Check the model's invariants and sample its handles.

    Raises ModelValidationError naming the offending field, or ModelEvaluationError when a
    handle is non-finite at a sampled point. Returns a fresh RunDiagnostics whose
    ``mass_conserving`` flag tells whether sum_i A_i vanished on every sample.'''

    for field in ('k', 'd'):
        value = getattr(spec, field)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ModelValidationError(field, '{} must be a positive integer'.format(field))
    if not (np.isfinite(spec.nu) and spec.nu > 0):
        raise ModelValidationError('nu', 'nu must be positive')
    if not (np.isfinite(spec.rho) and spec.rho >= 0):
        raise ModelValidationError('rho', 'rho must be nonnegative')
    if not (np.isfinite(spec.lam) and spec.lam >= 0):
        raise ModelValidationError('lambda', 'lambda must be nonnegative')
    for field in ('F', 'A', 'B', 'U0', 'phi0'):
        if not callable(getattr(spec, field)):
            raise ModelValidationError(field, '{} must be callable'.format(field))
    if spec.gradpF is not None and not callable(spec.gradpF):
        raise ModelValidationError('gradpF', 'gradpF must be callable when given')

    x, y, n_corners = _sample_points(spec, grid)
    U0 = check_finite('U0', spec.U0(x, y), x=x, y=y)
    if U0.shape != x.shape:
        raise ModelValidationError('U0', 'U0 must return k = {} values per point'.format(spec.k))
    check_finite('phi0', np.broadcast_to(spec.phi0(x, y), x.shape[:-1]), x=x, y=y)

    p = np.zeros(y.shape)
    alpha = np.zeros(y.shape)
    A = check_finite('A', spec.A(x, y, U0, alpha), x=x, y=y, U=U0, alpha=alpha)
    if A.shape != x.shape:
        raise ModelValidationError('A', 'A must return k = {} values per point'.format(spec.k))
    check_finite('B', np.broadcast_to(spec.B(x, y, U0, alpha), x.shape), x=x, y=y, U=U0, alpha=alpha)
    check_finite('F', np.broadcast_to(spec.F(x, y, U0, p, alpha), x.shape[:-1]), x=x, y=y, U=U0, p=p, alpha=alpha)
    eval_gradpF(spec, x, y, U0, p, alpha)

    if spec.gradpF is not None:
        rng = np.random.default_rng(7)
        p_r = rng.uniform(-1.0, 1.0, y.shape)
        alpha_r = rng.uniform(-1.0, 1.0, y.shape)
        U_r = rng.uniform(-1.0, 1.0, x.shape)
        worst = float(np.max(gradp_discrepancy(spec, x, y, U_r, p_r, alpha_r)))
        if not worst < GRADP_RTOL:
            raise ModelValidationError(
                'gradpF', 'gradpF disagrees with central differences (relative error {:.3g} >= {:g})'.format(worst, GRADP_RTOL)
            )

    diagnostics = RunDiagnostics()
    mass_defect = np.abs(A.sum(axis=-1))
    diagnostics.mass_conserving = bool(np.all(mass_defect <= MASS_TOL * (1.0 + np.abs(A).sum(axis=-1))))
    log.debug(
        'validated model {!r} on {:d} corners and {:d} interior points; mass conserving: {}'.format(
            spec.name, n_corners, len(x) - n_corners, diagnostics.mass_conserving
        )
    )
    return diagnostics
