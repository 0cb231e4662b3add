'''Independent checks of the solvers: a Monte Carlo particle simulation of the crowd histogram,
ODE integration of the same histogram, finite-difference checks of d_pF and scalar problems
with closed-form solutions.

The particle picture applies to crowd transport of rate-matrix form, A = Q^T x: every
particle jumps between the k states as a continuous-time Markov chain with generator Q, and
the histogram of N particles, scaled by sum(x0) / N, follows dx/dt = Q^T x in the mean.
Controls are frozen at the initial data, so Q is a constant matrix in a particle run.
'''

import logging

import numpy as np
from scipy.integrate import solve_ivp

from .grid import GridSpec
from .limits import SweepResult
from .model import ModelSpec, ModelValidationError, gradp_discrepancy
from .models import inactive_stopping, zero_model
from .options import SolverOptions
from ..work_managers import SerialWorkManager

log = logging.getLogger(__name__)

#: particles per independent random stream; fixed so results do not depend on the worker count
CHUNK_SIZE = 20000


class OracleError(ValueError):
    pass


class RateMatrixError(ValueError):
    pass


class RateMatrixCoupling:
    '''Crowd transport A = Q^T x from a transition-rate matrix Q(x, y, U, alpha) -> (..., k, k)
    with nonnegative off-diagonal entries and zero row sums.'''

    def __init__(self, Q, tol=1e-12):
        self.Q = Q
        self.tol = tol

    def __repr__(self):
        return '<{} Q={!r}>'.format(self.__class__.__name__, self.Q)

    def rates(self, x, y, U, alpha):
        '''Evaluate and check Q.'''
        rates = np.asarray(self.Q(x, y, U, alpha), dtype=np.float64)
        k = np.shape(x)[-1]
        if rates.shape[-2:] != (k, k):
            raise RateMatrixError('rate matrix must be {0}x{0}, not {1}'.format(k, rates.shape[-2:]))
        if not np.all(np.isfinite(rates)):
            raise RateMatrixError('rate matrix has non-finite entries')
        off = rates * (1.0 - np.eye(k))
        if np.any(off < -self.tol):
            raise RateMatrixError('rate matrix has negative off-diagonal entries')
        row_sums = rates.sum(axis=-1)
        if np.any(np.abs(row_sums) > self.tol * (1.0 + np.abs(rates).sum(axis=-1))):
            raise RateMatrixError('rate matrix rows must sum to zero')
        return rates

    def coupling(self):
        '''The transport handle A(x, y, U, alpha) = Q^T x.'''

        def A(x, y, U, alpha):
            return np.einsum('...i,...ij->...j', x, self.Q(x, y, U, alpha))

        return A

    def frozen(self, x0, y, U, alpha):
        '''The constant k x k generator at the given data, and the linear coupling it induces.'''
        as_float = [np.asarray(v, dtype=np.float64) for v in (x0, y, U, alpha)]
        Q0 = self.rates(*as_float)

        def A(x, y_, U_, alpha_):
            return np.asarray(x) @ Q0

        return Q0, A


class FrozenControls:
    '''Major state, crowd value and major control held fixed during an oracle run.'''

    def __init__(self, y, U, alpha):
        self.y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        self.U = np.atleast_1d(np.asarray(U, dtype=np.float64))
        self.alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))

    def __repr__(self):
        return '<{} y={} U={} alpha={}>'.format(self.__class__.__name__, self.y, self.U, self.alpha)


class ParticleTrajectory:
    '''Empirical histograms at the snapshot times.

    :ivar times:          Snapshot times, t = 0 included.
    :ivar histogram:      ``(n_times, k)`` scaled counts sum(x0) * count / N.
    :ivar standard_error: ``(n_times, k)`` Monte Carlo standard errors sum(x0) sqrt(p (1 - p) / N).
    :ivar N:              Number of particles.
    :ivar seed:           Entropy of the seed sequence.
    '''

    def __init__(self, times, histogram, standard_error, N, seed):
        self.times = times
        self.histogram = histogram
        self.standard_error = standard_error
        self.N = N
        self.seed = seed

    def __repr__(self):
        return '<{} N={:d} times={}>'.format(self.__class__.__name__, self.N, len(self.times))


def _simulate_chunk(Q0, probabilities, n, times, seed_seq):
    '''Jump-chain simulation of ``n`` particles; returns state counts ``(len(times), k)``.'''
    rng = np.random.default_rng(seed_seq)
    k = Q0.shape[0]
    exit_rates = -np.diag(Q0)
    with np.errstate(divide='ignore', invalid='ignore'):
        jumps = np.where(exit_rates[:, None] > 0, Q0 / exit_rates[:, None], 0.0)
    np.fill_diagonal(jumps, 0.0)
    cumulative = np.cumsum(jumps, axis=1)

    state = rng.choice(k, size=n, p=probabilities)
    clock = np.zeros(n)
    observed = np.full((len(times), n), -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    horizon = times[-1]

    while alive.any():
        idx = np.flatnonzero(alive)
        rate = exit_rates[state[idx]]
        with np.errstate(divide='ignore'):
            hold = np.where(rate > 0, rng.exponential(1.0, idx.size) / np.where(rate > 0, rate, 1.0), np.inf)
        leave = clock[idx] + hold
        for s, t in enumerate(times):
            seen = (observed[s, idx] < 0) & (leave > t)
            observed[s, idx[seen]] = state[idx[seen]]
        clock[idx] = leave
        moving = leave <= horizon
        alive[idx[~moving]] = False
        movers = idx[moving]
        if movers.size:
            u = rng.random(movers.size)
            state[movers] = np.minimum((u[:, None] > cumulative[state[movers]]).sum(axis=1), k - 1)

    return np.stack([np.bincount(observed[s], minlength=k) for s in range(len(times))])


def particle_simulate(rc, x0, controls, N, T, seed, n_times=5, work_manager=None):
    '''Simulate N independent jump processes with the generator Q frozen at (x0, controls).
    Initial states are drawn from x0 / sum(x0). Returns a :class:`ParticleTrajectory` at
    ``n_times + 1`` equally spaced times in [0, T].'''
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(x0 < 0) or not x0.sum() > 0:
        raise RateMatrixError('initial histogram must be nonnegative with positive mass')
    if N < 1:
        raise OracleError('particle count must be positive')
    Q0, _A = rc.frozen(x0, controls.y, controls.U, controls.alpha)
    mass = float(x0.sum())
    times = np.linspace(0.0, T, n_times + 1)

    n_chunks = -(-int(N) // CHUNK_SIZE)
    sizes = [CHUNK_SIZE] * (n_chunks - 1) + [int(N) - CHUNK_SIZE * (n_chunks - 1)]
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seed_seq.spawn(n_chunks)

    work_manager = work_manager or SerialWorkManager()
    tasks = [
        ('particle chunk {:d}'.format(i), _simulate_chunk, (Q0, x0 / mass, size, times, child))
        for i, (size, child) in enumerate(zip(sizes, children))
    ]
    counts = sum(work_manager.wait_all(work_manager.submit_many(tasks)))

    p = counts / N
    histogram = mass * p
    standard_error = mass * np.sqrt(p * (1.0 - p) / N)
    log.debug('simulated {:d} particles in {:d} chunks'.format(int(N), n_chunks))
    return ParticleTrajectory(times, histogram, standard_error, int(N), seed_seq.entropy)


def integrate_characteristics(coupling, x0, times, controls=None, rtol=1e-12, atol=1e-14):
    '''Integrate dx/dt = A(x, y, U, alpha) with the controls held fixed (DOP853). Returns the
    histogram at ``times``, shape ``(len(times), k)``.'''
    x0 = np.asarray(x0, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if controls is None:
        controls = FrozenControls(np.zeros(1), np.zeros_like(x0), np.zeros(1))

    def rhs(t, x):
        return np.asarray(coupling(x, controls.y, controls.U, controls.alpha), dtype=np.float64)

    solution = solve_ivp(rhs, (times[0], times[-1]), x0, method='DOP853', t_eval=times, rtol=rtol, atol=atol)
    if not solution.success:
        raise OracleError('characteristic integration failed: {}'.format(solution.message))
    return solution.y.T


def transport_check(rc, x0, controls, N, T, seed, n_times=5, work_manager=None, coupling=None):
    '''Particle histogram against the integrated characteristics of ``coupling`` (default: the
    frozen rate matrix). Returns ``(trajectory, ode, z)`` with z the largest deviation in units
    of the standard error.'''
    trajectory = particle_simulate(rc, x0, controls, N, T, seed, n_times, work_manager)
    if coupling is None:
        _Q0, coupling = rc.frozen(x0, controls.y, controls.U, controls.alpha)
    ode = integrate_characteristics(coupling, x0, trajectory.times, controls)
    deviation = np.abs(trajectory.histogram - ode)
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(trajectory.standard_error > 0, deviation / trajectory.standard_error, np.where(deviation > 0, np.inf, 0.0))
    return trajectory, ode, float(np.max(z))


def monte_carlo_rate_study(rc, x0, controls, particle_counts, T, seed, repeats=20, n_times=5, work_manager=None):
    '''RMS over ``repeats`` independent runs of the sup gap between particle and ODE histograms,
    for each particle count. The fitted log-log slope should be close to -1/2.'''
    counts = [int(n) for n in particle_counts]
    _Q0, A = rc.frozen(x0, controls.y, controls.U, controls.alpha)
    times = np.linspace(0.0, T, n_times + 1)
    ode = integrate_characteristics(A, x0, times, controls)
    streams = np.random.SeedSequence(seed).spawn(len(counts) * repeats)

    rms = []
    for i, n in enumerate(counts):
        gaps = []
        for r in range(repeats):
            trajectory = particle_simulate(rc, x0, controls, n, T, streams[i * repeats + r], n_times, work_manager)
            gaps.append(float(np.max(np.abs(trajectory.histogram - ode))))
        rms.append(float(np.sqrt(np.mean(np.square(gaps)))))
        log.debug('N = {:d}: rms gap {:.6g}'.format(n, rms[-1]))
    return SweepResult('N', 'mc_rms_gap', counts, rms, (0.0, T))


def fd_check_gradp(spec, samples=100, seed=0):
    '''Worst relative error between the model's gradpF and central differences of F over
    ``samples`` random points (x in [0, 1]^k; y, U, p, alpha in [-1, 1]).'''
    if spec.gradpF is None:
        raise ModelValidationError('gradpF', 'model supplies no gradpF to check')
    rng = np.random.default_rng(seed)
    x = rng.random((samples, spec.k))
    y = rng.uniform(-1.0, 1.0, (samples, spec.d))
    U = rng.uniform(-1.0, 1.0, (samples, spec.k))
    p = rng.uniform(-1.0, 1.0, (samples, spec.d))
    alpha = rng.uniform(-1.0, 1.0, (samples, spec.d))
    return float(np.max(gradp_discrepancy(spec, x, y, U, p, alpha)))


#
# Scalar problems with closed-form solutions
#

REDUCTION_CASES = ('CROWD_ODE', 'PENALTY_RELAXATION')


def _reduction_grid(T, dt):
    return GridSpec([0.0], [1.0], [2], [-1.0], [1.0], [3], T, dt, k=1, d=1)


def _constant_B(value):
    def B(x, y, U, alpha):
        return np.full(np.broadcast_shapes(np.shape(x), np.shape(U)), float(value))

    return B


def _check_decoupled(spec):
    '''Refuse a model whose crowd line is not the scalar ODE dU/dt + lambda U = b.'''
    rng = np.random.default_rng(1)
    n = 16
    x = rng.random((n, spec.k))
    y = rng.uniform(-1.0, 1.0, (n, spec.d))
    U = rng.uniform(-1.0, 1.0, (n, spec.k))
    alpha = rng.uniform(-1.0, 1.0, (n, spec.d))
    if np.any(np.asarray(spec.A(x, y, U, alpha)) != 0):
        raise OracleError('model {!r} is not decoupled: A does not vanish'.format(spec.name))
    B = np.broadcast_to(spec.B(x, y, U, alpha), (n, spec.k))
    if np.any(B != B[0]):
        raise OracleError('model {!r} is not decoupled: B is not constant'.format(spec.name))
    U0 = np.broadcast_to(spec.U0(x, y), (n, spec.k))
    if np.any(U0 != U0[0]) or np.any(B[0] != B[0, 0]) or np.any(U0[0] != U0[0, 0]):
        raise OracleError('model {!r} is not decoupled: U0 and B must be uniform constants'.format(spec.name))
    return float(B[0, 0]), float(U0[0, 0])


def _crowd_ode(params):
    from .evolution import solve_system

    T = float(params.get('T', 1.0))
    dt = float(params.get('dt', 1e-3))
    if 'spec' in params:
        spec = params['spec']
        if not isinstance(spec, ModelSpec):
            raise OracleError('params["spec"] must be a ModelSpec')
        b, u0 = _check_decoupled(spec)
        lam = spec.lam
        base = zero_model(k=1, d=1, nu=1.0, lam=lam)
        spec = base.replace(B=_constant_B(b), U0=lambda x, y: np.full(np.shape(x)[:-1] + (1,), u0))
    else:
        lam = float(params.get('lam', 10.0))
        b = float(params.get('B', 1.0))
        u0 = 0.0
        spec = zero_model(k=1, d=1, nu=1.0, lam=lam).replace(B=_constant_B(b))

    grid = _reduction_grid(T, dt)
    snapshots = solve_system(spec, grid, SolverOptions(snapshot_every=1))
    error = 0.0
    for state in snapshots:
        if lam > 0:
            exact = b / lam + (u0 - b / lam) * np.exp(-lam * state.t)
        else:
            exact = u0 + b * state.t
        error = max(error, float(np.max(np.abs(state.U.data - exact))))
    return error


def _penalty_relaxation(params):
    from .stopping import solve_penalized

    T = float(params.get('T', 1.0))
    dt = float(params.get('dt', 1e-3))
    epsilon = float(params.get('epsilon', 0.1))
    gap = float(params.get('gap', 1.0))
    if not gap > 0:
        raise OracleError('penalty relaxation needs phi0 - psi > 0')

    base = zero_model(k=1, d=1, nu=1.0)
    spec = base.replace(
        phi0=lambda x, y: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]), gap),
        U0=lambda x, y: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]) + (1,), gap),
    )
    stop = inactive_stopping(1, 1, epsilon, level=0.0, ubar=0.0)
    grid = _reduction_grid(T, dt)
    snapshots, _diagnostics = solve_penalized(spec, grid, stop, SolverOptions(snapshot_every=1))
    error = 0.0
    for state in snapshots:
        exact = gap * np.exp(-state.t / epsilon)
        error = max(error, float(np.max(np.abs(state.phi.data - exact))), float(np.max(np.abs(state.U.data - exact))))
    return error


def scalar_reduction_check(case, params=None):
    '''Run the solvers on a scalar problem with a closed-form solution and return the sup error.

    ``CROWD_ODE``: k = 1, no transport, constant B, U0 = 0; U(t) = (B / lambda)(1 - exp(-lambda t)).
    Parameters ``lam``, ``B``, ``T``, ``dt``, or a decoupled ModelSpec under ``spec``.

    ``PENALTY_RELAXATION``: frozen dynamics, psi = Ubar = 0, phi0 = U0 = gap; both relax as
    gap exp(-t / epsilon). Parameters ``epsilon``, ``gap``, ``T``, ``dt``.'''
    params = dict(params or {})
    if case == 'CROWD_ODE':
        return _crowd_ode(params)
    elif case == 'PENALTY_RELAXATION':
        return _penalty_relaxation(params)
    raise OracleError('unknown reduction case {!r} (choices: {})'.format(case, ', '.join(REDUCTION_CASES)))
