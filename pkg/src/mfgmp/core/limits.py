'''Parameter sweeps that measure the solvers' limits: lambda -> infinity (the crowd becomes
myopic), epsilon -> 0 (penalized stopping tends to the obstacle problem), and
self-convergence under grid refinement.

Member runs are independent and go through a work manager; results are assembled in
parameter order.
'''

import logging
import warnings

import numpy as np
from scipy.stats import linregress

from ..work_managers import SerialWorkManager
from .evolution import solve_myopic, solve_system
from .fixedpoint import FixedPointError
from .model import ModelEvaluationError
from .options import SolverOptions
from .stopping import solve_obstacle, solve_penalized
from .yamlcfg import REFINE_MODES

log = logging.getLogger(__name__)

#: fewest points for which a log-log slope is reported
MIN_FIT_POINTS = 3


class SweepConfigurationError(ValueError):
    pass


class SweepError(RuntimeError):
    '''A sweep member failed. ``parameter`` is its sweep parameter (inf for the myopic reference
    of a lambda sweep, 0 for the obstacle reference of an epsilon sweep); ``diagnostics`` are
    those of the failed run when it got far enough to have any.'''

    def __init__(self, parameter, message=None, diagnostics=None):
        self.parameter = parameter
        self.diagnostics = diagnostics
        if message is None:
            message = 'sweep member failed at parameter {!r}'.format(parameter)
        super().__init__(message)


class NonMonotoneSweepWarning(UserWarning):
    pass


class SweepResult:
    '''Norms measured along a parameter sweep.

    :ivar name:       Parameter name (``'lambda'``, ``'epsilon'``, ``'dt'``).
    :ivar label:      What the norms measure.
    :ivar parameters: Parameter values, in sweep order.
    :ivar norms:      One nonnegative norm per parameter value.
    :ivar slope:      Least-squares slope of log(norm) against log(parameter), nan when fewer
                      than three positive points are available.
    :ivar window:     ``(t1, t2)`` over which the norms were taken.
    :ivar monotone:   Whether the norms decrease strictly along the sweep.
    :ivar orders:     Observed orders log2(norm_l / norm_{l+1}) (refinement studies).
    :ivar levels:     Number of refinement levels achieved (refinement studies).
    '''

    def __init__(self, name, label, parameters, norms, window=None, orders=None, levels=None):
        self.name = name
        self.label = label
        self.parameters = [float(p) for p in parameters]
        self.norms = [float(n) for n in norms]
        self.window = window
        self.slope = fit_loglog_slope(self.parameters, self.norms)
        self.monotone = is_strictly_decreasing(self.norms)
        self.orders = orders
        self.levels = levels

    def __repr__(self):
        return '<{} {} vs {} ({:d} points) slope={:.3g} monotone={}>'.format(
            self.__class__.__name__, self.label, self.name, len(self.parameters), self.slope, self.monotone
        )

    def warn_if_non_monotone(self, stacklevel=2):
        if not self.monotone and len(self.norms) > 1:
            warnings.warn(
                '{} is not strictly decreasing along the {} sweep: {}; the sweep may be following '
                'more than one solution branch'.format(self.label, self.name, ', '.join('%.3g' % n for n in self.norms)),
                NonMonotoneSweepWarning,
                stacklevel=stacklevel + 1,
            )


def is_strictly_decreasing(values):
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(values) < 0))


def fit_loglog_slope(parameters, norms):
    '''Least-squares slope of log(norm) against log(parameter) over the strictly positive,
    finite points; nan with fewer than three such points.'''
    x = np.asarray(parameters, dtype=np.float64)
    y = np.asarray(norms, dtype=np.float64)
    usable = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(usable) < MIN_FIT_POINTS:
        return np.nan
    fit = linregress(np.log(x[usable]), np.log(y[usable]))
    return float(fit.slope)


def check_sweep_values(name, values, decreasing=False):
    '''At least three distinct positive values spanning two decades, ordered as the sweep runs.'''
    values = [float(v) for v in np.atleast_1d(values)]
    if len(values) < MIN_FIT_POINTS:
        raise SweepConfigurationError('{} sweep needs at least {} values, got {}'.format(name, MIN_FIT_POINTS, len(values)))
    if min(values) <= 0:
        raise SweepConfigurationError('{} sweep values must be positive'.format(name))
    steps = np.diff(values)
    if (decreasing and np.any(steps >= 0)) or (not decreasing and np.any(steps <= 0)):
        raise SweepConfigurationError('{} sweep values must be strictly {}'.format(name, 'decreasing' if decreasing else 'increasing'))
    if max(values) / min(values) < 100.0 * (1.0 - 1e-12):
        raise SweepConfigurationError('{} sweep values must span at least two decades'.format(name))
    return values


def _run_system(spec, grid, options):
    return solve_system(spec, grid, options)


def _run_myopic(spec, grid, options):
    return solve_myopic(spec, grid, options)


def _run_penalized(spec, grid, stop, options):
    return solve_penalized(spec, grid, stop, options)[0]


def _run_obstacle(spec, grid, stop, options):
    return solve_obstacle(spec, grid, stop, options)[0]


class SweepMember:
    '''One solve of a sweep, run as a work manager task.

    A solver failure, or a blow-up guard trip before ``valid_until`` (anywhere when
    ``valid_until`` is None), is raised as a :class:`SweepError` carrying the member's
    parameter and, when available, the failed run's diagnostics.

    :ivar name:        Sweep parameter name.
    :ivar parameter:   Parameter value of this member.
    :ivar valid_until: Time up to which the fields must be valid.
    '''

    def __init__(self, name, parameter, solve, args, valid_until=None, what=None):
        self.name = name
        self.parameter = parameter
        self.solve = solve
        self.args = args
        self.valid_until = valid_until
        self.what = what or 'run'

    @property
    def label(self):
        return '{}={!r}'.format(self.name, self.parameter)

    def task(self):
        return (self.label, self, ())

    def __call__(self):
        try:
            snapshots = self.solve(*self.args)
        except (FixedPointError, ModelEvaluationError) as e:
            raise SweepError(
                self.parameter, '{} at {} failed: {}'.format(self.what, self.label, e), diagnostics=getattr(e, 'diagnostics', None)
            ) from e
        diagnostics = snapshots[-1].diagnostics
        if diagnostics.blowup_tripped and (self.valid_until is None or diagnostics.effective_horizon < self.valid_until):
            message = '{} at {} blew up at t = {!r}'.format(self.what, self.label, diagnostics.effective_horizon)
            if self.valid_until is not None:
                message += ', before t1 = {!r}'.format(self.valid_until)
            raise SweepError(self.parameter, message, diagnostics=diagnostics)
        return snapshots


def _run_members(work_manager, members):
    wm = work_manager or SerialWorkManager()
    return wm.wait_all(wm.submit_many([member.task() for member in members]))


def _aligned_gap(snapshots_a, snapshots_b, t1, t2):
    '''sup |phi_a - phi_b| over snapshots taken at the same step with t1 <= t <= t2.'''
    by_step = {s.step: s for s in snapshots_b}
    gap = 0.0
    for state in snapshots_a:
        other = by_step.get(state.step)
        if other is None or state.t < t1 - 1e-12 or state.t > t2 + 1e-12:
            continue
        gap = max(gap, float(np.max(np.abs(state.phi.data - other.phi.data))))
    return gap


def lambda_sweep(spec, grid, lambdas, t1=None, options=None, work_manager=None):
    '''Solve the coupled system for each crowd discount rate lambda and compare with the myopic
    solution. Returns ``(u_norms, phi_gaps)``: the sup-norm of U_lambda over [t1, T] x grid, and
    the sup-distance of phi_lambda to the myopic phi over the snapshots in [t1, T].'''
    options = options or SolverOptions()
    lambdas = check_sweep_values('lambda', lambdas)
    t1 = options.window_start(grid.T) if t1 is None else t1
    if not 0 < t1 <= grid.T:
        raise SweepConfigurationError('norm window start t1 must lie in (0, T]')
    members = [SweepMember('lambda', np.inf, _run_myopic, (spec, grid, options), valid_until=t1, what='myopic reference run')]
    members += [SweepMember('lambda', lam, _run_system, (spec.replace(lam=lam), grid, options), valid_until=t1) for lam in lambdas]
    results = _run_members(work_manager, members)
    myopic, members = results[0], results[1:]

    u_norms, phi_gaps = [], []
    for lam, snapshots in zip(lambdas, members):
        diagnostics = snapshots[-1].diagnostics
        t2 =min(diagnostics.effective_horizon, myopic[-1].diagnostics.effective_horizon)
        u_norms.append(diagnostics.window_max(diagnostics.sup_norm_U, t1, t2))
        phi_gaps.append(_aligned_gap(snapshots, myopic, t1, t2))
        log.debug('lambda = {!r}: sup|U| = {:.6g}, sup|phi - phi_myopic| = {:.6g}'.format(lam, u_norms[-1], phi_gaps[-1]))

    window = (t1, grid.T)
    u_result = SweepResult('lambda', 'norm_U', lambdas, u_norms, window)
    gap_result = SweepResult('lambda', 'norm_phi_gap', lambdas, phi_gaps, window)
    u_result.warn_if_non_monotone()
    gap_result.warn_if_non_monotone()
    return u_result, gap_result


def epsilon_sweep(spec, grid, stop, epsilons, options=None, work_manager=None):
    '''Solve the penalized system for each epsilon (decreasing) and the obstacle system once.
    Returns ``(excess, obstacle_gaps)``: the final sup (phi_eps - psi)^+ and the final
    sup-distance of phi_eps to the obstacle solution.'''
    options = options or SolverOptions()
    epsilons = check_sweep_values('epsilon', epsilons, decreasing=True)
    members = [SweepMember('epsilon', 0.0, _run_obstacle, (spec, grid, stop, options), what='obstacle reference run')]
    members += [SweepMember('epsilon', eps, _run_penalized, (spec, grid, stop.with_epsilon(eps), options), what='penalized run') for eps in epsilons]
    results = _run_members(work_manager, members)
    obstacle, members = results[0], results[1:]

    excess, gaps = [], []
    for eps, snapshots in zip(epsilons, members):
        diagnostics = snapshots[-1].diagnostics
        excess.append(diagnostics.excess[-1])
        gaps.append(float(np.max(np.abs(snapshots[-1].phi.data - obstacle[-1].phi.data))))
        log.debug('epsilon = {!r}: sup(phi - psi)^+ = {:.6g}, gap to obstacle = {:.6g}'.format(eps, excess[-1], gaps[-1]))

    window = (grid.T, grid.T)
    excess_result = SweepResult('epsilon', 'excess', epsilons, excess, window)
    gap_result = SweepResult('epsilon', 'obstacle_gap', epsilons, gaps, window)
    if any(n > 0 for n in excess):
        excess_result.warn_if_non_monotone()
    return excess_result, gap_result


def _memory_nodes(spec, grid):
    # phi, U, alpha and the node coordinates per grid node
    return grid.n_nodes * (1 + 2 * spec.k + 2 * spec.d)


def refinement_study(spec, grid, levels, options=None, stop=None, mode='system', max_nodes=2000000, work_manager=None):
    '''Self-convergence under refinement. Level l + 1 doubles the node density of level l on
    every axis (n -> 2n - 1) and halves dt. ``levels`` refinements are attempted, i.e.
    ``levels + 1`` solves; the final fields of consecutive levels are compared on the coarse
    nodes. Levels whose storage would exceed ``max_nodes`` are skipped and the result is
    partial.

    The result has one point per refinement achieved. A log-log slope needs three of them,
    so with two refinements ``slope`` is nan and :func:`observed_order` falls back to the
    pairwise order.

    ``mode`` selects the solver: ``'system'``, ``'myopic'``, ``'penalized'`` or ``'obstacle'``
    (the last two need ``stop``).'''
    options = options or SolverOptions()
    if levels < 2:
        raise SweepConfigurationError('refinement study needs at least 2 levels')
    if mode not in REFINE_MODES:
        raise SweepConfigurationError('unknown refinement mode {!r}; expected one of {}'.format(mode, ', '.join(REFINE_MODES)))
    if mode in ('penalized', 'obstacle') and stop is None:
        raise SweepConfigurationError('{} refinement needs stopping data'.format(mode))

    grids = [grid]
    while len(grids) < levels + 1:
        finer = grids[-1].refined()
        if _memory_nodes(spec, finer) > max_nodes:
            log.warning(
                'refinement stopped at level {:d}: next level needs {:d} stored values (limit {:d})'.format(
                    len(grids) - 1, _memory_nodes(spec, finer), max_nodes
                )
            )
            break
        grids.append(finer)
    if len(grids) < 2:
        raise SweepConfigurationError('grid already exceeds the memory guard of {:d} values'.format(max_nodes))

    solve, extra = {
        'system': (_run_system, ()),
        'myopic': (_run_myopic, ()),
        'penalized': (_run_penalized, (stop,)),
        'obstacle': (_run_obstacle, (stop,)),
    }[mode]
    members = [SweepMember('dt', g.dt, solve, (spec, g) + extra + (options,), what='{} refinement run'.format(mode)) for g in grids]
    runs = _run_members(work_manager, members)

    dts, diffs = [], []
    for coarse_grid, fine_grid, coarse, fine in zip(grids[:-1], grids[1:], runs[:-1], runs[1:]):
        index = fine_grid.coarse_slice()
        phi_diff = np.max(np.abs(fine[-1].phi.data[index] - coarse[-1].phi.data))
        U_diff = np.max(np.abs(fine[-1].U.data[(slice(None),) + index] - coarse[-1].U.data))
        dts.append(coarse_grid.dt)
        diffs.append(float(max(phi_diff, U_diff)))
        log.debug('refinement dt = {!r} -> {!r}: sup difference {:.6g}'.format(coarse_grid.dt, fine_grid.dt, diffs[-1]))

    orders = []
    for a, b in zip(diffs[:-1], diffs[1:]):
        orders.append(float(np.log2(a / b)) if a > 0 and b > 0 else np.nan)
    result = SweepResult('dt', 'self_convergence', dts, diffs, (grid.T, grid.T), orders=orders, levels=len(grids) - 1)
    if len(grids) - 1 < levels:
        log.warning('refinement study is partial: {:d} of {:d} levels'.format(len(grids) - 1, levels))
    return result


def observed_order(result):
    '''Single observed order of a refinement study: the fitted slope when available, else the
    mean of the pairwise orders.'''
    if np.isfinite(result.slope):
        return result.slope
    finite = [o for o in (result.orders or []) if np.isfinite(o)]
    return float(np.mean(finite)) if finite else np.nan


def write_sweep_csv(writer, results):
    '''Write sweeps over the same parameter values side by side, with a footer line per
    fitted slope.'''
    first = results[0]
    if first.window is not None:
        writer.write_header('window: %.17g %.17g' % tuple(first.window))
    if first.levels is not None:
        writer.write_header('levels: {:d}'.format(first.levels))
    writer.write_columns([first.name] + [r.label for r in results])
    for i, parameter in enumerate(first.parameters):
        writer.write_row([parameter] + [r.norms[i] for r in results])
    for r in results:
        writer.write_footer('slope {}: {!r} monotone: {}'.format(r.label, r.slope, r.monotone))
        if r.orders:
            writer.write_footer('orders {}: {}'.format(r.label, ' '.join('%.17g' % o for o in r.orders)))
