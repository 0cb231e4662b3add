'''Time stepping of the coupled major-player / crowd system and of its myopic reduction.

Both equations are integrated forward from the t = 0 data::

    d_t phi = -F(x, y, U, grad_y phi, alpha*) - A . grad_x phi + nu lap_y phi - rho phi
    d_t U   =  B - (A . grad_x) U - alpha* . grad_y U + nu lap_y U - lambda U

Transport and sources are explicit (first-order upwind); diffusion and the discount terms
are implicit. alpha* is re-solved from the new grad_y phi at the end of every step, warm
started from the previous step's control. Every stage produces new arrays, so a state
handed out as a snapshot is never modified afterwards.
'''

import logging
import warnings

import numpy as np

from .diagnostics import RunDiagnostics
from .fixedpoint import ControlFields, FixedPointError, picard_alpha
from .grid import CrowdField, ScalarField, certify_dt, courant_number, gradient_y, implicit_diffusion, upwind_grad
from .model import ModelEvaluationError, check_finite
from .options import SolverOptions

log = logging.getLogger(__name__)

__all__ = [
    'CFLWarning',
    'RunDiagnostics',
    'SystemState',
    'initial_state',
    'step_system',
    'solve_system',
    'solve_myopic',
]


class CFLWarning(UserWarning):
    pass


class SystemState:
    '''The unknowns (phi, U) with their controls at time t.

    :ivar t:           Time of the state.
    :ivar step:        Number of steps taken to reach it.
    :ivar phi:         :class:`~mfgmp.core.grid.ScalarField`.
    :ivar U:           :class:`~mfgmp.core.grid.CrowdField`.
    :ivar controls:    :class:`~mfgmp.core.fixedpoint.ControlFields` solved at this state.
    :ivar diagnostics: The run's :class:`RunDiagnostics` (shared by all states of a run).
    :ivar contact:     Projection-active nodes (obstacle runs only).
    :ivar report:      Complementarity report of the step (obstacle runs only).
    '''

    def __init__(self, t, phi, U, controls, diagnostics, step=0, contact=None, report=None):
        self.t = t
        self.phi = phi
        self.U = U
        self.controls = controls
        self.diagnostics = diagnostics
        self.step = step
        self.contact = contact
        self.report = report

    def __repr__(self):
        return '<{} t={!r} step={:d}>'.format(self.__class__.__name__, self.t, self.step)

    @property
    def grid(self):
        return self.phi.grid


def _zero_crowd(k):
    def U0(x, y):
        return np.zeros(np.shape(x)[:-1] + (k,))

    return U0


def myopic_model(spec):
    '''The model with the crowd value held at zero, U0 = 0 and B = 0.'''

    def B(x, y, U, alpha):
        return np.zeros(np.shape(U))

    return spec.replace(U0=_zero_crowd(spec.k), B=B, name='{} (myopic)'.format(spec.name))


def solve_controls(spec, grid, phi_data, U_data, options, alpha0=None):
    '''alpha* at every node for the given fields. Returns the AlphaSolution.'''
    X, Y = grid.nodes()
    p = gradient_y(phi_data, grid)
    return picard_alpha(
        spec, X, Y, np.moveaxis(U_data, 0, -1), p, options.theta, options.tol_fp, options.max_iter, alpha0=alpha0, policy=options.fp_policy
    )


def transport_term(grid, values, rates, first_axis):
    '''sum_i rates_i * (upwind derivative of ``values`` along axis first_axis + i).'''
    total = np.zeros_like(values)
    for i in range(rates.shape[-1]):
        rate = rates[..., i]
        axis = first_axis + i
        if values.shape[axis] < 2:
            continue
        total += rate * upwind_grad(values, axis, rate, grid.spacing[axis])
    return total


def explicit_stage(spec, grid, phi_data, U_data, alpha, evolve_crowd=True):
    '''Forward Euler update of both fields with every term except diffusion and discounting.
    Returns ``(phi_tilde, U_tilde, A)``.'''
    X, Y = grid.nodes()
    dt = grid.dt
    U_nodes = np.moveaxis(U_data, 0, -1)
    p = gradient_y(phi_data, grid)

    F = check_finite('F', np.broadcast_to(spec.F(X, Y, U_nodes, p, alpha), grid.shape), x=X, y=Y, U=U_nodes, p=p, alpha=alpha)
    A = check_finite('A', np.broadcast_to(spec.A(X, Y, U_nodes, alpha), grid.shape + (grid.k,)), x=X, y=Y, U=U_nodes, alpha=alpha)

    phi_tilde = phi_data - dt * (F + transport_term(grid, phi_data, A, 0))

    if not evolve_crowd:
        return phi_tilde, U_data, A

    B = check_finite('B', np.broadcast_to(spec.B(X, Y, U_nodes, alpha), grid.shape + (grid.k,)), x=X, y=Y, U=U_nodes, alpha=alpha)
    U_tilde = np.empty_like(U_data)
    for c in range(grid.k):
        component = U_data[c]
        drift = transport_term(grid, component, A, 0) + transport_term(grid, component, alpha, grid.k)
        U_tilde[c] = component + dt * (B[..., c] - drift)
    return phi_tilde, U_tilde, A


def diffusion_stage(spec, grid, phi_tilde, U_tilde, options, evolve_crowd=True):
    phi_new = implicit_diffusion(phi_tilde, grid, spec.nu, spec.rho, explicit=options.explicit_diffusion)
    if evolve_crowd:
        U_new = implicit_diffusion(U_tilde, grid, spec.nu, spec.lam, explicit=options.explicit_diffusion)
    else:
        U_new = U_tilde
    return phi_new, U_new


class StepHooks:
    '''Extension points between the stages of a step; the base class adds nothing.

    ``prepare`` adjusts the initial data. ``before_diffusion`` receives the explicit update and
    ``after_diffusion`` the diffused fields; all three return ``(phi, U)``.'''

    def prepare(self, phi_data, U_data):
        return phi_data, U_data

    def begin(self, state):
        pass

    def before_diffusion(self, state, phi_tilde, U_tilde):
        return phi_tilde, U_tilde

    def after_diffusion(self, state, phi_new, U_new):
        return phi_new, U_new

    def beta(self, phi_data):
        return None

    def excess(self, phi_data):
        return None

    contact = None
    report = None


def _guard_tripped(phi_data, U_data, bound):
    if not (np.all(np.isfinite(phi_data)) and np.all(np.isfinite(U_data))):
        return True
    return max(float(np.max(np.abs(phi_data))), float(np.max(np.abs(U_data)))) > bound


def advance(state, spec, grid, options, hooks=None, evolve_crowd=True):
    '''One step from ``state`` with optional stage hooks. Returns the next state, or ``state``
    itself with the blow-up guard tripped.'''
    hooks = hooks or StepHooks()
    diagnostics = state.diagnostics
    if diagnostics.blowup_tripped:
        return state

    alpha = state.controls.alpha
    passes = 1 + options.inner_iterations
    for i_pass in range(passes):
        hooks.begin(state)
        phi_tilde, U_tilde, A = explicit_stage(spec, grid, state.phi.data, state.U.data, alpha, evolve_crowd)
        phi_tilde, U_tilde = hooks.before_diffusion(state, phi_tilde, U_tilde)
        phi_new, U_new = diffusion_stage(spec, grid, phi_tilde, U_tilde, options, evolve_crowd)
        phi_new, U_new = hooks.after_diffusion(state, phi_new, U_new)

        if _guard_tripped(phi_new, U_new, options.blowup_bound):
            diagnostics.trip(state.t)
            return state

        solution = solve_controls(spec, grid, phi_new, U_new, options, alpha0=alpha)
        if i_pass + 1 < passes:
            alpha = solution.alpha

    courant = courant_number(grid, A, state.controls.alpha)
    if courant > 1.0 and diagnostics.max_courant <= 1.0:
        warnings.warn('transport Courant number {:.3g} exceeds 1 at t = {:g}'.format(courant, state.t), CFLWarning, stacklevel=2)
    diagnostics.max_courant = max(diagnostics.max_courant, courant)
    diagnostics.fp_failures += solution.n_failed

    t_new = (state.step + 1) * grid.dt
    controls = ControlFields(solution.alpha, hooks.beta(phi_new))
    excess = hooks.excess(phi_new)
    diagnostics.record(t_new, np.max(np.abs(phi_new)), np.max(np.abs(U_new)), solution.max_residual, excess)
    return SystemState(
        t_new,
        ScalarField(grid, phi_new),
        CrowdField(grid, U_new),
        controls,
        diagnostics,
        step=state.step + 1,
        contact=hooks.contact,
        report=hooks.report,
    )


def initial_state(spec, grid, options=None, hooks=None, crowd=True):
    '''State at t = 0: phi0, U0 (zero when ``crowd`` is false) and alpha* solved from them.'''
    options = options or SolverOptions()
    hooks = hooks or StepHooks()
    X, Y = grid.nodes()
    phi = check_finite('phi0', np.broadcast_to(spec.phi0(X, Y), grid.shape), x=X, y=Y).copy()
    if crowd:
        U_nodes = check_finite('U0', np.broadcast_to(spec.U0(X, Y), grid.shape + (spec.k,)), x=X, y=Y)
        U = np.ascontiguousarray(np.moveaxis(U_nodes, -1, 0))
    else:
        U = np.zeros((spec.k,) + grid.shape)
    phi, U = hooks.prepare(phi, U)

    solution = solve_controls(spec, grid, phi, U, options)
    diagnostics = RunDiagnostics(horizon=grid.T)
    diagnostics.fp_failures += solution.n_failed
    diagnostics.record(0.0, np.max(np.abs(phi)), np.max(np.abs(U)), solution.max_residual, hooks.excess(phi))
    controls = ControlFields(solution.alpha, hooks.beta(phi))
    return SystemState(0.0, ScalarField(grid, phi), CrowdField(grid, U), controls, diagnostics, contact=hooks.contact)


def step_system(state, spec, grid, options=None):
    '''Advance the coupled system by one time step.'''
    return advance(state, spec, grid, options or SolverOptions())


def run(spec, grid, options=None, hooks=None, crowd=True, label='solve'):
    '''Drive :func:`advance` from t = 0 to T, keeping every ``snapshot_every``-th state, the
    initial one and the last one.'''
    options = options or SolverOptions()
    certify_dt(spec if crowd else myopic_model(spec), grid, options)

    state = initial_state(spec, grid, options, hooks, crowd)
    snapshots = [state]
    n_steps = grid.n_steps
    log.debug('{}: {!r} on {!r}, {:d} steps'.format(label, spec, grid, n_steps))

    for _step in range(n_steps):
        try:
            state = advance(state, spec, grid, options, hooks, evolve_crowd=crowd)
        except (FixedPointError, ModelEvaluationError) as e:
            # partial record for the caller to flush
            e.diagnostics = state.diagnostics
            raise
        except (ValueError, TypeError) as e:
            # a handle that raises mid-solve is a model failure, not a scenario error
            error = ModelEvaluationError(
                'a model handle', {'t': state.t}, 'model evaluation raised {} after t = {:g}: {}'.format(e.__class__.__name__, state.t, e)
            )
            error.diagnostics = state.diagnostics
            raise error from e
        if state.diagnostics.blowup_tripped:
            break
        if state.step % options.snapshot_every == 0:
            snapshots.append(state)
        if options.progress is not None:
            options.progress(state.step, n_steps)

    if snapshots[-1] is not state:
        snapshots.append(state)
    return snapshots


def solve_system(spec, grid, options=None):
    '''Integrate the coupled system from t = 0 to T (or until the blow-up guard trips).
    Returns the list of retained :class:`SystemState` snapshots.'''
    return run(spec, grid, options, label='system')


def solve_myopic(spec, grid, options=None):
    '''Integrate the major player's equation alone with the crowd value frozen at U = 0.'''
    return run(myopic_model(spec), grid, options, crowd=False, label='myopic')
