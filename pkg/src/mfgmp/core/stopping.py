'''Optimal stopping by the major player.

The penalized system adds the stopping intensity beta* = 1/epsilon on {phi > psi} to the
major player's equation, -beta* (phi - psi)^+, and lets the crowd face the post-stop cost
Ubar at the same rate, -beta* (U - Ubar). Both terms are taken implicitly node by node, so
epsilon may be far below dt.

The obstacle (epsilon -> 0) system is solved by projection: each unconstrained step is cut
back to phi <= psi, and where the cut is active the crowd value is set to Ubar.
'''

import logging
import warnings

import numpy as np

from .evolution import StepHooks, advance, initial_state, run, solve_controls, transport_term
from .fixedpoint import compute_beta_star
from .grid import ScalarField, diffusion_operator, laplacian_y
from .model import check_finite
from .options import SolverOptions

log = logging.getLogger(__name__)


class CompatibilityWarning(UserWarning):
    pass


class ObstacleReport:
    '''Complementarity diagnostics of an obstacle solve at one time.

    :ivar t:                       Time of the report (None when not tied to a step).
    :ivar contact_set:             Nodes with |phi - psi| <= tol_c.
    :ivar complementarity_residual: |max(phi - psi, pde_residual)| per node.
    :ivar max_violation:           Largest complementarity residual.
    :ivar obstacle_violation:      Largest (phi - psi)^+.
    :ivar off_contact_violation:   Largest residual over nodes neither in nor next to the contact set.
    :ivar region_boundary_nodes:   Flat indices of contact nodes with a non-contact neighbor.
    :ivar tol_c:                   Contact tolerance.
    :ivar penalized_gap:           sup |phi_obstacle - phi_penalized| when cross-checked, else None.
    :ivar mixed_strategy_suspect:  True when the cross-check gap exceeds 10 epsilon.
    '''

    def __init__(
        self, contact_set, complementarity_residual, region_boundary_nodes, obstacle_violation, off_contact_violation, tol_c, t=None
    ):
        self.contact_set = contact_set
        self.complementarity_residual = complementarity_residual
        self.max_violation = float(np.max(complementarity_residual)) if np.size(complementarity_residual) else 0.0
        self.obstacle_violation = obstacle_violation
        self.off_contact_violation = off_contact_violation
        self.region_boundary_nodes = region_boundary_nodes
        self.tol_c = tol_c
        self.t = t
        self.penalized_gap = None
        self.mixed_strategy_suspect = None

    def __repr__(self):
        return '<{} t={!r} contact={:.3%} max_violation={:.3g}>'.format(
            self.__class__.__name__, self.t, self.contact_fraction, self.max_violation
        )

    @property
    def contact_fraction(self):
        return float(np.mean(self.contact_set)) if np.size(self.contact_set) else 0.0

    def write_csv(self, writer, grid=None):
        '''One row per node (index, coordinates when ``grid`` is given, contact flag, residual)
        and a summary footer.'''
        if self.t is not None:
            writer.write_header('t: %.17g' % self.t)
        writer.write_header('tol_c: %.17g' % self.tol_c)
        if self.penalized_gap is not None:
            writer.write_header('penalized_gap: %.17g' % self.penalized_gap)
            writer.write_header('mixed_strategy_suspect: {}'.format(self.mixed_strategy_suspect))

        contact = np.asarray(self.contact_set).reshape(-1)
        residual = np.asarray(self.complementarity_residual).reshape(-1)
        columns = ['node']
        coords = None
        if grid is not None:
            X, Y = grid.nodes()
            coords = np.concatenate([X.reshape(-1, grid.k), Y.reshape(-1, grid.d)], axis=1)
            columns += ['x{}'.format(i + 1) for i in range(grid.k)] + ['y{}'.format(j + 1) for j in range(grid.d)]
        writer.write_columns(columns + ['contact', 'residual'])
        for node in range(contact.size):
            row = [node]
            if coords is not None:
                row += list(coords[node])
            writer.write_row(row + [bool(contact[node]), residual[node]])
        writer.write_footer(
            'max_violation: {!r} obstacle_violation: {!r} off_contact_violation: {!r} contact_fraction: {!r}'.format(
                self.max_violation, self.obstacle_violation, self.off_contact_violation, self.contact_fraction
            )
        )


def _neighbors_differ(mask):
    '''Nodes of ``mask`` with at least one neighbor (along any axis) outside it.'''
    edge = np.zeros_like(mask)
    for axis in range(mask.ndim):
        if mask.shape[axis] < 2:
            continue
        fwd = np.diff(mask.astype(np.int8), axis=axis) != 0
        pad_lo = [(0, 0)] * mask.ndim
        pad_hi = [(0, 0)] * mask.ndim
        pad_lo[axis] = (1, 0)
        pad_hi[axis] = (0, 1)
        edge |= np.pad(fwd, pad_lo) | np.pad(fwd, pad_hi)
    return edge & mask


def _dilate(mask):
    grown = mask.copy()
    for axis in range(mask.ndim):
        if mask.shape[axis] < 2:
            continue
        shifted = np.zeros_like(mask)
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        shifted[tuple(lo)] |= mask[tuple(hi)]
        shifted[tuple(hi)] |= mask[tuple(lo)]
        grown |= shifted
    return grown


def complementarity_residual(phi, psi_values, pde_residual, tol_c=1e-9, t=None):
    '''Residual |max(phi - psi, pde_residual)| of the obstacle problem per node, with the contact
    set {|phi - psi| <= tol_c}.'''
    phi = phi.data if hasattr(phi, 'data') else np.asarray(phi, dtype=np.float64)
    gap = phi - np.asarray(psi_values, dtype=np.float64)
    pde_residual = np.broadcast_to(np.asarray(pde_residual, dtype=np.float64), gap.shape)
    residual = np.abs(np.maximum(gap, pde_residual))
    contact = np.abs(gap) <= tol_c

    near = _dilate(contact) if contact.ndim else contact
    off = ~near
    off_violation = float(np.max(residual[off])) if np.any(off) else 0.0
    boundary = np.flatnonzero(_neighbors_differ(contact)) if contact.ndim else np.array([], dtype=int)
    obstacle_violation = float(np.max(np.maximum(gap, 0.0))) if gap.size else 0.0
    return ObstacleReport(contact, residual, boundary, obstacle_violation, off_violation, tol_c, t=t)


def phi_operator_residual(spec, grid, phi_new, phi_explicit, dt=None, explicit=False):
    '''The diffusion stage of the discrete phi-operator applied to ``phi_new``, minus
    ``phi_explicit`` (the explicit stage of the same step), over dt. The stage operator is
    the one the step inverts: the y-axis split product of :func:`diffusion_operator`, or
    with ``explicit=True`` an implicit reaction after forward diffusion of ``phi_explicit``.
    Zero wherever phi_new is the unconstrained update.'''
    dt = grid.dt if dt is None else dt
    phi_new = phi_new.data if isinstance(phi_new, ScalarField) else np.asarray(phi_new, dtype=np.float64)
    if explicit:
        applied = (1.0 + spec.rho * dt) * phi_new - dt * spec.nu * laplacian_y(phi_explicit, grid)
    else:
        applied = diffusion_operator(phi_new, grid, spec.nu, spec.rho, dt)
    return (applied - phi_explicit) / dt


def evaluate_stopping(stop, grid, k):
    '''psi on the grid ``(*shape)`` and Ubar component-major ``(k, *shape)``.'''
    X, Y = grid.nodes()
    psi = check_finite('psi', np.broadcast_to(stop.psi(X, Y), grid.shape), x=X, y=Y)
    Ubar = check_finite('Ubar', np.broadcast_to(stop.Ubar(X, Y), grid.shape + (k,)), x=X, y=Y)
    return np.array(psi), np.ascontiguousarray(np.moveaxis(Ubar, -1, 0))


class PenaltyHooks(StepHooks):
    '''Stage hooks of the penalized system.'''

    def __init__(self, stop, grid, k, options):
        self.epsilon = stop.epsilon
        self.tie_tol = options.tie_tol
        self.dt = grid.dt
        self.psi, self.Ubar = evaluate_stopping(stop, grid, k)
        self._beta = None

    def begin(self, state):
        self._beta = compute_beta_star(state.phi.data, self.psi, self.epsilon, self.tie_tol)

    def before_diffusion(self, state, phi_tilde, U_tilde):
        rate = self.dt * self._beta
        stopped = phi_tilde > self.psi
        phi_pen = np.where(stopped, (phi_tilde + rate * self.psi) / (1.0 + rate), phi_tilde)
        U_pen = (U_tilde + rate * self.Ubar) / (1.0 + rate)
        return phi_pen, U_pen

    def beta(self, phi_data):
        return compute_beta_star(phi_data, self.psi, self.epsilon, self.tie_tol)

    def excess(self, phi_data):
        return float(np.max(np.maximum(phi_data - self.psi, 0.0)))


class ProjectionHooks(StepHooks):
    '''Stage hooks of the obstacle system: project onto phi <= psi after every step.'''

    def __init__(self, spec, stop, grid, options):
        self.spec = spec
        self.grid = grid
        self.tol_c = options.contact_tol
        self.explicit = options.explicit_diffusion
        self.psi, self.Ubar = evaluate_stopping(stop, grid, spec.k)
        self._phi_explicit = None

    def _in_contact(self, phi):
        # same contact set as complementarity_residual once phi <= psi
        return phi >= self.psi - self.tol_c

    def _project(self, phi, U, active):
        phi = np.minimum(phi, self.psi)
        U = np.where(active, self.Ubar, U)
        self.contact = active
        return phi, U

    def prepare(self, phi_data, U_data):
        return self._project(phi_data, U_data, self._in_contact(phi_data))

    def before_diffusion(self, state, phi_tilde, U_tilde):
        self._phi_explicit = phi_tilde
        return phi_tilde, U_tilde

    def after_diffusion(self, state, phi_new, U_new):
        phi, U = self._project(phi_new, U_new, self._in_contact(phi_new))
        pde = phi_operator_residual(self.spec, self.grid, phi, self._phi_explicit, explicit=self.explicit)
        self.report = complementarity_residual(phi, self.psi, pde, self.tol_c, t=(state.step + 1) * self.grid.dt)
        return phi, U

    def excess(self, phi_data):
        return float(np.max(np.maximum(phi_data - self.psi, 0.0)))


def step_penalized(state, spec, grid, stop, options=None):
    '''Advance the penalized system by one time step.'''
    options = options or SolverOptions()
    return advance(state, spec, grid, options, PenaltyHooks(stop, grid, spec.k, options))


def solve_penalized(spec, grid, stop, options=None):
    '''Integrate the penalized system from t = 0 to T. Returns ``(snapshots, diagnostics)``;
    ``diagnostics.excess`` holds sup (phi - psi)^+ per step.'''
    options = options or SolverOptions()
    hooks = PenaltyHooks(stop, grid, spec.k, options)
    snapshots = run(spec, grid, options, hooks=hooks, label='penalized (epsilon={!r})'.format(stop.epsilon))
    return snapshots, snapshots[-1].diagnostics


def solve_obstacle(spec, grid, stop, options=None, cross_check_epsilon=None):
    '''Integrate the obstacle system by projection. Returns ``(snapshots, report)`` where
    ``report`` is the final :class:`ObstacleReport`; every later snapshot carries its own.

    With ``cross_check_epsilon`` the penalized system is solved too and the final sup-distance
    between the two phi fields goes into the report.'''
    options = options or SolverOptions()
    hooks = ProjectionHooks(spec, stop, grid, options)
    snapshots = run(spec, grid, options, hooks=hooks, label='obstacle')
    final = snapshots[-1]
    report = final.report
    if report is None:
        # no step was taken
        report = complementarity_residual(final.phi, hooks.psi, 0.0, hooks.tol_c, t=final.t)

    if cross_check_epsilon is not None:
        penalized, _diagnostics = solve_penalized(spec, grid, stop.with_epsilon(cross_check_epsilon), options)
        report.penalized_gap = float(np.max(np.abs(penalized[-1].phi.data - final.phi.data)))
        report.mixed_strategy_suspect = bool(report.penalized_gap > 10.0 * cross_check_epsilon)
        if report.mixed_strategy_suspect:
            log.warning(
                'obstacle and penalized (epsilon={!r}) solutions differ by {:.3g}; '
                'the limit may involve a mixed stopping strategy'.format(cross_check_epsilon, report.penalized_gap)
            )
    log.info('obstacle solve: contact fraction {:.3%}, max complementarity residual {:.3g}'.format(report.contact_fraction, report.max_violation))
    return snapshots, report


def ubar_compatibility(spec, grid, stop, options=None):
    '''sup-norm of the crowd equation's steady residual with U frozen at Ubar and alpha* solved
    from phi0: B - (A . grad_x) Ubar - alpha* . grad_y Ubar + nu lap_y Ubar - lambda Ubar.
    Issues a CompatibilityWarning above ``options.compat_tol``.'''
    options = options or SolverOptions()
    X, Y = grid.nodes()
    _psi, Ubar = evaluate_stopping(stop, grid, spec.k)
    state = initial_state(spec, grid, options)
    alpha = solve_controls(spec, grid, state.phi.data, Ubar, options).alpha

    U_nodes = np.moveaxis(Ubar, 0, -1)
    A = check_finite('A', np.broadcast_to(spec.A(X, Y, U_nodes, alpha), grid.shape + (grid.k,)), x=X, y=Y, U=U_nodes, alpha=alpha)
    B = check_finite('B', np.broadcast_to(spec.B(X, Y, U_nodes, alpha), grid.shape + (grid.k,)), x=X, y=Y, U=U_nodes, alpha=alpha)
    residual = np.empty_like(Ubar)
    for c in range(spec.k):
        component = Ubar[c]
        transport = transport_term(grid, component, A, 0) + transport_term(grid, component, alpha, grid.k)
        residual[c] = B[..., c] - transport + spec.nu * laplacian_y(component, grid) - spec.lam * component

    value = float(np.max(np.abs(residual)))
    if value > options.compat_tol:
        warnings.warn(
            'post-stop crowd cost Ubar leaves a steady residual {:.3g} > {:g} in the crowd equation'.format(value, options.compat_tol),
            CompatibilityWarning,
            stacklevel=2,
        )
    return value


__all__ = [
    'CompatibilityWarning',
    'ObstacleReport',
    'complementarity_residual',
    'phi_operator_residual',
    'solve_obstacle',
    'solve_penalized',
    'step_penalized',
    'ubar_compatibility',
]
