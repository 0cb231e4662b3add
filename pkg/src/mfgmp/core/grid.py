'''Truncated tensor grids over (x, y) and the finite-difference operators shared by the solvers.

Grid arrays have shape ``(n_x_1, ..., n_x_k, n_y_1, ..., n_y_d)``, x-axes first. Crowd fields
carry a leading component axis, ``(k, *shape)``. Operators that act on "a field" accept
either plain arrays laid out this way or :class:`ScalarField` / :class:`CrowdField` objects.
'''

import logging

import numpy as np
from scipy.linalg import solve_banded

from .textio import CSVReportWriter, read_header

log = logging.getLogger(__name__)


class GridError(ValueError):
    pass


class CFLError(ValueError):
    def __init__(self, dt, dt_max, message=None):
        self.dt = dt
        self.dt_max = dt_max
        if message is None:
            message = 'time step dt = {!r} exceeds the CFL bound dt_max = {!r}'.format(dt, dt_max)
        super().__init__(message)


def _as_vector(value, length, name):
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.ndim != 1:
        raise GridError('{} must be a scalar or a vector'.format(name))
    if arr.size == 1 and length > 1:
        arr = np.repeat(arr, length)
    if arr.size != length:
        raise GridError('{} must have {} entries, not {}'.format(name, length, arr.size))
    return arr


def _as_counts(value, length, name):
    arr = np.atleast_1d(np.asarray(value))
    if arr.size == 1 and length > 1:
        arr = np.repeat(arr, length)
    if arr.size != length or not np.issubdtype(arr.dtype, np.integer):
        raise GridError('{} must be {} positive integers'.format(name, length))
    if np.any(arr < 1):
        raise GridError('{} must be positive'.format(name))
    return tuple(int(n) for n in arr)


class GridSpec:
    '''Tensor grid over the histogram box [x_min, x_max] and the major-state box [y_min, y_max],
    plus the time horizon and step.

    :ivar k, d:     Dimensions of x and y.
    :ivar shape:    Grid array shape (x-axes first).
    :ivar h_x:      Spacing per x-axis; axes with a single node get spacing 1 and no transport.
    :ivar h_y:      Spacing per y-axis.
    '''

    def __init__(self, x_min, x_max, n_x, y_min, y_max, n_y, T, dt, k=None, d=None):
        if k is None:
            k = np.size(n_x) if np.ndim(n_x) else np.size(x_min)
        if d is None:
            d = np.size(n_y) if np.ndim(n_y) else np.size(y_min)
        self.k = int(k)
        self.d = int(d)
        self.x_min = _as_vector(x_min, self.k, 'x_min')
        self.x_max = _as_vector(x_max, self.k, 'x_max')
        self.y_min = _as_vector(y_min, self.d, 'y_min')
        self.y_max = _as_vector(y_max, self.d, 'y_max')
        self.n_x = _as_counts(n_x, self.k, 'n_x')
        self.n_y = _as_counts(n_y, self.d, 'n_y')

        if np.any(self.x_min < 0) or np.any(self.x_min >= self.x_max):
            raise GridError('histogram box requires 0 <= x_min < x_max componentwise')
        if np.any(self.y_min >= self.y_max):
            raise GridError('major-state box requires y_min < y_max componentwise')
        if not (np.isfinite(T) and T > 0):
            raise GridError('horizon T must be positive')
        if not (np.isfinite(dt) and dt > 0):
            raise GridError('time step dt must be positive')
        self.T = float(T)
        self.dt = float(dt)

        self.h_x = np.array([(hi - lo) / (n - 1) if n > 1 else 1.0 for lo, hi, n in zip(self.x_min, self.x_max, self.n_x)])
        self.h_y = np.array([(hi - lo) / (n - 1) if n > 1 else 1.0 for lo, hi, n in zip(self.y_min, self.y_max, self.n_y)])
        self._nodes = None

    def __repr__(self):
        return '<{} k={} d={} n_x={} n_y={} T={!r} dt={!r}>'.format(
            self.__class__.__name__, self.k, self.d, self.n_x, self.n_y, self.T, self.dt
        )

    @classmethod
    def from_config(cls, config, k, d):
        '''Build from the resolved ``grid`` section of a scenario. A missing histogram box
        defaults to [0, 1] in every component.'''
        section = config['grid'] if 'grid' in config else config
        x_min = section['x_min'] if section['x_min'] is not None else 0.0
        x_max = section['x_max'] if section['x_max'] is not None else 1.0
        return cls(x_min, x_max, section['n_x'], section['y_min'], section['y_max'], section['n_y'], section['T'], section['dt'], k=k, d=d)

    @property
    def shape(self):
        return self.n_x + self.n_y

    @property
    def ndim(self):
        return self.k + self.d

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def spacing(self):
        return np.concatenate([self.h_x, self.h_y])

    def x_axis(self, i):
        return np.linspace(self.x_min[i], self.x_max[i], self.n_x[i])

    def y_axis(self, j):
        return np.linspace(self.y_min[j], self.y_max[j], self.n_y[j])

    def nodes(self):
        '''Node coordinates as ``(X, Y)`` with shapes ``(*shape, k)`` and ``(*shape, d)``.'''
        if self._nodes is None:
            axes = [self.x_axis(i) for i in range(self.k)] + [self.y_axis(j) for j in range(self.d)]
            mesh = np.meshgrid(*axes, indexing='ij')
            X = np.stack(mesh[: self.k], axis=-1)
            Y = np.stack(mesh[self.k :], axis=-1)
            X.flags.writeable = False
            Y.flags.writeable = False
            self._nodes = (X, Y)
        return self._nodes

    def replace(self, **kwargs):
        fields = dict(
            x_min=self.x_min, x_max=self.x_max, n_x=self.n_x, y_min=self.y_min, y_max=self.y_max, n_y=self.n_y, T=self.T, dt=self.dt
        )
        fields.update(kwargs)
        return GridSpec(k=self.k, d=self.d, **fields)

    def refined(self):
        '''The next refinement level: every axis with more than one node goes from n to 2n - 1
        nodes (so the coarse nodes are every other fine node) and dt is halved.'''
        n_x = tuple(2 * n - 1 if n > 1 else 1 for n in self.n_x)
        n_y = tuple(2 * n - 1 if n > 1 else 1 for n in self.n_y)
        return self.replace(n_x=n_x, n_y=n_y, dt=self.dt / 2)

    def coarse_slice(self):
        '''Index selecting the nodes of the previous refinement level from a field on this grid.'''
        return tuple(slice(None, None, 2) if n > 1 else slice(None) for n in self.shape)

    def scalar_field(self, data=None):
        if data is None:
            data = np.zeros(self.shape)
        return ScalarField(self, data)

    def crowd_field(self, data=None):
        if data is None:
            data = np.zeros((self.k,) + self.shape)
        return CrowdField(self, data)


class ScalarField:
    '''One real per grid node (the major player's value phi).'''

    def __init__(self, grid, data):
        data = np.asarray(data, dtype=np.float64)
        if data.size == grid.n_nodes and data.shape != grid.shape:
            data = data.reshape(grid.shape)
        if data.shape != grid.shape:
            raise GridError('scalar field has shape {}, grid has {}'.format(data.shape, grid.shape))
        self.grid = grid
        self.data = data

    def __repr__(self):
        return '<{} shape={}>'.format(self.__class__.__name__, self.data.shape)

    @property
    def values(self):
        return self.data.reshape(-1)

    def sup_norm(self):
        return float(np.max(np.abs(self.data)))

    def copy(self):
        return ScalarField(self.grid, self.data.copy())


class CrowdField:
    '''k reals per grid node (the crowd's value U). ``values`` is component-major: all nodes of
    component 0, then all nodes of component 1, and so on.'''

    def __init__(self, grid, data):
        data = np.asarray(data, dtype=np.float64)
        full = (grid.k,) + grid.shape
        if data.size == grid.k * grid.n_nodes and data.shape != full:
            data = data.reshape(full)
        if data.shape != full:
            raise GridError('crowd field has shape {}, grid needs {}'.format(data.shape, full))
        self.grid = grid
        self.data = data

    def __repr__(self):
        return '<{} shape={}>'.format(self.__class__.__name__, self.data.shape)

    @property
    def values(self):
        return self.data.reshape(-1)

    def component(self, i):
        return self.data[i]

    def node_major(self):
        '''View with the component axis last, ``(*shape, k)``, as the model handles expect.'''
        return np.moveaxis(self.data, 0, -1)

    def sup_norm(self):
        return float(np.max(np.abs(self.data)))

    def copy(self):
        return CrowdField(self.grid, self.data.copy())


def _data(field):
    return field.data if isinstance(field, (ScalarField, CrowdField)) else np.asarray(field, dtype=np.float64)


def upwind_grad(field, axis, drift=0.0, h=None):
    '''Upwind first difference of ``field`` along array axis ``axis``.

    Backward difference where ``drift > 0``, forward where ``drift < 0`` and central where it
    vanishes. The first node always uses the forward difference and the last node the
    backward one. ``h`` defaults to the grid spacing when ``field`` is a grid field.
    '''
    values = _data(field)
    if h is None:
        if not isinstance(field, (ScalarField, CrowdField)):
            raise GridError('spacing h is required for plain arrays')
        offset = values.ndim - field.grid.ndim
        h = field.grid.spacing[axis - offset]
    n = values.shape[axis]
    if n < 2:
        return np.zeros_like(values)

    diff = np.diff(values, axis=axis) / h
    first = np.take(diff, [0], axis=axis)
    last = np.take(diff, [n - 2], axis=axis)
    backward = np.concatenate([first, diff], axis=axis)
    forward = np.concatenate([diff, last], axis=axis)
    central = 0.5 * (backward + forward)

    drift = np.broadcast_to(np.asarray(drift, dtype=np.float64), values.shape)
    return np.where(drift > 0, backward, np.where(drift < 0, forward, central))


def gradient_y(field, grid):
    '''Zero-drift gradient in y: central in the interior, one-sided at the box boundary.
    Returns ``(*shape, d)``.'''
    values = _data(field)
    offset = values.ndim - grid.ndim
    return np.stack([upwind_grad(values, offset + grid.k + j, 0.0, grid.h_y[j]) for j in range(grid.d)], axis=-1)


def laplacian_y(field, grid):
    '''Second difference summed over the y-axes with homogeneous Neumann closure (the ghost
    node mirrors the first interior node). x-axes are untouched.'''
    values = _data(field)
    offset = values.ndim - grid.ndim
    result = np.zeros_like(values)
    for j in range(grid.d):
        axis = offset + grid.k + j
        if values.shape[axis] < 3:
            raise GridError('laplacian_y needs at least 3 nodes along every y-axis')
        result += _second_difference(values, axis, grid.h_y[j])
    return result


def _second_difference(values, axis, h):
    u = np.moveaxis(values, axis, 0)
    lap = np.empty_like(u)
    lap[1:-1] = u[:-2] - 2.0 * u[1:-1] + u[2:]
    lap[0] = 2.0 * (u[1] - u[0])
    lap[-1] = 2.0 * (u[-2] - u[-1])
    return np.moveaxis(lap, 0, axis) / h ** 2


def _diffusion_bands(n, a, r):
    ab = np.zeros((3, n))
    ab[0, 1:] = -a
    ab[1, :] = 1.0 + r + 2.0 * a
    ab[2, :-1] = -a
    # Neumann ghost mirrored into the first and last rows
    ab[0, 1] = -2.0 * a
    ab[2, n - 2] = -2.0 * a
    return ab


def implicit_diffusion(field, grid, coeff, reaction=0.0, dt=None, explicit=False):
    '''One backward-Euler step of ``u_t = coeff * lap_y u - reaction * u`` from ``field``.

    Each y-axis is solved in turn as a batch of tridiagonal systems (one per y-line), with
    the reaction folded into the first solve. With ``explicit=True`` the diffusion is taken
    forward instead and only the reaction stays implicit.
    '''
    values = _data(field)
    if dt is None:
        dt = grid.dt
    r = dt * reaction
    if explicit:
        return (values + dt * coeff * laplacian_y(values, grid)) / (1.0 + r)

    offset = values.ndim - grid.ndim
    result = values
    for j in range(grid.d):
        axis = offset + grid.k + j
        n = values.shape[axis]
        rj = r if j == 0 else 0.0
        if n == 1:
            result = result / (1.0 + rj)
            continue
        ab = _diffusion_bands(n, dt * coeff / grid.h_y[j] ** 2, rj)
        moved = np.moveaxis(result, axis, 0)
        solved = solve_banded((1, 1), ab, moved.reshape(n, -1))
        result = np.moveaxis(solved.reshape(moved.shape), 0, axis)
    return np.ascontiguousarray(result)


def diffusion_operator(field, grid, coeff, reaction=0.0, dt=None):
    '''Apply the operator that :func:`implicit_diffusion` inverts: the product over the
    y-axes of ``(1 + r_j) - dt * coeff * D_j``, where ``D_j`` is the Neumann second
    difference along ``y_j`` and only ``r_0 = dt * reaction`` is nonzero. For one y-axis
    this is ``(1 + dt * reaction) - dt * coeff * lap_y``.'''
    values = _data(field)
    if dt is None:
        dt = grid.dt
    offset = values.ndim - grid.ndim
    result = values
    for j in reversed(range(grid.d)):
        axis = offset + grid.k + j
        rj = dt * reaction if j == 0 else 0.0
        if values.shape[axis] == 1:
            result = (1.0 + rj) * result
        else:
            result = (1.0 + rj) * result - dt * coeff * _second_difference(result, axis, grid.h_y[j])
    return result


def transport_rates(grid, A, alpha):
    '''Sum over axes of sup|A_i|/h_xi and sup|alpha_j|/h_yj for node-major ``A`` and ``alpha``.
    x-axes with a single node carry no transport.'''
    A = np.asarray(A)
    alpha = np.asarray(alpha)
    bound_A = sum(float(np.max(np.abs(A[..., i]))) / grid.h_x[i] for i in range(grid.k) if grid.n_x[i] > 1)
    bound_alpha = sum(float(np.max(np.abs(alpha[..., j]))) / grid.h_y[j] for j in range(grid.d))
    return bound_A, bound_alpha


def courant_number(grid, A, alpha, dt=None):
    bound_A, bound_alpha = transport_rates(grid, A, alpha)
    return (dt if dt is not None else grid.dt) * (bound_A + bound_alpha)


def cfl_max_dt(spec, grid, bound_A, bound_alpha, explicit_diffusion=False):
    '''Largest admissible time step for transport rates ``bound_A`` and ``bound_alpha`` (already
    divided by the spacings). Explicit diffusion adds the heat-equation term 2 nu sum 1/h_y^2.
    With nothing to bound, the horizon T is returned.'''
    total = float(bound_A) + float(bound_alpha)
    if explicit_diffusion:
        total += 2.0 * spec.nu * float(np.sum(1.0 / grid.h_y ** 2))
    if total <= 0:
        return grid.T
    return 1.0 / total


def sample_transport_bounds(spec, grid, options=None):
    '''Transport rates of the initial data: A and alpha* evaluated at (x, y, U0, alpha*(phi0)).
    Returns ``(bound_A, bound_alpha, alpha0)`` with ``alpha0`` node-major.'''
    from .fixedpoint import solve_alpha_star
    from .options import SolverOptions

    options = options or SolverOptions()
    X, Y = grid.nodes()
    U0 = np.asarray(spec.U0(X, Y), dtype=np.float64)
    phi0 = np.broadcast_to(spec.phi0(X, Y), grid.shape)
    p = gradient_y(phi0, grid)
    alpha0 = solve_alpha_star(spec, X, Y, U0, p, options.theta, options.tol_fp, options.max_iter, policy=options.fp_policy)
    A = spec.A(X, Y, U0, alpha0)
    bound_A, bound_alpha = transport_rates(grid, A, alpha0)
    return bound_A, bound_alpha, alpha0


def certify_dt(spec, grid, options=None):
    '''Raise CFLError unless the grid's dt satisfies the CFL bound of the initial data.
    Returns dt_max.'''
    from .options import SolverOptions

    options = options or SolverOptions()
    bound_A, bound_alpha, _ = sample_transport_bounds(spec, grid, options)
    dt_max = cfl_max_dt(spec, grid, bound_A, bound_alpha, options.explicit_diffusion)
    if grid.dt > dt_max * (1.0 + 1e-12):
        raise CFLError(grid.dt, dt_max)
    log.debug('CFL certificate: dt = {!r} <= dt_max = {!r}'.format(grid.dt, dt_max))
    return dt_max


def write_field_csv(output_file, grid, t, phi, U):
    '''Write a snapshot: header items describing the grid and time, then one row per node with
    its index, coordinates, phi and the k components of U.'''
    X, Y = grid.nodes()
    phi = _data(phi).reshape(-1)
    U = _data(U).reshape(grid.k, -1)
    writer = output_file if isinstance(output_file, CSVReportWriter) else CSVReportWriter(output_file)
    writer.write_header('k: {:d}'.format(grid.k))
    writer.write_header('d: {:d}'.format(grid.d))
    writer.write_header('n_x: {}'.format(' '.join(str(n) for n in grid.n_x)))
    writer.write_header('n_y: {}'.format(' '.join(str(n) for n in grid.n_y)))
    for name in ('x_min', 'x_max', 'y_min', 'y_max'):
        writer.write_header('{}: {}'.format(name, ' '.join('%.17g' % v for v in getattr(grid, name))))
    writer.write_header('T: %.17g' % grid.T)
    writer.write_header('dt: %.17g' % grid.dt)
    writer.write_header('t: %.17g' % t)
    columns = ['node'] + ['x{}'.format(i + 1) for i in range(grid.k)] + ['y{}'.format(j + 1) for j in range(grid.d)]
    columns += ['phi'] + ['U{}'.format(i + 1) for i in range(grid.k)]
    writer.write_columns(columns)
    Xf = X.reshape(-1, grid.k)
    Yf = Y.reshape(-1, grid.d)
    for node in range(grid.n_nodes):
        writer.write_row([node] + list(Xf[node]) + list(Yf[node]) + [phi[node]] + list(U[:, node]))
    if writer is not output_file:
        writer.close()


def read_field_csv(input_file):
    '''Read a snapshot written by :func:`write_field_csv`. Returns ``(grid, t, phi, U)``.'''
    if hasattr(input_file, 'read'):
        lines = input_file.read().splitlines()
    else:
        with open(input_file, 'rt') as f:
            lines = f.read().splitlines()
    header, body = read_header(lines)
    try:
        k = int(header['k'])
        d = int(header['d'])
        vectors = {name: [float(v) for v in header[name].split()] for name in ('x_min', 'x_max', 'y_min', 'y_max')}
        grid = GridSpec(
            vectors['x_min'],
            vectors['x_max'],
            [int(n) for n in header['n_x'].split()],
            vectors['y_min'],
            vectors['y_max'],
            [int(n) for n in header['n_y'].split()],
            float(header['T']),
            float(header['dt']),
            k=k,
            d=d,
        )
        t = float(header['t'])
    except KeyError as e:
        raise GridError('snapshot header lacks {}'.format(e))
    table = np.loadtxt(body[1:], delimiter=',', ndmin=2)
    if table.shape[0] != grid.n_nodes:
        raise GridError('snapshot has {} rows for {} nodes'.format(table.shape[0], grid.n_nodes))
    phi = ScalarField(grid, table[:, 1 + k + d])
    U = CrowdField(grid, table[:, 2 + k + d :].T.copy())
    return grid, t, phi, U
