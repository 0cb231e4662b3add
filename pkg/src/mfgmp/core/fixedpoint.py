'''Per-node Nash controls: the major player's alpha* = d_pF(x, y, U, p, alpha*) and the
bang-bang stopping intensity beta*.

The Picard iteration runs on all nodes at once; nodes leave the active set as soon as their
residual drops below ``tol_fp``, so each node sees exactly the scalar iteration it would
see on its own.
'''

import logging
import warnings

import numpy as np
from scipy import optimize

from .model import eval_gradpF

log = logging.getLogger(__name__)

#: damping used once oscillation is detected
FALLBACK_THETA = 0.1

#: number of recent iterations inspected for non-monotone residuals
OSCILLATION_WINDOW = 5


class FixedPointError(RuntimeError):
    def __init__(self, residual, n_iter, message=None):
        self.residual = residual
        self.n_iter = n_iter
        if message is None:
            message = 'fixed point for alpha* not reached after {:d} iterations (residual {:.6g})'.format(n_iter, residual)
        super().__init__(message)


class FixedPointWarning(UserWarning):
    pass


class ControlFields:
    '''Equilibrium controls on the grid.

    :ivar alpha: alpha* per node, node-major ``(*shape, d)``.
    :ivar beta:  beta* per node ``(*shape)``; None outside stopping runs.
    '''

    def __init__(self, alpha, beta=None):
        self.alpha = alpha
        self.beta = beta

    def __repr__(self):
        return '<{} alpha{} beta={}>'.format(
            self.__class__.__name__, np.shape(self.alpha), None if self.beta is None else np.shape(self.beta)
        )

    def copy(self):
        return ControlFields(np.array(self.alpha), None if self.beta is None else np.array(self.beta))


class AlphaSolution:
    '''Outcome of a vectorized fixed-point solve.

    :ivar alpha:    alpha* with the broadcast node shape plus a trailing d axis.
    :ivar residual: |alpha - d_pF(alpha)| per node.
    :ivar n_iter:   Iterations taken by the slowest node.
    :ivar n_failed: Nodes accepted without meeting the tolerance (``warn`` policy).
    '''

    def __init__(self, alpha, residual, n_iter, n_failed=0):
        self.alpha = alpha
        self.residual = residual
        self.n_iter = n_iter
        self.n_failed = n_failed

    @property
    def max_residual(self):
        return float(np.max(self.residual)) if np.size(self.residual) else 0.0


def _oscillating(history):
    if len(history) < OSCILLATION_WINDOW + 1:
        return False
    recent = np.asarray(history[-(OSCILLATION_WINDOW + 1) :])
    return bool(np.any(np.diff(recent) > 0))


def _bisect_scalar(spec, x, y, U, p, alpha, tol_fp, max_iter):
    '''Root of alpha - d_pF(..., alpha) for d = 1 by bracket expansion and bisection.'''

    def gap(a):
        return a - float(eval_gradpF(spec, x, y, U, p, np.array([a]))[0])

    center = float(alpha[0])
    width = max(1.0, abs(center))
    for _ in range(60):
        lo, hi = center - width, center + width
        g_lo, g_hi = gap(lo), gap(hi)
        if g_lo == 0:
            return np.array([lo])
        if g_hi == 0:
            return np.array([hi])
        if np.sign(g_lo) != np.sign(g_hi):
            root = optimize.bisect(gap, lo, hi, xtol=tol_fp * 1e-2, maxiter=max(max_iter, 200))
            return np.array([root])
        width *= 2.0
    return None


def picard_alpha(spec, x, y, U, p, theta=0.5, tol_fp=1e-10, max_iter=200, alpha0=None, policy='abort'):
    '''Damped Picard iteration alpha <- (1 - theta) alpha + theta d_pF(x, y, U, p, alpha) on every
    node of the broadcast inputs. Returns an :class:`AlphaSolution`.'''

    x, y, U, p = (np.asarray(arr, dtype=np.float64) for arr in (x, y, U, p))
    k, d = x.shape[-1], p.shape[-1]
    batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], U.shape[:-1], p.shape[:-1])
    xf = np.broadcast_to(x, batch + (k,)).reshape(-1, k)
    yf = np.broadcast_to(y, batch + (y.shape[-1],)).reshape(-1, y.shape[-1])
    Uf = np.broadcast_to(U, batch + (U.shape[-1],)).reshape(-1, U.shape[-1])
    pf = np.broadcast_to(p, batch + (d,)).reshape(-1, d)
    n_nodes = pf.shape[0]

    if alpha0 is None:
        alpha = np.zeros((n_nodes, d))
    else:
        alpha = np.array(np.broadcast_to(alpha0, batch + (d,)), dtype=np.float64).reshape(-1, d)

    residual = np.full(n_nodes, np.inf)
    active = np.ones(n_nodes, dtype=bool)
    history = []
    damping = theta
    n_iter = 0

    while active.any() and n_iter < max_iter:
        n_iter += 1
        idx = np.flatnonzero(active)
        g = eval_gradpF(spec, xf[idx], yf[idx], Uf[idx], pf[idx], alpha[idx])
        res = np.linalg.norm(alpha[idx] - g, axis=-1)
        residual[idx] = res
        done = res <= tol_fp
        active[idx[done]] = False
        moving = idx[~done]
        alpha[moving] = (1.0 - damping) * alpha[moving] + damping * g[~done]

        history.append(float(res.max()))
        if damping > FALLBACK_THETA and _oscillating(history):
            log.debug('fixed-point residual oscillates after {:d} iterations; damping theta -> {}'.format(n_iter, FALLBACK_THETA))
            damping = FALLBACK_THETA
            history = []

    n_failed = 0
    if active.any():
        # the last pass updated alpha on these nodes; measure the residual of what is returned
        idx = np.flatnonzero(active)
        g = eval_gradpF(spec, xf[idx], yf[idx], Uf[idx], pf[idx], alpha[idx])
        residual[idx] = np.linalg.norm(alpha[idx] - g, axis=-1)
        still = idx[residual[idx] > tol_fp]
        worst = float(residual[still].max()) if still.size else 0.0

        if still.size and policy == 'bisect':
            if d != 1:
                raise FixedPointError(worst, n_iter, 'bisection fallback requires d = 1 (d = {:d}); residual {:.6g}'.format(d, worst))
            for node in still:
                root = _bisect_scalar(spec, xf[node], yf[node], Uf[node], pf[node], alpha[node], tol_fp, max_iter)
                if root is None:
                    raise FixedPointError(float(residual[node]), n_iter, 'no sign change bracketing alpha* at node {:d}'.format(node))
                alpha[node] = root
            g = eval_gradpF(spec, xf[still], yf[still], Uf[still], pf[still], alpha[still])
            residual[still] = np.linalg.norm(alpha[still] - g, axis=-1)
            log.debug('bisection fallback resolved {:d} nodes'.format(still.size))
        elif still.size and policy == 'warn':
            n_failed = int(still.size)
            warnings.warn(
                'alpha* accepted at {:d} nodes without convergence (worst residual {:.6g})'.format(n_failed, worst),
                FixedPointWarning,
                stacklevel=2,
            )
        elif still.size:
            raise FixedPointError(worst, n_iter)

    return AlphaSolution(alpha.reshape(batch + (d,)), residual.reshape(batch), n_iter, n_failed)


def solve_alpha_star(spec, x, y, U, p, theta=0.5, tol_fp=1e-10, max_iter=200, alpha0=None, policy='abort'):
    '''Solve alpha* = d_pF(x, y, U, p, alpha*) by damped Picard iteration from ``alpha0`` (zero
    when not given). Accepts a single node or any broadcastable batch of nodes.'''
    return picard_alpha(spec, x, y, U, p, theta, tol_fp, max_iter, alpha0, policy).alpha


def compute_beta_star(phi, psi_values, epsilon, tie_tol=1e-12):
    '''Bang-bang stopping intensity: 1/epsilon where phi - psi > tie_tol, zero elsewhere
    (the tie band included).'''
    if not epsilon > 0:
        raise ValueError('epsilon must be positive')
    phi = phi.data if hasattr(phi, 'data') else np.asarray(phi, dtype=np.float64)
    gap = phi - np.asarray(psi_values, dtype=np.float64)
    return np.where(gap > tie_tol, 1.0 / epsilon, 0.0)


def sample_multiplicity(spec, x, y, U, p, n_seeds=5, scale=1.0, seed=0, theta=0.5, tol_fp=1e-10, max_iter=200):
    '''Solve the fixed point from zero and from ``n_seeds - 1`` random starting points.

    Returns ``(roots, spread)``: the roots found from each start (nan where a start did not
    converge) and the largest distance between roots per node. A spread well above
    ``tol_fp`` suggests several fixed points.'''
    p = np.asarray(p, dtype=np.float64)
    batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1], np.shape(U)[:-1], p.shape[:-1])
    d = p.shape[-1]
    rng = np.random.default_rng(seed)
    starts = [np.zeros(batch + (d,))] + [scale * rng.standard_normal(batch + (d,)) for _ in range(n_seeds - 1)]

    roots = []
    for start in starts:
        try:
            roots.append(solve_alpha_star(spec, x, y, U, p, theta, tol_fp, max_iter, alpha0=start))
        except FixedPointError as e:
            log.debug('multiplicity check: start did not converge ({})'.format(e))
            roots.append(np.full(batch + (d,), np.nan))
    roots = np.stack(roots)

    spread = np.zeros(batch)
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            spread = np.fmax(spread, np.linalg.norm(roots[i] - roots[j], axis=-1))
    if np.nanmax(spread) > 1e3 * tol_fp:
        log.warning('alpha* depends on the starting point (spread {:.3g}); the fixed point may not be unique'.format(np.nanmax(spread)))
    return roots, spread
