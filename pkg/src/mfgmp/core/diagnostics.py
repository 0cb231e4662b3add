import logging

import numpy as np

log = logging.getLogger(__name__)


class RunDiagnostics:
    '''Per-step record of a solve.

    :ivar times:             Time stamp of every completed step (t = 0 included).
    :ivar step_residuals:    Largest fixed-point residual |alpha - d_pF| over the grid, per step.
    :ivar sup_norm_phi:      sup |phi| per step.
    :ivar sup_norm_U:        sup |U| per step.
    :ivar excess:            sup (phi - psi)^+ per step (stopping runs only, else empty).
    :ivar blowup_tripped:    True if the blow-up guard froze the run.
    :ivar effective_horizon: Last time at which the fields were valid.
    :ivar fp_failures:       Number of nodes (summed over steps) where the fixed point was
                             accepted without meeting ``tol_fp``.
    :ivar max_courant:       Largest observed transport Courant number.
    :ivar mass_conserving:   Set by model validation: whether sum_i A_i vanished on samples.
    '''

    def __init__(self, horizon=None):
        self.horizon = horizon
        self.times = []
        self.step_residuals = []
        self.sup_norm_phi = []
        self.sup_norm_U = []
        self.excess = []
        self.blowup_tripped = False
        self.effective_horizon = 0.0
        self.fp_failures = 0
        self.max_courant = 0.0
        self.mass_conserving = None
        self.notes = []

    def __repr__(self):
        return '<{} steps={:d} horizon={!r} blowup={!r} fp_failures={:d}>'.format(
            self.__class__.__name__, len(self.times), self.effective_horizon, self.blowup_tripped, self.fp_failures
        )

    def record(self, t, sup_phi, sup_U, fp_residual, excess=None):
        self.times.append(float(t))
        self.sup_norm_phi.append(float(sup_phi))
        self.sup_norm_U.append(float(sup_U))
        self.step_residuals.append(float(fp_residual))
        if excess is not None:
            self.excess.append(float(excess))
        self.effective_horizon = float(t)

    def trip(self, t):
        log.warning('blow-up guard tripped after t = {:g}; fields frozen'.format(t))
        self.blowup_tripped = True
        self.effective_horizon = float(t)

    def window_max(self, series, t1, t2=None):
        '''Largest entry of ``series`` (one of the per-step lists) over steps with t1 <= t <= t2.'''
        times = np.asarray(self.times)
        values = np.asarray(series, dtype=np.float64)
        mask = times >= t1 - 1e-12
        if t2 is not None:
            mask &= times <= t2 + 1e-12
        if not mask.any():
            return np.nan
        return float(values[mask].max())

    def rows(self):
        for i, t in enumerate(self.times):
            yield (t, self.sup_norm_phi[i], self.sup_norm_U[i], self.step_residuals[i])

    def write_csv(self, writer):
        '''Write the per-step record through a ``textio.CSVReportWriter``.'''
        writer.write_header('blowup_tripped:    {}'.format(self.blowup_tripped))
        writer.write_header('effective_horizon: {!r}'.format(self.effective_horizon))
        writer.write_header('fp_failures:       {:d}'.format(self.fp_failures))
        writer.write_columns(['t', 'sup_phi', 'sup_U', 'fp_residual_max'])
        for row in self.rows():
            writer.write_row(row)
