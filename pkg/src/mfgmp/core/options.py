import logging

from .yamlcfg import FP_POLICIES, SCENARIO_SCHEMA, ConfigValueError

log = logging.getLogger(__name__)


class SolverOptions:
    '''Numerical settings shared by every solver.

    :ivar tol_fp:             Fixed-point residual tolerance for alpha*.
    :ivar theta:              Picard damping factor in (0, 1].
    :ivar max_iter:           Iteration cap of the fixed-point solve.
    :ivar tie_tol:            Half-width of the band |phi - psi| <= tie_tol on which beta* = 0.
    :ivar fp_policy:          ``'abort'``, ``'warn'`` or ``'bisect'`` on fixed-point failure.
    :ivar inner_iterations:   Extra self-consistency passes for alpha* inside each step.
    :ivar snapshot_every:     Steps between retained snapshots (the final state is always kept).
    :ivar blowup_bound:       Sup-norm above which a run is frozen.
    :ivar t1:                 Start of the norm window of the limit sweeps (None: 0.1 T).
    :ivar explicit_diffusion: Take the y-diffusion forward in time instead of implicitly.
    :ivar scheme_tol:         Scheme tolerance estimate; the contact tolerance is ten times this.
    :ivar compat_tol:         Warning threshold of the post-stop crowd cost compatibility check.
    '''

    _fields = tuple(SCENARIO_SCHEMA['solver'])

    def __init__(self, **kwargs):
        for name in self._fields:
            setattr(self, name, SCENARIO_SCHEMA['solver'][name].default)
        self.progress = None
        self.update(**kwargs)

    def __repr__(self):
        return '{}({})'.format(self.__class__.__name__, ', '.join('{}={!r}'.format(name, getattr(self, name)) for name in self._fields))

    def update(self, **kwargs):
        for name, value in kwargs.items():
            if name != 'progress' and name not in self._fields:
                raise TypeError('unknown solver option {!r}'.format(name))
            setattr(self, name, value)
        self.check()
        return self

    def replace(self, **kwargs):
        clone = SolverOptions(**{name: getattr(self, name) for name in self._fields})
        clone.progress = self.progress
        return clone.update(**kwargs)

    def check(self):
        if not 0 < self.theta <= 1:
            raise ConfigValueError(('solver', 'theta'), self.theta, 'damping theta must lie in (0, 1]')
        if not self.tol_fp > 0:
            raise ConfigValueError(('solver', 'tol_fp'), self.tol_fp, 'tol_fp must be positive')
        if self.max_iter < 1:
            raise ConfigValueError(('solver', 'max_iter'), self.max_iter, 'max_iter must be positive')
        if self.tie_tol < 0:
            raise ConfigValueError(('solver', 'tie_tol'), self.tie_tol, 'tie_tol must be nonnegative')
        if self.fp_policy not in FP_POLICIES:
            raise ConfigValueError(('solver', 'fp_policy'), self.fp_policy)
        if self.snapshot_every < 1:
            raise ConfigValueError(('solver', 'snapshot_every'), self.snapshot_every, 'snapshot_every must be positive')
        if self.inner_iterations < 0:
            raise ConfigValueError(('solver', 'inner_iterations'), self.inner_iterations, 'inner_iterations must be nonnegative')
        if not self.blowup_bound > 0:
            raise ConfigValueError(('solver', 'blowup_bound'), self.blowup_bound, 'blowup_bound must be positive')

    @classmethod
    def from_config(cls, config):
        section = config['solver'] if 'solver' in config else config
        return cls(**{name: section[name] for name in cls._fields if name in section})

    def window_start(self, T):
        return 0.1 * T if self.t1 is None else self.t1

    @property
    def contact_tol(self):
        return 10.0 * self.scheme_tol
