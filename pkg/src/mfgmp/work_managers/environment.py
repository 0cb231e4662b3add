'''Work manager selection from the command line and the environment.'''

import os

from . import _available_work_managers


class WorkManagerConfigError(ValueError):
    pass


class WMEnvironment:
    '''Where work managers take their settings from, in order of precedence:
      1. command-line arguments (``--workers``, ``--work-manager``)
      2. environment variables (``MFGMP_WORKERS``, ``MFGMP_WORK_MANAGER``)
      3. defaults (one worker, which selects the serial work manager)
    '''

    group_title = 'parallelization options'
    env_prefix = 'MFGMP'

    default_work_manager = 'serial'
    default_parallel_work_manager = 'threads'

    def __init__(self, environ=None):
        self.environ = os.environ if environ is None else environ
        self.args = None
        self.valid_work_managers = list(_available_work_managers)

    def env_name(self, name):
        return '{}_{}'.format(self.env_prefix, name.upper())

    def get_val(self, name, default=None, type_=None):
        val = getattr(self.args, name, None)
        if val is None:
            val = self.environ.get(self.env_name(name), default)
        if type_ is None or val is None:
            return val
        try:
            return type_(val)
        except ValueError as e:
            raise WorkManagerConfigError('{}: cannot convert {!r} to {}: {!s}'.format(self.env_name(name), val, type_.__name__, e))

    def n_workers(self):
        n = self.get_val('workers', 1, int)
        if n < 1:
            raise WorkManagerConfigError('number of workers must be positive, not {}'.format(n))
        return n

    def add_wm_args(self, parser):
        wm_group = parser.add_argument_group(self.group_title)
        wm_group.add_argument(
            '--workers',
            metavar='N_WORKERS',
            type=int,
            help='''Run independent solves and Monte Carlo chunks on N_WORKERS threads
                    (default: ${} or 1).'''.format(self.env_name('workers')),
        )
        wm_group.add_argument(
            '--work-manager',
            dest='work_manager',
            choices=self.valid_work_managers,
            help='''Use the given work manager; by default {!r} for one worker and {!r}
                    otherwise.'''.format(self.default_work_manager, self.default_parallel_work_manager),
        )

    def process_wm_args(self, args):
        self.args = args

    def make_work_manager(self):
        name = (self.get_val('work_manager', '') or '').lower()
        if not name:
            name = self.default_work_manager if self.n_workers() == 1 else self.default_parallel_work_manager
        if name not in self.valid_work_managers:
            raise WorkManagerConfigError(
                'work manager {!r} is unknown (choices: {})'.format(name, ', '.join(self.valid_work_managers))
            )
        return _available_work_managers[name].from_environ(self)


default_env = WMEnvironment()
