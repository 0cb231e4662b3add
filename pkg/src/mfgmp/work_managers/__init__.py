'''Execution of independent tasks (sweep member solves, Monte Carlo chunks) on one thread or
a pool of threads.'''

from .core import WorkManager, WMFuture
from .serial import SerialWorkManager
from .threads import ThreadsWorkManager

_available_work_managers = {'serial': SerialWorkManager, 'threads': ThreadsWorkManager}

from . import environment  # noqa: E402
from .environment import WorkManagerConfigError  # noqa: E402

__all__ = [
    'SerialWorkManager',
    'ThreadsWorkManager',
    'WorkManager',
    'WMFuture',
    'WorkManagerConfigError',
    'environment',
]
