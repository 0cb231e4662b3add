import logging

from .core import WorkManager, WMFuture

log = logging.getLogger(__name__)


class SerialWorkManager(WorkManager):
    '''Runs each task in the calling thread as soon as it is submitted. This is the work
    manager of one-worker runs and of library calls that are given none.'''

    @classmethod
    def from_environ(cls, wmenv):
        return cls()

    def submit(self, fn, args=(), label=None):
        future = WMFuture(label)
        future.run(fn, args)
        return future
