#
# The future objects follow the design of the ``concurrent.futures`` module of
# Python 3.2, by Brian Quinlan, (C) 2011 the Python Software Foundation.
# See http://docs.python.org/3/license.html for more information.

import logging
import threading

log = logging.getLogger(__name__)


class WorkManager:
    '''Base class of the work managers that run the independent pieces of a computation:
    the member solves of a sweep, the chunks of a particle simulation.

    A task is a triple ``(label, fn, args)``; the label names the piece of work (for a sweep
    member, its parameter) in the log and on its future. Results are always collected in
    submission order, so a computation assembled from several tasks does not depend on
    which worker finishes first.'''

    @classmethod
    def from_environ(cls, wmenv):
        raise NotImplementedError

    def __init__(self):
        self.running = False
        self.n_workers = 1

    def __repr__(self):
        return '<{} n_workers={:d}>'.format(self.__class__.__name__, self.n_workers)

    def __enter__(self):
        self.startup()
        return self

    def __exit__(self, exc_type, exc_val, exc_traceback):
        self.shutdown()
        return False

    def startup(self):
        self.running = True

    def shutdown(self):
        self.running = False

    def submit(self, fn, args=(), label=None):
        '''Schedule ``fn(*args)`` and return a :class:`WMFuture` for its result.'''
        raise NotImplementedError

    def submit_many(self, tasks):
        return [self.submit(fn, args, label) for (label, fn, args) in tasks]

    def wait_all(self, futures):
        '''Results of ``futures`` in the order given. The first task (in that order) that
        raised re-raises here; the tasks after it still run to completion.'''
        return [future.get_result() for future in futures]


class WMFuture:
    '''The pending result of one task.

    :ivar label: The label the task was submitted with.
    '''

    def __init__(self, label=None):
        self.label = label
        self._condition = threading.Condition()
        self._done = False
        self._result = None
        self._exception = None

    def __repr__(self):
        return '<WMFuture {!r} done={}>'.format(self.label, self._done)

    def _set_result(self, result):
        with self._condition:
            self._result = result
            self._done = True
            self._condition.notify_all()

    def _set_exception(self, exception):
        log.debug('task {!r} raised {}: {}'.format(self.label, exception.__class__.__name__, exception))
        with self._condition:
            self._exception = exception
            self._done = True
            self._condition.notify_all()

    def run(self, fn, args):
        '''Run the task in the calling thread and record its outcome here.'''
        try:
            result = fn(*args)
        except Exception as e:
            self._set_exception(e)
        else:
            self._set_result(result)

    def get_result(self):
        '''The task's return value, blocking until it is available; re-raises what the task
        raised.'''
        with self._condition:
            while not self._done:
                self._condition.wait()
            if self._exception is not None:
                raise self._exception
            return self._result
