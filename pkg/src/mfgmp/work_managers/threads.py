import logging
import queue
import threading

from .core import WorkManager, WMFuture

log = logging.getLogger(__name__)

_stop = object()


class ThreadsWorkManager(WorkManager):
    '''Runs tasks on a fixed pool of threads fed from one queue. Solver time goes into numpy
    and scipy kernels, which release the GIL, so member solves of a sweep overlap.

    Workers are started by :meth:`startup` or by the first :meth:`submit`, and joined by
    :meth:`shutdown`.'''

    @classmethod
    def from_environ(cls, wmenv):
        return cls(wmenv.n_workers())

    def __init__(self, n_workers=1):
        super().__init__()
        if n_workers < 1:
            raise ValueError('number of worker threads must be positive')
        self.n_workers = n_workers
        self.workers = []
        self.tasks = queue.Queue()

    def _work(self):
        while True:
            item = self.tasks.get()
            if item is _stop:
                return
            future, fn, args = item
            future.run(fn, args)

    def startup(self):
        if self.running:
            return
        self.running = True
        self.workers = [threading.Thread(target=self._work, name='mfgmp-worker-{:d}'.format(i), daemon=True) for i in range(self.n_workers)]
        for thread in self.workers:
            thread.start()
        log.debug('started {:d} worker threads'.format(self.n_workers))

    def shutdown(self):
        if not self.running:
            return
        for _thread in self.workers:
            self.tasks.put(_stop)
        for thread in self.workers:
            thread.join()
        self.workers = []
        self.running = False

    def submit(self, fn, args=(), label=None):
        if not self.running:
            self.startup()
        future = WMFuture(label)
        self.tasks.put((future, fn, tuple(args)))
        return future
