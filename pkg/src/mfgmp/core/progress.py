'''Terminal progress line for long time-stepping runs.'''

import collections
import time

import blessings  # @UnresolvedImport

import numpy as np
from scipy.stats import linregress


class StepProgress:
    '''Redraws one status line (operation, percentage, bar, estimated time left) as a solve
    advances. On a non-tty stream only the operation name is printed, once.

    Usable as the ``progress`` callable of :class:`~mfgmp.core.options.SolverOptions`:
    ``progress(step, n_steps)``.'''

    def __init__(self, operation, stream=None, interval=0.5):
        self.terminal = blessings.Terminal(stream=stream)
        self.operation = operation
        self.interval = interval
        self.fancy = self.terminal.is_a_tty
        self._history = collections.deque(maxlen=100)
        self._last_draw = None
        self._announced = False

    def remaining(self, extent):
        if len(self._history) < 2:
            return 'unknown'
        history = np.array(self._history)
        slope, intercept, _r, _p, _stderr = linregress(history[:, 1], history[:, 0])
        if not (np.isfinite(slope) and np.isfinite(intercept)):
            return 'unknown'
        seconds = intercept + slope * extent - time.time()
        if seconds < 60:
            return 'less than 1 minute'
        minutes = int(round(seconds / 60))
        if minutes < 60:
            return 'about {:d} {}'.format(minutes, 'minutes' if minutes > 1 else 'minute')
        hours, minutes = divmod(minutes, 60)
        return 'about {:d} h {:d} min'.format(hours, minutes)

    def __call__(self, step, extent):
        now = time.time()
        self._history.append((now, step))
        if not self.fancy:
            if not self._announced:
                self.terminal.stream.write('{}...\n'.format(self.operation))
                self._announced = True
            return
        if self._last_draw is not None and now - self._last_draw < self.interval and step < extent:
            return

        term = self.terminal
        fraction = step / extent if extent else 1.0
        head = '{} {:>4.0%} '.format(self.operation, fraction)
        tail = ' {}'.format(self.remaining(extent))
        barwidth = max((term.width or 80) - len(head) - len(tail) - 2, 10)
        filled = int(round(fraction * barwidth))
        term.stream.write(
            '{t.clear_eol}{t.bold}{head}{t.normal}[{bar}{space}]{tail}\r'.format(
                t=term, head=head, bar='=' * filled, space=' ' * (barwidth - filled), tail=tail
            )
        )
        term.stream.flush()
        self._last_draw = now

    def clear(self):
        if self.fancy and self._last_draw is not None:
            self.terminal.stream.write('{t.clear_eol}'.format(t=self.terminal))
            self.terminal.stream.flush()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.clear()
        return False
