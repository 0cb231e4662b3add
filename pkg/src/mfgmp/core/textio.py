'''Routines for writing mfgmp results as comment-headed CSV text'''

import sys

import numpy as np

from .._version import __version__

#: exact round-trip representation of a double
FLOAT_FORMAT = '%.17g'


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return '{:d}'.format(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


class CSVReportWriter:
    '''Comma-separated output with a ``# key: value`` header block.

    Header lines are buffered until the first column line or row is written. Nothing
    host- or time-dependent goes into the header, so identical runs produce identical files.
    '''

    comment_string = '# '
    separator = ','
    emit_header = True

    def __init__(self, output_file, mode='wt', emit_header=None, program=None):
        if hasattr(output_file, 'write'):
            self._file = output_file
        else:
            self._file = open(output_file, mode, newline='\n')

        self._header_written = False
        self._header_lines = []

        self.write_header('created by program: {}'.format(program or 'mfgmp'))
        self.write_header('mfgmp version:      {}'.format(__version__))

        if emit_header is not None:
            self.emit_header = emit_header
        else:
            self.emit_header = self.__class__.emit_header

    def __getattr__(self, attr):
        return getattr(self._file, attr)

    def close(self):
        if not self._header_written:
            self._write_header()
        if self._file not in (sys.stdout, sys.stderr):
            self._file.close()

    def write(self, str):
        if not self._header_written:
            self._write_header()
        self._file.write(str)

    def write_comment(self, line):
        '''Writes a line beginning with the comment string'''
        self._file.write('{}{}\n'.format(self.comment_string, line))

    def write_header(self, line):
        '''Appends a line to those written when the file header is written. The
        appropriate comment string will be prepended, so ``line`` should not include
        a comment character.'''
        if self._header_written:
            raise EnvironmentError('cannot append header lines after header has been written')
        else:
            self._header_lines.append(line)

    def write_header_items(self, **items):
        for key in sorted(items):
            self.write_header('{}: {}'.format(key, format_value(items[key])))

    def write_columns(self, names):
        self.write(self.separator.join(names) + '\n')

    def write_row(self, row):
        self.write(self.separator.join(format_value(value) for value in row) + '\n')

    def write_footer(self, line):
        if not self._header_written:
            self._write_header()
        self.write_comment(line)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
        return False

    def _write_header(self):
        if self.emit_header and not self._header_written:
            for line in self._header_lines:
                self.write_comment(line)
        self._header_written = True


def read_header(lines, comment_string='# '):
    '''Split ``# key: value`` lines at the head of a CSV file into a dict of strings. Returns
    ``(header, remaining_lines)``.'''
    header = {}
    lines = list(lines)
    i = 0
    for i, line in enumerate(lines):
        if not line.startswith(comment_string):
            break
        key, sep, value = line[len(comment_string) :].partition(':')
        if sep:
            header[key.strip()] = value.strip()
    else:
        i = len(lines)
    return header, lines[i:]
