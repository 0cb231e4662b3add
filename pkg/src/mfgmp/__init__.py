from ._version import __version__

from .core import _rc

__all__ = ['_rc', 'rc', '__version__']

rc = _rc.MFGRC()
