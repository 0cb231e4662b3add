'''Loading of user-supplied model and stopping builders given as ``package.module.callable``.'''

import importlib
import logging
import sys

log = logging.getLogger(__name__)


class ObjectLookupError(LookupError):
    pass


def load_module(module_name, search_path=None):
    '''Import ``module_name``. Directories in ``search_path`` (for instance the directory of the
    scenario file) are searched before ``sys.path`` for the duration of the import.'''
    if module_name in sys.modules:
        log.debug('module {!r} already loaded'.format(module_name))
        return sys.modules[module_name]

    extra = [str(p) for p in (search_path or ()) if str(p) not in sys.path]
    sys.path[0:0] = extra
    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise ObjectLookupError('cannot import module {!r}: {}'.format(module_name, e))
    finally:
        for p in extra:
            sys.path.remove(p)
    log.debug('module {!r} loaded from {!r}'.format(module_name, getattr(module, '__file__', None)))
    return module


def get_object(object_name, search_path=None):
    '''Return the object named by the dotted path ``object_name``.'''
    try:
        modspec, symbol = object_name.rsplit('.', 1)
    except ValueError:
        raise ObjectLookupError("object name must be in the form 'module.symbol', not {!r}".format(object_name))

    module = load_module(modspec, search_path)
    try:
        return getattr(module, symbol)
    except AttributeError:
        raise ObjectLookupError('module {!r} has no attribute {!r}'.format(modspec, symbol))


def resolve(name, registry, search_path=None):
    '''A callable from ``registry`` by name, or loaded from a dotted path when ``name``
    contains a period.'''
    if name in registry:
        return registry[name]
    if '.' in name:
        obj = get_object(name, search_path)
        if not callable(obj):
            raise ObjectLookupError('{!r} is not callable'.format(name))
        return obj
    raise ObjectLookupError('unknown name {!r} (built-in choices: {})'.format(name, ', '.join(sorted(registry))))
