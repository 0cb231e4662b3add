'''
YAML-based scenario files for mfgmp
'''

import os

import yaml

try:
    from yaml import CSafeLoader as YLoader
except ImportError:
    # fall back on Python implementation
    from yaml import SafeLoader as YLoader


NotProvided = object()

MODES = ('SYSTEM', 'MYOPIC', 'PENALIZED', 'OBSTACLE', 'LAMBDA_SWEEP', 'EPSILON_SWEEP', 'REFINE', 'ORACLE')
SWEEP_MODES = ('LAMBDA_SWEEP', 'EPSILON_SWEEP', 'REFINE')
FP_POLICIES = ('abort', 'warn', 'bisect')
ORACLE_CASES = ('TRANSPORT', 'CROWD_ODE', 'PENALTY_RELAXATION', 'GRADIENT')
REFINE_MODES = ('system', 'myopic', 'penalized', 'obstacle')


def _keystr(key):
    return '.'.join(str(part) for part in key)


class ScenarioParseError(ValueError):
    def __init__(self, filename, line, problem):
        self.filename = filename
        self.line = line
        self.problem = problem
        where = '{}:{}'.format(filename, line) if line is not None else filename
        super().__init__('cannot parse scenario file {}: {}'.format(where, problem))


class ConfigItemMissing(KeyError):
    def __init__(self, key, message=None):
        self.key = key
        if message is None:
            message = 'configuration item missing: {!r}'.format(_keystr(key))
        super().__init__(message)


class ConfigItemUnknown(KeyError):
    def __init__(self, key, message=None):
        self.key = key
        if message is None:
            message = 'unknown configuration item: {!r}'.format(_keystr(key))
        super().__init__(message)


class ConfigItemTypeError(TypeError):
    def __init__(self, key, expected_type, message=None):
        self.key = key
        self.expected_type = expected_type
        if message is None:
            message = 'configuration item {!r} must have type {}'.format(_keystr(key), expected_type)
        super().__init__(message)


class ConfigValueError(ValueError):
    def __init__(self, key, value, message=None):
        self.key = key
        self.value = value
        if message is None:
            message = 'bad value {!r} for configuration item {!r}'.format(value, _keystr(key))
        super().__init__(message)


CONFIG_ERRORS = (ScenarioParseError, ConfigItemMissing, ConfigItemUnknown, ConfigItemTypeError, ConfigValueError)


class Item:
    '''One leaf of the scenario schema. ``kind`` is one of ``'float'``, ``'int'``, ``'bool'``,
    ``'str'``, ``'floats'`` (scalar or list of reals), ``'ints'`` (scalar or list of integers)
    or ``'mapping'`` (free-form parameters handed to a builder).'''

    def __init__(self, kind, default=NotProvided, choices=None, nullable=False):
        self.kind = kind
        self.default = default
        self.choices = choices
        self.nullable = nullable or default is None

    @property
    def required(self):
        return self.default is NotProvided

    def coerce(self, key, value):
        if value is None:
            if self.nullable:
                return None
            raise ConfigItemTypeError(key, self.kind)

        kind = self.kind
        if kind == 'float':
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigItemTypeError(key, 'real')
            value = float(value)
        elif kind == 'int':
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigItemTypeError(key, 'integer')
        elif kind == 'bool':
            if not isinstance(value, bool):
                raise ConfigItemTypeError(key, 'boolean')
        elif kind == 'str':
            if not isinstance(value, str):
                raise ConfigItemTypeError(key, 'string')
        elif kind in ('floats', 'ints'):
            scalar_kind = 'float' if kind == 'floats' else 'int'
            if isinstance(value, (list, tuple)):
                value = [Item(scalar_kind).coerce(key, v) for v in value]
            else:
                value = Item(scalar_kind).coerce(key, value)
        elif kind == 'mapping':
            if not isinstance(value, dict):
                raise ConfigItemTypeError(key, 'mapping')
            value = dict(value)
        else:
            raise AssertionError('unknown item kind {!r}'.format(kind))

        if self.choices is not None and value not in self.choices:
            raise ConfigValueError(
                key, value, message='bad value {!r} for configuration item {!r} (valid choices: {!r})'.format(
                    value, _keystr(key), tuple(self.choices)
                )
            )
        return value


SCENARIO_SCHEMA = {
    'model': Item('str'),
    'mode': Item('str', choices=MODES),
    'model_params': Item('mapping', {}),
    'grid': {
        'x_min': Item('floats', None),
        'x_max': Item('floats', None),
        'n_x': Item('ints', 21),
        'y_min': Item('floats', -1.0),
        'y_max': Item('floats', 1.0),
        'n_y': Item('ints', 41),
        'T': Item('float', 1.0),
        'dt': Item('float', 1.0e-3),
    },
    'solver': {
        'tol_fp': Item('float', 1.0e-10),
        'theta': Item('float', 0.5),
        'max_iter': Item('int', 200),
        'tie_tol': Item('float', 1.0e-12),
        'fp_policy': Item('str', 'abort', choices=FP_POLICIES),
        'inner_iterations': Item('int', 0),
        'snapshot_every': Item('int', 100),
        'blowup_bound': Item('float', 1.0e8),
        't1': Item('float', None),
        'explicit_diffusion': Item('bool', False),
        'scheme_tol': Item('float', 1.0e-10),
        'compat_tol': Item('float', 1.0e-3),
    },
    'stopping': {
        'name': Item('str', 'canonical'),
        'params': Item('mapping', {}),
        'epsilon': Item('float', 0.1),
    },
    'sweep': {
        'lambdas': Item('floats', [1.0, 10.0, 100.0, 1000.0]),
        'epsilons': Item('floats', [1.0e-1, 1.0e-2, 1.0e-3]),
        'levels': Item('int', 2),
        'max_nodes': Item('int', 2000000),
        'refine_mode': Item('str', 'system', choices=REFINE_MODES),
    },
    'oracle': {
        'case': Item('str', 'TRANSPORT', choices=ORACLE_CASES),
        'n_particles': Item('int', 100000),
        'n_times': Item('int', 5),
        'rate': Item('float', 1.0),
        'x0': Item('floats', None),
        'particle_counts': Item('ints', [1000, 10000, 100000]),
        'repeats': Item('int', 20),
        'samples': Item('int', 100),
        'params': Item('mapping', {}),
    },
    'output': Item('str', None),
    'seed': Item('int', 0),
}


def resolve_scenario(data, schema=SCENARIO_SCHEMA, prefix=()):
    '''Check ``data`` (a parsed YAML mapping) against ``schema`` and return a new mapping with
    every default filled in. Unknown keys, missing required keys, wrong types and bad choices
    raise the corresponding configuration error, naming the full key path.'''

    if not isinstance(data, dict):
        raise ConfigItemTypeError(prefix or ('<scenario>',), 'mapping')

    for key in data:
        if key not in schema:
            raise ConfigItemUnknown(prefix + (key,))

    resolved = {}
    for key, entry in schema.items():
        path = prefix + (key,)
        if isinstance(entry, dict):
            resolved[key] = resolve_scenario(data.get(key) or {}, entry, path)
        elif key in data:
            resolved[key] = entry.coerce(path, data[key])
        elif entry.required:
            raise ConfigItemMissing(path)
        else:
            default = entry.default
            resolved[key] = list(default) if isinstance(default, list) else (dict(default) if isinstance(default, dict) else default)
    return resolved


class YAMLConfig:
    '''Tuple-path access to a nested scenario mapping, e.g. ``config['solver', 'dt']``.'''

    def __init__(self, data=None):
        self._data = data if data is not None else {}
        self.filename = None

    def __repr__(self):
        return repr(self._data)

    @property
    def data(self):
        return self._data

    def update_from_file(self, file, required=True):
        if isinstance(file, str):
            try:
                file = open(file, 'rt')
            except IOError:
                if required:
                    raise
                else:
                    return

        filename = getattr(file, 'name', '<stream>')
        try:
            with file:
                loaded = yaml.load(file, Loader=YLoader)
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            raise ScenarioParseError(filename, mark.line + 1 if mark is not None else None, e.problem)
        except yaml.YAMLError as e:
            raise ScenarioParseError(filename, None, str(e))

        if loaded is None:
            loaded = {}
        elif not isinstance(loaded, dict):
            raise ScenarioParseError(filename, 1, 'top level must be a mapping of keys to values')
        self._data.update(loaded)
        self.filename = filename

    def resolve(self):
        '''Validate against the scenario schema and replace the contents with the resolved mapping.'''
        self._data = resolve_scenario(self._data)
        return self

    def _normalize_key(self, key):
        if isinstance(key, str):
            key = (key,)
        else:
            try:
                key = tuple(key)
            except TypeError:
                key = (key,)
        return key

    def _resolve_object_chain(self, key, last=None):
        if last is None:
            last = len(key)
        objects = [self._data[key[0]]]
        for subkey in key[1:last]:
            objects.append(objects[-1][subkey])
        return objects

    def __getitem__(self, key):
        key = self._normalize_key(key)
        return self._resolve_object_chain(key)[-1]

    def __setitem__(self, key, value):
        key = self._normalize_key(key)
        target = self._data
        for keypart in key[:-1]:
            target = target.setdefault(keypart, {})
        target[key[-1]] = value

    def __contains__(self, key):
        try:
            self[key]
        except KeyError:
            return False
        else:
            return True

    def get(self, key, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def get_path(self, key, default=NotProvided, expandvars=True, expanduser=True, abspath=True):
        try:
            path = self[key]
        except KeyError as ke:
            if default is not NotProvided:
                path = default
            else:
                raise ke
        if path is None:
            return None

        if expandvars:
            path = os.path.expandvars(path)
        if expanduser:
            path = os.path.expanduser(path)
        if abspath:
            path = os.path.abspath(path)

        return path

