"""mfgmp run control and configuration routines"""

import logging
import os
import sys
import warnings

import mfgmp
from .yamlcfg import YAMLConfig
from ..work_managers import SerialWorkManager

log = logging.getLogger('mfgmp.rc')


class MFGRC:
    '''A class, an instance of which is accessible as ``mfgmp.rc``, to handle global issues for mfgmp code,
    such as reading scenario files, writing output based on verbosity level, adding default command line options,
    and holding the active work manager.'''

    ENV_OUTPUT_ROOT = 'MFGMP_OUTPUT_ROOT'
    DEFAULT_OUTPUT_ROOT = 'mfgmp_runs'

    def __init__(self):
        self.verbosity = None
        self.config = YAMLConfig()
        self.scenario_file = None
        self.process_name = os.path.splitext(os.path.basename(sys.argv[0]))[0]

        self.work_manager = SerialWorkManager()

        # None: whatever sys.stdout is at the time of printing
        self.status_stream = None

    def add_args(self, parser):
        group = parser.add_argument_group('general options')

        egroup = group.add_mutually_exclusive_group()
        egroup.add_argument(
            '--quiet', dest='verbosity', action='store_const', const='quiet', help='emit only essential information'
        )
        egroup.add_argument('--verbose', dest='verbosity', action='store_const', const='verbose', help='emit extra information')
        egroup.add_argument(
            '--debug',
            dest='verbosity',
            action='store_const',
            const='debug',
            help='enable extra checks and emit copious information',
        )

        group.add_argument('--version', action='version', version='mfgmp version %s' % mfgmp.__version__)

    @property
    def verbose_mode(self):
        return self.verbosity in ('verbose', 'debug')

    @property
    def debug_mode(self):
        return self.verbosity == 'debug'

    @property
    def quiet_mode(self):
        return self.verbosity == 'quiet'

    def process_args(self, args):
        self.cmdline_args = args
        self.verbosity = getattr(args, 'verbosity', None)
        self.config_logging()

    def read_scenario(self, filename):
        '''Read and resolve a scenario file; every key not given takes its documented default.'''
        config = YAMLConfig()
        config.update_from_file(filename)
        config.resolve()
        self.config = config
        self.scenario_file = filename
        log.debug('scenario {!r}: {!r}'.format(filename, config))
        return config

    @property
    def scenario_dir(self):
        if self.scenario_file is None:
            return os.getcwd()
        return os.path.dirname(os.path.abspath(self.scenario_file))

    def output_root(self):
        return os.environ.get(self.ENV_OUTPUT_ROOT) or self.DEFAULT_OUTPUT_ROOT

    def output_dir(self, override=None):
        '''The run directory: ``--out``, then the scenario's ``output`` key, then a directory
        named after the scenario file under the output root.'''
        if override:
            path = override
        elif self.config.get('output'):
            path = self.config.get_path('output', abspath=False)
        else:
            stem = os.path.splitext(os.path.basename(self.scenario_file or 'scenario'))[0]
            path = os.path.join(self.output_root(), stem)
        os.makedirs(path, exist_ok=True)
        return path

    def config_logging(self):
        import logging.config

        logging_config = {
            'version': 1,
            'incremental': False,
            'formatters': {
                'standard': {'format': '-- %(levelname)-8s [%(name)s] -- %(message)s'},
                'debug': {
                    'format': '''\
-- %(levelname)-8s %(asctime)24s PID %(process)-12d TID %(thread)-20d
   from logger "%(name)s"
   at location %(pathname)s:%(lineno)d [%(funcName)s()]
   ::
   %(message)s
'''
                },
            },
            'handlers': {'console': {'class': 'logging.StreamHandler', 'stream': 'ext://sys.stderr', 'formatter': 'standard'}},
            'loggers': {
                'mfgmp': {'handlers': ['console'], 'propagate': False},
                'py.warnings': {'handlers': ['console'], 'propagate': False},
            },
            'root': {'handlers': ['console']},
        }

        logging_config['loggers'][self.process_name] = {'handlers': ['console'], 'propagate': False}

        if self.verbosity == 'debug':
            logging_config['root']['level'] = 5  # 'DEBUG'
            logging_config['loggers']['mfgmp']['level'] = 5
            logging_config['handlers']['console']['formatter'] = 'debug'
        elif self.verbosity == 'verbose':
            logging_config['root']['level'] = 'INFO'
            logging_config['loggers']['mfgmp']['level'] = 'INFO'
        else:
            logging_config['root']['level'] = 'WARNING'
            logging_config['loggers']['mfgmp']['level'] = 'WARNING'

        logging.config.dictConfig(logging_config)

        if self.verbosity == 'debug':
            warnings.resetwarnings()
            warnings.simplefilter('default')
            logging.captureWarnings(True)
        elif self.verbosity == 'quiet':
            if not sys.warnoptions:
                warnings.simplefilter('ignore')
            logging.captureWarnings(False)
        else:
            logging.captureWarnings(False)

    def pstatus(self, *args, **kwargs):
        fileobj = kwargs.pop('file', None) or self.status_stream or sys.stdout
        if kwargs.pop('termonly', False) and not fileobj.isatty():
            return
        if self.verbosity != 'quiet':
            print(*args, file=fileobj, **kwargs)

    def pflush(self):
        for stream in (self.status_stream, sys.stdout, sys.stderr):
            try:
                stream.flush()
            except AttributeError:
                pass
