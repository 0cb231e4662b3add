'''Core classes for creating mfgmp command-line tools'''

import argparse
import logging
import sys

import mfgmp
from mfgmp import work_managers

log = logging.getLogger(__name__)


class MFGToolComponent:
    '''Base class for mfgmp command line tools and components used in constructing tools'''

    def __init__(self):
        self.parser = None
        self.args = None

    def add_args(self, parser):
        '''Add arguments specific to this component to the given argparse parser.'''
        pass

    def process_args(self, args):
        '''Take argparse-processed arguments associated with this component and deal
        with them appropriately (setting instance variables, etc)'''
        pass

    def add_all_args(self, parser):
        '''Add arguments for all components from which this class derives to the given parser,
        starting with the class highest up the inheritance chain (most distant ancestor).'''
        self.parser = parser
        for cls in reversed(self.__class__.__mro__):
            try:
                fn = cls.__dict__['add_args']
            except KeyError:
                pass
            else:
                fn(self, parser)

    def process_all_args(self, args):
        '''Process arguments for all components from which this class derives,
        starting with the class highest up the inheritance chain (most distant ancestor).'''
        self.args = args
        for cls in reversed(self.__class__.__mro__):
            try:
                fn = cls.__dict__['process_args']
            except KeyError:
                pass
            else:
                fn(self, args)


class MFGTool(MFGToolComponent):
    '''Base class for mfgmp command line tools. Parallel work (sweep members, particle
    chunks) goes to the work manager at ``self.work_manager``.'''

    prog = None
    usage = None
    description = None
    epilog = None

    # general and parallelization options go on each subcommand's parser instead
    options_on_subcommands = False

    def __init__(self, wm_env=None):
        super().__init__()
        self.work_manager = None
        self.wm_env = wm_env or work_managers.environment.default_env

    def add_args(self, parser):
        if self.options_on_subcommands:
            parser.add_argument('--version', action='version', version='mfgmp version %s' % mfgmp.__version__)
        else:
            mfgmp.rc.add_args(parser)
            self.wm_env.add_wm_args(parser)

    def process_args(self, args):
        mfgmp.rc.process_args(args)

    def make_parser(self, prog=None, usage=None, description=None, epilog=None):
        parser = argparse.ArgumentParser(
            prog=prog or self.prog,
            usage=usage or self.usage,
            description=description or self.description,
            epilog=epilog or self.epilog,
            formatter_class=argparse.RawDescriptionHelpFormatter,
            conflict_handler='resolve',
        )
        self.add_all_args(parser)
        return parser

    def make_parser_and_process(self, prog=None, usage=None, description=None, epilog=None, args=None):
        '''Create a parser, parse ``args`` (default ``sys.argv[1:]``), instantiate the work
        manager and process all arguments. The argument namespace is returned.'''
        parser = self.make_parser(prog, usage, description, epilog)
        args = parser.parse_args(args)
        self.wm_env.process_wm_args(args)
        self.work_manager = mfgmp.rc.work_manager = self.wm_env.make_work_manager()
        self.process_all_args(args)
        return args

    def go(self):
        '''Perform the work associated with this tool; returns the exit status.'''
        raise NotImplementedError

    def main(self, args=None):
        '''Make a parser, parse and process arguments, then run self.go() with the work manager
        started. Returns the exit status.'''
        self.make_parser_and_process(args=args)
        with self.work_manager:
            return self.go()


class MFGSubcommand(MFGToolComponent):
    '''Base class for command-line tool subcommands. A little sugar for making this
    more uniform.'''

    subcommand = None
    aliases = ()
    help_text = None
    description = None

    def __init__(self, parent):
        super().__init__()
        self.parent = parent
        self.subparser = None

    def add_to_subparsers(self, subparsers):
        subparser = subparsers.add_parser(
            self.subcommand,
            aliases=list(self.aliases),
            help=self.help_text,
            description=self.description,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        self.add_all_args(subparser)
        self.parent.wm_env.add_wm_args(subparser)
        mfgmp.rc.add_args(subparser)
        subparser.set_defaults(mfgmp_subcommand=self)
        self.subparser = subparser

    def go(self):
        raise NotImplementedError

    @property
    def work_manager(self):
        return self.parent.work_manager


class _MFGSubcommandHelp(MFGSubcommand):
    subcommand = 'help'
    help_text = 'print help for this command or individual subcommands'

    def add_to_subparsers(self, subparsers):
        subparser = subparsers.add_parser(self.subcommand, help=self.help_text)
        self.add_all_args(subparser)
        subparser.set_defaults(mfgmp_subcommand=self)
        self.subparser = subparser

    def add_args(self, parser):
        parser.add_argument('command', nargs='?', choices=[subcommand.subcommand for subcommand in self.parent.subcommands])

    def process_args(self, args):
        self.command = args.command

    def go(self):
        if self.command is None:
            self.parent.parser.print_help(sys.stdout)
        else:
            self.parent._subcommand_instances[self.command].subparser.print_help(sys.stdout)
        return 0


class MFGMasterCommand(MFGTool):
    '''Base class for command-line tools that employ subcommands'''

    subparsers_title = None
    subcommands = None

    include_help_command = True
    options_on_subcommands = True

    def __init__(self, wm_env=None):
        super().__init__(wm_env)
        self._subcommand = None
        self._subcommand_instances = {subcommand_class.subcommand: subcommand_class(self) for subcommand_class in self.subcommands}

    def add_args(self, parser):
        subparsers = parser.add_subparsers(title=self.subparsers_title)
        if self.include_help_command:
            _MFGSubcommandHelp(self).add_to_subparsers(subparsers)
        for instance in self._subcommand_instances.values():
            instance.add_to_subparsers(subparsers)

    def process_args(self, args):
        try:
            self._subcommand = args.mfgmp_subcommand
        except AttributeError:
            # No subcommand given; display help
            print('Error: a command is required. See below.', file=sys.stderr)
            self.parser.print_help(sys.stderr)
            sys.exit(2)
        else:
            self._subcommand.process_all_args(args)

    def go(self):
        return self._subcommand.go()
