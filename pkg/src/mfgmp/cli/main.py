'''The ``mfgmp`` command: run, check and sweep scenario files.

Exit status is 0 on success, 1 when a solver fails (diagnostics are flushed first) and 2 for
scenario, model, grid or step-size problems.
'''

import logging
import os
import sys
import warnings

import numpy as np
import yaml

import mfgmp
from mfgmp.core.extloader import ObjectLookupError
from mfgmp.core.fixedpoint import FixedPointError
from mfgmp.core.grid import CFLError, GridError, GridSpec, certify_dt, write_field_csv
from mfgmp.core.h5io import write_snapshots
from mfgmp.core.limits import SweepConfigurationError, SweepError, epsilon_sweep, lambda_sweep, refinement_study, write_sweep_csv
from mfgmp.core.model import (
    GRADP_RTOL,
    CouplingConfigurationError,
    ModelEvaluationError,
    ModelValidationError,
    validate_model,
)
from mfgmp.core.models import UnknownParameterError, build_model, build_rate_matrix, build_stopping, exchange_rate_matrix
from mfgmp.core.options import SolverOptions
from mfgmp.core.oracle import (
    FrozenControls,
    OracleError,
    RateMatrixCoupling,
    RateMatrixError,
    fd_check_gradp,
    monte_carlo_rate_study,
    scalar_reduction_check,
    transport_check,
)
from mfgmp.core.progress import StepProgress
from mfgmp.core.stopping import CompatibilityWarning, solve_obstacle, solve_penalized, ubar_compatibility
from mfgmp.core.evolution import solve_myopic, solve_system
from mfgmp.core.textio import CSVReportWriter
from mfgmp.core.yamlcfg import CONFIG_ERRORS, SWEEP_MODES, ConfigValueError
from mfgmp.tools.core import MFGMasterCommand, MFGSubcommand
from mfgmp.work_managers import WorkManagerConfigError

log = logging.getLogger('mfgmp.cli')

EXIT_SUCCESS = 0
EXIT_SOLVER_ERROR = 1
EXIT_INPUT_ERROR = 2

SOLVER_ERRORS = (FixedPointError, ModelEvaluationError, SweepError)
INPUT_ERRORS = CONFIG_ERRORS + (
    GridError,
    CFLError,
    ModelValidationError,
    CouplingConfigurationError,
    SweepConfigurationError,
    ObjectLookupError,
    OracleError,
    RateMatrixError,
    UnknownParameterError,
    WorkManagerConfigError,
    FileNotFoundError,
)
MODEL_ERRORS = (ObjectLookupError, ModelValidationError, CouplingConfigurationError, UnknownParameterError, RateMatrixError)

STOPPING_MODES = ('PENALIZED', 'OBSTACLE', 'EPSILON_SWEEP')
STOPPING_REFINE_MODES = ('penalized', 'obstacle')


class Scenario:
    '''A resolved scenario file with the objects it describes.

    :ivar config:  The resolved :class:`~mfgmp.core.yamlcfg.YAMLConfig`.
    :ivar mode:    Run mode.
    :ivar seed:    Seed in effect (``--seed`` overrides the file).
    :ivar spec:    The model.
    :ivar grid:    The grid.
    :ivar options: Solver options.
    '''

    def __init__(self, config, seed=None, search_path=None):
        self.config = config
        self.mode = config['mode']
        self.seed = config['seed'] if seed is None else int(seed)
        self.search_path = search_path or []
        self.spec = build_model(config['model'], config['model_params'], self.search_path)
        self.grid = GridSpec.from_config(config, self.spec.k, self.spec.d)
        self.options = SolverOptions.from_config(config)

    @property
    def refine_mode(self):
        return self.config['sweep', 'refine_mode']

    @property
    def uses_stopping(self):
        return self.mode in STOPPING_MODES or (self.mode == 'REFINE' and self.refine_mode in STOPPING_REFINE_MODES)

    def stopping(self, epsilon=None):
        section = self.config['stopping']
        return build_stopping(
            section['name'],
            self.spec.k,
            self.spec.d,
            section['epsilon'] if epsilon is None else epsilon,
            section['params'],
            self.search_path,
        )

    def manifest(self, n_workers):
        resolved = dict(self.config.data)
        resolved['seed'] = self.seed
        return {'mfgmp_version': mfgmp.__version__, 'scenario': resolved, 'seed': self.seed, 'workers': n_workers}


def write_manifest(out_dir, manifest):
    with open(os.path.join(out_dir, 'manifest.yaml'), 'wt') as f:
        yaml.safe_dump(manifest, f, default_flow_style=False, sort_keys=True)


def _writer(out_dir, filename, **header):
    writer = CSVReportWriter(os.path.join(out_dir, filename))
    writer.write_header_items(**header)
    return writer


def write_diagnostics(out_dir, diagnostics, error=None):
    with _writer(out_dir, 'diagnostics.csv') as writer:
        diagnostics.write_csv(writer)
        if error is not None:
            writer.write_footer('error: {}'.format(error))


def _clean(text):
    return ' '.join(str(text).replace(',', ';').split())


class ScenarioCommand(MFGSubcommand):
    '''Shared arguments of the commands that take a scenario file.'''

    def add_args(self, parser):
        parser.add_argument('scenario', metavar='SCENARIO', help='scenario file (YAML)')
        parser.add_argument(
            '--out', dest='out_dir', metavar='DIR', help='write results to DIR (default: the scenario\'s output key, then $%s/<name>)'
            % mfgmp.rc.ENV_OUTPUT_ROOT,
        )
        parser.add_argument('--seed', type=int, help='override the scenario\'s random seed')

    def process_args(self, args):
        self.scenario_file = args.scenario
        self.out_dir = args.out_dir
        self.seed = args.seed

    def load(self):
        config = mfgmp.rc.read_scenario(self.scenario_file)
        return Scenario(config, self.seed, [mfgmp.rc.scenario_dir])

    def n_workers(self):
        return getattr(self.work_manager, 'n_workers', 1)


class RunCommand(ScenarioCommand):
    subcommand = 'run'
    help_text = 'run the mode named in a scenario file'
    description = '''\
Run the scenario's mode and write its results (manifest.yaml, diagnostics and report CSV files,
final_fields.csv and snapshots.h5 for single solves) to the output directory.
'''

    def check_mode(self, scenario):
        pass

    def go(self):
        scenario = self.load()
        self.check_mode(scenario)
        out_dir = mfgmp.rc.output_dir(self.out_dir)
        write_manifest(out_dir, scenario.manifest(self.n_workers()))
        mfgmp.rc.pstatus(
            'mfgmp {}: {} on model {!r}, output in {}'.format(scenario.mode.lower(), scenario.config.filename, scenario.spec.name, out_dir)
        )
        mfgmp.rc.pflush()

        try:
            handler = getattr(self, 'run_' + scenario.mode.lower())
            handler(scenario, out_dir)
        except SOLVER_ERRORS as e:
            diagnostics = getattr(e, 'diagnostics', None)
            if diagnostics is not None:
                write_diagnostics(out_dir, diagnostics, error=_clean(e))
            raise
        mfgmp.rc.pflush()
        return EXIT_SUCCESS

    def _progress(self, scenario, label):
        options = scenario.options
        if not mfgmp.rc.quiet_mode and sys.stdout.isatty():
            options.progress = StepProgress(label)
        return options

    def _write_solve(self, scenario, out_dir, snapshots):
        final = snapshots[-1]
        write_diagnostics(out_dir, final.diagnostics)
        write_field_csv(os.path.join(out_dir, 'final_fields.csv'), scenario.grid, final.t, final.phi, final.U)
        write_snapshots(os.path.join(out_dir, 'snapshots.h5'), scenario.grid, snapshots, mode=scenario.mode, seed=scenario.seed)
        diagnostics = final.diagnostics
        if diagnostics.blowup_tripped:
            mfgmp.rc.pstatus('blow-up guard tripped; fields valid up to t = {:g}'.format(diagnostics.effective_horizon))
        mfgmp.rc.pstatus(
            '{:d} snapshots, final t = {:g}, sup|phi| = {:.6g}, sup|U| = {:.6g}'.format(
                len(snapshots), final.t, final.phi.sup_norm(), final.U.sup_norm()
            )
        )

    def run_system(self, scenario, out_dir):
        snapshots = solve_system(scenario.spec, scenario.grid, self._progress(scenario, 'system'))
        self._write_solve(scenario, out_dir, snapshots)

    def run_myopic(self, scenario, out_dir):
        snapshots = solve_myopic(scenario.spec, scenario.grid, self._progress(scenario, 'myopic'))
        self._write_solve(scenario, out_dir, snapshots)

    def run_penalized(self, scenario, out_dir):
        snapshots, _diagnostics = solve_penalized(scenario.spec, scenario.grid, scenario.stopping(), self._progress(scenario, 'penalized'))
        self._write_solve(scenario, out_dir, snapshots)

    def run_obstacle(self, scenario, out_dir):
        snapshots, report = solve_obstacle(scenario.spec, scenario.grid, scenario.stopping(), self._progress(scenario, 'obstacle'))
        self._write_solve(scenario, out_dir, snapshots)
        with _writer(out_dir, 'obstacle_report.csv') as writer:
            report.write_csv(writer, scenario.grid)
        mfgmp.rc.pstatus(
            'contact fraction {:.3%}, obstacle violation {:.3g}, off-contact residual {:.3g}'.format(
                report.contact_fraction, report.obstacle_violation, report.off_contact_violation
            )
        )

    def run_lambda_sweep(self, scenario, out_dir):
        sweep = scenario.config['sweep']
        u_result, gap_result = lambda_sweep(
            scenario.spec, scenario.grid, sweep['lambdas'], scenario.options.t1, scenario.options, self.work_manager
        )
        with _writer(out_dir, 'sweep_lambda.csv') as writer:
            write_sweep_csv(writer, [u_result, gap_result])
        mfgmp.rc.pstatus('lambda sweep: slope norm_U {:.3g}, slope norm_phi_gap {:.3g}'.format(u_result.slope, gap_result.slope))

    def run_epsilon_sweep(self, scenario, out_dir):
        sweep = scenario.config['sweep']
        excess, gap = epsilon_sweep(scenario.spec, scenario.grid, scenario.stopping(), sweep['epsilons'], scenario.options, self.work_manager)
        with _writer(out_dir, 'sweep_epsilon.csv') as writer:
            write_sweep_csv(writer, [excess, gap])
        mfgmp.rc.pstatus('epsilon sweep: slope excess {:.3g}'.format(excess.slope))

    def run_refine(self, scenario, out_dir):
        sweep = scenario.config['sweep']
        mode = scenario.refine_mode
        result = refinement_study(
            scenario.spec,
            scenario.grid,
            sweep['levels'],
            scenario.options,
            stop=scenario.stopping() if mode in STOPPING_REFINE_MODES else None,
            mode=mode,
            max_nodes=sweep['max_nodes'],
            work_manager=self.work_manager,
        )
        with _writer(out_dir, 'refinement.csv') as writer:
            write_sweep_csv(writer, [result])
        orders = ', '.join('%.3g' % o for o in result.orders)
        mfgmp.rc.pstatus('{} refinement: {:d} levels, observed orders {}'.format(mode, result.levels, orders))

    def run_oracle(self, scenario, out_dir):
        section = scenario.config['oracle']
        case = section['case']
        if case == 'TRANSPORT':
            self._transport_oracle(scenario, section, out_dir)
            return

        if case == 'GRADIENT':
            error = fd_check_gradp(scenario.spec, section['samples'], scenario.seed)
            threshold = GRADP_RTOL
        else:
            params = dict(section['params'])
            if not params:
                params['spec'] = scenario.spec
            params.setdefault('T', scenario.grid.T)
            params.setdefault('dt', scenario.grid.dt)
            error = scalar_reduction_check(case, params)
            threshold = None

        with _writer(out_dir, 'oracle.csv', case=case, seed=scenario.seed) as writer:
            writer.write_columns(['case', 'max_error'])
            writer.write_row([case, error])
        if threshold is not None and not error < threshold:
            log.warning('{} check: error {:.3g} above {:g}'.format(case.lower(), error, threshold))
        mfgmp.rc.pstatus('{} oracle: max error {:.6g}'.format(case.lower(), error))

    def _transport_oracle(self, scenario, section, out_dir):
        spec = scenario.spec
        Q = build_rate_matrix(spec)
        coupling = spec.A
        if Q is None:
            if spec.k != 2:
                raise OracleError('model {!r} has no rate matrix; the transport oracle needs one'.format(spec.name))
            log.info('model {!r} has no rate matrix; using symmetric exchange at rate {!r}'.format(spec.name, section['rate']))
            Q = exchange_rate_matrix(section['rate'], 0.0, coupled=False)
            coupling = None
        rc = RateMatrixCoupling(Q)

        x0 = np.array(section['x0'] if section['x0'] is not None else np.eye(spec.k)[0], dtype=np.float64)
        if x0.shape != (spec.k,):
            raise OracleError('oracle x0 must have k = {} components'.format(spec.k))
        y0 = np.zeros(spec.d)
        controls = FrozenControls(y0, np.asarray(spec.U0(x0, y0), dtype=np.float64), np.zeros(spec.d))

        N = section['n_particles']
        T = scenario.grid.T
        trajectory, ode, z = transport_check(rc, x0, controls, N, T, scenario.seed, section['n_times'], self.work_manager, coupling)

        counts = section['particle_counts']
        study = None
        if isinstance(counts, list) and len(counts) >= 3:
            study = monte_carlo_rate_study(
                rc, x0, controls, counts, T, scenario.seed, section['repeats'], section['n_times'], self.work_manager
            )

        with _writer(out_dir, 'oracle.csv', case='TRANSPORT', seed=scenario.seed, N=N) as writer:
            writer.write_columns(['t', 'component', 'empirical', 'standard_error', 'ode', 'z'])
            for i, t in enumerate(trajectory.times):
                for c in range(spec.k):
                    se = trajectory.standard_error[i, c]
                    deviation = abs(trajectory.histogram[i, c] - ode[i, c])
                    zc = deviation / se if se > 0 else (0.0 if deviation == 0 else np.inf)
                    writer.write_row([t, c + 1, trajectory.histogram[i, c], se, ode[i, c], zc])
            writer.write_footer('z_max: {!r}'.format(z))
            if study is not None:
                for n, rms in zip(study.parameters, study.norms):
                    writer.write_footer('rms_gap N={:d}: {!r}'.format(int(n), rms))
                writer.write_footer('slope: {!r}'.format(study.slope))

        if z > 3:
            log.warning('particle histogram deviates from the characteristics by {:.3g} standard errors'.format(z))
        mfgmp.rc.pstatus('transport oracle: N = {:d}, largest deviation {:.3g} standard errors'.format(N, z))


class SweepCommand(RunCommand):
    subcommand = 'sweep'
    help_text = 'run a sweep scenario (LAMBDA_SWEEP, EPSILON_SWEEP or REFINE)'
    description = '''\
Same as "run", for scenarios whose mode is one of the sweeps; any other mode is an error.
'''

    def check_mode(self, scenario):
        if scenario.mode not in SWEEP_MODES:
            raise ConfigValueError(
                ('mode',), scenario.mode, 'mode {!r} is not a sweep (choices: {})'.format(scenario.mode, ', '.join(SWEEP_MODES))
            )


class CheckCommand(ScenarioCommand):
    subcommand = 'check'
    help_text = 'validate a scenario without solving'
    description = '''\
Dry run: scenario schema, model validation, CFL certificate, finite-difference check of
gradpF and, for stopping modes, the compatibility of the post-stop crowd cost. Results go to
check_report.csv; the exit status is 2 if any check fails.
'''

    def go(self):
        rows = []
        scenario = None
        try:
            scenario = self.load()
        except CONFIG_ERRORS as e:
            rows.append(('schema', 'fail', np.nan, _clean(e)))
        except MODEL_ERRORS + (GridError,) as e:
            rows.append(('schema', 'pass', np.nan, ''))
            rows.append(('model', 'fail', np.nan, _clean(e)))
        else:
            rows.append(('schema', 'pass', np.nan, ''))
            rows.extend(self.run_checks(scenario))

        out_dir = mfgmp.rc.output_dir(self.out_dir)
        header = {'scenario': os.path.basename(self.scenario_file)}
        if scenario is not None:
            header['seed'] = scenario.seed
        with _writer(out_dir, 'check_report.csv', **header) as writer:
            writer.write_columns(['check', 'status', 'value', 'detail'])
            for row in rows:
                writer.write_row(row)

        failed = [row for row in rows if row[1] == 'fail']
        for check, status, value, detail in rows:
            if status == 'fail':
                log.error('{} check failed: {}'.format(check, detail))
            mfgmp.rc.pstatus('{:<12s} {}{}'.format(check, status, ' ({})'.format(detail) if detail else ''))
        return EXIT_INPUT_ERROR if failed else EXIT_SUCCESS

    def run_checks(self, scenario):
        spec, grid, options = scenario.spec, scenario.grid, scenario.options
        rows = []

        try:
            diagnostics = validate_model(spec, grid)
        except (ModelValidationError, ModelEvaluationError) as e:
            rows.append(('model', 'fail', np.nan, _clean(e)))
        else:
            rows.append(('model', 'pass', np.nan, 'mass conserving' if diagnostics.mass_conserving else 'mass not conserved'))

        try:
            dt_max = certify_dt(spec, grid, options)
        except CFLError as e:
            rows.append(('cfl', 'fail', e.dt_max, _clean(e)))
        except (ModelEvaluationError, FixedPointError) as e:
            rows.append(('cfl', 'fail', np.nan, _clean(e)))
        else:
            rows.append(('cfl', 'pass', dt_max, 'dt = {!r}'.format(grid.dt)))

        if spec.gradpF is None:
            rows.append(('gradp', 'skip', np.nan, 'model supplies no gradpF'))
        else:
            try:
                error = fd_check_gradp(spec, scenario.config['oracle', 'samples'], scenario.seed)
            except ModelEvaluationError as e:
                rows.append(('gradp', 'fail', np.nan, _clean(e)))
            else:
                status = 'pass' if error < GRADP_RTOL else 'fail'
                rows.append(('gradp', status, error, 'relative error limit {:g}'.format(GRADP_RTOL)))

        if scenario.uses_stopping:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', CompatibilityWarning)
                    residual = ubar_compatibility(spec, grid, scenario.stopping(), options)
            except MODEL_ERRORS + (ModelEvaluationError, FixedPointError) as e:
                rows.append(('ubar_compat', 'fail', np.nan, _clean(e)))
            else:
                status = 'pass' if residual <= options.compat_tol else 'warn'
                rows.append(('ubar_compat', status, residual, 'tolerance {:g}'.format(options.compat_tol)))
        else:
            rows.append(('ubar_compat', 'skip', np.nan, 'no stopping in mode {}'.format(scenario.mode)))
        return rows


class MFGMPCommand(MFGMasterCommand):
    prog = 'mfgmp'
    description = '''\
Solver suite for mean field games with a major player: coupled major-player and crowd
equations, their myopic limit, penalized and obstacle optimal stopping, limit sweeps and
independent oracles.
'''
    subparsers_title = 'commands'
    subcommands = [RunCommand, CheckCommand, SweepCommand]


def main(args=None):
    '''Run the command line ``args`` (default: ``sys.argv[1:]``) and return the exit status.'''
    tool = MFGMPCommand()
    try:
        return tool.main(args)
    except SOLVER_ERRORS as e:
        log.error('solver failed: {}'.format(e))
        status = EXIT_SOLVER_ERROR
    except INPUT_ERRORS as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        log.error('{}'.format(message))
        status = EXIT_INPUT_ERROR
    mfgmp.rc.pflush()
    return status


def entry_point():
    sys.exit(main())


if __name__ == '__main__':
    entry_point()
