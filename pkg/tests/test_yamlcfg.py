import pytest

from mfgmp.core.yamlcfg import (
    ConfigItemMissing,
    ConfigItemTypeError,
    ConfigItemUnknown,
    ConfigValueError,
    ScenarioParseError,
    YAMLConfig,
    resolve_scenario,
)

from .conftest import scenario_path


class TestResolveScenario:
    def test_defaults_filled(self):
        resolved = resolve_scenario({'model': 'lq', 'mode': 'SYSTEM'})
        assert resolved['grid']['n_x'] == 21
        assert resolved['grid']['x_min'] is None
        assert resolved['solver']['fp_policy'] == 'abort'
        assert resolved['solver']['t1'] is None
        assert resolved['sweep']['lambdas'] == [1.0, 10.0, 100.0, 1000.0]
        assert resolved['seed'] == 0

    def test_defaults_not_shared(self):
        a = resolve_scenario({'model': 'lq', 'mode': 'SYSTEM'})
        a['sweep']['lambdas'].append(1e4)
        b = resolve_scenario({'model': 'lq', 'mode': 'SYSTEM'})
        assert b['sweep']['lambdas'] == [1.0, 10.0, 100.0, 1000.0]

    def test_numbers_coerced(self):
        resolved = resolve_scenario({'model': 'lq', 'mode': 'SYSTEM', 'grid': {'T': 2, 'n_x': [3, 5], 'y_min': -2}})
        assert resolved['grid']['T'] == 2.0
        assert isinstance(resolved['grid']['T'], float)
        assert resolved['grid']['n_x'] == [3, 5]
        assert resolved['grid']['y_min'] == -2.0

    def test_unknown_key(self):
        with pytest.raises(ConfigItemUnknown) as excinfo:
            resolve_scenario({'model': 'lq', 'mode': 'SYSTEM', 'grid': {'n_z': 4}})
        assert excinfo.value.key == ('grid', 'n_z')

    def test_missing_key(self):
        with pytest.raises(ConfigItemMissing) as excinfo:
            resolve_scenario({'mode': 'SYSTEM'})
        assert excinfo.value.key == ('model',)

    @pytest.mark.parametrize(
        'data',
        [
            {'grid': {'n_x': 2.5}},
            {'grid': {'T': 'long'}},
            {'solver': {'explicit_diffusion': 1}},
            {'solver': {'max_iter': True}},
            {'model_params': [1, 2]},
            {'grid': [1, 2]},
        ],
    )
    def test_wrong_type(self, data):
        with pytest.raises(ConfigItemTypeError):
            resolve_scenario(dict({'model': 'lq', 'mode': 'SYSTEM'}, **data))

    def test_bad_choice(self):
        with pytest.raises(ConfigValueError):
            resolve_scenario({'model': 'lq', 'mode': 'SOLVE'})
        with pytest.raises(ConfigValueError):
            resolve_scenario({'model': 'lq', 'mode': 'SYSTEM', 'solver': {'fp_policy': 'retry'}})


class TestYAMLConfig:
    def test_tuple_access(self):
        config = YAMLConfig()
        config.update_from_file(scenario_path('lq_system.yaml'))
        config.resolve()
        assert config['grid', 'n_x'] == 5
        assert config['solver', 'snapshot_every'] == 5
        assert config.get(('model_params', 'c')) == 0.5
        assert config.get(('sweep', 'nothing'), 'fallback') == 'fallback'
        assert ('oracle', 'case') in config

    def test_setitem_creates_sections(self):
        config = YAMLConfig()
        config['grid', 'dt'] = 0.5
        assert config.data == {'grid': {'dt': 0.5}}

    def test_get_path_expands(self, monkeypatch):
        monkeypatch.setenv('MFGMP_TEST_ROOT', '/scratch')
        config = YAMLConfig({'output': '$MFGMP_TEST_ROOT/run'})
        assert config.get_path('output', abspath=False) == '/scratch/run'
        assert config.get_path('absent', default=None) is None
        assert config.get('absent', 3) == 3

    def test_parse_error_line(self, write_scenario):
        path = write_scenario(
            '''\
            model: lq
            mode: SYSTEM
            grid:
              n_x: [3, 5
            '''
        )
        with pytest.raises(ScenarioParseError) as excinfo:
            YAMLConfig().update_from_file(path)
        assert excinfo.value.line is not None
        assert excinfo.value.filename == path

    def test_top_level_must_be_mapping(self, write_scenario):
        path = write_scenario('- model\n- mode\n')
        with pytest.raises(ScenarioParseError):
            YAMLConfig().update_from_file(path)

    def test_empty_file(self, write_scenario):
        config = YAMLConfig()
        config.update_from_file(write_scenario(''))
        assert config.data == {}

    def test_optional_missing_file(self, tmp_path):
        config = YAMLConfig()
        config.update_from_file(str(tmp_path / 'absent.yaml'), required=False)
        assert config.data == {}
