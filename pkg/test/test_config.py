# test/test_config.py
"""
Test suite for configuration merging and validation
"""

import sys
import tempfile
from pathlib import Path

import pytest

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from interval_service.src.core.errors import ConfigError
from interval_service.src.utils.config_loader import build_config, load_yaml, merge, parse_pairs


class TestConfigLoader:

    @pytest.fixture
    def temp_directory(self):
        """Create a temporary directory for testing"""
        with tempfile.TemporaryDirectory() as temp_dir:
            yield Path(temp_dir)

    def write(self, path: Path, text: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
        return path

    def test_defaults_without_files(self, temp_directory):
        """Built-in defaults apply when no YAML file exists"""
        config = build_config(base_dir=temp_directory)
        assert config.alphas == [0.05]
        assert config.profile.step == 8.0
        assert config.profile.k_max == 30
        assert config.profile.max_restarts == 10
        assert config.contour_alphas == [0.2, 0.5]
        assert config.pairs is None
        assert config.output_formats == ['json', 'csv']

    def test_bundled_config_files(self):
        """The shipped analysis configurations load"""
        config = build_config(config_file=Path('config') / 'pcb_config.yml', base_dir=project_root)
        assert config.target == 'conc'
        assert config.variables == ['age']
        assert config.target_transform == 'log'
        assert config.expression_file == 'models/pcb_hl.expr'

    def test_precedence(self, temp_directory):
        """defaults < analysis_config.yml < config file < overrides"""
        self.write(temp_directory / 'config' / 'analysis_config.yml', "alphas: [0.1]\nprofile:\n  step: 4\n")
        extra = self.write(temp_directory / 'run.yml', "alphas: [0.2, 0.3]\nprofile:\n  k_max: 50\n")
        config = build_config(config_file=extra, base_dir=temp_directory)
        assert config.alphas == [0.2, 0.3]
        assert config.profile.step == 4.0
        assert config.profile.k_max == 50

        config = build_config({'alphas': [0.01], 'profile': {'step': 2}}, extra, temp_directory)
        assert config.alphas == [0.01]
        assert config.profile.step == 2.0
        assert config.profile.k_max == 50

    def test_merge_skips_none(self):
        """Unset command-line values do not clear configured ones"""
        merged = merge({'a': 1, 'b': {'c': 2, 'd': 3}}, {'a': None, 'b': {'c': 5, 'd': None}})
        assert merged == {'a': 1, 'b': {'c': 5, 'd': 3}}

    def test_comma_separated_lists(self, temp_directory):
        config = build_config({'variables': 'x, y', 'alphas': '0.05,0.1'}, base_dir=temp_directory)
        assert config.variables == ['x', 'y']
        assert config.alphas == [0.05, 0.1]

    def test_parse_pairs(self):
        assert parse_pairs('all') is None
        assert parse_pairs(None) is None
        assert parse_pairs('0-1,1-2') == [(0, 1), (1, 2)]
        assert parse_pairs('0:2') == [(0, 2)]
        assert parse_pairs([[0, 1]]) == [(0, 1)]
        with pytest.raises(ConfigError):
            parse_pairs('1-1')
        with pytest.raises(ConfigError):
            parse_pairs('a-b')

    def test_invalid_values(self, temp_directory):
        """Out-of-range settings are configuration errors"""
        for overrides in ({'alphas': [1.5]},
                          {'contour': {'alphas': [0.0]}},
                          {'variables': ['x', 'x']},
                          {'target': 'x', 'variables': ['x']},
                          {'output_formats': ['xml']},
                          {'performance': {'max_workers': 0}},
                          {'profile': {'step': -1}},
                          {'optimizer': {'max_iters': 'many'}}):
            with pytest.raises(ConfigError):
                build_config(overrides, base_dir=temp_directory)

    def test_yaml_errors(self, temp_directory):
        with pytest.raises(ConfigError, match="not found"):
            load_yaml(temp_directory / 'missing.yml')
        bad = self.write(temp_directory / 'bad.yml', "alphas: [0.05\n")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_yaml(bad)
        listed = self.write(temp_directory / 'list.yml', "- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_yaml(listed)
        empty = self.write(temp_directory / 'empty.yml', "")
        assert load_yaml(empty) == {}


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
