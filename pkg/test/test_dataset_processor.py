# test/test_dataset_processor.py
"""
Test suite for dataset, model file and prediction grid loading
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from interval_service.src.core.errors import ConfigError, DatasetError
from interval_service.src.processors.dataset_processor import DatasetProcessor, parse_grid
from shared.mappers.value_mapper import apply_target_transform
from shared.utils.model_loader import extract_model_definition, find_model, load_models_from_dir


class TestDatasetProcessor:

    @pytest.fixture
    def temp_directory(self):
        """Create a temporary directory for testing"""
        with tempfile.TemporaryDirectory() as temp_dir:
            yield Path(temp_dir)

    def setup_method(self):
        self.processor = DatasetProcessor(base_dir=project_root)

    def test_pcb_dataset(self):
        """The bundled PCB data has 28 observations"""
        data = self.processor.load_dataset('data/pcb.csv', 'conc', ['age'])
        assert data.n == 28
        assert data.columns == ['age']
        assert data.target == 'conc'

    def test_log_transform(self):
        raw = self.processor.load_dataset('data/pcb.csv', 'conc', ['age'])
        logged = self.processor.load_dataset('data/pcb.csv', 'conc', ['age'], target_transform='log')
        np.testing.assert_allclose(logged.y, np.log(raw.y))

    def test_variables_default_to_other_columns(self, temp_directory):
        path = temp_directory / 'data.csv'
        path.write_text("a,y,b\n1,2,3\n4,5,6\n", encoding='utf-8')
        data = DatasetProcessor(base_dir=temp_directory).load_dataset('data.csv', 'y')
        assert data.columns == ['a', 'b']
        np.testing.assert_array_equal(data.X, [[1.0, 3.0], [4.0, 6.0]])

    def test_bad_value_reports_line_and_column(self, temp_directory):
        """Line numbers count the header as line 1"""
        path = temp_directory / 'data.csv'
        path.write_text("x,y\n1,2\n3,abc\n", encoding='utf-8')
        with pytest.raises(DatasetError) as info:
            DatasetProcessor(base_dir=temp_directory).load_dataset('data.csv', 'y', ['x'])
        assert info.value.line == 3
        assert info.value.column == 'y'

    def test_missing_value_is_rejected(self, temp_directory):
        path = temp_directory / 'data.csv'
        path.write_text("x,y\n1,2\n,4\n", encoding='utf-8')
        with pytest.raises(DatasetError) as info:
            DatasetProcessor(base_dir=temp_directory).load_dataset('data.csv', 'y', ['x'])
        assert info.value.line == 3
        assert info.value.column == 'x'

    def test_empty_dataset(self, temp_directory):
        """A header without observations is an error"""
        path = temp_directory / 'empty.csv'
        path.write_text("x,y\n", encoding='utf-8')
        with pytest.raises(DatasetError, match="no observations"):
            DatasetProcessor(base_dir=temp_directory).load_dataset('empty.csv', 'y', ['x'])

    def test_missing_columns_and_files(self, temp_directory):
        with pytest.raises(DatasetError) as info:
            self.processor.load_dataset('data/pcb.csv', 'weight', ['age'])
        assert info.value.column == 'weight'
        with pytest.raises(DatasetError):
            self.processor.load_dataset('data/pcb.csv', 'conc', ['length'])
        with pytest.raises(DatasetError, match="not found"):
            self.processor.load_dataset('data/nothing.csv', 'conc')
        with pytest.raises(ConfigError):
            self.processor.load_dataset(None, 'conc')

    def test_transform_outside_domain(self, temp_directory):
        path = temp_directory / 'data.csv'
        path.write_text("x,y\n1,2\n2,-1\n", encoding='utf-8')
        with pytest.raises(DatasetError, match="log transform"):
            DatasetProcessor(base_dir=temp_directory).load_dataset('data.csv', 'y', ['x'], 'log')

    def test_load_expression(self):
        """Inline text wins; model files also declare variables and target"""
        assert self.processor.load_expression("1 + 2*x0", None) == ("1 + 2*x0", None, None)
        text, variables, target = self.processor.load_expression(None, 'models/pcb_hl.expr')
        assert text == "-3.93*exp(-0.19*age) + 3.13"
        assert variables == ['age']
        assert target == 'conc'
        # bundled models are also found by name
        assert self.processor.load_expression(None, 'kotanchek_true')[1] == ['x', 'y']

    def test_load_expression_errors(self):
        with pytest.raises(ConfigError):
            self.processor.load_expression(None, None)
        with pytest.raises(DatasetError):
            self.processor.load_expression(None, 'no_such_model')

    def test_points_from_grid_and_file(self, temp_directory):
        points = self.processor.load_points('age=1:3:1', ['age'])
        np.testing.assert_allclose(points[:, 0], [1.0, 2.0, 3.0])

        path = temp_directory / 'points.csv'
        path.write_text("y,x\n0.5,1\n1.5,2\n", encoding='utf-8')
        points = DatasetProcessor(base_dir=temp_directory).load_points('points.csv', ['x', 'y'])
        np.testing.assert_array_equal(points, [[1.0, 0.5], [2.0, 1.5]])

        with pytest.raises(ConfigError):
            self.processor.load_points(None, ['age'])


class TestGrid:

    def test_cartesian_product_in_variable_order(self):
        points = parse_grid("y=0:1:0.5,x=2", ['x', 'y'])
        np.testing.assert_allclose(points, [[2.0, 0.0], [2.0, 0.5], [2.0, 1.0]])

    def test_floating_point_steps_include_stop(self):
        points = parse_grid("x=-0.2:4.2:0.1", ['x'])
        assert points.shape == (45, 1)
        assert points[-1, 0] == pytest.approx(4.2)

    def test_invalid_grids(self):
        for spec in ("x=1:2", "x=2:1:0.5", "x=0:1:0", "z=1", "x", "x=a"):
            with pytest.raises(ConfigError):
                parse_grid(spec, ['x'])
        with pytest.raises(ConfigError, match="does not define"):
            parse_grid("x=1", ['x', 'y'])


class TestModelFiles:

    def setup_method(self):
        self.models_dir = project_root / 'models'

    def test_bundled_models(self):
        models = load_models_from_dir(self.models_dir)
        assert sorted(models) == ['kotanchek_hl', 'kotanchek_true', 'pcb_hl', 'pcb_reference']
        assert models['kotanchek_hl']['target'] == 'target'

    def test_header_comments(self, tmp_path):
        path = tmp_path / 'model.expr'
        path.write_text("# variables: a, b\n# description: test model\n1*a +\n  2*b\n", encoding='utf-8')
        definition = extract_model_definition(path)
        assert definition['name'] == 'model'
        assert definition['expression'] == "1*a + 2*b"
        assert definition['variables'] == ['a', 'b']
        assert definition['target'] is None
        assert definition['description'] == 'test model'

    def test_file_without_expression(self, tmp_path):
        path = tmp_path / 'blank.expr'
        path.write_text("# only a comment\n", encoding='utf-8')
        with pytest.raises(ValueError):
            extract_model_definition(path)

    def test_find_model(self):
        assert find_model('pcb_reference', self.models_dir)['expression'] == "-2.391 + 2.3*cbrt(age)"
        assert find_model('missing', self.models_dir) is None

    def test_target_transforms(self):
        np.testing.assert_allclose(apply_target_transform(np.array([1.0, 100.0]), 'log10'), [0.0, 2.0])
        with pytest.raises(ValueError):
            apply_target_transform(np.array([1.0]), 'cube')


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
