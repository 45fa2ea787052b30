"""
Unit tests for the configuration module.
"""

import os
import shutil
import sys
import tempfile
import unittest
from unittest.mock import patch

from src.config import Config, DEFAULTS
from src.errors import ValidationError

# `src` re-exports the `config` instance, which shadows the submodule attribute,
# so resolve the module itself for patching.
config_module = sys.modules['src.config']


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def _write_config(self, text):
        path = os.path.join(self.temp_dir, "run.env")
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = Config(environ={})

        self.assertEqual(config.get_seed(), 0)
        self.assertEqual(config.get_iou_threshold(), 0.5)
        self.assertEqual(config.get_train_ratio(), 0.7)
        self.assertEqual(config.get_ratio_threshold(), 4.0)
        self.assertEqual(config.get_n_per_level(), 3)
        self.assertEqual(config.get_img_size(), 640)
        self.assertEqual(config.get_voxel_size(), (0.05, 0.05, 0.05))
        self.assertEqual(config.get_point_cloud_range(), (-3.0, 3.0, -3.0, 3.0, 0.0, 3.0))
        self.assertEqual(config.get_max_points_per_voxel(), 32)
        self.assertIsNone(config.get_log_file_path())
        self.assertTrue(config.validate())

    def test_environment_overrides_defaults(self):
        config = Config(environ={'SEED': '7', 'VOXEL_SIZE': '0.1'})

        self.assertEqual(config.get_seed(), 7)
        self.assertEqual(config.get_voxel_size(), (0.1, 0.1, 0.1))

    def test_config_file_overrides_environment(self):
        path = self._write_config("SEED=11\nTRAIN_RATIO=0.8\n")
        config = Config(path, environ={'SEED': '7', 'IMG_SIZE': '1280'})

        self.assertEqual(config.get_seed(), 11)
        self.assertEqual(config.get_train_ratio(), 0.8)
        self.assertEqual(config.get_img_size(), 1280)

    def test_config_path_from_environment(self):
        path = self._write_config("N_PER_LEVEL=5\n")
        config = Config(environ={'SURGVISION_CONFIG': path})

        self.assertEqual(config.get_n_per_level(), 5)

    @patch.object(config_module, 'log_error')
    def test_unknown_key_fails_validation(self, mock_log_error):
        path = self._write_config("SEEDS=3\n")
        config = Config(path, environ={})

        self.assertFalse(config.validate())
        mock_log_error.assert_called_once()
        self.assertIn("SEEDS", mock_log_error.call_args[0][0])

    @patch.object(config_module, 'log_error')
    def test_missing_config_file(self, mock_log_error):
        config = Config(os.path.join(self.temp_dir, "absent.env"), environ={})

        self.assertFalse(config.validate())
        mock_log_error.assert_called_once()

    @patch.object(config_module, 'log_error')
    def test_out_of_range_values(self, mock_log_error):
        config = Config(environ={'TRAIN_RATIO': '1.0', 'POINT_CLOUD_RANGE': '3,-3,0,1,0,1'})

        self.assertFalse(config.validate())
        self.assertEqual(mock_log_error.call_count, 2)

    @patch.object(config_module, 'log_error')
    def test_unparsable_value(self, mock_log_error):
        config = Config(environ={'SEED': 'abc'})

        with self.assertRaises(ValidationError):
            config.get_seed()
        self.assertFalse(config.validate())

    def test_every_default_is_readable(self):
        config = Config(environ={})
        for key in DEFAULTS:
            self.assertEqual(config.get(key), DEFAULTS[key])

    def test_getters_are_documented(self):
        getters = [name for name in dir(Config) if name.startswith("get_")]
        self.assertTrue(getters)
        for name in getters:
            self.assertTrue(getattr(Config, name).__doc__, name)


if __name__ == '__main__':
    unittest.main()
