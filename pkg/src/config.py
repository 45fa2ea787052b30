"""
Configuration module for environment variables, config files and settings.

Precedence (highest first): command-line flag, config file, environment
(including a local .env file), built-in default. The config file uses the
same KEY=VALUE syntax as .env files.
"""
import os
from typing import Dict, List, Mapping, Optional, Tuple

from dotenv import load_dotenv, dotenv_values

from .errors import ValidationError
from .logger import log_error

# Load environment variables from .env file
load_dotenv()


CONFIG_PATH_ENV = 'SURGVISION_CONFIG'

# Toolkit defaults, not values taken from any recorded experiment.
DEFAULTS: Dict[str, str] = {
    'LOG_FILE_PATH': '',
    'LOG_LEVEL': 'WARNING',
    'SEED': '0',
    'IOU_THRESHOLD': '0.5',
    'TRAIN_RATIO': '0.7',
    'RATIO_THRESHOLD': '4.0',
    'N_PER_LEVEL': '3',
    'ANCHOR_LEVELS': '3',
    'IMG_SIZE': '640',
    'LEAF_SIZE': '0.02',
    'VOXEL_SIZE': '0.05,0.05,0.05',
    'POINT_CLOUD_RANGE': '-3,3,-3,3,0,3',
    'MAX_POINTS_PER_VOXEL': '32',
    'TUBE_IOU_THRESHOLD': '0.3',
    'TUBE_MAX_GAP': '2',
    'WORKERS': '1',
}


class Config:
    """Configuration class for the toolkit."""

    def __init__(self, config_path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None):
        """
        Initialize configuration from defaults, environment and an optional config file.

        Args:
            config_path: KEY=VALUE file; falls back to $SURGVISION_CONFIG
            environ: Environment mapping (default: os.environ)
        """
        env = os.environ if environ is None else environ
        self.config_path = config_path or env.get(CONFIG_PATH_ENV, '')
        self.errors: List[str] = []

        self.values: Dict[str, str] = dict(DEFAULTS)
        for key in DEFAULTS:
            if key in env:
                self.values[key] = env[key]

        if self.config_path:
            if os.path.isfile(self.config_path):
                for key, value in dotenv_values(self.config_path).items():
                    if key not in DEFAULTS:
                        self.errors.append(f"Unknown config key {key} in {self.config_path}")
                    elif value is not None:
                        self.values[key] = value
            else:
                self.errors.append(f"Config file not found: {self.config_path}")

    def _number(self, key: str, cast):
        raw = self.values[key]
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"Config value {key}={raw!r} is not a valid {cast.__name__}")

    def _floats(self, key: str, count: int) -> Tuple[float, ...]:
        raw = self.values[key]
        try:
            parts = tuple(float(part) for part in raw.split(','))
        except ValueError:
            raise ValidationError(f"Config value {key}={raw!r} is not a comma-separated list of numbers")
        if len(parts) == 1 and count == 3:
            parts = parts * 3
        if len(parts) != count:
            raise ValidationError(f"Config value {key}={raw!r} needs {count} numbers")
        return parts

    def validate(self) -> bool:
        """
        Validate that configured values parse and lie in their documented ranges.

        Returns:
            bool: True if configuration is valid, False otherwise
        """
        problems = list(self.errors)
        checks = [
            (self.get_train_ratio, lambda v: 0.0 < v < 1.0, "TRAIN_RATIO must lie in (0, 1)"),
            (self.get_iou_threshold, lambda v: 0.0 < v <= 1.0, "IOU_THRESHOLD must lie in (0, 1]"),
            (self.get_ratio_threshold, lambda v: v > 1.0, "RATIO_THRESHOLD must be > 1"),
            (self.get_n_per_level, lambda v: v >= 1, "N_PER_LEVEL must be >= 1"),
            (self.get_anchor_levels, lambda v: v >= 1, "ANCHOR_LEVELS must be >= 1"),
            (self.get_img_size, lambda v: v > 0, "IMG_SIZE must be > 0"),
            (self.get_leaf_size, lambda v: v > 0, "LEAF_SIZE must be > 0"),
            (self.get_voxel_size, lambda v: all(s > 0 for s in v), "VOXEL_SIZE entries must be > 0"),
            (self.get_point_cloud_range, lambda r: r[0] < r[1] and r[2] < r[3] and r[4] < r[5],
             "POINT_CLOUD_RANGE needs min < max on every axis"),
            (self.get_max_points_per_voxel, lambda v: v >= 1, "MAX_POINTS_PER_VOXEL must be >= 1"),
            (self.get_tube_iou_threshold, lambda v: 0.0 < v <= 1.0, "TUBE_IOU_THRESHOLD must lie in (0, 1]"),
            (self.get_tube_max_gap, lambda v: v >= 0, "TUBE_MAX_GAP must be >= 0"),
            (self.get_workers, lambda v: v >= 1, "WORKERS must be >= 1"),
            (self.get_seed, lambda v: True, ""),
        ]
        for getter, ok, message in checks:
            try:
                if not ok(getter()):
                    problems.append(message)
            except ValidationError as e:
                problems.append(str(e))

        for problem in problems:
            log_error(f"Configuration error: {problem}")
        return not problems

    def get(self, key: str) -> str:
        """Get a raw configuration value."""
        return self.values[key]

    def get_log_file_path(self) -> Optional[str]:
        """Get the log file path (None means console only)."""
        return self.values['LOG_FILE_PATH'] or None

    def get_log_level(self) -> str:
        """Get the console log level name."""
        return self.values['LOG_LEVEL'].upper()

    def get_seed(self) -> int:
        """Get the seed for splits and anchor fitting."""
        return self._number('SEED', int)

    def get_iou_threshold(self) -> float:
        """Get the IoU threshold that scores report rows."""
        return self._number('IOU_THRESHOLD', float)

    def get_train_ratio(self) -> float:
        """Get the train share of a split."""
        return self._number('TRAIN_RATIO', float)

    def get_ratio_threshold(self) -> float:
        """Get the anchor side-ratio threshold used for BPR."""
        return self._number('RATIO_THRESHOLD', float)

    def get_n_per_level(self) -> int:
        """Get the number of anchors per detection level."""
        return self._number('N_PER_LEVEL', int)

    def get_anchor_levels(self) -> int:
        """Get the number of detection levels."""
        return self._number('ANCHOR_LEVELS', int)

    def get_img_size(self) -> int:
        """Get the square training resolution in pixels."""
        return self._number('IMG_SIZE', int)

    def get_leaf_size(self) -> float:
        """Get the downsampling leaf size in meters."""
        return self._number('LEAF_SIZE', float)

    def get_voxel_size(self) -> Tuple[float, float, float]:
        """Get the voxel size; a single number applies to all three axes."""
        return self._floats('VOXEL_SIZE', 3)

    def get_point_cloud_range(self) -> Tuple[float, ...]:
        """
        Get the point-cloud range.

        Returns:
            tuple: (x_min, x_max, y_min, y_max, z_min, z_max) in meters
        """
        return self._floats('POINT_CLOUD_RANGE', 6)

    def get_max_points_per_voxel(self) -> int:
        """Get the per-voxel storage cap."""
        return self._number('MAX_POINTS_PER_VOXEL', int)

    def get_tube_iou_threshold(self) -> float:
        """Get the minimum IoU for extending a tube."""
        return self._number('TUBE_IOU_THRESHOLD', float)

    def get_tube_max_gap(self) -> int:
        """Get the number of frames a tube may miss."""
        return self._number('TUBE_MAX_GAP', int)

    def get_workers(self) -> int:
        """Get the batch worker thread count."""
        return self._number('WORKERS', int)


# Global configuration instance
config = Config()
