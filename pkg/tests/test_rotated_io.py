"""
Unit tests for rotated-box label files.
"""

import math
import shutil
import tempfile

import pytest

from src.catalog import class_catalog_rotated
from src.errors import FormatError
from src.models import Annotation, BoxAA, BoxRot, Dataset, Frame
from src.rotated_io import parse_rotated_labels, read_rotated_labels, write_rotated_labels


class TestRotatedLabels:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.catalog = class_catalog_rotated()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_parse(self):
        annotations = parse_rotated_labels("5 120 80 60 20 0.5 0.9\n6 10 10 4 2 0\n", self.catalog)

        assert annotations[0].class_id == 5
        assert annotations[0].geometry == BoxRot(120, 80, 60, 20, 0.5)
        assert annotations[0].score == 0.9
        assert annotations[1].score is None

    def test_theta_folded_on_parse(self):
        annotations = parse_rotated_labels(f"0 10 10 4 2 {math.pi}", self.catalog)
        assert annotations[0].geometry.theta == pytest.approx(0.0)

    def test_parse_errors(self):
        with pytest.raises(FormatError):
            parse_rotated_labels("0 10 10 4 2", self.catalog)
        with pytest.raises(FormatError):
            parse_rotated_labels("8 10 10 4 2 0", self.catalog)
        with pytest.raises(FormatError):
            parse_rotated_labels("0 10 10 0 2 0", self.catalog)
        with pytest.raises(FormatError):
            parse_rotated_labels("0 10 10 4 2 inf", self.catalog)

    def test_write_then_read(self):
        boxes = (Annotation(1, BoxRot(100, 50, 40, 10, -0.75)), Annotation(6, BoxRot(10.5, 20.25, 3, 2, 1.0), 0.5))
        dataset = Dataset(self.catalog, (Frame("frame_a", annotations=boxes), Frame("frame_b")))

        written = write_rotated_labels(dataset, self.temp_dir)
        loaded = read_rotated_labels(self.temp_dir, self.catalog)

        with open(written[0]) as f:
            assert f.read().splitlines()[0] == "1 100 50 40 10 -0.75"
        assert loaded.frame_ids == ["frame_a", "frame_b"]
        assert loaded.frame("frame_a").annotations == boxes

    def test_only_rotated_boxes_written(self):
        dataset = Dataset(self.catalog, (Frame("f", annotations=(Annotation(0, BoxAA(0, 0, 1, 1)),)),))
        with pytest.raises(FormatError):
            write_rotated_labels(dataset, self.temp_dir)

    def test_missing_file_allowed(self):
        dataset = read_rotated_labels(self.temp_dir, self.catalog, frame_ids=["x"], allow_missing=True)
        assert dataset.frame("x").annotations == ()
