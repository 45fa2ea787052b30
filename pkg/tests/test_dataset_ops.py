"""
Unit tests for dataset splitting and statistics.
"""

import os
import shutil
import tempfile

import pytest

from src.catalog import class_catalog_endoscope
from src.dataset_ops import SplitSpec, split, stats, write_split_manifests
from src.errors import ValidationError
from src.models import Annotation, BoxAA, Dataset, Frame
from src.report_io import read_json_document


def _video_frames(source, count, start=0):
    return [Frame(f"{source}_{i:05d}", 1280, 720, source) for i in range(start, start + count)]


def _pilot_dataset():
    return Dataset(class_catalog_endoscope(), tuple(_video_frames("pilot1", 776) + _video_frames("pilot2", 2689)))


class TestSplit:

    def test_seventy_percent_split_sizes(self):
        train, test = split(_pilot_dataset(), SplitSpec(0.7, seed=1))

        assert (len(train), len(test)) == (2425, 1040)

    def test_disjoint_cover_in_dataset_order(self):
        dataset = _pilot_dataset()

        train, test = split(dataset, SplitSpec(0.7, seed=3))

        assert set(train.frame_ids).isdisjoint(test.frame_ids)
        assert set(train.frame_ids) | set(test.frame_ids) == set(dataset.frame_ids)
        order = {fid: i for i, fid in enumerate(dataset.frame_ids)}
        assert [order[f] for f in train.frame_ids] == sorted(order[f] for f in train.frame_ids)

    def test_deterministic_for_seed(self):
        dataset = _pilot_dataset()

        first, _ = split(dataset, SplitSpec(0.7, seed=11))
        second, _ = split(dataset, SplitSpec(0.7, seed=11))
        other, _ = split(dataset, SplitSpec(0.7, seed=12))

        assert first.frame_ids == second.frame_ids
        assert first.frame_ids != other.frame_ids

    def test_stratified_per_source_counts(self):
        train, test = split(_pilot_dataset(), SplitSpec(0.7, seed=1, stratify_by_source=True))

        assert sum(f.source == "pilot1" for f in train) == 543
        assert sum(f.source == "pilot2" for f in train) == 1882
        assert len(test) == 3465 - 2425

    def test_two_frames(self):
        dataset = Dataset(class_catalog_endoscope(), tuple(_video_frames("v", 2)))

        train, test = split(dataset, SplitSpec(0.7))

        assert (len(train), len(test)) == (1, 1)

    def test_empty_side_rejected(self):
        dataset = Dataset(class_catalog_endoscope(), tuple(_video_frames("v", 2)))
        with pytest.raises(ValidationError):
            split(dataset, SplitSpec(0.3))

    def test_too_few_frames(self):
        with pytest.raises(ValidationError):
            split(Dataset(class_catalog_endoscope(), tuple(_video_frames("v", 1))), SplitSpec())

    def test_ratio_bounds(self):
        with pytest.raises(ValidationError):
            SplitSpec(1.0)
        with pytest.raises(ValidationError):
            SplitSpec(0.0)


class TestSplitManifests:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_manifests_and_summary(self):
        spec = SplitSpec(0.7, seed=1)
        train, test = split(_pilot_dataset(), spec)

        written = write_split_manifests(train, test, spec, self.temp_dir)

        assert [os.path.basename(p) for p in written] == ["train.txt", "test.txt", "split_summary.json"]
        with open(written[0]) as f:
            assert f.read().splitlines() == train.frame_ids
        summary = read_json_document(written[2], "split")
        assert summary["schema"] == "surgvision/split@1"
        assert summary["train"]["frames"] == 2425
        assert summary["test"]["frames"] == 1040
        assert sum(summary["test"]["per_source"].values()) == 1040
        assert summary["seed"] == 1


class TestStats:

    def test_single_source(self):
        frames = _video_frames("pilot1", 776)
        frames[0] = frames[0].with_annotations([Annotation(0, BoxAA(0, 0, 5, 5)), Annotation(7, BoxAA(5, 5, 9, 9))])
        frames[1] = frames[1].with_annotations([Annotation(7, BoxAA(0, 0, 5, 5))])

        result = stats(Dataset(class_catalog_endoscope(), tuple(frames)))

        assert result.frames == {"pilot1": 776}
        assert result.total_frames == 776
        assert result.instances["pilot1"] == (1, 0, 0, 0, 0, 0, 0, 2)
        assert sum(result.total_instances) == 3

    def test_sources_sorted_and_table(self):
        frames = _video_frames("pilot2", 3) + _video_frames("pilot1", 2)

        result = stats(Dataset(class_catalog_endoscope(), tuple(frames)))
        lines = result.to_table().splitlines()

        assert list(result.frames) == ["pilot1", "pilot2"]
        assert lines[0].startswith("Source")
        assert lines[0].rstrip().endswith("Instances")
        assert lines[2].startswith("pilot1")
        assert lines[-1].startswith("total")
        assert lines[-1].split(" | ")[1].strip() == "5"

    def test_empty_dataset(self):
        result = stats(Dataset(class_catalog_endoscope(), ()))

        assert result.total_frames == 0
        assert result.total_instances == (0,) * 8
        assert result.to_dict()["total"] == {"frames": 0, "instances": {name: 0 for name in result.class_names}}
        assert result.to_table().splitlines()[-1].startswith("total")
