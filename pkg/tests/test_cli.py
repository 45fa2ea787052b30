"""
End-to-end tests for the command-line front end.
"""

import json
import os
import shutil
import struct
import tempfile

import pytest

from src.cli import RunConfig, build_parser, dispatch
from src.config import Config
from src.errors import ValidationError
from src.report_io import read_json_document


def _coco(images, annotations=(), categories=({"id": 1, "name": "clipper"},)):
    return json.dumps({"images": list(images), "annotations": list(annotations), "categories": list(categories)})


def _images(prefix, count, width=640, height=640):
    return [{"id": i, "file_name": f"{prefix}_{i:05d}.jpg", "width": width, "height": height} for i in range(count)]


class TestDispatch:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.output = os.path.join(self.temp_dir, "out")

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def _write(self, relative, text):
        path = os.path.join(self.temp_dir, relative)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_help_exits_zero(self, capsys):
        assert dispatch(['--help']) == 0
        assert "surgvision" in capsys.readouterr().out

    def test_unknown_command(self):
        assert dispatch(['train', '-o', self.output]) == 1

    def test_missing_input_is_io_error(self):
        assert dispatch(['stats', os.path.join(self.temp_dir, "absent.json"), '-o', self.output]) == 2

    def test_out_of_range_flag(self):
        path = self._write("gt/a.json", _coco(_images("a", 2)))
        assert dispatch(['split', path, '--ratio', '1.5', '-o', self.output]) == 1

    def test_coco2yolo(self):
        path = self._write("coco/frames.json", _coco(
            [{"id": 1, "file_name": "frame_0001.jpg", "width": 100, "height": 100}],
            [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 30, 20]}]))

        assert dispatch(['convert', 'coco2yolo', path, '-o', self.output]) == 0

        with open(os.path.join(self.output, "labels", "frame_0001.txt")) as f:
            assert f.read() == "0 0.25 0.2 0.3 0.2\n"
        with open(os.path.join(self.output, "classes.txt")) as f:
            assert f.read() == "clipper\n"
        report = read_json_document(os.path.join(self.output, "conversion_report.json"), "conversion-report")
        assert report["class_counts"] == {"clipper": 1}
        assert report["id_mapping"] == {"1": 0}

    def test_coco2yolo_resume_reports_all_inputs(self):
        for name, file_name in [("a.json", "frame_0001.jpg"), ("b.json", "frame_0002.jpg")]:
            self._write(f"coco/{name}", _coco(
                [{"id": 1, "file_name": file_name, "width": 100, "height": 100}],
                [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 30, 20]}]))
        coco_dir = os.path.join(self.temp_dir, "coco")
        assert dispatch(['convert', 'coco2yolo', coco_dir, '-o', self.output]) == 0
        self._write("coco/c.json", _coco(
            [{"id": 1, "file_name": "frame_0003.jpg", "width": 100, "height": 100}],
            [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [5, 5, 10, 10]},
             {"id": 2, "image_id": 1, "category_id": 1, "bbox": [50, 50, 10, 10]}]))

        assert dispatch(['convert', 'coco2yolo', coco_dir, '--resume', '-o', self.output]) == 0

        report = read_json_document(os.path.join(self.output, "conversion_report.json"), "conversion-report")
        assert report["class_counts"] == {"clipper": 4}
        assert report["skipped"] == ["a.json", "b.json"]
        assert sorted(os.listdir(os.path.join(self.output, "labels"))) == \
            ["frame_0001.txt", "frame_0002.txt", "frame_0003.txt"]

    def test_split(self, capsys):
        pilot1 = self._write("coco/pilot1.json", _coco(_images("p1", 776)))
        pilot2 = self._write("coco/pilot2.json", _coco(_images("p2", 2689)))

        assert dispatch(['split', pilot1, pilot2, '--ratio', '0.7', '--seed', '1', '-o', self.output]) == 0

        assert capsys.readouterr().out == "train 2425\ntest 1040\n"
        with open(os.path.join(self.output, "train.txt")) as f:
            assert len(f.read().splitlines()) == 2425
        with open(os.path.join(self.output, "test.txt")) as f:
            assert len(f.read().splitlines()) == 1040

    def test_stats(self):
        path = self._write("coco/pilot1.json", _coco(
            _images("p1", 3), [{"image_id": 0, "category_id": 1, "bbox": [0, 0, 5, 5]}]))

        assert dispatch(['stats', path, '-o', self.output]) == 0

        document = read_json_document(os.path.join(self.output, "stats.json"), "stats")
        assert document["sources"]["pilot1"] == {"frames": 3, "instances": {"clipper": 1}}

    def test_anchors(self, capsys):
        annotations = [{"image_id": i, "category_id": 1, "bbox": [0, 0, 50, 80]} for i in range(12)]
        path = self._write("coco/pilot1.json", _coco(_images("p1", 12), annotations))

        assert dispatch(['anchors', path, '-o', self.output]) == 0

        with open(os.path.join(self.output, "anchors.yaml")) as f:
            assert f.read() == ("anchors:\n  - [50,80, 50,80, 50,80]  # P3/8\n"
                                "  - [50,80, 50,80, 50,80]  # P4/16\n  - [50,80, 50,80, 50,80]  # P5/32\n")
        assert capsys.readouterr().out.endswith("bpr: 1.0000\n")

    def _oracle_labels(self):
        gt = os.path.join(self.temp_dir, "gt")
        det = os.path.join(self.temp_dir, "det")
        self._write("gt/frame_0001.txt", "0 0.5 0.5 0.2 0.2\n7 0.1 0.1 0.1 0.1\n")
        self._write("gt/frame_0002.txt", "3 0.3 0.3 0.2 0.4\n")
        self._write("det/frame_0001.txt", "0 0.5 0.5 0.2 0.2 0.9\n7 0.1 0.1 0.1 0.1 0.8\n")
        self._write("det/frame_0002.txt", "3 0.3 0.3 0.2 0.4 0.7\n")
        return gt, det

    def test_eval_oracle_detections(self):
        gt, det = self._oracle_labels()

        assert dispatch(['eval', gt, det, '--geometry', 'aa', '--iou', '0.5', '--per-class', '-o', self.output]) == 0

        report = read_json_document(os.path.join(self.output, "eval_report.json"), "eval-report")
        assert report["map_50"] == 1.0
        assert report["geometry"] == "aa"
        with open(os.path.join(self.output, "eval_report.txt")) as f:
            assert "mAP@0.5: 1.000" in f.read()

    def test_compare(self):
        gt, det = self._oracle_labels()
        runs = [os.path.join(self.temp_dir, "yolov5s"), os.path.join(self.temp_dir, "yolov5m")]
        for run in runs:
            assert dispatch(['eval', gt, det, '-o', run]) == 0

        reports = [os.path.join(run, "eval_report.json") for run in runs]
        assert dispatch(['compare', *reports, '-o', self.output]) == 0

        document = read_json_document(os.path.join(self.output, "comparison.json"), "comparison")
        assert document["models"] == ["yolov5s", "yolov5m"]
        assert document["map_50"] == [1.0, 1.0]

    def test_tubes_then_graphs(self):
        for i in range(6):
            self._write(f"video01/frame_{i:04d}.txt", f"0 {0.3 + 0.01 * i:.2f} 0.5 0.2 0.2 0.9\n5 0.8 0.8 0.1 0.1 0.6\n")
        tubes_out = os.path.join(self.temp_dir, "tubes")

        assert dispatch(['tubes', os.path.join(self.temp_dir, "video01"), '-o', tubes_out]) == 0
        tubes = read_json_document(os.path.join(tubes_out, "tubes.json"), "tubes")
        assert tubes["video_id"] == "video01"
        assert tubes["n_frames"] == 6
        assert [len(t["entries"]) for t in tubes["tubes"]] == [6, 6]

        assert dispatch(['graphs', os.path.join(tubes_out, "tubes.json"), '--topology', 'scene',
                         '--lengths', '12,3', '-o', self.output]) == 0
        graphs = read_json_document(os.path.join(self.output, "graphs.json"), "graphs")
        assert len(graphs["windows"]["12"]) == 1
        assert len(graphs["windows"]["3"]) == 2
        assert graphs["windows"]["12"][0]["nodes"] == ["tube:0", "tube:1", "scene"]

    def test_tubes_follow_frame_numbers(self):
        for i in range(1, 13):
            self._write(f"video02/frame_{i}.txt", f"0 {0.3 + 0.01 * i:.2f} 0.5 0.2 0.2 0.9\n")
        tubes_out = os.path.join(self.temp_dir, "tubes")

        assert dispatch(['tubes', os.path.join(self.temp_dir, "video02"), '-o', tubes_out]) == 0

        tubes = read_json_document(os.path.join(tubes_out, "tubes.json"), "tubes")
        assert tubes["n_frames"] == 12
        assert len(tubes["tubes"]) == 1
        assert [e["frame_index"] for e in tubes["tubes"][0]["entries"]] == list(range(12))

    def test_tubes_keep_missing_frames_as_gaps(self):
        for i in [1, 2, 3, 4, 6, 7, 8, 9, 10, 11, 12]:
            self._write(f"video03/frame_{i}.txt", f"0 {0.3 + 0.01 * i:.2f} 0.5 0.2 0.2 0.9\n")
        tubes_out = os.path.join(self.temp_dir, "tubes")

        assert dispatch(['tubes', os.path.join(self.temp_dir, "video03"), '--max-gap', '2',
                         '-o', tubes_out]) == 0

        tubes = read_json_document(os.path.join(tubes_out, "tubes.json"), "tubes")
        assert tubes["n_frames"] == 12
        assert [e["frame_index"] for e in tubes["tubes"][0]["entries"]] == [0, 1, 2, 3] + list(range(5, 12))

    def test_pcl_voxelize(self):
        path = os.path.join(self.temp_dir, "scan.bin")
        with open(path, 'wb') as f:
            f.write(struct.pack('<8f', 0.5, 0.5, 0.5, 1.0, 3.5, 0.5, 0.5, 1.0))

        assert dispatch(['pcl', 'voxelize', path, '--voxel-size', '1', '--range', '0,4,0,4,0,4',
                         '-o', self.output]) == 0

        summary = read_json_document(os.path.join(self.output, "scan.voxels.json"), "voxel-grid")
        assert summary["dims"] == [4, 4, 4]
        assert summary["occupied_voxels"] == 2

    def test_internal_error(self, mocker):
        path = self._write("coco/a.json", _coco(_images("a", 2)))
        mocker.patch.dict('src.cli.COMMANDS', {'stats': mocker.Mock(side_effect=RuntimeError("boom"))})
        mock_log_error = mocker.patch('src.cli.log_error')

        assert dispatch(['stats', path, '-o', self.output]) == 3
        mock_log_error.assert_called_once()


class TestRunConfig:

    def test_flags_override_config(self):
        args = build_parser().parse_args(['split', 'a.json', '--seed', '9', '-o', 'out'])

        run = RunConfig.from_args(args, Config(environ={'SEED': '4', 'TRAIN_RATIO': '0.8'}))

        assert run.seed == 9
        assert run.train_ratio == 0.8
        assert run.catalog == "endoscope"

    def test_voxel_and_range_flags(self):
        args = build_parser().parse_args(['pcl', 'voxelize', 'x.bin', '--voxel-size', '0.1,0.1,0.2',
                                          '--range', '0,1,0,1,0,1', '-o', 'out'])

        run = RunConfig.from_args(args, Config(environ={}))

        assert run.voxel_size == (0.1, 0.1, 0.2)
        assert run.point_cloud_range == (0.0, 1.0, 0.0, 1.0, 0.0, 1.0)

    def test_bad_voxel_flag(self):
        args = build_parser().parse_args(['pcl', 'voxelize', 'x.bin', '--voxel-size', '0.1,0.2', '-o', 'out'])
        with pytest.raises(ValidationError):
            RunConfig.from_args(args, Config(environ={}))
