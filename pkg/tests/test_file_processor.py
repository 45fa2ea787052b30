"""
Unit tests for file_processor module.
Tests input listing, the processed-files ledger and batch conversion.
"""

import os
import tempfile
import shutil
from unittest.mock import patch
import pytest

from src.errors import FormatError, StorageError
from src.file_processor import BatchProcessor, frame_id_of, frame_number, list_files, natural_key


def _copy_convert(path, output_dir):
    """Test converter: writes <stem>.out holding the upper-cased input."""
    with open(path, 'r') as f:
        content = f.read()
    target = os.path.join(output_dir, frame_id_of(path) + ".out")
    with open(target, 'w') as f:
        f.write(content.upper())
    return [target]


class TestListFiles:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_sorted_and_filtered(self):
        for name in ["b.json", "a.JSON", "c.txt"]:
            with open(os.path.join(self.temp_dir, name), 'w') as f:
                f.write("{}")
        os.makedirs(os.path.join(self.temp_dir, "d.json"))

        files = list_files(self.temp_dir, ['.json'])

        assert [os.path.basename(f) for f in files] == ["a.JSON", "b.json"]

    def test_natural_order(self):
        for name in ["frame_10.txt", "frame_2.txt", "frame_1.txt", "Frame_3.txt"]:
            with open(os.path.join(self.temp_dir, name), 'w') as f:
                f.write("")

        files = list_files(self.temp_dir, ['.txt'])

        assert [os.path.basename(f) for f in files] == ["frame_1.txt", "frame_2.txt", "Frame_3.txt", "frame_10.txt"]

    def test_natural_key(self):
        assert natural_key("frame_2.txt") < natural_key("frame_10.txt")
        assert sorted(["v1_f10", "v1_f9", "v0_f99"], key=natural_key) == ["v0_f99", "v1_f9", "v1_f10"]

    def test_frame_number(self):
        assert frame_number("frame_0012") == 12
        assert frame_number("video3_frame_7") == 7
        assert frame_number("left") is None

    def test_missing_directory_raises_storage_error(self):
        with pytest.raises(StorageError):
            list_files(os.path.join(self.temp_dir, "absent"), ['.json'])

    def test_frame_id_of(self):
        assert frame_id_of("/data/labels/frame_0001.txt") == "frame_0001"


class TestBatchProcessor:
    """Test cases for BatchProcessor class."""

    def setup_method(self):
        """Set up test fixtures before each test method."""
        self.temp_dir = tempfile.mkdtemp()
        self.input_dir = os.path.join(self.temp_dir, "in")
        self.output_dir = os.path.join(self.temp_dir, "out")
        os.makedirs(self.input_dir)
        for name in ["file1.txt", "file2.txt", "file3.txt"]:
            with open(os.path.join(self.input_dir, name), 'w') as f:
                f.write(name)

    def teardown_method(self):
        """Clean up test fixtures after each test method."""
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_init_creates_output_directory(self):
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert, workers=1)

        assert os.path.isdir(self.output_dir)
        assert processor.processed_files_path == os.path.join(self.output_dir, "processed_files.txt")

    def test_init_handles_directory_creation_error(self):
        with patch('os.makedirs', side_effect=PermissionError("Permission denied")):
            with pytest.raises(StorageError):
                BatchProcessor(self.input_dir, "/invalid/path", ['.txt'], _copy_convert, workers=1)

    @patch('src.file_processor.log_warning')
    def test_get_new_files_empty_directory(self, mock_log_warning):
        empty = os.path.join(self.temp_dir, "empty")
        os.makedirs(empty)
        processor = BatchProcessor(empty, self.output_dir, ['.txt'], _copy_convert, workers=1)

        assert processor.get_new_files() == []
        mock_log_warning.assert_called_once()

    def test_single_file_input(self):
        path = os.path.join(self.input_dir, "file2.txt")
        processor = BatchProcessor(path, self.output_dir, ['.txt'], _copy_convert, workers=1)

        assert processor.get_new_files() == [path]

    def test_process_new_files_writes_outputs_and_ledger(self):
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert, workers=1)

        result = processor.process_new_files()

        assert result.processed_count == 3
        assert result.failed == []
        assert [os.path.basename(p) for p in result.files_written] == ["file1.out", "file2.out", "file3.out"]
        with open(os.path.join(self.output_dir, "file2.out")) as f:
            assert f.read() == "FILE2.TXT"
        with open(processor.processed_files_path) as f:
            assert f.read() == "file1.txt|success\nfile2.txt|success\nfile3.txt|success\n"

    def test_resume_skips_processed_files(self):
        os.makedirs(self.output_dir)
        with open(os.path.join(self.output_dir, "processed_files.txt"), 'w') as f:
            f.write("file1.txt|success\nfile2.txt|error\n")
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert, workers=1, resume=True)

        names = [os.path.basename(p) for p in processor.get_new_files()]

        assert names == ["file2.txt", "file3.txt"]

    def test_resume_reports_skipped_files(self):
        os.makedirs(self.output_dir)
        with open(os.path.join(self.output_dir, "processed_files.txt"), 'w') as f:
            f.write("file1.txt|success\nfile3.txt|success\n")
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert, workers=1, resume=True)

        result = processor.process_new_files()

        assert list(result.statuses) == ["file2.txt"]
        assert [os.path.basename(p) for p in result.skipped] == ["file1.txt", "file3.txt"]

    def test_without_resume_everything_is_new(self):
        os.makedirs(self.output_dir)
        with open(os.path.join(self.output_dir, "processed_files.txt"), 'w') as f:
            f.write("file1.txt|success\n")
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert, workers=1)

        assert len(processor.get_new_files()) == 3

    @patch('src.file_processor.log_error')
    def test_failure_is_logged_and_recorded(self, mock_log_error):
        def convert(path, output_dir):
            if path.endswith("file2.txt"):
                raise FormatError("bad record", path, 0)
            return _copy_convert(path, output_dir)

        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], convert, workers=1)
        result = processor.process_new_files()

        assert result.statuses == {"file1.txt": "success", "file2.txt": "error", "file3.txt": "success"}
        assert result.failed == ["file2.txt"]
        mock_log_error.assert_called_once()
        with open(processor.processed_files_path) as f:
            assert "file2.txt|error" in f.read()

    def test_os_error_becomes_storage_error(self, mocker):
        convert = mocker.Mock(side_effect=OSError("disk full"))
        mock_log_error = mocker.patch('src.file_processor.log_error')
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], convert, workers=1)

        result = processor.process_new_files()

        assert result.processed_count == 0
        assert convert.call_count == 3
        assert all(isinstance(call.args[1], StorageError) for call in mock_log_error.call_args_list)

    def test_thread_pool_keeps_name_order(self):
        serial = BatchProcessor(self.input_dir, os.path.join(self.temp_dir, "serial"), ['.txt'],
                                _copy_convert, workers=1).process_new_files()
        parallel = BatchProcessor(self.input_dir, os.path.join(self.temp_dir, "parallel"), ['.txt'],
                                  _copy_convert, workers=4).process_new_files()

        assert list(parallel.statuses) == list(serial.statuses)
        assert [os.path.basename(p) for p in parallel.files_written] == \
            [os.path.basename(p) for p in serial.files_written]

    def test_workers_default_from_config(self, mocker):
        mocker.patch('src.file_processor.config.get_workers', return_value=3)
        processor = BatchProcessor(self.input_dir, self.output_dir, ['.txt'], _copy_convert)

        assert processor.workers == 3
