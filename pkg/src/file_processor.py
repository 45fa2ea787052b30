"""
File processor module for batch conversion of input directories.
Lists input files, converts each into the output directory and keeps a
ledger of processed files so that a rerun can skip finished work.
"""

import glob
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .config import config
from .errors import StorageError, ToolkitError
from .logger import log_info, log_error, log_warning


LEDGER_FILENAME = "processed_files.txt"
_DIGITS = re.compile(r'(\d+)')

# Converts one input file into the output directory and returns written paths.
ConvertFn = Callable[[str, str], List[str]]


def list_files(directory: str, extensions: Sequence[str]) -> List[str]:
    """
    List files with the given extensions in natural filename order (frame_2 before frame_10).

    Args:
        directory: Directory to scan (not recursive)
        extensions: Accepted extensions including the dot, case-insensitive

    Returns:
        List[str]: Matching file paths
    """
    if not os.path.isdir(directory):
        raise StorageError(f"Not a directory: {directory}")
    wanted = {ext.lower() for ext in extensions}
    pattern = os.path.join(directory, "*")
    files = [f for f in glob.glob(pattern)
             if os.path.isfile(f) and os.path.splitext(f)[1].lower() in wanted]
    files.sort(key=lambda x: (natural_key(os.path.basename(x)), os.path.basename(x)))
    return files


def natural_key(name: str) -> Tuple:
    """Sort key comparing digit runs by value and the rest case-insensitively."""
    return tuple(int(part) if part.isdigit() else part.lower() for part in _DIGITS.split(name))


def frame_id_of(path: str) -> str:
    """Frame id carried by a file name: its stem."""
    return os.path.splitext(os.path.basename(path))[0]


def frame_number(frame_id: str) -> Optional[int]:
    """Number carried by a frame id: its last digit run, or None."""
    runs = _DIGITS.findall(frame_id)
    return int(runs[-1]) if runs else None


@dataclass
class BatchResult:
    """Outcome of one batch run, in filename order."""

    statuses: Dict[str, str] = field(default_factory=dict)
    files_written: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    @property
    def processed_count(self) -> int:
        return sum(1 for status in self.statuses.values() if status == "success")

    @property
    def failed(self) -> List[str]:
        return [name for name, status in self.statuses.items() if status != "success"]


class BatchProcessor:
    """Converts every matching file of an input directory into an output directory."""

    def __init__(self, input_path: str, output_dir: str, extensions: Sequence[str],
                 convert: ConvertFn, workers: Optional[int] = None, resume: bool = False):
        """
        Initialize the batch processor.

        Args:
            input_path: Input directory, or a single input file
            output_dir: Directory receiving every output file and the ledger
            extensions: Input extensions to pick up
            convert: Function (input_path, output_dir) -> written paths
            workers: Thread count (default from config)
            resume: Skip files already marked as processed in the ledger
        """
        self.input_path = input_path
        self.output_dir = output_dir
        self.extensions = list(extensions)
        self.convert = convert
        self.workers = workers or config.get_workers()
        self.resume = resume
        self.processed_files_path = os.path.join(output_dir, LEDGER_FILENAME)
        self.skipped: List[str] = []

        # Ensure output directory exists
        if not os.path.exists(self.output_dir):
            try:
                os.makedirs(self.output_dir)
                log_info(f"Created directory: {self.output_dir}")
            except OSError as e:
                raise StorageError(f"Failed to create directory {self.output_dir}: {e}")

    def get_new_files(self) -> List[str]:
        """
        Identify input files still to convert.

        Returns:
            List[str]: File paths sorted by filename
        """
        if os.path.isfile(self.input_path):
            all_files = [self.input_path]
        else:
            all_files = list_files(self.input_path, self.extensions)

        if not all_files:
            log_warning(f"No input files with extensions {', '.join(self.extensions)} in {self.input_path}")
            return []

        processed_files = self._load_processed_files() if self.resume else set()
        new_files = [f for f in all_files if os.path.basename(f) not in processed_files]
        self.skipped = [f for f in all_files if os.path.basename(f) in processed_files]
        log_info(f"Found {len(new_files)} files to process ({len(all_files) - len(new_files)} already processed)")
        return new_files

    def _convert_one(self, file_path: str) -> Tuple[str, List[str], Optional[Exception]]:
        filename = os.path.basename(file_path)
        try:
            written = self.convert(file_path, self.output_dir)
            return filename, written, None
        except ToolkitError as e:
            return filename, [], e
        except OSError as e:
            return filename, [], StorageError(f"[{filename}] {e}")

    def mark_file_as_processed(self, filename: str, status: str = "success") -> None:
        """
        Append a file to the ledger.

        Args:
            filename: Input file name
            status: Processing status ("success" or "error")
        """
        try:
            with open(self.processed_files_path, 'a', encoding='utf-8') as file:
                file.write(f"{filename}|{status}\n")
        except OSError as e:
            raise StorageError(f"Failed to update ledger {self.processed_files_path}: {e}")

    def _load_processed_files(self) -> Set[str]:
        """
        Load the set of successfully processed files from the ledger.

        Returns:
            Set[str]: Input file names already converted
        """
        processed_files = set()
        if not os.path.exists(self.processed_files_path):
            return processed_files
        with open(self.processed_files_path, 'r', encoding='utf-8') as file:
            for line in file:
                parts = line.strip().split('|')
                if len(parts) >= 2 and parts[1] == "success":
                    processed_files.add(parts[0])
        log_info(f"Loaded {len(processed_files)} processed files from ledger")
        return processed_files

    def process_new_files(self) -> BatchResult:
        """
        Convert every new input file; failures are logged and recorded, not raised.

        Returns:
            BatchResult: Per-file statuses and written paths in filename order
        """
        result = BatchResult()
        new_files = self.get_new_files()
        result.skipped = list(self.skipped)
        if not new_files:
            return result

        if self.workers > 1 and len(new_files) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                outcomes = list(pool.map(self._convert_one, new_files))
        else:
            outcomes = [self._convert_one(f) for f in new_files]

        for filename, written, error in outcomes:
            if error is None:
                result.statuses[filename] = "success"
                result.files_written.extend(written)
                self.mark_file_as_processed(filename, "success")
                log_info(f"[{filename}] Converted to {len(written)} file(s)")
            else:
                result.statuses[filename] = "error"
                self.mark_file_as_processed(filename, "error")
                log_error(f"[{filename}] Conversion failed", error)

        log_info(f"Batch completed. Successfully processed: {result.processed_count}/{len(new_files)} files")
        return result
