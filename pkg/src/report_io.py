"""
Writers for machine-readable documents and text reports.

Every JSON document carries a versioned schema tag and is written with
sorted keys so identical inputs give byte-identical files.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

from .errors import StorageError, ValidationError


SCHEMA_PREFIX = "surgvision"


def schema_tag(kind: str, version: int = 1) -> str:
    """Schema tag stored in every JSON document."""
    return f"{SCHEMA_PREFIX}/{kind}@{version}"


def ensure_dir(directory: str) -> str:
    """Create a directory if needed and return it."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Failed to create directory {directory}: {e}")
    return directory


def write_json_document(path: str, kind: str, payload: Dict[str, Any]) -> str:
    """Write a JSON document tagged with its schema; returns the path."""
    document = {"schema": schema_tag(kind), **payload}
    try:
        text = json.dumps(document, indent=2, sort_keys=True, allow_nan=False)
    except ValueError as e:
        raise ValidationError(f"Document {path} holds a non-finite number: {e}")
    return write_text(path, text + "\n")


def read_json_document(path: str, kind: str) -> Dict[str, Any]:
    """Read a JSON document and check its schema tag."""
    try:
        with open(path, 'r', encoding='utf-8') as file:
            document = json.load(file)
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"[{path}] Invalid JSON: {e}")
    expected = schema_tag(kind)
    if not isinstance(document, dict) or document.get("schema") != expected:
        raise ValidationError(f"[{path}] Expected schema {expected}, got {document.get('schema') if isinstance(document, dict) else None}")
    return document


def write_text(path: str, text: str) -> str:
    """Write a UTF-8 text file with LF line endings."""
    directory = os.path.dirname(path)
    if directory:
        ensure_dir(directory)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as file:
            file.write(text)
    except OSError as e:
        raise StorageError(f"Failed to write {path}: {e}")
    return path


@dataclass
class ConversionReport:
    """
    Summary of a format conversion: class counts, id remapping, files written.

    Inputs skipped on resume are listed by name; converters fold their
    counts in so the report covers the whole input set.
    """

    class_counts: Dict[str, int] = field(default_factory=dict)
    id_mapping: Dict[str, int] = field(default_factory=dict)
    files_written: List[str] = field(default_factory=list)
    failed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class_counts": dict(sorted(self.class_counts.items())),
            "id_mapping": dict(sorted(self.id_mapping.items(), key=lambda kv: int(kv[0]))),
            "files_written": sorted(self.files_written),
            "failed": sorted(self.failed),
            "skipped": sorted(self.skipped),
        }

    def write(self, output_dir: str) -> str:
        """Write conversion_report.json; file paths are stored relative to output_dir."""
        payload = self.to_dict()
        payload["files_written"] = sorted(os.path.relpath(p, output_dir) for p in self.files_written)
        path = os.path.join(output_dir, "conversion_report.json")
        return write_json_document(path, "conversion-report", payload)
