"""
surgvision: data preparation and scoring toolkit for operating-room perception.

Annotation format conversion, detection evaluation for axis-aligned, rotated
and 3D boxes, auto-anchors, point-cloud preprocessing and action tubes.
"""

from .config import config

__version__ = "1.0.0"
__all__ = ["config"]
