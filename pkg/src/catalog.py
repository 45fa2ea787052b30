"""
Built-in class catalogs and class resolution.
"""

import numbers
import os
from typing import Union

from .errors import NotFoundError, StorageError, ValidationError
from .models import ClassCatalog, ClassEntry


# Listing order of the endoscope annotation protocol; ids follow it.
ENDOSCOPE_CLASSES = (
    "crocodile grasper",
    "johan grasper",
    "hook diathermy",
    "maryland grasper",
    "clipper",
    "scissors",
    "bag holder",
    "trocar",
)

# Row order of the rotated-detection report.
ROTATED_CLASSES = (
    "clipper",
    "crocodile grasper",
    "hook diathermy",
    "maryland grasper",
    "scissors",
    "surgical instrument",
    "trocar",
    "johan grasper",
)

MAESTRO_CLASSES = ("Human",)

BUILTIN_CATALOGS = {
    "endoscope": ENDOSCOPE_CLASSES,
    "rotated": ROTATED_CLASSES,
    "maestro": MAESTRO_CLASSES,
}


def class_catalog_endoscope() -> ClassCatalog:
    """The eight endoscope instrument classes, crocodile grasper = 0 ... trocar = 7."""
    return ClassCatalog.from_names(ENDOSCOPE_CLASSES)


def class_catalog_rotated() -> ClassCatalog:
    """Classes of the rotated-box instrument set."""
    return ClassCatalog.from_names(ROTATED_CLASSES)


def class_catalog_maestro() -> ClassCatalog:
    """Object classes of the operating-room point-cloud scenes."""
    return ClassCatalog.from_names(MAESTRO_CLASSES)


def resolve_class(catalog: ClassCatalog, name_or_id: Union[str, int, ClassEntry]) -> ClassEntry:
    """
    Resolve a class name, id or entry against a catalog.

    Names match case-insensitively after whitespace normalization.

    Args:
        catalog: Nonempty catalog
        name_or_id: Class name, integer id, or an entry of this catalog

    Returns:
        ClassEntry: The matching entry

    Raises:
        NotFoundError: Unknown name or id
    """
    if len(catalog) == 0:
        raise ValidationError("Cannot resolve a class against an empty catalog")
    if isinstance(name_or_id, ClassEntry):
        name_or_id = name_or_id.class_id
    if isinstance(name_or_id, bool):
        raise NotFoundError(f"Unknown class: {name_or_id!r}")
    if isinstance(name_or_id, numbers.Integral):
        name_or_id = int(name_or_id)
        if name_or_id not in catalog:
            raise NotFoundError(f"Unknown class id: {name_or_id}")
        return catalog.entries[name_or_id]
    if isinstance(name_or_id, str):
        return catalog.entries[catalog.lookup(name_or_id)]
    raise NotFoundError(f"Unknown class: {name_or_id!r}")


def load_catalog(spec: str) -> ClassCatalog:
    """
    Load a built-in catalog by name, or a catalog file with one class per line.

    Blank lines and lines starting with '#' are skipped.
    """
    if spec in BUILTIN_CATALOGS:
        return ClassCatalog.from_names(BUILTIN_CATALOGS[spec])
    if not os.path.isfile(spec):
        raise NotFoundError(f"Catalog {spec!r} is neither a built-in ({', '.join(BUILTIN_CATALOGS)}) nor a file")
    try:
        with open(spec, 'r', encoding='utf-8') as file:
            lines = file.read().splitlines()
    except OSError as e:
        raise StorageError(f"Failed to read catalog {spec}: {e}")
    names = [line.strip() for line in lines if line.strip() and not line.strip().startswith('#')]
    return ClassCatalog.from_names(names)
