"""Utilities for locating data and output directories."""

import os
from pathlib import Path

from itergraph.constants import DATA_DIR_ENV, DEFAULT_DATA_DIR


def get_data_dir(explicit: Path | None = None) -> Path:
    """Return the directory dataset files are read from.

    Args:
        explicit: directory given on the command line or in a config file.

    Returns:
        ``explicit`` when set, else ``$ITERGRAPH_DATA_DIR``, else ``./data``.
    """
    if explicit is not None:
        return explicit.expanduser()
    if DATA_DIR_ENV in os.environ:
        return Path(os.environ[DATA_DIR_ENV]).expanduser()
    return DEFAULT_DATA_DIR


def get_output_dir(base: Path, *parts: str) -> Path:
    """Create and return ``base/parts...``."""
    out = base.joinpath(*parts)
    out.mkdir(parents=True, exist_ok=True)
    return out
