"""Pytest fixtures."""

from __future__ import annotations

import importlib.metadata
from collections.abc import Callable
from typing import TYPE_CHECKING

import numpy as np
import pytest

from itergraph.autodiff import Tape
from itergraph.benchmarks import synthetic_dataset
from itergraph.constants import DATA_DIR_ENV
from itergraph.trainer import HyperParams

if TYPE_CHECKING:
    from pathlib import Path

    from itergraph.loaders import GraphDataset


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator, fresh for every test."""
    return np.random.default_rng(1234)


@pytest.fixture
def tape() -> Tape:
    """Empty checked tape."""
    return Tape()


@pytest.fixture
def small_graph() -> GraphDataset:
    """Twenty-node ring graph with positive features and three classes."""
    return synthetic_dataset(20, 5, n_classes=3, seed=7)


@pytest.fixture
def fast_hp() -> HyperParams:
    """Hyperparameters that train a small graph in well under a second."""
    return HyperParams(
        lambda_=0.5,
        eta=0.5,
        alpha=0.1,
        beta=0.1,
        gamma=0.1,
        eps=0.0,
        m=2,
        t_max=3,
        s=5,
        epochs=8,
        patience=4,
        hidden=8,
        dropout=0.2,
        iter_dropout=0.2,
    )


@pytest.fixture
def isolated_data_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point the default data directory at an empty temporary directory."""
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    return tmp_path


def query_pkg_version(pkg: str) -> str:
    """Return the installed version of a distribution."""
    return importlib.metadata.version(pkg)


@pytest.fixture
def pkg_version() -> Callable[[str], str]:
    """Installed distribution version lookup."""
    return query_pkg_version
