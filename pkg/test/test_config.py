"""Tests for itergraph.config submodule."""

from __future__ import annotations

from pathlib import Path

import pytest

from itergraph.config import (
    build_run_config,
    decode_value,
    load_run_config,
    parse_flat_config,
    presets,
    resolve_hyperparams,
)
from itergraph.errors import ConfigError
from itergraph.trainer import HyperParams

SAMPLE = """\
# wine with the anchor variant
dataset = wine
variant = idgl-anch

lambda = 0.5
T = 4
anchors = 30
seeds = [0, 1, 2]
"""


@pytest.mark.parametrize(
    ("raw", "expected"),
    (
        pytest.param("0.5", 0.5, id="float"),
        pytest.param("3", 3, id="int"),
        pytest.param("[1, 2]", [1, 2], id="list"),
        pytest.param("None", None, id="none"),
        pytest.param("wine", "wine", id="string"),
        pytest.param("idgl-anch", "idgl-anch", id="dashed"),
    ),
)
def test_decode_value(raw: str, expected: object) -> None:
    """Literals are decoded, everything else stays a string."""
    assert decode_value(raw) == expected


def test_parse_flat_config() -> None:
    """Comments and blank lines are skipped, aliases resolved."""
    data, lines = parse_flat_config(SAMPLE)
    assert data == {
        "dataset": "wine",
        "variant": "idgl-anch",
        "lambda_": 0.5,
        "t_max": 4,
        "s": 30,
        "seeds": [0, 1, 2],
    }
    assert lines["dataset"] == 2
    assert lines["s"] == 7


@pytest.mark.parametrize(
    ("text", "match"),
    (
        pytest.param("dataset = wine\nfoo = 1\n", "line 2: unknown key 'foo'", id="unknown"),
        pytest.param("dataset wine\n", "line 1: expected 'key = value'", id="syntax"),
        pytest.param("eta = 0.1\n\neta = 0.2\n", "line 3: 'eta' already set on line 1", id="duplicate"),
    ),
)
def test_parse_flat_config_errors(text: str, match: str) -> None:
    """Errors name the offending line."""
    with pytest.raises(ConfigError, match=match) as exc_info:
        parse_flat_config(text)
    assert exc_info.value.code == 2


def test_presets_cover_variants() -> None:
    """Every preset is a valid set of hyperparameters."""
    bundled = presets()
    assert set(bundled) == {"idgl", "idgl-anch"}
    for variant, datasets in bundled.items():
        for dataset, values in datasets.items():
            assert HyperParams(**values), f"{variant}/{dataset}"


def test_resolve_hyperparams_precedence() -> None:
    """Defaults, then preset, then overrides."""
    hp = resolve_hyperparams("wine", "idgl", {"lambda": 0.3, "eps": None})
    assert hp.lambda_ == 0.3
    assert hp.eps == 0.75
    assert hp.k == 20
    assert hp.hidden == HyperParams().hidden


def test_resolve_hyperparams_without_preset(caplog: pytest.LogCaptureFixture) -> None:
    """Unknown datasets fall back to the defaults."""
    with caplog.at_level("INFO", logger="itergraph.config"):
        hp = resolve_hyperparams("mystery", "idgl")
    assert hp == HyperParams()
    assert "No idgl preset" in caplog.text
    with pytest.raises(ConfigError, match="unknown variant"):
        resolve_hyperparams("wine", "gcn")  # type: ignore[arg-type]


def test_load_run_config(tmp_path: Path) -> None:
    """File values sit between the presets and the command line."""
    path = tmp_path / "run.cfg"
    path.write_text(SAMPLE + "eta = 0.2\n", encoding="utf-8")
    config = load_run_config(path, {"eta": 0.4, "out_dir": tmp_path / "out", "k": None})
    hp = config.hyperparams
    assert config.dataset == "wine"
    assert config.variant == "idgl-anch"
    assert config.seeds == [0, 1, 2]
    assert config.out_dir == tmp_path / "out"
    assert hp.eta == 0.4
    assert hp.t_max == 4
    assert hp.s == 30
    assert hp.k == 20
    assert config.with_seed(2).seed == 2


def test_load_run_config_seed_override(tmp_path: Path) -> None:
    """A seed from the command line replaces the seed list of the file."""
    path = tmp_path / "run.cfg"
    path.write_text(SAMPLE, encoding="utf-8")
    assert load_run_config(path, {"seed": 5}).seeds == [5]
    assert load_run_config(path, {"seeds": [7, 8]}).seeds == [7, 8]
    with pytest.raises(ConfigError, match="mutually exclusive"):
        load_run_config(path, {"seed": 5, "seeds": [7]})
    with pytest.raises(ConfigError, match="either seed or seeds"):
        build_run_config({"dataset": "cora", "seed": 1, "seeds": [2]})


def test_load_run_config_schema_error_line(tmp_path: Path) -> None:
    """Schema violations point at the line that set the value."""
    path = tmp_path / "bad.cfg"
    path.write_text("dataset = wine\nalpha = -1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="line 2: alpha"):
        load_run_config(path)


def test_load_run_config_missing_file(tmp_path: Path) -> None:
    """Unreadable config files are configuration errors."""
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "absent.cfg")


def test_build_run_config() -> None:
    """Split lists become tuples; a single seed becomes a list."""
    config = build_run_config({"dataset": "cora", "seed": 3, "split": [10, 20, 30]})
    assert config.seeds == [3]
    assert config.split == (10, 20, 30)
    assert config.variant == "idgl"
    with pytest.raises(ConfigError, match="no dataset"):
        build_run_config({})
    with pytest.raises(ConfigError, match="does not exist"):
        build_run_config({"dataset": "x", "features": "/no/such/file.csv"})
