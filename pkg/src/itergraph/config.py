"""Run configuration: flat key=value files, dataset presets and precedence."""

from __future__ import annotations

import ast
import logging
import re
from dataclasses import dataclass, field, replace
from functools import cache
from pathlib import Path
from typing import TYPE_CHECKING, Any

from itergraph.constants import PRESETS_FILE, VARIANTS
from itergraph.errors import ConfigError
from itergraph.loaders import yaml_from_file
from itergraph.schema import validate
from itergraph.trainer import HyperParams

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Mapping

    from itergraph.loaders import SplitSpec
    from itergraph.types import AttackMode, Variant

_logger = logging.getLogger(__name__)

_LINE = re.compile(r"^(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.*)$")

# spellings accepted in files and on the command line for HyperParams fields
ALIASES = {"lambda": "lambda_", "T": "t_max", "anchors": "s"}

RUN_KEYS = frozenset(
    {
        "attack_mode",
        "attack_probs",
        "data_dir",
        "dataset",
        "edges",
        "features",
        "labels",
        "out_dir",
        "seed",
        "seeds",
        "split",
        "variant",
        "workers",
    },
)


def decode_value(value: str) -> Any:  # noqa: ANN401
    """Read a Python literal, or keep the raw string."""
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


def _plain(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, (tuple, list)):
        return [_plain(item) for item in value]
    if isinstance(value, Path):
        return str(value)
    return value


def parse_flat_config(text: str) -> tuple[dict[str, Any], dict[str, int]]:
    """Parse ``key = value`` lines.

    Values are read as Python literals and fall back to the raw string.

    Returns:
        The mapping and the line number each key was defined on.
    """
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    known = RUN_KEYS | set(HyperParams.field_names())
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _LINE.match(line)
        if not match:
            msg = f"expected 'key = value', got {raw.strip()!r}"
            raise ConfigError(msg, line=lineno)
        key = ALIASES.get(match.group("key"), match.group("key"))
        if key not in known:
            msg = f"unknown key {match.group('key')!r}"
            raise ConfigError(msg, line=lineno)
        if key in data:
            msg = f"{key!r} already set on line {lines[key]}"
            raise ConfigError(msg, line=lineno)
        data[key] = _plain(decode_value(match.group("value").strip()))
        lines[key] = lineno
    return data, lines


def check_config(data: Mapping[str, Any], lines: Mapping[str, int] | None = None) -> None:
    """Validate a parsed mapping against the bundled schema."""
    errors = validate(dict(data))
    if errors:
        first = errors[0]
        for error in errors:
            _logger.error(error.to_friendly())
        line = (lines or {}).get(first.key)
        raise ConfigError(first.to_friendly(), line=line)


@cache
def presets() -> dict[str, dict[str, dict[str, Any]]]:
    """Return the bundled per-variant, per-dataset hyperparameters."""
    return yaml_from_file(PRESETS_FILE)


def resolve_hyperparams(
    dataset: str,
    variant: Variant,
    overrides: Mapping[str, Any] | None = None,
) -> HyperParams:
    """Defaults, then the dataset preset, then ``overrides``."""
    if variant not in VARIANTS:
        msg = f"unknown variant {variant!r}"
        raise ConfigError(msg)
    values: dict[str, Any] = {}
    preset = presets().get(variant, {}).get(dataset)
    if preset is None:
        _logger.info("No %s preset for %s, using defaults", variant, dataset)
    else:
        values.update(preset)
    names = set(HyperParams.field_names())
    for key, value in (overrides or {}).items():
        key = ALIASES.get(key, key)  # noqa: PLW2901
        if key in names and value is not None:
            values[key] = value
    return HyperParams(**values)


@dataclass
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """Everything one CLI command needs to know about a run."""

    dataset: str
    variant: Variant = "idgl"
    hyperparams: HyperParams = field(default_factory=HyperParams)
    out_dir: Path = Path("out")
    seeds: list[int] = field(default_factory=lambda: [0])
    data_dir: Path | None = None
    features: Path | None = None
    labels: Path | None = None
    edges: Path | None = None
    split: SplitSpec = "standard"
    attack_mode: AttackMode = "delete"
    attack_probs: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    workers: int = 1

    def __post_init__(self) -> None:
        """Check seeds and referenced files."""
        if not self.seeds:
            msg = "at least one seed is required"
            raise ConfigError(msg)
        for label in ("features", "labels", "edges"):
            path = getattr(self, label)
            if path is not None and not path.exists():
                msg = f"{label} file {path} does not exist"
                raise ConfigError(msg)

    def with_seed(self, seed: int) -> HyperParams:
        """Return the hyperparameters of one seed."""
        return replace(self.hyperparams, seed=seed)


def build_run_config(data: Mapping[str, Any]) -> RunConfig:
    """Turn a validated mapping into a :class:`RunConfig`."""
    if "dataset" not in data:
        msg = "no dataset given"
        raise ConfigError(msg)
    variant = data.get("variant", "idgl")
    if "seed" in data and "seeds" in data:
        msg = "set either seed or seeds, not both"
        raise ConfigError(msg)
    hp = resolve_hyperparams(data["dataset"], variant, data)
    seeds = data.get("seeds") or [data.get("seed", hp.seed)]
    paths = {
        key: Path(data[key]).expanduser()
        for key in ("data_dir", "features", "labels", "edges")
        if data.get(key) is not None
    }
    split = data.get("split", "standard")
    return RunConfig(
        dataset=data["dataset"],
        variant=variant,
        hyperparams=hp,
        out_dir=Path(data.get("out_dir", "out")),
        seeds=[int(seed) for seed in seeds],
        split=tuple(split) if isinstance(split, list) else split,
        attack_mode=data.get("attack_mode", "delete"),
        attack_probs=[float(p) for p in data.get("attack_probs", [0.25, 0.5, 0.75])],
        workers=int(data.get("workers", 1)),
        **paths,
    )


def load_run_config(path: Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a config file (optional) and apply ``overrides`` on top."""
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    if path is not None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            msg = f"cannot read config file {path}: {exc}"
            raise ConfigError(msg) from exc
        data, lines = parse_flat_config(text)
    given = {ALIASES.get(key, key) for key, value in (overrides or {}).items() if value is not None}
    if {"seed", "seeds"} <= given:
        msg = "--seed and --seeds are mutually exclusive"
        raise ConfigError(msg)
    # a seed from the command line replaces the seed list of the file, and back
    for key, other in (("seed", "seeds"), ("seeds", "seed")):
        if key in given:
            data.pop(other, None)
            lines.pop(other, None)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[ALIASES.get(key, key)] = _plain(value)
            lines.pop(key, None)
    check_config(data, lines)
    return build_run_config(data)


__all__ = [
    "RunConfig",
    "build_run_config",
    "check_config",
    "decode_value",
    "load_run_config",
    "parse_flat_config",
    "presets",
    "resolve_hyperparams",
]
