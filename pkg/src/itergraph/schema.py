"""JSON Schema validation of run configuration mappings."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cache
from typing import TYPE_CHECKING

import jsonschema
from jsonschema.validators import validator_for

from itergraph.constants import CONFIG_SCHEMA_FILE

if TYPE_CHECKING:  # pragma: no cover
    from itergraph.types import JSON


def json_path(absolute_path: Sequence[str | int]) -> str:
    """Flatten a data path to a JSONPath-like string starting at ``$``."""
    parts = ["$"]
    for elem in absolute_path:
        parts.append(f"[{elem}]" if isinstance(elem, int) else f".{elem}")
    return "".join(parts)


@dataclass(order=True)
class ConfigSchemaError:
    """One violation found while validating a configuration mapping."""

    # sorting follows field order: by key first, then by message
    key: str
    json_path: str
    message: str
    validator: str
    found: str

    def to_friendly(self) -> str:
        """Return a one-line explanation."""
        where = self.key or "configuration"
        return f"{where}: {self.message}"


@cache
def config_schema() -> JSON:
    """Return the bundled run configuration schema."""
    return json.loads(CONFIG_SCHEMA_FILE.read_text(encoding="utf-8"))


def validate(data: JSON, schema: JSON | str | None = None) -> list[ConfigSchemaError]:
    """Validate ``data`` against ``schema`` (default: the bundled one).

    Raises:
        jsonschema.SchemaError: if the schema itself is invalid.
    """
    if schema is None:
        schema = config_schema()
    elif isinstance(schema, str):
        schema = json.loads(schema)
    if not isinstance(schema, Mapping):
        msg = "Invalid schema, must be a mapping"
        raise jsonschema.SchemaError(msg)
    validator = validator_for(schema)
    validator.check_schema(schema)

    errors = [
        ConfigSchemaError(
            key=str(error.absolute_path[0]) if error.absolute_path else "",
            json_path=json_path(error.absolute_path),
            message=error.message,
            validator=str(error.validator),
            found=str(error.instance),
        )
        for error in validator(schema).iter_errors(data)
    ]
    return sorted(errors)


__all__ = ["ConfigSchemaError", "config_schema", "json_path", "validate"]
