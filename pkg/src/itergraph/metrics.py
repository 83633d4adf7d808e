"""Per-seed results, their aggregation and line-delimited JSON output."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable, Sequence
    from pathlib import Path

_logger = logging.getLogger(__name__)

# fields that legitimately differ between two identical invocations
VOLATILE_FIELDS = ("wall_times", "wall_mean", "wall_std", "wall_time")


@dataclass
class SeedRun:
    """Outcome of training and testing one seed."""

    seed: int
    test_acc: float
    wall_time: float
    iterations_run: int
    delta_seq: list[float] = field(default_factory=list)
    best_epoch: int = 0


def _std(values: Sequence[float]) -> float | None:
    return float(np.std(values, ddof=1)) if len(values) >= 2 else None  # noqa: PLR2004


@dataclass
class MetricsRecord:  # pylint: disable=too-many-instance-attributes
    """Aggregated result of one configuration over several seeds."""

    command: str
    dataset: str
    variant: str
    seeds: list[int]
    hyperparams: dict[str, Any]
    accuracies: list[float]
    acc_mean: float
    acc_std: float | None
    wall_times: list[float]
    wall_mean: float
    wall_std: float | None
    iterations_hist: dict[str, int]
    delta_seqs: list[list[float]]
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_runs(  # noqa: PLR0913
        cls,
        command: str,
        dataset: str,
        variant: str,
        hyperparams: dict[str, Any],
        runs: Sequence[SeedRun],
        **extra: Any,  # noqa: ANN401
    ) -> MetricsRecord:
        """Aggregate seed runs; runs are ordered by seed."""
        runs = sorted(runs, key=lambda run: run.seed)
        accuracies = [run.test_acc for run in runs]
        walls = [run.wall_time for run in runs]
        hist = Counter(run.iterations_run for run in runs)
        return cls(
            command=command,
            dataset=dataset,
            variant=variant,
            seeds=[run.seed for run in runs],
            hyperparams=hyperparams,
            accuracies=accuracies,
            acc_mean=float(np.mean(accuracies)),
            acc_std=_std(accuracies),
            wall_times=walls,
            wall_mean=float(np.mean(walls)),
            wall_std=_std(walls),
            iterations_hist={str(key): hist[key] for key in sorted(hist)},
            delta_seqs=[list(run.delta_seq) for run in runs],
            extra=dict(extra),
        )

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        return {"type": "metrics", **asdict(self)}


def write_records(path: Path, records: Iterable[dict[str, Any] | MetricsRecord]) -> int:
    """Write one JSON object per line, in the given order."""
    count = 0
    with path.open("w", encoding="utf-8") as out:
        for record in records:
            payload = record.to_dict() if isinstance(record, MetricsRecord) else record
            out.write(json.dumps(payload, sort_keys=True) + "\n")
            count += 1
    _logger.info("Wrote %d records to %s", count, path)
    return count


def read_records(path: Path) -> list[dict[str, Any]]:
    """Read records written by :func:`write_records`."""
    with path.open(encoding="utf-8") as content:
        return [json.loads(line) for line in content if line.strip()]


__all__ = ["MetricsRecord", "SeedRun", "read_records", "write_records"]
