"""Score reports: per-sample records, means and pairwise tallies, as JSON and CSV."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence


def mean_of(records: Iterable[Mapping[str, Any]], key: str) -> tuple[float | None, int]:
    """Mean of ``key`` over records where it is present and not None, with the count used."""
    values = [r[key] for r in records if r.get(key) is not None]
    if not values:
        return None, 0
    return math.fsum(values) / len(values), len(values)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ScoreReport:
    task: str
    strategies: list[str]
    metrics: list[str] = field(default_factory=list)
    records: list[dict[str, Any]] = field(default_factory=list)
    pairs: dict[str, dict[str, int]] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    def aggregates(self) -> dict[str, dict[str, Any]]:
        """strategy -> metric -> {"mean", "n"}; recomputed from the records every time."""
        out: dict[str, dict[str, Any]] = {}
        if not self.metrics:
            return out
        for s in self.strategies:
            rows = [r for r in self.records if r.get("strategy") == s]
            out[s] = {}
            for m in self.metrics:
                value, n = mean_of(rows, m)
                out[s][m] = {"mean": value, "n": n}
            out[s]["samples"] = {"mean": None, "n": len(rows)}
            out[s]["failed"] = {"mean": None, "n": sum(1 for r in rows if r.get("status") != "ok")}
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "strategies": list(self.strategies),
            "config": self.config,
            "aggregates": self.aggregates(),
            "pairs": self.pairs,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)

    def csv_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = [["task", "strategy", "metric", "value", "n"]]
        for s, metrics in self.aggregates().items():
            for m, agg in metrics.items():
                rows.append([self.task, s, m, "" if agg["mean"] is None else f"{agg['mean']:.6f}", agg["n"]])
        for dim, tally in self.pairs.items():
            label = f"{self.strategies[0]} vs {self.strategies[1]}" if len(self.strategies) == 2 else ""
            for outcome, n in tally.items():
                rows.append([self.task, label, f"{dim}.{outcome}", n, n])
        return rows

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """JSON at ``path`` and the flat aggregate table next to it with a .csv suffix."""
        path = Path(path)
        atomic_write_text(path, self.to_json() + "\n")
        csv_path = path.with_suffix(".csv")
        buf = StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.csv_rows())
        atomic_write_text(csv_path, buf.getvalue())
        return path, csv_path


def merge_reports(reports: Sequence[ScoreReport]) -> dict[str, Any]:
    return {r.task + ":" + ",".join(r.strategies): r.to_dict() for r in reports}
