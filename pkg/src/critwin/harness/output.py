"""Result rows, CSV emission and the JSON run summary.

CSV files contain only deterministic quantities (wall time lives in the
JSON summary), and rows are sorted by cell key before writing, so an
identical configuration produces a byte-identical CSV regardless of the
worker count or completion order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

FLAG_CENSORED = 0.01

COLUMNS = ("experiment", "gamma", "n", "alpha", "beta", "v", "mode", "k", "seed", "statistic",
           "estimate", "half_width", "n_reps", "censored_fraction", "flagged", "passed")


@dataclass
class ResultRow:
    """One named statistic of one grid cell.

    ``seed`` is the integer seed for per-seed rows and ``"all"`` for rows
    aggregated over seeds. ``half_width`` is the 95% half-width (batch means
    over seeds; ``inf`` when fewer than two seeds contribute, 0 for exact
    per-seed values). ``passed`` is only used by the verify suite.
    """

    experiment: str
    statistic: str
    estimate: float
    gamma: float | None = None
    n: int | None = None
    alpha: float | None = None
    beta: float | None = None
    v: int | None = None
    mode: str | None = None
    k: int | None = None
    seed: int | str = "all"
    half_width: float = 0.0
    n_reps: int = 1
    censored_fraction: float = 0.0
    flagged: bool = False
    passed: bool | None = None

    def __post_init__(self):
        if self.half_width < 0 or math.isnan(self.half_width):
            raise ValueError("half_width must be >= 0")
        if not (0.0 <= self.censored_fraction <= 1.0):
            raise ValueError("censored_fraction must lie in [0, 1]")
        if self.censored_fraction > FLAG_CENSORED:
            self.flagged = True

    def sort_key(self):
        def k(x):
            return (0, "") if x is None else (1, x)
        seed = (0, self.seed) if isinstance(self.seed, int) else (1, 0)
        return (k(self.gamma), k(self.n), k(self.alpha), k(self.beta), k(self.v), k(self.mode),
                k(self.k), seed, self.statistic)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def write_csv(rows: list[ResultRow], path) -> None:
    rows = sorted(rows, key=ResultRow.sort_key)
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary(path, *, config, rows: list[ResultRow], wall_time: float,
                  partial: bool, extra: dict | None = None) -> dict:
    summary = {
        "experiment": config.experiment,
        "config": config.echo(),
        "config_hash": config.content_hash(),
        "wall_time": wall_time,
        "rows": len(rows),
        "flagged_rows": sum(r.flagged for r in rows),
        "partial": partial,
    }
    if extra:
        summary.update(extra)
    if config.experiment == "verify" and "checks" not in summary:
        summary["checks"] = [
            {k: v for k, v in asdict(r).items() if k in ("statistic", "estimate", "passed")}
            for r in sorted(rows, key=ResultRow.sort_key)]
    summary = _clean(summary)
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return summary


def _clean(x):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x
