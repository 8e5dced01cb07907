"""Result records and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DomainError

HEADER = ("scheme", "snr_db", "stream", "metric", "value", "trials", "seed")
STREAMS = ("common", "private", "aggregate")


@dataclass(frozen=True)
class Record:
    """One metric value; ``trials`` counts channel draws or code blocks."""

    scheme: str
    snr_db: float
    stream: str
    metric: str
    value: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.stream not in STREAMS:
            raise DomainError(f"unknown stream {self.stream!r}")
        if self.metric == "ber" and not 0 <= self.value <= 1:
            raise DomainError("BER must lie in [0, 1]")
        if self.metric.endswith("rate") and self.value < 0:
            raise DomainError("rates must be non-negative")


def ordered(records: Iterable[Record]) -> list[Record]:
    """Deterministic order by (scheme, SNR, stream); ties keep insertion order."""
    return sorted(records, key=lambda r: (r.scheme, r.snr_db, r.stream))


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def to_csv(records: Sequence[Record]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in ordered(records):
        w.writerow([r.scheme, _fmt(r.snr_db), r.stream, r.metric, _fmt(r.value), r.trials, r.seed])
    return buf.getvalue()


def to_json(records: Sequence[Record]) -> str:
    return json.dumps([asdict(r) for r in ordered(records)], indent=1) + "\n"


def emit(records: Sequence[Record], path, fmt: str = "csv") -> Path:
    """Write records to ``path`` as CSV or JSON."""
    records = list(records)
    if not records:
        raise DomainError("nothing to emit")
    if fmt == "csv":
        text = to_csv(records)
    elif fmt == "json":
        text = to_json(records)
    else:
        raise DomainError(f"unknown format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def from_csv(text: str) -> list[Record]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise DomainError("unexpected CSV header")
    return [
        Record(s, float(snr), st, m, float(v), int(n), int(seed))
        for s, snr, st, m, v, n, seed in rows[1:]
    ]


def from_json(text: str) -> list[Record]:
    return [Record(**row) for row in json.loads(text)]


def load(path) -> list[Record]:
    path = Path(path)
    text = path.read_text()
    return from_json(text) if path.suffix == ".json" else from_csv(text)
