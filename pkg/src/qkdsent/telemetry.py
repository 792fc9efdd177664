"""Telemetry records, log I/O and reference-window MinMax scaling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import LogParseError, OrderingError, WindowSizeError

DEFAULT_WINDOW = 10

CSV_HEADER = ("timestamp", "qber", "skr")


@dataclass(frozen=True)
class SampleRecord:
    """One telemetry point: timestamp in ms, QBER as a fraction, SKR in bit/s."""

    timestamp: int
    qber: float
    skr: float

    def __post_init__(self):
        if not (0.0 <= self.qber <= 1.0):
            raise ValueError(f"qber out of range: {self.qber!r}")
        if not (self.skr >= 0.0) or math.isinf(self.skr):
            raise ValueError(f"skr out of range: {self.skr!r}")


@dataclass(frozen=True)
class Window:
    """N consecutive samples cut from one log.

    ``source`` identifies the originating log and ``start`` the index of the
    first sample inside it; the pipeline uses both for the leakage guard.
    """

    samples: tuple
    label: int | None = None
    source: int = 0
    start: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def first_ts(self) -> int:
        return self.samples[0].timestamp

    @property
    def last_ts(self) -> int:
        return self.samples[-1].timestamp

    def channels(self):
        qber = np.fromiter((s.qber for s in self.samples), float, len(self.samples))
        skr = np.fromiter((s.skr for s in self.samples), float, len(self.samples))
        return qber, skr


@dataclass(frozen=True)
class ScalerParams:
    qber_min: float
    qber_max: float
    skr_min: float
    skr_max: float
    reference_median_qber: float
    reference_median_skr: float

    def __post_init__(self):
        vals = (self.qber_min, self.qber_max, self.skr_min, self.skr_max,
                self.reference_median_qber, self.reference_median_skr)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("scaler parameters must be finite")
        if self.qber_min > self.qber_max or self.skr_min > self.skr_max:
            raise ValueError("scaler min exceeds max")

    def to_dict(self) -> dict:
        return {
            "qber_min": self.qber_min,
            "qber_max": self.qber_max,
            "skr_min": self.skr_min,
            "skr_max": self.skr_max,
            "reference_median_qber": self.reference_median_qber,
            "reference_median_skr": self.reference_median_skr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(**{k: float(d[k]) for k in (
            "qber_min", "qber_max", "skr_min", "skr_max",
            "reference_median_qber", "reference_median_skr")})


def _record_from_values(line_no, ts, qber, skr) -> SampleRecord:
    try:
        ts_i = int(ts)
        if isinstance(ts, float) and ts != ts_i:
            raise ValueError
        q = float(qber)
        s = float(skr)
    except (TypeError, ValueError):
        raise LogParseError(line_no, "non-numeric field") from None
    if not math.isfinite(q) or not (0.0 <= q <= 1.0):
        raise LogParseError(line_no, "qber out of range")
    if not math.isfinite(s) or s < 0.0:
        raise LogParseError(line_no, "skr out of range")
    return SampleRecord(ts_i, q, s)


def _check_order(records: Sequence[SampleRecord]):
    for i in range(1, len(records)):
        if records[i].timestamp <= records[i - 1].timestamp:
            raise OrderingError(
                f"timestamps not strictly increasing at record {i + 1} "
                f"({records[i - 1].timestamp} -> {records[i].timestamp})")


def _guess_format(path: Path) -> str:
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def parse_jsonl_line(line: str, line_no: int = 1) -> SampleRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogParseError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise LogParseError(line_no, "expected a JSON object")
    missing = [k for k in ("ts", "qber", "skr") if k not in obj]
    if missing:
        raise LogParseError(line_no, f"missing key(s) {', '.join(missing)}")
    return _record_from_values(line_no, obj["ts"], obj["qber"], obj["skr"])


def iter_jsonl(lines: Iterable[str]):
    """Yield records from JSONL lines, skipping blank lines."""
    for line_no, line in enumerate(lines, start=1):
        if line.strip():
            yield parse_jsonl_line(line, line_no)


def read_log(path, format: str | None = None) -> list[SampleRecord]:
    """Read a telemetry log in file order.

    Parameters
    ----------
    path : path-like
        JSONL (keys ``ts``, ``qber``, ``skr``) or CSV with header
        ``timestamp,qber,skr``.
    format : {"jsonl", "csv"}, optional
        Inferred from the file suffix when omitted.

    Raises
    ------
    LogParseError
        On the first malformed line, naming its line number.
    OrderingError
        If timestamps are not strictly increasing.
    """
    path = Path(path)
    fmt = format or _guess_format(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            records = list(iter_jsonl(fh))
        elif fmt == "csv":
            records = []
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise LogParseError(1, "expected header timestamp,qber,skr")
            for line_no, row in enumerate(reader, start=2):
                if not row or not any(c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise LogParseError(line_no, f"expected 3 fields, got {len(row)}")
                records.append(_record_from_values(line_no, *row))
        else:
            raise ValueError(f"unknown log format {fmt!r}")
    _check_order(records)
    return records


def record_to_json(rec: SampleRecord) -> str:
    return json.dumps({"ts": rec.timestamp, "qber": rec.qber, "skr": rec.skr})


def write_log(path, records: Sequence[SampleRecord], format: str | None = None):
    path = Path(path)
    fmt = format or _guess_format(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for rec in records:
                fh.write(record_to_json(rec) + "\n")
        elif fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for rec in records:
                writer.writerow([rec.timestamp, repr(rec.qber), repr(rec.skr)])
        else:
            raise ValueError(f"unknown log format {fmt!r}")


def fit_scaler(reference: Window | Sequence[SampleRecord],
               window_size: int | None = None) -> ScalerParams:
    """Fit per-channel min/max on the reference window.

    The medians are kept for diagnostics only; the transform does not use them.
    """
    samples = reference.samples if isinstance(reference, Window) else tuple(reference)
    if window_size is not None and len(samples) != window_size:
        raise WindowSizeError(
            f"reference window has {len(samples)} samples, expected {window_size}")
    if not samples:
        raise WindowSizeError("empty reference window")
    q = np.array([s.qber for s in samples], dtype=float)
    r = np.array([s.skr for s in samples], dtype=float)
    return ScalerParams(
        qber_min=float(q.min()), qber_max=float(q.max()),
        skr_min=float(r.min()), skr_max=float(r.max()),
        reference_median_qber=float(np.median(q)),
        reference_median_skr=float(np.median(r)),
    )


def _scale(x, lo, hi):
    if hi > lo:
        return (x - lo) / (hi - lo)
    # constant reference channel
    return np.full_like(np.asarray(x, dtype=float), 0.5) if np.ndim(x) else 0.5


def transform(params: ScalerParams, sample: SampleRecord) -> tuple[float, float]:
    """Map one sample to (q̂, ŝ). Values are deliberately not clipped."""
    return (float(_scale(sample.qber, params.qber_min, params.qber_max)),
            float(_scale(sample.skr, params.skr_min, params.skr_max)))


def transform_arrays(params: ScalerParams, qber, skr):
    """Vector form of :func:`transform`; elementwise identical results."""
    qber = np.asarray(qber, dtype=float)
    skr = np.asarray(skr, dtype=float)
    return (_scale(qber, params.qber_min, params.qber_max),
            _scale(skr, params.skr_min, params.skr_max))
