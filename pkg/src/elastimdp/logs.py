"""Measurement logs: records, CSV ingestion, and bucketed selection.

Records are grouped by (active VM count, load bucket); a query for a
(vms, load) pair returns the records of the nearest populated bucket and
flags the result as interpolated whenever it had to borrow from a
neighboring bucket or cluster size.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataFormatError, NoDataError

CSV_HEADER = ("time", "vms", "load", "latency_ms", "throughput")


@dataclass(frozen=True)
class MeasurementRecord:
    """One monitoring sample (one tick is 30 s in the default schedule)."""

    time: int
    vms: int
    load: float
    latency_ms: float
    throughput: float

    def __post_init__(self) -> None:
        if self.vms < 1:
            raise ValueError(f"vms must be >= 1, got {self.vms}")
        if min(self.time, self.load, self.latency_ms, self.throughput) < 0:
            raise ValueError("measurement fields must be nonnegative")


@dataclass(frozen=True)
class LogSelection:
    """Records chosen for a (vms, load) query, with provenance."""

    records: tuple[MeasurementRecord, ...]
    interpolated: bool
    vms_used: int
    bucket_center: float


class LogStore:
    """Bucketed measurement log, single writer / many readers.

    Appends happen only during ingestion; selections never mutate state,
    so a built store can be shared freely across concurrent episodes.
    """

    def __init__(self, records: Iterable[MeasurementRecord] = (), bucket_width: float = 1000.0):
        if bucket_width <= 0:
            raise ValueError("bucket_width must be positive")
        self.bucket_width = float(bucket_width)
        self._buckets: dict[tuple[int, int], list[MeasurementRecord]] = {}
        self._count = 0
        for record in records:
            self.add(record)

    def __len__(self) -> int:
        return self._count

    def _bucket(self, load: float) -> int:
        return math.floor(load / self.bucket_width + 0.5)

    def add(self, record: MeasurementRecord) -> None:
        key = (record.vms, self._bucket(record.load))
        self._buckets.setdefault(key, []).append(record)
        self._count += 1

    def sizes(self) -> list[int]:
        return sorted({vms for vms, _ in self._buckets})

    def select_logs(self, vms_num: int, load: float) -> LogSelection:
        """Records for `vms_num` in the load bucket nearest `load`.

        Falls back to the closest populated bucket of the same size, then
        to the closest size (ties toward fewer VMs), flagging the result
        as interpolated.
        """
        if not self._buckets:
            raise NoDataError("log store is empty")
        bucket = self._bucket(load)
        exact = self._buckets.get((vms_num, bucket))
        if exact:
            return LogSelection(tuple(exact), False, vms_num, bucket * self.bucket_width)

        same_size = [b for v, b in self._buckets if v == vms_num]
        if same_size:
            nearest = min(same_size, key=lambda b: (abs(b - bucket), b))
            return LogSelection(
                tuple(self._buckets[(vms_num, nearest)]),
                True,
                vms_num,
                nearest * self.bucket_width,
            )

        nearest_vms, nearest_bucket = min(
            self._buckets,
            key=lambda key: (abs(key[0] - vms_num), key[0], abs(key[1] - bucket), key[1]),
        )
        return LogSelection(
            tuple(self._buckets[(nearest_vms, nearest_bucket)]),
            True,
            nearest_vms,
            nearest_bucket * self.bucket_width,
        )


def select_logs(store: LogStore, vms_num: int, load: float) -> LogSelection:
    return store.select_logs(vms_num, load)


def parse_records_csv(text: str, source: str = "<string>") -> list[MeasurementRecord]:
    """Parse the `time,vms,load,latency_ms,throughput` CSV format.

    Malformed rows are rejected; the error lists every offending line
    number.
    """
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise DataFormatError(f"{source}: empty file")
    if tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise DataFormatError(
            f"{source}: line 1: expected header {','.join(CSV_HEADER)!r}"
        )
    records = []
    bad: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            records.append(
                MeasurementRecord(
                    time=int(row[0]),
                    vms=int(row[1]),
                    load=float(row[2]),
                    latency_ms=float(row[3]),
                    throughput=float(row[4]),
                )
            )
        except ValueError as exc:
            bad.append(f"line {lineno}: {exc}")
    if bad:
        raise DataFormatError(f"{source}: rejected {len(bad)} row(s): " + "; ".join(bad))
    return records


def read_records_csv(path: str) -> list[MeasurementRecord]:
    with open(path, encoding="utf-8") as handle:
        return parse_records_csv(handle.read(), source=path)


def write_records_csv(path: str, records: Sequence[MeasurementRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.time, r.vms, repr(r.load), repr(r.latency_ms), repr(r.throughput)])
