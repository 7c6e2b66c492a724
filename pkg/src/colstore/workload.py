"""Synthetic flat float64 workload: generation, import and histogram analysis.

Generator
---------
Values come from a counter-based SplitMix64 stream per column, so any
implementation reproduces the same bytes. With all arithmetic mod 2**64::

    GOLDEN = 0x9E3779B97F4A7C15
    mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
             z ^= z >> 27; z *= 0x94D049BB133111EB
             z ^= z >> 31
    key(c)   = mix(seed + (c + 1) * GOLDEN)          # column c
    x(c, i)  = mix(key(c) + (i + 1) * GOLDEN)        # entry i
    u(c, i)  = (x(c, i) >> 11) * 2**-53              # in [0, 1)
    value    = lo + (hi - lo) * u(c, i)              # float64
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, SchemaError
from .filefmt import FileReader, write_file_backend
from .mapping import StoreReader, WriteOptions, write_dataset
from .model import Dataset, FieldSpec, PagedDataset, Schema, decompose_schema
from .objstore import Session

GOLDEN = 0x9E3779B97F4A7C15
_M64 = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, column: int, n: int) -> np.ndarray:
    """The first ``n`` [0, 1) doubles of column ``column``'s stream."""
    key = mix64(seed + (column + 1) * GOLDEN)
    counters = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN) + np.uint64(key)
    return (_mix(counters) >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class WorkloadSpec:
    num_entries: int
    num_columns: int = 26
    read_columns: int = 18
    seed: int = 42
    # one (lo, hi) pair for every column, or a list with one pair per column
    value_range: Union[tuple[float, float], Sequence[tuple[float, float]]] = (0.0, 1.0)

    def __post_init__(self):
        if self.num_entries < 0:
            raise ConfigError("entry count must be >= 0")
        if self.num_columns < 1:
            raise ConfigError("need at least one column")
        if not 1 <= self.read_columns <= self.num_columns:
            raise ConfigError(f"read columns must be within 1..{self.num_columns}")
        if not 0 <= self.seed <= _M64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def ranges(self) -> list[tuple[float, float]]:
        vr = self.value_range
        if len(vr) == 2 and not isinstance(vr[0], (tuple, list)):
            return [tuple(vr)] * self.num_columns
        if len(vr) != self.num_columns:
            raise ConfigError("need one value range per column")
        return [tuple(r) for r in vr]

    def schema(self) -> Schema:
        return Schema(tuple(FieldSpec(column_name(i), "float64") for i in range(self.num_columns)))


def column_name(i: int) -> str:
    return f"x{i:02d}"


def generate(spec: WorkloadSpec) -> Dataset:
    columns = [lo + (hi - lo) * uniform_stream(spec.seed, c, spec.num_entries)
               for c, (lo, hi) in enumerate(spec.ranges())]
    return Dataset(spec.schema(), spec.num_entries, columns)


@dataclass
class Histogram:
    num_bins: int
    lo: float
    hi: float
    counts: list[int] = field(default_factory=list)
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        if self.num_bins < 1 or not self.hi > self.lo:
            raise ConfigError("histogram needs num_bins >= 1 and hi > lo")
        if not self.counts:
            self.counts = [0] * self.num_bins

    @property
    def entries(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow

    def fill(self, values: np.ndarray) -> None:
        """Bin ``floor((v - lo) / (hi - lo) * num_bins)``; v < lo and v >= hi (or NaN) go to the flow bins."""
        values = np.asarray(values, dtype=np.float64)
        under = values < self.lo
        inside = (values >= self.lo) & (values < self.hi)
        self.underflow += int(under.sum())
        self.overflow += int(len(values) - under.sum() - inside.sum())
        idx = np.floor((values[inside] - self.lo) / (self.hi - self.lo) * self.num_bins).astype(np.int64)
        np.minimum(idx, self.num_bins - 1, out=idx)
        for i, n in enumerate(np.bincount(idx, minlength=self.num_bins).tolist()):
            self.counts[i] += n

    def edges(self) -> list[float]:
        return [self.lo + (self.hi - self.lo) * i / self.num_bins for i in range(self.num_bins + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        w.writerow(["-inf", repr(self.lo), self.underflow])
        e = self.edges()
        for i, n in enumerate(self.counts):
            w.writerow([repr(e[i]), repr(e[i + 1]), n])
        w.writerow([repr(self.hi), "inf", self.overflow])
        return buf.getvalue()


@dataclass
class ImportReport:
    bytes_written: int
    stored_bytes: int
    pages: int
    clusters: int
    data_calls: int
    simulated_seconds: float | None
    write_throughput: float | None  # uncompressed bytes per simulated second


@dataclass
class AnalysisReport:
    bytes_read: int
    stored_bytes_read: int
    entries: int
    data_calls: int
    simulated_seconds: float | None
    read_throughput: float | None


def _throughput(nbytes: int, seconds: float | None) -> float | None:
    if seconds is None or seconds <= 0:
        return None
    return nbytes / seconds


def import_dataset(
    paged: PagedDataset,
    backend: Union[Session, str, os.PathLike],
    options: WriteOptions = WriteOptions(),
) -> ImportReport:
    """Write ``paged`` to an object-store session or, given a path, to a flat file.

    For a session, ``simulated_seconds`` is the session clock, which starts when
    the session is opened and therefore includes queue creation.
    """
    stored = sum(len(v) for v in paged.payloads.values())
    if isinstance(backend, Session):
        writer = write_dataset(backend, paged, options)
        seconds, calls = backend.clock.elapsed, writer.data_calls
    else:
        write_file_backend(paged, backend)
        seconds, calls = None, paged.num_pages
    nbytes = paged.uncompressed_bytes
    return ImportReport(nbytes, stored, paged.num_pages, len(paged.clusters), calls,
                        seconds, _throughput(nbytes, seconds))


def resolve_columns(schema: Schema, read_columns: Union[int, Sequence[Union[int, str]]]) -> list[int]:
    """Column ids of the analysed fields: the first N fields, or fields by name or index."""
    fields = schema.fields
    if isinstance(read_columns, int):
        if not 1 <= read_columns <= len(fields):
            raise SchemaError(f"cannot read {read_columns} columns from a {len(fields)}-field schema")
        names = [f.name for f in fields[:read_columns]]
    else:
        names = [fields[c].name if isinstance(c, int) and c < len(fields) else c for c in read_columns]
    ids = {}
    col = 0
    for f in fields:
        ids[f.name] = (col, f)
        col += 2 if f.is_var_list else 1
    out = []
    for name in names:
        if name not in ids:
            raise SchemaError(f"dataset has no column {name!r}")
        cid, f = ids[name]
        if f.is_var_list:
            raise SchemaError(f"column {name!r} is a var-list; analysis needs one value per entry")
        out.append(cid)
    return out


def derived_quantity(columns: Sequence[np.ndarray]) -> np.ndarray:
    """Square root of the sum of squares, accumulated column by column."""
    acc = np.zeros(len(columns[0]) if columns else 0, dtype=np.float64)
    for c in columns:
        c = c.astype(np.float64, copy=False)
        acc += c * c
    return np.sqrt(acc)


def analyze(
    reader: Union[StoreReader, FileReader],
    read_columns: Union[int, Sequence[Union[int, str]]],
    histogram: Histogram,
) -> tuple[Histogram, AnalysisReport]:
    """Fill ``histogram`` cluster by cluster, fetching only pages of the read columns."""
    col_ids = resolve_columns(reader.schema, read_columns)
    dtypes = {d.column_id: d.dtype for d in decompose_schema(reader.schema)}
    bytes_read = stored = 0
    calls_before = reader.data_calls
    for cluster in reader.clusters:
        pages = cluster.pages(col_ids)
        payloads = reader.read_pages(pages)
        chunks: dict[int, list[bytes]] = {c: [] for c in col_ids}
        for p, payload in zip(pages, payloads):
            chunks[p.column_id].append(payload)
            bytes_read += p.uncompressed_size
            stored += p.stored_size
        arrays = [np.frombuffer(b"".join(chunks[c]), dtype=dtypes[c]) for c in col_ids]
        histogram.fill(derived_quantity(arrays))
    seconds = reader.session.clock.elapsed if isinstance(reader, StoreReader) else None
    report = AnalysisReport(bytes_read, stored, reader.num_entries, reader.data_calls - calls_before,
                            seconds, _throughput(bytes_read, seconds))
    return histogram, report


def histogram_from_dataset(dataset: Dataset, read_columns, histogram: Histogram) -> Histogram:
    """Same reduction computed straight from memory, bypassing storage."""
    col_ids = resolve_columns(dataset.schema, read_columns)
    histogram.fill(derived_quantity([dataset.columns[c] for c in col_ids]))
    return histogram


def is_store(path: Union[str, os.PathLike]) -> bool:
    return Path(path).is_dir()


def default_histogram(read_columns: int) -> Histogram:
    """100 bins over [0, sqrt(n)], the full range of the reduction for [0, 1) inputs."""
    return Histogram(100, 0.0, math.sqrt(read_columns))
