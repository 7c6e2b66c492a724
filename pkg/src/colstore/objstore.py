"""Embedded DAOS-like key-value object store with a simulated transport.

Objects are addressed by a 128-bit oid; each object is a two-level
dkey -> akey -> value map. Every store call is charged to a simulated clock
through a ``CostModel`` instead of being timed on the wall clock.

On-disk layout of a store directory (all integers little-endian):

``data.log``
    Concatenated values, each prefixed by its length as u32.
``index``
    Records sorted by (oid, dkey, akey), 52 bytes each: oid as two u64 words
    (low word first), dkey u64, akey u64, value offset u64 (first value byte in
    ``data.log``), value length u64, crc32 u32.
``meta``
    Format version u32, codec tag u8.

Values are appended; rewriting a key appends a new value and repoints the
index. The index is rewritten on ``flush``/``close``.
"""

from __future__ import annotations

import logging
import os
import random
import struct
import threading
import zlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, IntegrityError, NotFoundError, OpenError, RequestError, SessionError, StorageError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
U64_MAX = (1 << 64) - 1
U128_MAX = (1 << 128) - 1

# Reserved object holding dataset metadata; akey 0 under dkey 0 is the
# completion marker written last by an import.
META_OID = U128_MAX

_INDEX_RECORD = struct.Struct("<QQQQQQI")
_META = struct.Struct("<IB")
_LEN_PREFIX = struct.Struct("<I")


@dataclass(frozen=True, order=True)
class ObjectKey:
    oid: int
    dkey: int
    akey: int

    def __post_init__(self):
        if not 0 <= self.oid <= U128_MAX:
            raise RequestError(f"oid {self.oid} out of 128-bit range")
        if not (0 <= self.dkey <= U64_MAX and 0 <= self.akey <= U64_MAX):
            raise RequestError(f"dkey/akey out of 64-bit range: {self.dkey}, {self.akey}")


COMPLETION_KEY = ObjectKey(META_OID, 0, 0)


@dataclass(frozen=True)
class CostModel:
    """Simulated transport parameters (seconds, bytes/second).

    Defaults are calibration targets that separate the benchmark scenarios at
    desk scale, not measured hardware values.
    """

    queue_create_cost: float = 10e-3
    per_call_latency: float = 100e-6
    per_element_overhead: float = 10e-6
    bandwidth: float = 12.5e9
    parallel_lanes: int = 8

    def __post_init__(self):
        for name in ("queue_create_cost", "per_call_latency", "per_element_overhead"):
            if getattr(self, name) < 0:
                raise ConfigError(f"cost model: {name} must be >= 0")
        if self.bandwidth <= 0:
            raise ConfigError("cost model: bandwidth must be > 0")
        if int(self.parallel_lanes) != self.parallel_lanes or self.parallel_lanes < 1:
            raise ConfigError("cost model: parallel_lanes must be an integer >= 1")

    @classmethod
    def parse(cls, text: str | None, base: "CostModel | None" = None) -> "CostModel":
        """Parse ``key=value,...`` overrides on top of ``base`` (defaults if omitted)."""
        values = {f.name: getattr(base or cls(), f.name) for f in fields(cls)}
        for part in filter(None, (p.strip() for p in (text or "").split(","))):
            key, sep, raw = part.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in values:
                raise ConfigError(f"bad cost-model override {part!r}; keys: {', '.join(values)}")
            try:
                values[key] = int(raw) if key == "parallel_lanes" else float(raw)
            except ValueError:
                raise ConfigError(f"bad value in cost-model override {part!r}") from None
        return cls(**values)

    def call_cost(self, n_items: int, nbytes: int, *, latency: float | None = None, queue: bool = False) -> float:
        lat = self.per_call_latency if latency is None else latency
        cost = lat + n_items * self.per_element_overhead + nbytes / self.bandwidth
        return cost + self.queue_create_cost if queue else cost


@dataclass
class SimClock:
    elapsed: float = 0.0

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("simulated time cannot go backwards")
        self.elapsed += seconds


@dataclass
class OpQueue:
    session_id: int
    created_at: float
    ops_issued: int = 0


@dataclass(frozen=True)
class CallRecord:
    """One store call as seen by the cost model."""

    op: str  # "update" | "fetch"
    oid: int
    dkey: int
    akeys: tuple[int, ...]
    nbytes: int
    latency: float
    queue_created: bool

    @property
    def n_items(self) -> int:
        return len(self.akeys)


@dataclass(frozen=True)
class TraceEvent:
    """``kind`` is ``open`` (persistent queue creation), ``call`` or ``dispatch``."""

    kind: str
    calls: tuple[CallRecord, ...]
    charged: float


def lpt_makespan(costs: Sequence[float], lanes: int) -> float:
    """Longest-processing-time-first assignment; returns the busiest lane's load."""
    loads = [0.0] * lanes
    for cost in sorted(costs, reverse=True):
        i = loads.index(min(loads))
        loads[i] += cost
    return max(loads) if costs else 0.0


class _Store:
    def __init__(self, path: Path):
        self.path = path
        self.index: dict[ObjectKey, tuple[int, int, int]] = {}
        self.codec_tag = 0
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OpenError(f"cannot create store directory {path}: {exc}") from exc
        if not path.is_dir():
            raise OpenError(f"{path} is not a directory")
        self._load()
        try:
            self._log = open(path / "data.log", "ab")
            self._reader = open(path / "data.log", "rb")
        except OSError as exc:
            raise OpenError(f"cannot open {path / 'data.log'}: {exc}") from exc
        self._log_size = self._log.tell()
        self._dirty = False

    def _load(self) -> None:
        meta = self.path / "meta"
        index = self.path / "index"
        log = self.path / "data.log"
        try:
            if meta.exists():
                raw = meta.read_bytes()
                if len(raw) != _META.size:
                    raise OpenError(f"corrupt meta file in {self.path}")
                version, self.codec_tag = _META.unpack(raw)
                if version != FORMAT_VERSION:
                    raise OpenError(f"unsupported store format version {version}")
            raw = index.read_bytes() if index.exists() else b""
            log_size = log.stat().st_size if log.exists() else 0
        except OSError as exc:
            raise OpenError(f"cannot read store {self.path}: {exc}") from exc
        if len(raw) % _INDEX_RECORD.size:
            raise OpenError(f"corrupt index in {self.path}: truncated record")
        prev = None
        for rec in _INDEX_RECORD.iter_unpack(raw):
            oid_lo, oid_hi, dkey, akey, offset, length, crc = rec
            key = ObjectKey(oid_lo | (oid_hi << 64), dkey, akey)
            if prev is not None and key <= prev:
                raise OpenError(f"corrupt index in {self.path}: records out of order")
            if offset + length > log_size:
                raise OpenError(f"corrupt index in {self.path}: value past end of data.log")
            self.index[key] = (offset, length, crc)
            prev = key

    def append(self, value: bytes) -> tuple[int, int, int]:
        try:
            self._log.write(_LEN_PREFIX.pack(len(value)))
            self._log.write(value)
        except OSError as exc:
            raise StorageError(f"write to {self.path / 'data.log'} failed: {exc}") from exc
        offset = self._log_size + _LEN_PREFIX.size
        self._log_size = offset + len(value)
        self._dirty = True
        return offset, len(value), zlib.crc32(value)

    def read(self, key: ObjectKey) -> bytes:
        offset, length, crc = self.index[key]
        if self._dirty:
            self._log.flush()
            self._dirty = False
        value = os.pread(self._reader.fileno(), length, offset)
        if len(value) != length or zlib.crc32(value) != crc:
            raise IntegrityError(f"checksum mismatch for {key}")
        return value

    def flush(self) -> None:
        self._log.flush()
        os.fsync(self._log.fileno())
        records = bytearray()
        for key in sorted(self.index):
            offset, length, crc = self.index[key]
            records += _INDEX_RECORD.pack(key.oid & U64_MAX, key.oid >> 64, key.dkey, key.akey, offset, length, crc)
        _atomic_write(self.path / "index", bytes(records))
        _atomic_write(self.path / "meta", _META.pack(FORMAT_VERSION, self.codec_tag))

    def close(self) -> None:
        try:
            self.flush()
        finally:
            self._log.close()
            self._reader.close()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


_open_paths: set[Path] = set()
_open_lock = threading.Lock()
_session_ids = iter(range(1, 1 << 62))


class Session:
    """A single open store handle carrying its operation queue and simulated clock.

    With ``queue_per_call`` no persistent queue exists; every call pays
    ``queue_create_cost`` on top of its transfer cost.
    """

    def __init__(
        self,
        path: str | os.PathLike,
        cost_model: CostModel | None = None,
        *,
        queue_per_call: bool = False,
        jitter: bool = False,
        seed: int = 0,
        require_complete: bool = False,
    ):
        self.path = Path(path).resolve()
        self.cost_model = cost_model or CostModel()
        self.queue_per_call = queue_per_call
        self.clock = SimClock()
        self.trace: list[TraceEvent] = []
        self.update_calls = 0
        self.fetch_calls = 0
        self.bytes_written = 0
        self.bytes_read = 0
        self._rng = random.Random(seed) if jitter else None
        self._lock = threading.RLock()
        with _open_lock:
            if self.path in _open_paths:
                raise SessionError(f"store {self.path} already has an open session in this process")
            _open_paths.add(self.path)
        try:
            self._store = _Store(self.path)
            if require_complete and COMPLETION_KEY not in self._store.index:
                raise OpenError(f"store {self.path} has no completion marker (missing or partial import)")
        except BaseException:
            self._release()
            raise
        self.closed = False
        self.queue = OpQueue(next(_session_ids), created_at=self.clock.elapsed)
        if not queue_per_call:
            cost = self.cost_model.queue_create_cost
            self.clock.advance(cost)
            self.trace.append(TraceEvent("open", (), cost))

    def _release(self) -> None:
        with _open_lock:
            _open_paths.discard(self.path)

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def ops_issued(self) -> int:
        return self.queue.ops_issued

    @property
    def codec_tag(self) -> int:
        return self._store.codec_tag

    @codec_tag.setter
    def codec_tag(self, tag: int) -> None:
        self._store.codec_tag = tag

    def _check_open(self) -> None:
        if self.closed:
            raise SessionError("session is closed")

    def _latency(self) -> float:
        lat = self.cost_model.per_call_latency
        if self._rng is not None:
            lat *= 1.0 + self._rng.uniform(-0.05, 0.05)
        return lat

    def _cost(self, rec: CallRecord) -> float:
        return self.cost_model.call_cost(rec.n_items, rec.nbytes, latency=rec.latency, queue=rec.queue_created)

    # -- raw operations (no charging) --

    def _update(self, oid: int, dkey: int, items: Sequence[tuple[int, bytes]]) -> CallRecord:
        if not items:
            raise RequestError(f"empty update batch for oid={oid} dkey={dkey}")
        akeys = [a for a, _ in items]
        if len(set(akeys)) != len(akeys):
            raise RequestError(f"duplicate akey in update batch for oid={oid} dkey={dkey}")
        keys = [ObjectKey(oid, dkey, a) for a in akeys]
        nbytes = 0
        for key, (_, value) in zip(keys, items):
            self._store.index[key] = self._store.append(bytes(value))
            nbytes += len(value)
        self.update_calls += 1
        self.bytes_written += nbytes
        self.queue.ops_issued += 1
        return CallRecord("update", oid, dkey, tuple(akeys), nbytes, self._latency(), self.queue_per_call)

    def _fetch(self, oid: int, dkey: int, akeys: Sequence[int]) -> tuple[list[bytes], CallRecord]:
        if not akeys:
            raise RequestError(f"empty fetch batch for oid={oid} dkey={dkey}")
        keys = [ObjectKey(oid, dkey, a) for a in akeys]
        for key in keys:
            if key not in self._store.index:
                raise NotFoundError(f"no value at (oid={key.oid}, dkey={key.dkey}, akey={key.akey})")
        values = [self._store.read(k) for k in keys]
        nbytes = sum(len(v) for v in values)
        self.fetch_calls += 1
        self.bytes_read += nbytes
        self.queue.ops_issued += 1
        return values, CallRecord("fetch", oid, dkey, tuple(akeys), nbytes, self._latency(), self.queue_per_call)

    # -- public API --

    def update_batch(self, oid: int, dkey: int, items: Sequence[tuple[int, bytes]]) -> None:
        with self._lock:
            self._check_open()
            rec = self._update(oid, dkey, items)
            cost = self._cost(rec)
            self.clock.advance(cost)
            self.trace.append(TraceEvent("call", (rec,), cost))

    def fetch_batch(self, oid: int, dkey: int, akeys: Sequence[int]) -> list[bytes]:
        with self._lock:
            self._check_open()
            values, rec = self._fetch(oid, dkey, akeys)
            cost = self._cost(rec)
            self.clock.advance(cost)
            self.trace.append(TraceEvent("call", (rec,), cost))
            return values

    def dispatch_concurrent(self, batches: Iterable[tuple], *, fetch: bool = False) -> list:
        """Issue batches as one concurrent dispatch.

        Each batch is ``(oid, dkey, items)`` where items are ``(akey, value)``
        pairs for updates or akeys when ``fetch`` is set. Results come back in
        batch order: ``None`` per update batch, the value list per fetch batch.
        Charged time is the LPT makespan of the per-batch costs over
        ``parallel_lanes`` lanes.
        """
        batches = list(batches)
        targets = [(oid, dkey) for oid, dkey, _ in batches]
        if len(set(targets)) != len(targets):
            raise RequestError("concurrent batches must target pairwise-distinct (oid, dkey) pairs")
        with self._lock:
            self._check_open()
            results: list = []
            records: list[CallRecord] = []
            for oid, dkey, items in batches:
                if fetch:
                    values, rec = self._fetch(oid, dkey, items)
                    results.append(values)
                else:
                    rec = self._update(oid, dkey, items)
                    results.append(None)
                records.append(rec)
            charged = lpt_makespan([self._cost(r) for r in records], self.cost_model.parallel_lanes)
            self.clock.advance(charged)
            self.trace.append(TraceEvent("dispatch", tuple(records), charged))
            return results

    def list_keys(self, oid: int) -> list[tuple[int, int]]:
        with self._lock:
            self._check_open()
            return sorted((k.dkey, k.akey) for k in self._store.index if k.oid == oid)

    def __len__(self) -> int:
        return len(self._store.index)

    def contains(self, key: ObjectKey) -> bool:
        return key in self._store.index

    def snapshot(self) -> dict[ObjectKey, bytes]:
        """Full key -> value map (test and integrity helper; not charged)."""
        with self._lock:
            return {k: self._store.read(k) for k in sorted(self._store.index)}

    def flush(self) -> None:
        with self._lock:
            self._check_open()
            self._store.flush()

    def close(self) -> None:
        with self._lock:
            if self.closed:
                return
            self.closed = True
            try:
                self._store.close()
            finally:
                self._release()


def open_session(path: str | os.PathLike, cost_model: CostModel | None = None, **kwargs) -> Session:
    return Session(path, cost_model, **kwargs)
