"""Logical columnar dataset: schema, columns, pages, page groups and clusters.

A field of fundamental type maps to one column. A var-list field maps to two
adjacent columns: an index column holding the cumulative end offset of every
entry (global across the dataset, unsigned 64-bit) followed by the element
column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from .codec import Codec, compress
from .errors import ConfigError, ConsistencyError, SchemaError
from .objstore import ObjectKey

# element type -> little-endian numpy dtype
ELEMENT_DTYPES: dict[str, str] = {
    "int32": "<i4",
    "int64": "<i8",
    "float32": "<f4",
    "float64": "<f8",
    "index": "<u8",
}
FUNDAMENTAL_TYPES = ("int32", "int64", "float32", "float64")

DEFAULT_CLUSTER_ENTRIES = 100_000


def element_size(element_type: str) -> int:
    return np.dtype(ELEMENT_DTYPES[element_type]).itemsize


@dataclass(frozen=True)
class FieldSpec:
    """``type`` is a fundamental type, ``"index"`` or ``"var-list"``.

    For var-list fields ``element_type`` names the fundamental element type.
    """

    name: str
    type: str
    element_type: str | None = None

    @property
    def is_var_list(self) -> bool:
        return self.type == "var-list"


@dataclass(frozen=True)
class Schema:
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        seen = set()
        for f in self.fields:
            if not f.name:
                raise SchemaError("field names must be non-empty")
            if f.name in seen:
                raise SchemaError(f"duplicate field name {f.name!r}")
            seen.add(f.name)
            if f.is_var_list:
                if f.element_type not in FUNDAMENTAL_TYPES:
                    raise SchemaError(
                        f"var-list field {f.name!r} needs a fundamental element type, "
                        f"got {f.element_type!r}"
                    )
            elif f.type not in ELEMENT_DTYPES:
                raise SchemaError(f"field {f.name!r} has unknown type {f.type!r}")

    @classmethod
    def of(cls, *specs: Union[FieldSpec, tuple]) -> "Schema":
        """Convenience constructor: ``Schema.of(("fE", "float32"), ("fIds", "var-list", "int32"))``."""
        return cls(tuple(s if isinstance(s, FieldSpec) else FieldSpec(*s) for s in specs))

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise SchemaError(f"no field named {name!r}")


@dataclass(frozen=True)
class ColumnDescriptor:
    column_id: int
    element_type: str
    element_size: int
    source_field: str

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(ELEMENT_DTYPES[self.element_type])

    @property
    def is_index(self) -> bool:
        return self.element_type == "index"


def decompose_schema(schema: Schema) -> list[ColumnDescriptor]:
    columns: list[ColumnDescriptor] = []

    def add(element_type: str, source: str) -> None:
        columns.append(ColumnDescriptor(len(columns), element_type, element_size(element_type), source))

    for f in schema.fields:
        if f.is_var_list:
            add("index", f.name)
            add(f.element_type, f.name)
        else:
            add(f.type, f.name)
    return columns


@dataclass(frozen=True)
class FileRange:
    offset: int
    length: int


@dataclass(frozen=True)
class ObjectRef:
    key: ObjectKey
    offset_in_value: int
    length: int


Locator = Union[FileRange, ObjectRef]


@dataclass(frozen=True)
class PageDescriptor:
    page_id: int
    cluster_id: int
    column_id: int
    first_element_index: int
    num_elements: int
    uncompressed_size: int
    stored_size: int
    locator: Locator | None = None
    checksum: int = 0

    def with_locator(self, locator: Locator) -> "PageDescriptor":
        return PageDescriptor(
            self.page_id, self.cluster_id, self.column_id, self.first_element_index,
            self.num_elements, self.uncompressed_size, self.stored_size, locator, self.checksum,
        )


@dataclass(frozen=True)
class ClusterDescriptor:
    cluster_id: int
    first_entry: int
    num_entries: int
    page_groups: Mapping[int, tuple[PageDescriptor, ...]] = field(default_factory=dict)

    def pages(self, columns: Iterable[int] | None = None) -> list[PageDescriptor]:
        """Pages of the cluster, column by column, each group in element order."""
        ids = sorted(self.page_groups) if columns is None else columns
        return [p for c in ids for p in self.page_groups.get(c, ())]

    def replace_pages(self, pages: Iterable[PageDescriptor]) -> "ClusterDescriptor":
        groups: dict[int, list[PageDescriptor]] = {c: [] for c in self.page_groups}
        for p in pages:
            groups.setdefault(p.column_id, []).append(p)
        return ClusterDescriptor(
            self.cluster_id, self.first_entry, self.num_entries,
            {c: tuple(sorted(ps, key=lambda p: p.first_element_index)) for c, ps in groups.items()},
        )


def slice_into_pages(column_data, page_size_target: int, element_size: int | None = None) -> list[bytes]:
    """Split a column buffer into pages of ``floor(page_size_target / element_size)`` elements.

    ``column_data`` is a numpy array (element size taken from its dtype) or a
    bytes-like buffer together with an explicit ``element_size``.
    """
    if isinstance(column_data, np.ndarray):
        element_size = column_data.dtype.itemsize
        buf = column_data.tobytes()
    else:
        buf = bytes(column_data)
        if element_size is None:
            raise ConfigError("element_size is required for raw byte buffers")
    if page_size_target < element_size:
        raise ConfigError(f"page size {page_size_target} B is smaller than one element ({element_size} B)")
    if len(buf) % element_size:
        raise ConsistencyError("column buffer is not a whole number of elements")
    step = (page_size_target // element_size) * element_size
    return [buf[i:i + step] for i in range(0, len(buf), step)]


@dataclass
class Dataset:
    """In-memory logical dataset: one numpy array per column."""

    schema: Schema
    num_entries: int
    columns: list[np.ndarray]

    def __post_init__(self):
        descs = decompose_schema(self.schema)
        if len(descs) != len(self.columns):
            raise SchemaError(f"schema has {len(descs)} columns, got {len(self.columns)} arrays")
        self.columns = [np.ascontiguousarray(a, dtype=d.dtype) for a, d in zip(self.columns, descs)]
        for d in descs:
            n = len(self.columns[d.column_id])
            if d.is_index or not self._is_var_list_element(d):
                if n != self.num_entries:
                    raise SchemaError(f"column {d.column_id} has {n} elements, expected {self.num_entries}")
            else:
                offsets = self.columns[d.column_id - 1]
                expected = int(offsets[-1]) if len(offsets) else 0
                if n != expected:
                    raise SchemaError(f"element column {d.column_id} has {n} elements, offsets say {expected}")

    def _is_var_list_element(self, desc: ColumnDescriptor) -> bool:
        return self.schema.field(desc.source_field).is_var_list

    @property
    def column_descriptors(self) -> list[ColumnDescriptor]:
        return decompose_schema(self.schema)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.columns)

    def same_content(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and self.num_entries == other.num_entries
            and all(a.tobytes() == b.tobytes() for a, b in zip(self.columns, other.columns))
        )

    @classmethod
    def from_fields(cls, schema: Schema, values: Mapping[str, object]) -> "Dataset":
        """Build from per-field values; var-list fields take a list of sequences."""
        columns: list[np.ndarray] = []
        num_entries = None
        for f in schema.fields:
            v = values[f.name]
            if f.is_var_list:
                lengths = np.array([len(x) for x in v], dtype=np.uint64)
                columns.append(np.cumsum(lengths, dtype=np.uint64))
                flat = [e for x in v for e in x]
                columns.append(np.array(flat, dtype=ELEMENT_DTYPES[f.element_type]))
                n = len(v)
            else:
                arr = np.asarray(v, dtype=ELEMENT_DTYPES[f.type])
                columns.append(arr)
                n = len(arr)
            if num_entries is None:
                num_entries = n
            elif n != num_entries:
                raise SchemaError(f"field {f.name!r} has {n} entries, expected {num_entries}")
        return cls(schema, num_entries or 0, columns)


@dataclass
class PagedDataset:
    """Dataset sealed into clusters and pages. ``payloads`` holds stored (compressed) bytes by page_id."""

    schema: Schema
    codec: Codec
    num_entries: int
    clusters: list[ClusterDescriptor]
    payloads: dict[int, bytes] = field(default_factory=dict)

    @property
    def columns(self) -> list[ColumnDescriptor]:
        return decompose_schema(self.schema)

    @property
    def num_pages(self) -> int:
        return sum(len(g) for c in self.clusters for g in c.page_groups.values())

    @property
    def uncompressed_bytes(self) -> int:
        return sum(p.uncompressed_size for c in self.clusters for p in c.pages())

    def to_dataset(self) -> Dataset:
        from .codec import decompress

        def read(pages: list[PageDescriptor]) -> list[bytes]:
            return [decompress(self.payloads[p.page_id], self.codec, p.uncompressed_size) for p in pages]

        return assemble(self.schema, self.num_entries, self.clusters, read)


def _cluster_ranges(num_entries: int, cluster_entries: int) -> list[tuple[int, int]]:
    if cluster_entries < 1:
        raise ConfigError("cluster entry count must be >= 1")
    return [(s, min(s + cluster_entries, num_entries)) for s in range(0, num_entries, cluster_entries)]


def build_pages(
    dataset: Dataset,
    page_size: int,
    *,
    cluster_entries: int = DEFAULT_CLUSTER_ENTRIES,
    codec: Codec = Codec.NONE,
    level: int = 3,
) -> PagedDataset:
    """Seal ``dataset`` into clusters of ``cluster_entries`` entries and pages of ``page_size`` bytes.

    page_ids come from one dataset-wide counter in write order: cluster by
    cluster, column by column, pages in element order.
    """
    import zlib

    descs = dataset.column_descriptors
    for d in descs:
        if page_size < d.element_size:
            raise ConfigError(f"page size {page_size} B is smaller than one {d.element_type} element")
    clusters: list[ClusterDescriptor] = []
    payloads: dict[int, bytes] = {}
    next_page_id = 0
    for cluster_id, (e0, e1) in enumerate(_cluster_ranges(dataset.num_entries, cluster_entries)):
        groups: dict[int, tuple[PageDescriptor, ...]] = {}
        for d in descs:
            arr = dataset.columns[d.column_id]
            if d.is_index or not dataset._is_var_list_element(d):
                lo, hi = e0, e1
            else:
                offsets = dataset.columns[d.column_id - 1]
                lo = int(offsets[e0 - 1]) if e0 > 0 else 0
                hi = int(offsets[e1 - 1])
            group = []
            first = lo
            for raw in slice_into_pages(arr[lo:hi], page_size):
                stored = compress(raw, codec, level=level)
                n = len(raw) // d.element_size
                group.append(PageDescriptor(
                    page_id=next_page_id,
                    cluster_id=cluster_id,
                    column_id=d.column_id,
                    first_element_index=first,
                    num_elements=n,
                    uncompressed_size=len(raw),
                    stored_size=len(stored),
                    checksum=zlib.crc32(stored),
                ))
                payloads[next_page_id] = stored
                next_page_id += 1
                first += n
            groups[d.column_id] = tuple(group)
        clusters.append(ClusterDescriptor(cluster_id, e0, e1 - e0, groups))
    return PagedDataset(dataset.schema, codec, dataset.num_entries, clusters, payloads)


def assemble(
    schema: Schema,
    num_entries: int,
    clusters: Iterable[ClusterDescriptor],
    read: Callable[[list[PageDescriptor]], list[bytes]],
) -> Dataset:
    """Rebuild every column from pages. ``read`` maps descriptors to uncompressed payloads."""
    return Dataset(schema, num_entries, assemble_columns(schema, clusters, read))


def assemble_columns(
    schema: Schema,
    clusters: Iterable[ClusterDescriptor],
    read: Callable[[list[PageDescriptor]], list[bytes]],
    columns: Iterable[int] | None = None,
) -> list[np.ndarray]:
    descs = decompose_schema(schema)
    wanted = list(range(len(descs))) if columns is None else list(columns)
    chunks: dict[int, list[bytes]] = {c: [] for c in wanted}
    for cluster in clusters:
        pages = cluster.pages(wanted)
        for p, payload in zip(pages, read(pages)):
            if len(payload) != p.uncompressed_size:
                raise ConsistencyError(f"page {p.page_id}: got {len(payload)} B, expected {p.uncompressed_size}")
            chunks[p.column_id].append(payload)
    out = []
    for d in descs:
        if d.column_id in chunks:
            out.append(np.frombuffer(b"".join(chunks[d.column_id]), dtype=d.dtype).copy())
        else:
            out.append(np.empty(0, dtype=d.dtype))
    return out
