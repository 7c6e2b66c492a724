"""Columnar dataset -> object store layer.

Two mapping functions place pages in the store:

* object-per-page: every page gets its own object, ``(page_id, 0, 0)``;
* locality-driven: ``(cluster_id, column_id, page_id)``, so a page group
  shares one ``(oid, dkey)`` and its requests can be coalesced into one call.

Writes are deferred until a cluster is committed. The commit then either
issues one single-item update per page, or groups requests by ``(oid, dkey)``
and dispatches one batch per group. Optionally, pages of a page group are first
spliced into blocks of up to ``target_block_size`` bytes, each stored as one
value.

Dataset metadata lives in the reserved object ``META_OID``::

    dkey 0, akey 0   anchor (completion marker, written last)
    dkey 0, akey 1   header: schema and codec
    dkey 1, akey c   page listing of cluster c
"""

from __future__ import annotations

import enum
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

from .codec import Codec, decompress
from .encoding import decode_cluster, decode_schema, encode_cluster, encode_schema
from .errors import ConfigError, ConsistencyError, FormatError, IntegrityError, OpenError, StoreError
from .model import ClusterDescriptor, Dataset, ObjectRef, PageDescriptor, PagedDataset, Schema, assemble
from .objstore import COMPLETION_KEY, META_OID, ObjectKey, Session

ALPHA_DKEY = 0
ALPHA_AKEY = 0
DEFAULT_BLOCK_SIZE = 1 << 20

_ANCHOR = struct.Struct("<IBBQIQ")
_ANCHOR_VERSION = 1
_HEADER_AKEY = 1
_LISTING_DKEY = 1


class MappingKind(enum.Enum):
    OBJECT_PER_PAGE = "object-per-page"
    LOCALITY_DRIVEN = "locality-driven"

    @classmethod
    def parse(cls, name: str) -> "MappingKind":
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(f"unknown mapping {name!r} (expected object-per-page or locality-driven)") from None

    @property
    def tag(self) -> int:
        return 0 if self is MappingKind.OBJECT_PER_PAGE else 1


def map_object_per_page(cluster_id: int, column_id: int, page_id: int) -> ObjectKey:
    return ObjectKey(page_id, ALPHA_DKEY, ALPHA_AKEY)


def map_locality_driven(cluster_id: int, column_id: int, page_id: int) -> ObjectKey:
    return ObjectKey(cluster_id, column_id, page_id)


MAPPINGS: dict[MappingKind, Callable[[int, int, int], ObjectKey]] = {
    MappingKind.OBJECT_PER_PAGE: map_object_per_page,
    MappingKind.LOCALITY_DRIVEN: map_locality_driven,
}


@dataclass(frozen=True)
class WriteOptions:
    mapping: MappingKind = MappingKind.LOCALITY_DRIVEN
    vector_writes: bool = True
    target_block_size: int | None = None

    def __post_init__(self):
        if self.target_block_size is not None and self.target_block_size < 1:
            raise ConfigError("target block size must be positive")


@dataclass(frozen=True)
class SgBlock:
    cluster_id: int
    column_id: int
    member_pages: tuple[int, ...]
    member_offsets: tuple[int, ...]
    total_size: int
    key: ObjectKey | None = None


def pack_blocks(pages: Sequence[PageDescriptor], target_block_size: int) -> list[SgBlock]:
    """Greedily splice one page group into blocks, in element order.

    A new block starts when adding the next page would exceed the target; a
    page larger than the target becomes a block of its own.
    """
    if not pages:
        return []
    group = {(p.cluster_id, p.column_id) for p in pages}
    if len(group) != 1:
        raise ConsistencyError("scatter-gather blocks must not span page groups")
    cluster_id, column_id = group.pop()
    ordered = sorted(pages, key=lambda p: p.first_element_index)
    blocks: list[SgBlock] = []
    members: list[PageDescriptor] = []
    size = 0

    def seal():
        offsets, off = [], 0
        for m in members:
            offsets.append(off)
            off += m.stored_size
        blocks.append(SgBlock(cluster_id, column_id, tuple(m.page_id for m in members), tuple(offsets), off))

    for p in ordered:
        if members and size + p.stored_size > target_block_size:
            seal()
            members, size = [], 0
        members.append(p)
        size += p.stored_size
    seal()
    return blocks


def _plan(cluster: ClusterDescriptor, payloads: Sequence[bytes], options: WriteOptions):
    """Return write units ``(key, value, [(page, offset_in_value)])`` in commit order."""
    pages = cluster.pages()
    if len(payloads) != len(pages):
        raise ConsistencyError(f"cluster {cluster.cluster_id}: {len(payloads)} payloads for {len(pages)} pages")
    by_id = {}
    for p, payload in zip(pages, payloads):
        if len(payload) != p.stored_size:
            raise ConsistencyError(f"page {p.page_id}: payload is {len(payload)} B, descriptor says {p.stored_size}")
        by_id[p.page_id] = (p, payload)
    mapper = MAPPINGS[options.mapping]
    units = []
    if options.target_block_size:
        for column_id in sorted(cluster.page_groups):
            for block in pack_blocks(cluster.page_groups[column_id], options.target_block_size):
                key = mapper(cluster.cluster_id, column_id, block.member_pages[0])
                members = [(by_id[pid][0], off) for pid, off in zip(block.member_pages, block.member_offsets)]
                value = b"".join(by_id[pid][1] for pid in block.member_pages)
                units.append((key, value, members))
    else:
        for p, payload in by_id.values():
            units.append((mapper(p.cluster_id, p.column_id, p.page_id), payload, [(p, 0)]))
    return units


def commit_cluster(
    session: Session,
    cluster: ClusterDescriptor,
    payloads: Sequence[bytes],
    options: WriteOptions = WriteOptions(),
) -> ClusterDescriptor:
    """Write all buffered pages of a cluster; return descriptors with object locators.

    ``payloads`` are stored (compressed) page bytes aligned with ``cluster.pages()``.
    """
    units = _plan(cluster, payloads, options)
    if options.vector_writes:
        groups: OrderedDict[tuple[int, int], list] = OrderedDict()
        for key, value, _ in units:
            groups.setdefault((key.oid, key.dkey), []).append((key.akey, value))
        if groups:
            session.dispatch_concurrent([(oid, dkey, items) for (oid, dkey), items in groups.items()])
    else:
        for key, value, _ in units:
            session.update_batch(key.oid, key.dkey, [(key.akey, value)])
    located = [
        page.with_locator(ObjectRef(key, offset, page.stored_size))
        for key, _, members in units
        for page, offset in members
    ]
    return cluster.replace_pages(located)


def read_pages(session: Session, pages: Sequence[PageDescriptor], codec: Codec) -> list[bytes]:
    """Fetch pages, coalescing by ``(oid, dkey)``; returns uncompressed payloads in request order.

    Pages spliced into one block are served by a single fetch of the block value.
    """
    groups: OrderedDict[tuple[int, int], dict[int, None]] = OrderedDict()
    for p in pages:
        if not isinstance(p.locator, ObjectRef):
            raise ConsistencyError(f"page {p.page_id} has no object-store locator")
        k = p.locator.key
        groups.setdefault((k.oid, k.dkey), {})[k.akey] = None
    if not groups:
        return []
    batches = [(oid, dkey, list(akeys)) for (oid, dkey), akeys in groups.items()]
    results = session.dispatch_concurrent(batches, fetch=True)
    values = {
        ObjectKey(oid, dkey, akey): value
        for (oid, dkey, akeys), vals in zip(batches, results)
        for akey, value in zip(akeys, vals)
    }
    out = []
    for p in pages:
        loc = p.locator
        stored = values[loc.key][loc.offset_in_value:loc.offset_in_value + loc.length]
        if len(stored) != p.stored_size or zlib.crc32(stored) != p.checksum:
            raise IntegrityError(f"page {p.page_id}: checksum or size mismatch")
        out.append(decompress(stored, codec, p.uncompressed_size))
    return out


class StoreWriter:
    """Writes one dataset into an open session: header, clusters, listings, then the anchor."""

    def __init__(self, session: Session, schema: Schema, codec: Codec, options: WriteOptions = WriteOptions()):
        self.session = session
        self.schema = schema
        self.codec = codec
        self.options = options
        self.clusters: list[ClusterDescriptor] = []
        self.data_calls = 0
        if len(session):
            raise StoreError(f"store {session.path} is not empty; import into a fresh store")
        session.codec_tag = int(codec)
        session.update_batch(META_OID, 0, [(_HEADER_AKEY, encode_schema(schema, codec))])

    def commit_cluster(self, cluster: ClusterDescriptor, payloads: Sequence[bytes]) -> ClusterDescriptor:
        before = self.session.ops_issued
        located = commit_cluster(self.session, cluster, payloads, self.options)
        self.data_calls += self.session.ops_issued - before
        self.clusters.append(located)
        return located

    def finish(self, num_entries: int) -> None:
        if self.clusters:
            items = [(c.cluster_id, encode_cluster(c)) for c in self.clusters]
            self.session.update_batch(META_OID, _LISTING_DKEY, items)
        anchor = _ANCHOR.pack(_ANCHOR_VERSION, self.options.mapping.tag, int(self.codec), num_entries,
                              len(self.clusters), self.options.target_block_size or 0)
        self.session.update_batch(META_OID, COMPLETION_KEY.dkey, [(COMPLETION_KEY.akey, anchor)])
        self.session.flush()


def write_dataset(session: Session, paged: PagedDataset, options: WriteOptions = WriteOptions()) -> StoreWriter:
    writer = StoreWriter(session, paged.schema, paged.codec, options)
    for cluster in paged.clusters:
        writer.commit_cluster(cluster, [paged.payloads[p.page_id] for p in cluster.pages()])
    writer.finish(paged.num_entries)
    return writer


class StoreReader:
    """Read side of a dataset stored in an object store session."""

    def __init__(self, session: Session):
        self.session = session
        if not session.contains(COMPLETION_KEY):
            raise OpenError("store holds no complete dataset")
        anchor, header = session.fetch_batch(META_OID, 0, [COMPLETION_KEY.akey, _HEADER_AKEY])
        if len(anchor) != _ANCHOR.size:
            raise FormatError("corrupt dataset anchor")
        version, mapping_tag, codec_tag, self.num_entries, nclusters, block = _ANCHOR.unpack(anchor)
        if version != _ANCHOR_VERSION:
            raise FormatError(f"unsupported dataset version {version}")
        self.mapping = MappingKind.LOCALITY_DRIVEN if mapping_tag else MappingKind.OBJECT_PER_PAGE
        self.target_block_size = block or None
        self.schema, self.codec = decode_schema(header)
        if int(self.codec) != codec_tag:
            raise FormatError("codec tag in anchor and header disagree")
        listings = session.fetch_batch(META_OID, _LISTING_DKEY, list(range(nclusters))) if nclusters else []
        self.clusters = [decode_cluster(b) for b in listings]
        self.data_calls = 0
        for c in self.clusters:
            self._check_mapping(c)

    def _check_mapping(self, cluster: ClusterDescriptor) -> None:
        for p in cluster.pages():
            k = p.locator.key if isinstance(p.locator, ObjectRef) else None
            if k is None:
                raise FormatError(f"page {p.page_id} lacks an object locator")
            if self.mapping is MappingKind.LOCALITY_DRIVEN:
                ok = (k.oid, k.dkey) == (p.cluster_id, p.column_id)
            else:
                ok = (k.dkey, k.akey) == (ALPHA_DKEY, ALPHA_AKEY)
            if not ok:
                raise FormatError(f"page {p.page_id} key {k} does not follow the {self.mapping.value} mapping")

    def read_pages(self, pages: Sequence[PageDescriptor]) -> list[bytes]:
        before = self.session.ops_issued
        out = read_pages(self.session, pages, self.codec)
        self.data_calls += self.session.ops_issued - before
        return out

    def to_dataset(self) -> Dataset:
        return assemble(self.schema, self.num_entries, self.clusters, self.read_pages)
