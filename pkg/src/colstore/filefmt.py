"""Flat-file backend.

Layout (all integers little-endian)::

    "CSTR1" | version u16
    header:     length u32 | schema encoding (see ``encoding``)
    page data:  stored page payloads, cluster by cluster, column by column
    page lists: per cluster, listing encoding | crc32 u32
    footer:     num_entries u64 | cluster count u32
                | per cluster: first_entry u64, num_entries u64,
                               page-list offset u64, page-list length u64
    trailer:    footer crc32 u32 | footer length u32 | "CSTR1"

Page-list lengths include their trailing crc32. Page locators in the lists are
file ranges.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import Sequence

from .codec import decompress
from .encoding import Reader, decode_cluster, decode_schema, encode_cluster, encode_schema
from .errors import FormatError, IntegrityError
from .model import ClusterDescriptor, Dataset, FileRange, PageDescriptor, PagedDataset, assemble

MAGIC = b"CSTR1"
VERSION = 1

_PREAMBLE = struct.Struct("<5sH")
_TRAILER = struct.Struct("<II5s")
_CLUSTER_SUMMARY = struct.Struct("<QQQQ")


def write_file_backend(paged: PagedDataset, path: str | os.PathLike) -> list[ClusterDescriptor]:
    """Serialize ``paged`` to ``path``; returns the clusters with file locators."""
    located: list[ClusterDescriptor] = []
    with open(path, "wb") as fh:
        header = encode_schema(paged.schema, paged.codec)
        fh.write(_PREAMBLE.pack(MAGIC, VERSION))
        fh.write(struct.pack("<I", len(header)) + header)
        for cluster in paged.clusters:
            pages = []
            for p in cluster.pages():
                payload = paged.payloads[p.page_id]
                pages.append(p.with_locator(FileRange(fh.tell(), len(payload))))
                fh.write(payload)
            located.append(cluster.replace_pages(pages))
        lists = []
        for cluster in located:
            body = encode_cluster(cluster)
            offset = fh.tell()
            fh.write(body + struct.pack("<I", zlib.crc32(body)))
            lists.append((offset, len(body) + 4))
        footer = bytearray(struct.pack("<QI", paged.num_entries, len(located)))
        for cluster, (offset, length) in zip(located, lists):
            footer += _CLUSTER_SUMMARY.pack(cluster.first_entry, cluster.num_entries, offset, length)
        fh.write(footer)
        fh.write(_TRAILER.pack(zlib.crc32(footer), len(footer), MAGIC))
    return located


class FileReader:
    """Random-access reader over a flat file; only requested pages are read."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        try:
            self._fh = open(self.path, "rb")
        except OSError as exc:
            raise FormatError(f"cannot open {self.path}: {exc}") from exc
        try:
            self._parse()
        except BaseException:
            self._fh.close()
            raise
        self.data_calls = 0

    def _pread(self, offset: int, length: int) -> bytes:
        data = os.pread(self._fh.fileno(), length, offset)
        if len(data) != length:
            raise FormatError(f"{self.path}: truncated file")
        return data

    def _parse(self) -> None:
        size = os.fstat(self._fh.fileno()).st_size
        if size < _PREAMBLE.size + 4 + _TRAILER.size:
            raise FormatError(f"{self.path}: too short to be a dataset file")
        magic, version = _PREAMBLE.unpack(self._pread(0, _PREAMBLE.size))
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad magic")
        if version != VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")
        (hlen,) = struct.unpack("<I", self._pread(_PREAMBLE.size, 4))
        self.schema, self.codec = decode_schema(self._pread(_PREAMBLE.size + 4, hlen))

        crc, flen, magic = _TRAILER.unpack(self._pread(size - _TRAILER.size, _TRAILER.size))
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad trailing magic")
        if flen > size - _TRAILER.size:
            raise FormatError(f"{self.path}: bad footer length")
        footer = self._pread(size - _TRAILER.size - flen, flen)
        if zlib.crc32(footer) != crc:
            raise FormatError(f"{self.path}: footer checksum mismatch")
        r = Reader(footer, "footer")
        self.num_entries, nclusters = r.unpack("<QI")
        self.clusters = []
        for _ in range(nclusters):
            first, n, offset, length = r.unpack(_CLUSTER_SUMMARY)
            raw = self._pread(offset, length)
            body, (list_crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
            if zlib.crc32(body) != list_crc:
                raise FormatError(f"{self.path}: page list checksum mismatch")
            cluster = decode_cluster(body)
            if (cluster.first_entry, cluster.num_entries) != (first, n):
                raise FormatError(f"{self.path}: footer and page list disagree on cluster {cluster.cluster_id}")
            self.clusters.append(cluster)
        r.done()

    def read_stored(self, page: PageDescriptor) -> bytes:
        loc = page.locator
        if not isinstance(loc, FileRange) or loc.length != page.stored_size:
            raise FormatError(f"page {page.page_id} has no valid file locator")
        data = self._pread(loc.offset, loc.length)
        if zlib.crc32(data) != page.checksum:
            raise IntegrityError(f"page {page.page_id}: checksum mismatch")
        return data

    def read_pages(self, pages: Sequence[PageDescriptor]) -> list[bytes]:
        self.data_calls += len(pages)
        return [decompress(self.read_stored(p), self.codec, p.uncompressed_size) for p in pages]

    def to_dataset(self) -> Dataset:
        return assemble(self.schema, self.num_entries, self.clusters, self.read_pages)

    def to_paged(self) -> PagedDataset:
        payloads = {p.page_id: self.read_stored(p) for c in self.clusters for p in c.pages()}
        return PagedDataset(self.schema, self.codec, self.num_entries, list(self.clusters), payloads)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "FileReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_file_backend(path: str | os.PathLike) -> PagedDataset:
    """Load a flat file completely; ``.to_dataset()`` gives the logical content."""
    with FileReader(path) as reader:
        return reader.to_paged()
