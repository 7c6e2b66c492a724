"""Binary encoding of schemas and page listings, shared by both backends.

Schema (header body)::

    codec u8 | field count u32 | fields...
    field: name length u16 | name utf-8 | type tag u8 | element type tag u8

Page listing (one per cluster)::

    cluster_id u64 | first_entry u64 | num_entries u64 | group count u32 | groups...
    group: column_id u32 | page count u32 | pages...
    page:  page_id u64 | first_element_index u64 | num_elements u64
           | uncompressed_size u64 | stored_size u64 | crc32 u32 | locator
    locator: kind u8 (0 none, 1 file, 2 object), then
             file:   offset u64 | length u64
             object: oid low u64 | oid high u64 | dkey u64 | akey u64
                     | offset_in_value u64 | length u64

All integers little-endian.
"""

from __future__ import annotations

import struct

from .codec import Codec
from .errors import FormatError
from .model import ClusterDescriptor, FieldSpec, FileRange, ObjectRef, PageDescriptor, Schema
from .objstore import U64_MAX, ObjectKey

TYPE_TAGS = {"int32": 1, "int64": 2, "float32": 3, "float64": 4, "index": 5, "var-list": 6}
TAG_TYPES = {v: k for k, v in TYPE_TAGS.items()}

_PAGE = struct.Struct("<QQQQQI")
_FILE_LOC = struct.Struct("<QQ")
_OBJ_LOC = struct.Struct("<QQQQQQ")


class Reader:
    """Bounds-checked cursor over a bytes buffer."""

    def __init__(self, buf: bytes, what: str = "buffer"):
        self.buf = buf
        self.pos = 0
        self.what = what

    def unpack(self, fmt: str | struct.Struct) -> tuple:
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise FormatError(f"truncated {self.what}")
        out = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return out

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {self.what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what}")


def encode_schema(schema: Schema, codec: Codec) -> bytes:
    out = bytearray(struct.pack("<BI", int(codec), len(schema.fields)))
    for f in schema.fields:
        name = f.name.encode()
        out += struct.pack("<H", len(name)) + name
        out += struct.pack("<BB", TYPE_TAGS[f.type], TYPE_TAGS[f.element_type] if f.element_type else 0)
    return bytes(out)


def decode_schema(buf: bytes) -> tuple[Schema, Codec]:
    r = Reader(buf, "schema")
    codec_tag, n = r.unpack("<BI")
    try:
        codec = Codec(codec_tag)
    except ValueError:
        raise FormatError(f"unknown codec tag {codec_tag}") from None
    specs = []
    for _ in range(n):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        type_tag, elem_tag = r.unpack("<BB")
        if type_tag not in TAG_TYPES or (elem_tag and elem_tag not in TAG_TYPES):
            raise FormatError(f"unknown type tag in field {name!r}")
        specs.append(FieldSpec(name, TAG_TYPES[type_tag], TAG_TYPES[elem_tag] if elem_tag else None))
    r.done()
    return Schema(tuple(specs)), codec


def encode_cluster(cluster: ClusterDescriptor) -> bytes:
    out = bytearray(struct.pack("<QQQI", cluster.cluster_id, cluster.first_entry, cluster.num_entries,
                                len(cluster.page_groups)))
    for column_id in sorted(cluster.page_groups):
        group = cluster.page_groups[column_id]
        out += struct.pack("<II", column_id, len(group))
        for p in group:
            out += _PAGE.pack(p.page_id, p.first_element_index, p.num_elements,
                              p.uncompressed_size, p.stored_size, p.checksum)
            loc = p.locator
            if loc is None:
                out += b"\x00"
            elif isinstance(loc, FileRange):
                out += b"\x01" + _FILE_LOC.pack(loc.offset, loc.length)
            else:
                k = loc.key
                out += b"\x02" + _OBJ_LOC.pack(k.oid & U64_MAX, k.oid >> 64, k.dkey, k.akey,
                                               loc.offset_in_value, loc.length)
    return bytes(out)


def decode_cluster(buf: bytes) -> ClusterDescriptor:
    r = Reader(buf, "page listing")
    cluster_id, first_entry, num_entries, ngroups = r.unpack("<QQQI")
    groups = {}
    for _ in range(ngroups):
        column_id, npages = r.unpack("<II")
        pages = []
        for _ in range(npages):
            page_id, first, n, usize, ssize, crc = r.unpack(_PAGE)
            (kind,) = r.unpack("<B")
            if kind == 0:
                loc = None
            elif kind == 1:
                loc = FileRange(*r.unpack(_FILE_LOC))
            elif kind == 2:
                lo, hi, dkey, akey, off, length = r.unpack(_OBJ_LOC)
                loc = ObjectRef(ObjectKey(lo | (hi << 64), dkey, akey), off, length)
            else:
                raise FormatError(f"unknown locator kind {kind}")
            pages.append(PageDescriptor(page_id, cluster_id, column_id, first, n, usize, ssize, loc, crc))
        groups[column_id] = tuple(pages)
    r.done()
    return ClusterDescriptor(cluster_id, first_entry, num_entries, groups)
