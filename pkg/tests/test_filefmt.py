import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colstore.codec import Codec
from colstore.encoding import decode_cluster, decode_schema, encode_cluster, encode_schema
from colstore.errors import FormatError, IntegrityError
from colstore.filefmt import MAGIC, FileReader, read_file_backend, write_file_backend
from colstore.model import Dataset, FileRange, ObjectRef, Schema, build_pages, decompose_schema
from colstore.objstore import ObjectKey

from .conftest import random_dataset

EVENT_SCHEMA = Schema.of(
    ("fId", "int32"),
    ("fPtcls.fE", "var-list", "float32"),
    ("fPtcls.fIds", "var-list", "int32"),
)


def event_dataset():
    return Dataset.from_fields(EVENT_SCHEMA, {
        "fId": [1, 2, 3],
        "fPtcls.fE": [[0.5, 1.5], [], [2.5]],
        "fPtcls.fIds": [[10, 11], [], [12]],
    })


def test_nested_record_flattens_to_five_columns():
    cols = decompose_schema(EVENT_SCHEMA)
    assert [c.element_type for c in cols] == ["int32", "index", "float32", "index", "int32"]
    ds = event_dataset()
    assert ds.columns[1].tolist() == [2, 2, 3]


@pytest.mark.parametrize("codec", list(Codec))
def test_nested_round_trip(tmp_path, codec):
    ds = event_dataset()
    write_file_backend(build_pages(ds, 8, cluster_entries=2, codec=codec), tmp_path / "ev.cstr")
    back = read_file_backend(tmp_path / "ev.cstr")
    assert back.codec is codec
    assert back.to_dataset().same_content(ds)


def test_empty_dataset(tmp_path):
    ds = Dataset(Schema.of(("a", "float64")), 0, [np.empty(0)])
    write_file_backend(build_pages(ds, 64), tmp_path / "e.cstr")
    with FileReader(tmp_path / "e.cstr") as r:
        assert r.num_entries == 0 and r.clusters == []
        assert r.to_dataset().same_content(ds)


def test_file_starts_and_ends_with_magic(tmp_path):
    write_file_backend(build_pages(event_dataset(), 64), tmp_path / "f")
    raw = (tmp_path / "f").read_bytes()
    assert raw[:5] == MAGIC and raw[-5:] == MAGIC
    assert struct.unpack_from("<H", raw, 5)[0] == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), page=st.sampled_from([8, 100, 4096]), codec=st.sampled_from(list(Codec)))
def test_random_round_trip(tmp_path_factory, seed, page, codec):
    ds = random_dataset(seed)
    path = tmp_path_factory.mktemp("f") / "d.cstr"
    located = write_file_backend(build_pages(ds, page, cluster_entries=500, codec=codec), path)
    with FileReader(path) as r:
        assert r.clusters == located
        assert r.to_dataset().same_content(ds)
        assert r.data_calls == sum(len(c.pages()) for c in located)


def test_only_requested_pages_are_read(tmp_path):
    ds = random_dataset(3, max_entries=2000)
    write_file_backend(build_pages(ds, 64, cluster_entries=1000), tmp_path / "d")
    with FileReader(tmp_path / "d") as r:
        pages = r.clusters[0].pages([0])
        r.read_pages(pages)
        assert r.data_calls == len(pages)


def _written(tmp_path):
    path = tmp_path / "d.cstr"
    write_file_backend(build_pages(event_dataset(), 8, cluster_entries=2), path)
    return path, bytearray(path.read_bytes())


def test_bad_magic(tmp_path):
    path, raw = _written(tmp_path)
    raw[0:5] = b"XXXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        FileReader(path)


def test_footer_crc(tmp_path):
    path, raw = _written(tmp_path)
    raw[-20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        FileReader(path)


def test_truncated_file(tmp_path):
    path, raw = _written(tmp_path)
    path.write_bytes(bytes(raw[:10]))
    with pytest.raises(FormatError):
        FileReader(path)
    with pytest.raises(FormatError):
        FileReader(tmp_path / "missing")


def test_page_crc(tmp_path):
    path, _ = _written(tmp_path)
    with FileReader(path) as r:
        first = r.clusters[0].pages()[0].locator.offset
    raw = bytearray(path.read_bytes())
    raw[first] ^= 0xFF
    path.write_bytes(bytes(raw))
    with FileReader(path) as r:
        with pytest.raises(IntegrityError):
            r.to_dataset()


def test_schema_encoding_round_trip():
    blob = encode_schema(EVENT_SCHEMA, Codec.ZSTD)
    assert decode_schema(blob) == (EVENT_SCHEMA, Codec.ZSTD)
    with pytest.raises(FormatError):
        decode_schema(blob[:-1])
    with pytest.raises(FormatError):
        decode_schema(blob + b"\0")


def test_cluster_encoding_round_trip():
    paged = build_pages(event_dataset(), 8, cluster_entries=2)
    cluster = paged.clusters[0]
    pages = cluster.pages()
    located = cluster.replace_pages(
        [p.with_locator(FileRange(100 + i, p.stored_size)) if i % 2 else
         p.with_locator(ObjectRef(ObjectKey(2**100, 3, p.page_id), 7, p.stored_size)) for i, p in enumerate(pages)]
    )
    for c in (cluster, located):
        assert decode_cluster(encode_cluster(c)) == c
