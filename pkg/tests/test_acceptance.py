"""Acceptance suite: one test per criterion, summarised as PASS/FAIL lines at the end of the run."""

import csv
import io
import itertools
import random
import time
import zlib

import numpy as np
import pytest

from colstore import cli
from colstore.bench import KIB, BenchConfig, SCENARIOS, records_to_csv, report_compare, run_sweep
from colstore.codec import Codec
from colstore.filefmt import FileReader, write_file_backend
from colstore.mapping import (
    MappingKind,
    StoreReader,
    WriteOptions,
    commit_cluster,
    map_locality_driven,
    map_object_per_page,
    pack_blocks,
    write_dataset,
)
from colstore.model import Dataset, PageDescriptor, Schema, build_pages
from colstore.objstore import META_OID, open_session
from colstore.workload import WorkloadSpec, analyze, default_histogram, generate, histogram_from_dataset

from .conftest import random_dataset

LD = MappingKind.LOCALITY_DRIVEN
OPP = MappingKind.OBJECT_PER_PAGE


@pytest.mark.criterion(1, "round-trip integrity over 50 randomized datasets")
def test_round_trip_integrity(tmp_path):
    start = time.perf_counter()
    rng = random.Random(2024)
    combos = list(itertools.product([4 * KIB, 64 * KIB, 1024 * KIB], list(Codec), [None, 1 << 20]))
    for i in range(50):
        page, codec, block = combos[i % len(combos)]
        ds = random_dataset(rng.getrandbits(32), max_entries=100_000, max_fields=6, max_list=3)
        paged = build_pages(ds, page, cluster_entries=rng.choice([1_000, 20_000, 100_000]), codec=codec)

        path = tmp_path / f"d{i}.cstr"
        write_file_backend(paged, path)
        with FileReader(path) as r:
            assert r.to_dataset().same_content(ds), f"file backend, case {i}"

        store = tmp_path / f"s{i}"
        mapping = rng.choice([OPP, LD])
        with open_session(store) as s:
            write_dataset(s, paged, WriteOptions(mapping, rng.random() < 0.5, block))
        with open_session(store, require_complete=True) as s:
            assert StoreReader(s).to_dataset().same_content(ds), f"object store, case {i}"
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(2, "mapping injectivity and locality laws")
def test_mapping_laws():
    start = time.perf_counter()
    triples = [(c, k, c * 10_000 + k * 1000 + p) for c in range(10) for k in range(10) for p in range(1000)]
    ld = [map_locality_driven(*t) for t in triples]
    opp = [map_object_per_page(*t) for t in triples]
    assert len(set(ld)) == len(triples)
    assert len(set(opp)) == len(triples)

    # same <oid, dkey>  <=>  same page group
    groups: dict[tuple, set] = {}
    for (c, k, _), key in zip(triples, ld):
        groups.setdefault((key.oid, key.dkey), set()).add((c, k))
    assert all(len(g) == 1 for g in groups.values())
    assert len(groups) == 100

    # object-per-page co-locates nothing
    assert len({(key.oid, key.dkey) for key in opp}) == len(triples)
    assert time.perf_counter() - start < 5


def _grid_dataset():
    """10 clusters x 26 columns x 4 pages per group."""
    spec = WorkloadSpec(10 * 4096, 26, 18, seed=9)
    paged = build_pages(generate(spec), 8 * KIB, cluster_entries=4096)
    assert len(paged.clusters) == 10
    assert all(len(g) == 4 for c in paged.clusters for g in c.page_groups.values())
    return paged


@pytest.mark.criterion(3, "call-count law")
def test_call_count_law(tmp_path):
    paged = _grid_dataset()
    with open_session(tmp_path / "ld") as s:
        assert write_dataset(s, paged, WriteOptions(LD, True)).data_calls == 260
    with open_session(tmp_path / "opp") as s:
        assert write_dataset(s, paged, WriteOptions(OPP, True)).data_calls == 1040
    with open_session(tmp_path / "ld", require_complete=True) as s:
        reader = StoreReader(s)
        before = s.ops_issued
        analyze(reader, 18, default_histogram(18))
        assert s.ops_issued - before == 180
        assert reader.data_calls == 180


def _oracle_pack(sizes, target):
    """Brute force: cut wherever the running total would pass the target."""
    blocks, cur = [], []
    for i, size in enumerate(sizes):
        if cur and sum(sizes[j] for j in cur) + size > target:
            blocks.append(cur)
            cur = []
        cur.append(i)
    if cur:
        blocks.append(cur)
    return blocks


def _group(sizes):
    pages, first = [], 0
    for i, size in enumerate(sizes):
        pages.append(PageDescriptor(i, 0, 0, first, 1, size, size))
        first += 1
    return pages


@pytest.mark.criterion(4, "splicing law")
def test_splicing_law(tmp_path):
    blocks = pack_blocks(_group([64 * KIB] * 20), 1 << 20)
    assert [len(b.member_pages) for b in blocks] == [16, 4]

    rng = random.Random(77)
    for _ in range(1000):
        sizes = [rng.choice([rng.randint(1, 4096), rng.randint(1, 300_000)]) for _ in range(rng.randint(1, 40))]
        target = rng.choice([1024, 64 * KIB, 1 << 20])
        payloads = [rng.randbytes(s) if s < 64 else bytes([s % 251]) * s for s in sizes]
        blocks = pack_blocks(_group(sizes), target)
        assert [list(b.member_pages) for b in blocks] == _oracle_pack(sizes, target)
        assert sum(b.total_size for b in blocks) == sum(sizes)
        for b in blocks:
            value = b"".join(payloads[pid] for pid in b.member_pages)
            assert len(value) == b.total_size
            for pid, off in zip(b.member_pages, b.member_offsets):
                assert value[off:off + sizes[pid]] == payloads[pid]

    # the same law end to end through the store
    ds = Dataset(Schema.of(("x", "float64")), 20 * 8192, [np.arange(20 * 8192, dtype="<f8")])
    paged = build_pages(ds, 64 * KIB, cluster_entries=20 * 8192)
    with open_session(tmp_path / "s") as s:
        write_dataset(s, paged, WriteOptions(LD, True, 1 << 20))
        values = [v for k, v in s.snapshot().items() if k.oid != META_OID]
        assert sorted(len(v) for v in values) == [4 * 64 * KIB, 16 * 64 * KIB]
        assert StoreReader(s).to_dataset().same_content(ds)


@pytest.mark.criterion(5, "vector-write equivalence")
def test_vector_write_equivalence(tmp_path):
    rng = random.Random(5)
    for i in range(20):
        ds = random_dataset(rng.getrandbits(32), max_entries=3000)
        paged = build_pages(ds, rng.choice([64, 512, 4096]), cluster_entries=10**6,
                            codec=rng.choice(list(Codec)))
        if not paged.clusters:
            continue
        cluster = paged.clusters[0]
        payloads = [paged.payloads[p.page_id] for p in cluster.pages()]
        mapping = rng.choice([OPP, LD])
        states = []
        for vector in (False, True):
            with open_session(tmp_path / f"{i}-{vector}") as s:
                commit_cluster(s, cluster, payloads, WriteOptions(mapping, vector))
                states.append(s.snapshot())
        assert states[0] == states[1]
        assert len(states[0]) == len(payloads)


@pytest.fixture(scope="session")
def full_sweep():
    start = time.perf_counter()
    records = run_sweep(BenchConfig(repeats=1, entries=1_000_000))
    return records_to_csv(records), time.perf_counter() - start


def _means(csv_text):
    out = {}
    for r in csv.DictReader(io.StringIO(csv_text)):
        if r["row_type"] == "mean":
            out[(r["scenario"], int(r["page_size"]))] = (float(r["write_gbps_sim"]), float(r["read_gbps_sim"]))
    return out


@pytest.mark.slow
@pytest.mark.criterion(6, "scenario ordering and flat Target series")
def test_scenario_ordering(full_sweep):
    csv_text, elapsed = full_sweep
    assert elapsed < 300
    means = _means(csv_text)
    sizes = sorted({ps for _, ps in means})
    assert sizes == [k * KIB for k in (16, 32, 64, 128, 256, 512, 1024)]
    labels = [s.label for s in reversed(SCENARIOS)]  # Target first
    for ps in sizes:
        if ps > 256 * KIB:
            continue
        for direction in (0, 1):
            series = [means[(label, ps)][direction] for label in labels]
            assert all(a >= b for a, b in zip(series, series[1:])), (ps, direction, series)
    for direction in (0, 1):
        target = [means[("Target", ps)][direction] for ps in sizes]
        assert (max(target) - min(target)) / max(target) <= 0.05, target


@pytest.mark.slow
@pytest.mark.criterion(7, "Target/Baseline speedup at 64 KiB")
def test_speedup_magnitude(full_sweep):
    (speedup,) = report_compare(full_sweep[0], 64 * KIB)
    assert speedup.write_speedup >= 4
    assert speedup.read_speedup >= 3


@pytest.mark.criterion(8, "analysis correctness across backend/option combinations")
def test_analysis_correctness(tmp_path):
    spec = WorkloadSpec(30_000, 26, 18, seed=11)
    ds = generate(spec)
    oracle = histogram_from_dataset(ds, 18, default_histogram(18))
    read_ids = set(range(18))
    combos = list(itertools.product([OPP, LD], [False, True], [None, 256 * KIB], list(Codec)))
    assert len(combos) == 16
    for n, (mapping, vector, block, codec) in enumerate(combos):
        paged = build_pages(ds, 16 * KIB, cluster_entries=10_000, codec=codec)
        store = tmp_path / f"s{n}"
        with open_session(store) as s:
            write_dataset(s, paged, WriteOptions(mapping, vector, block))
        with open_session(store, require_complete=True) as s:
            reader = StoreReader(s)
            owner = {p.locator.key.oid if mapping is OPP else (p.locator.key.oid, p.locator.key.dkey): p.column_id
                     for c in reader.clusters for p in c.pages()}
            start = len(s.trace)
            hist, _ = analyze(reader, 18, default_histogram(18))
            assert hist == oracle, (mapping, vector, block, codec)
            fetched = [r.oid if mapping is OPP else (r.oid, r.dkey) for ev in s.trace[start:] for r in ev.calls]
            assert {owner[f] for f in fetched} == read_ids

    path = tmp_path / "flat.cstr"
    write_file_backend(build_pages(ds, 16 * KIB, codec=Codec.ZSTD), path)
    with FileReader(path) as r:
        assert analyze(r, 18, default_histogram(18))[0] == oracle


@pytest.mark.criterion(9, "bench CSV is byte-identical across runs")
def test_determinism(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        argv = ["bench", "--entries", "20000", "--repeats", "2", "--seed", "42",
                "--page-size", "16KiB,64KiB,256KiB", "--codec", "none,zstd", "--out", str(out)]
        assert cli.main(argv) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert zlib.crc32(outs[0]) == zlib.crc32(outs[1])
    rows = list(csv.DictReader(io.StringIO(outs[0].decode())))
    assert sum(r["row_type"] == "run" for r in rows) == 4 * 3 * 2 * 2
