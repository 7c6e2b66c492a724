"""Scenario x page-size benchmark sweep under the simulated transport.

Throughputs are uncompressed logical bytes per simulated second, in GB/s
(1e9 B/s). The CSV holds one ``run`` row per (scenario, page size, codec,
repeat) followed by one ``mean`` row per (scenario, page size, codec) with
min/max across repeats.
"""

from __future__ import annotations

import csv
import io
import logging
import shutil
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .codec import Codec
from .errors import ConfigError, ReportError
from .mapping import DEFAULT_BLOCK_SIZE, MappingKind, StoreReader, WriteOptions
from .model import DEFAULT_CLUSTER_ENTRIES, build_pages
from .objstore import CostModel, open_session
from .workload import WorkloadSpec, mix64, analyze, default_histogram, generate, import_dataset

logger = logging.getLogger(__name__)

KIB = 1024
DEFAULT_PAGE_SIZES = tuple(k * KIB for k in (16, 32, 64, 128, 256, 512, 1024))

# published measurements at 64 KiB pages, shown next to simulated speedups
REFERENCE_SPEEDUP = {"write": 9.0, "read": 4.3}


@dataclass(frozen=True)
class Scenario:
    name: str
    label: str
    mapping: MappingKind
    vector_writes: bool
    queue_per_call: bool
    block_size: int | None = None

    def write_options(self) -> WriteOptions:
        return WriteOptions(self.mapping, self.vector_writes, self.block_size)

    def with_block_size(self, block_size: int) -> "Scenario":
        if self.block_size is None:
            return self
        return Scenario(self.name, self.label, self.mapping, self.vector_writes, self.queue_per_call, block_size)


BASELINE = Scenario("baseline", "Baseline", MappingKind.OBJECT_PER_PAGE, False, True)
CURRENT_OBJECT_PER_PAGE = Scenario("current-object-per-page", "Current object-per-page",
                                   MappingKind.OBJECT_PER_PAGE, True, False)
CURRENT_LOCALITY_DRIVEN = Scenario("current-locality-driven", "Current locality-driven",
                                   MappingKind.LOCALITY_DRIVEN, True, False)
TARGET = Scenario("target", "Target", MappingKind.LOCALITY_DRIVEN, True, False, DEFAULT_BLOCK_SIZE)

SCENARIOS = (BASELINE, CURRENT_OBJECT_PER_PAGE, CURRENT_LOCALITY_DRIVEN, TARGET)
_ALIASES = {
    "baseline": BASELINE,
    "current-object-per-page": CURRENT_OBJECT_PER_PAGE,
    "current-opp": CURRENT_OBJECT_PER_PAGE,
    "object-per-page": CURRENT_OBJECT_PER_PAGE,
    "current-locality-driven": CURRENT_LOCALITY_DRIVEN,
    "current-ld": CURRENT_LOCALITY_DRIVEN,
    "locality-driven": CURRENT_LOCALITY_DRIVEN,
    "target": TARGET,
}


def parse_scenario(name: str) -> Scenario:
    key = name.strip().lower().replace(" ", "-").replace("_", "-")
    for s in SCENARIOS:
        if key == s.label.lower().replace(" ", "-"):
            return s
    try:
        return _ALIASES[key]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(s.name for s in SCENARIOS)}") from None


@dataclass
class BenchConfig:
    page_sizes: Sequence[int] = DEFAULT_PAGE_SIZES
    scenarios: Sequence[Scenario] = SCENARIOS
    codecs: Sequence[Codec] = (Codec.NONE,)
    repeats: int = 5
    seed: int = 42
    entries: int = 1_000_000
    columns: int = 26
    read_columns: int = 18
    cluster_entries: int = DEFAULT_CLUSTER_ENTRIES
    target_block_size: int = DEFAULT_BLOCK_SIZE
    cost_model: CostModel = field(default_factory=CostModel)
    jitter: bool = False
    zstd_level: int = 3
    workdir: str | None = None

    def validate(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.page_sizes or not self.scenarios or not self.codecs:
            raise ConfigError("page sizes, scenarios and codecs must be non-empty")
        for ps in self.page_sizes:
            if ps < 8:
                raise ConfigError(f"page size {ps} B is smaller than one float64 element")
        WorkloadSpec(self.entries, self.columns, self.read_columns, self.seed)


@dataclass
class BenchRecord:
    scenario: str
    page_size: int
    codec: str
    repeat_index: int
    write_gbps_sim: float
    read_gbps_sim: float
    store_calls_write: int
    store_calls_read: int


def _gbps(nbytes: int, seconds: float | None) -> float:
    return nbytes / seconds / 1e9 if seconds else 0.0


def run_scenario(paged, scenario: Scenario, store_dir: Path, config: BenchConfig, run_seed: int) -> BenchRecord:
    shutil.rmtree(store_dir, ignore_errors=True)
    common = dict(queue_per_call=scenario.queue_per_call, jitter=config.jitter)
    with open_session(store_dir, config.cost_model, seed=mix64(run_seed), **common) as session:
        imp = import_dataset(paged, session, scenario.write_options())
    with open_session(store_dir, config.cost_model, seed=mix64(run_seed + 1), require_complete=True,
                      **common) as session:
        hist, rep = analyze(StoreReader(session), config.read_columns, default_histogram(config.read_columns))
    shutil.rmtree(store_dir, ignore_errors=True)
    if hist.entries != paged.num_entries:
        raise AssertionError("histogram lost entries")
    return BenchRecord(scenario.label, 0, paged.codec.label, 0, _gbps(imp.bytes_written, imp.simulated_seconds),
                       _gbps(rep.bytes_read, rep.simulated_seconds), imp.data_calls, rep.data_calls)


def run_sweep(config: BenchConfig) -> list[BenchRecord]:
    config.validate()
    dataset = generate(WorkloadSpec(config.entries, config.columns, config.read_columns, config.seed))
    scenarios = [s.with_block_size(config.target_block_size) for s in config.scenarios]
    records = []
    tmp = tempfile.mkdtemp(prefix="colstore-bench-", dir=config.workdir)
    try:
        for codec in config.codecs:
            for page_size in config.page_sizes:
                paged = build_pages(dataset, page_size, cluster_entries=config.cluster_entries,
                                    codec=codec, level=config.zstd_level)
                for si, scenario in enumerate(scenarios):
                    for rep in range(config.repeats):
                        run_seed = mix64(config.seed ^ (si << 48) ^ (page_size << 8) ^ (int(codec) << 4)) + 2 * rep
                        rec = run_scenario(paged, scenario, Path(tmp) / "store", config, run_seed)
                        rec.page_size, rec.repeat_index = page_size, rep
                        logger.info("%s page=%d codec=%s rep=%d write=%.3f read=%.3f GB/s", rec.scenario,
                                    page_size, rec.codec, rep, rec.write_gbps_sim, rec.read_gbps_sim)
                        records.append(rec)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    order = {s.label: i for i, s in enumerate(scenarios)}
    records.sort(key=lambda r: (order[r.scenario], r.page_size, r.codec, r.repeat_index))
    return records


CSV_COLUMNS = [
    "row_type", "scenario", "page_size", "codec", "repeat_index",
    "write_gbps_sim", "read_gbps_sim", "store_calls_write", "store_calls_read",
    "write_gbps_min", "write_gbps_max", "read_gbps_min", "read_gbps_max",
]


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _calls(values: list[int]):
    return values[0] if len(set(values)) == 1 else _fmt(statistics.fmean(values))


def records_to_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        w.writerow(["run", r.scenario, r.page_size, r.codec, r.repeat_index, _fmt(r.write_gbps_sim),
                    _fmt(r.read_gbps_sim), r.store_calls_write, r.store_calls_read, "", "", "", ""])
        groups.setdefault((r.scenario, r.page_size, r.codec), []).append(r)
    for (scenario, page_size, codec), rs in groups.items():
        wr = [r.write_gbps_sim for r in rs]
        rd = [r.read_gbps_sim for r in rs]
        w.writerow(["mean", scenario, page_size, codec, "", _fmt(statistics.fmean(wr)), _fmt(statistics.fmean(rd)),
                    _calls([r.store_calls_write for r in rs]), _calls([r.store_calls_read for r in rs]),
                    _fmt(min(wr)), _fmt(max(wr)), _fmt(min(rd)), _fmt(max(rd))])
    return buf.getvalue()


def read_mean_rows(csv_text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    if rows and "row_type" not in rows[0]:
        raise ReportError("not a benchmark CSV (no row_type column)")
    return [r for r in rows if r["row_type"] == "mean"]


@dataclass
class Speedup:
    codec: str
    page_size: int
    baseline_write: float
    target_write: float
    baseline_read: float
    target_read: float

    @property
    def write_speedup(self) -> float:
        return self.target_write / self.baseline_write

    @property
    def read_speedup(self) -> float:
        return self.target_read / self.baseline_read


def report_compare(csv_text: str, page_size: int = 64 * KIB, baseline: str = "Baseline",
                   target: str = "Target") -> list[Speedup]:
    """Target/Baseline write and read speedups at ``page_size``, one entry per codec."""
    base_label = parse_scenario(baseline).label
    target_label = parse_scenario(target).label
    means = {}
    for r in read_mean_rows(csv_text):
        means[(r["scenario"], int(r["page_size"]), r["codec"])] = r
    codecs = sorted({c for (_, ps, c) in means if ps == page_size})
    out = []
    for codec in codecs:
        b = means.get((base_label, page_size, codec))
        t = means.get((target_label, page_size, codec))
        if b is None or t is None:
            continue
        out.append(Speedup(codec, page_size, float(b["write_gbps_sim"]), float(t["write_gbps_sim"]),
                           float(b["read_gbps_sim"]), float(t["read_gbps_sim"])))
    if not out:
        raise ReportError(f"no {base_label} and {target_label} mean rows at page size {page_size} B")
    for s in out:
        if min(s.baseline_write, s.baseline_read) <= 0:
            raise ReportError(f"{base_label} throughput is zero; speedup undefined")
    return out


def format_report(speedups: Sequence[Speedup]) -> str:
    lines = [f"{'codec':<6} {'page':>8} {'write x':>9} {'read x':>9}"]
    for s in speedups:
        lines.append(f"{s.codec:<6} {s.page_size // KIB:>5}KiB {s.write_speedup:>9.2f} {s.read_speedup:>9.2f}")
    lines.append(f"reference measurement at 64KiB: write {REFERENCE_SPEEDUP['write']}x, "
                 f"read {REFERENCE_SPEEDUP['read']}x (hardware-bound, not asserted)")
    return "\n".join(lines)
