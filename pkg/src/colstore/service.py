"""HTTP service over the engine.

Every endpoint is a thin wrapper around a plain function taking and returning
pydantic models, so the CLI can call the same functions in-process or go over
HTTP to a running server. Errors come back as ``{"error", "detail",
"exit_code"}`` with status 400 (usage), 422 (data/format) or 409 (store).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Literal, Optional, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .bench import DEFAULT_PAGE_SIZES, KIB, REFERENCE_SPEEDUP, BenchConfig, format_report, parse_scenario
from .bench import records_to_csv, report_compare, run_sweep
from .codec import Codec
from .errors import ColstoreError, ConfigError
from .filefmt import FileReader
from .mapping import DEFAULT_BLOCK_SIZE, MappingKind, StoreReader, WriteOptions
from .model import DEFAULT_CLUSTER_ENTRIES, build_pages
from .objstore import CostModel, open_session
from .workload import Histogram, WorkloadSpec, analyze, generate, import_dataset, is_store

CodecName = Literal["none", "zstd"]
MappingName = Literal["object-per-page", "locality-driven"]


class WorkloadParams(BaseModel):
    entries: int = Field(1_000_000, ge=0)
    columns: int = Field(26, ge=1)
    read_columns: int = Field(18, ge=1)
    page_size: int = Field(64 * KIB, ge=1)
    cluster_entries: int = Field(DEFAULT_CLUSTER_ENTRIES, ge=1)
    codec: CodecName = "none"
    zstd_level: int = 3
    seed: int = Field(42, ge=0, lt=2**64)


class GenerateRequest(WorkloadParams):
    out: str


class GenerateResponse(BaseModel):
    path: str
    entries: int
    columns: int
    clusters: int
    pages: int
    uncompressed_bytes: int
    stored_bytes: int


class TransportParams(BaseModel):
    cost_model: Optional[str] = Field(None, description="key=value overrides, comma separated")
    jitter: bool = False
    seed: int = Field(0, ge=0, lt=2**64)


class ImportRequest(TransportParams):
    store: str
    source: Optional[str] = Field(None, description="flat dataset file; generated from `workload` when omitted")
    workload: WorkloadParams = Field(default_factory=WorkloadParams)
    scenario: Optional[str] = None
    mapping: Optional[MappingName] = None
    vector_writes: Optional[bool] = None
    target_block_size: Optional[int] = Field(None, ge=0, description="0 disables splicing")


class ImportResponse(BaseModel):
    store: str
    mapping: MappingName
    vector_writes: bool
    target_block_size: Optional[int]
    queue_per_call: bool
    bytes_written: int
    stored_bytes: int
    pages: int
    clusters: int
    store_calls: int
    simulated_seconds: Optional[float]
    write_throughput: Optional[float]


class HistogramSpec(BaseModel):
    bins: int = Field(100, ge=1)
    lo: float = 0.0
    hi: Optional[float] = Field(None, description="defaults to sqrt(read_columns)")


class AnalyzeRequest(TransportParams):
    source: str = Field(..., description="store directory or flat dataset file")
    read_columns: int = Field(18, ge=1)
    histogram: HistogramSpec = Field(default_factory=HistogramSpec)
    scenario: Optional[str] = Field(None, description="only the queue behaviour of the scenario applies")


class HistogramBody(BaseModel):
    num_bins: int
    lo: float
    hi: float
    counts: list[int]
    underflow: int
    overflow: int


class AnalyzeResponse(BaseModel):
    histogram: HistogramBody
    histogram_csv: str
    entries: int
    bytes_read: int
    stored_bytes_read: int
    store_calls: int
    simulated_seconds: Optional[float]
    read_throughput: Optional[float]


class BenchRequest(BaseModel):
    page_sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_PAGE_SIZES))
    scenarios: list[str] = Field(default_factory=lambda: ["baseline", "current-object-per-page",
                                                          "current-locality-driven", "target"])
    codecs: list[CodecName] = Field(default_factory=lambda: ["none"])
    repeats: int = Field(5, ge=1)
    seed: int = Field(42, ge=0, lt=2**64)
    entries: int = Field(1_000_000, ge=0)
    columns: int = Field(26, ge=1)
    read_columns: int = Field(18, ge=1)
    cluster_entries: int = Field(DEFAULT_CLUSTER_ENTRIES, ge=1)
    target_block_size: int = Field(DEFAULT_BLOCK_SIZE, ge=1)
    cost_model: Optional[str] = None
    jitter: bool = False
    zstd_level: int = 3


class BenchResponse(BaseModel):
    csv: str
    runs: int


class ReportRequest(BaseModel):
    csv: str
    page_size: int = 64 * KIB
    baseline: str = "baseline"
    target: str = "target"


class SpeedupRow(BaseModel):
    codec: str
    page_size: int
    baseline_write_gbps: float
    target_write_gbps: float
    write_speedup: float
    baseline_read_gbps: float
    target_read_gbps: float
    read_speedup: float


class ReportResponse(BaseModel):
    rows: list[SpeedupRow]
    reference: dict[str, float]
    table: str


def do_generate(req: GenerateRequest) -> GenerateResponse:
    spec = WorkloadSpec(req.entries, req.columns, min(req.read_columns, req.columns), req.seed)
    paged = build_pages(generate(spec), req.page_size, cluster_entries=req.cluster_entries,
                        codec=Codec.parse(req.codec), level=req.zstd_level)
    report = import_dataset(paged, req.out)
    return GenerateResponse(path=str(Path(req.out).resolve()), entries=paged.num_entries, columns=req.columns,
                            clusters=report.clusters, pages=report.pages, uncompressed_bytes=report.bytes_written,
                            stored_bytes=report.stored_bytes)


def _write_setup(req: ImportRequest) -> tuple[WriteOptions, bool]:
    if req.scenario:
        scenario = parse_scenario(req.scenario)
        opts, per_call = scenario.write_options(), scenario.queue_per_call
    else:
        opts, per_call = WriteOptions(), False
    block = opts.target_block_size
    if req.target_block_size is not None:
        block = req.target_block_size or None
    opts = WriteOptions(
        MappingKind.parse(req.mapping) if req.mapping else opts.mapping,
        opts.vector_writes if req.vector_writes is None else req.vector_writes,
        block,
    )
    return opts, per_call


def do_import(req: ImportRequest) -> ImportResponse:
    opts, per_call = _write_setup(req)
    cost = CostModel.parse(req.cost_model)
    if req.source:
        with FileReader(req.source) as reader:
            paged = reader.to_paged()
    else:
        w = req.workload
        spec = WorkloadSpec(w.entries, w.columns, min(w.read_columns, w.columns), w.seed)
        paged = build_pages(generate(spec), w.page_size, cluster_entries=w.cluster_entries,
                            codec=Codec.parse(w.codec), level=w.zstd_level)
    with open_session(req.store, cost, queue_per_call=per_call, jitter=req.jitter, seed=req.seed) as session:
        report = import_dataset(paged, session, opts)
    return ImportResponse(
        store=str(Path(req.store).resolve()), mapping=opts.mapping.value, vector_writes=opts.vector_writes,
        target_block_size=opts.target_block_size, queue_per_call=per_call, bytes_written=report.bytes_written,
        stored_bytes=report.stored_bytes, pages=report.pages, clusters=report.clusters,
        store_calls=report.data_calls, simulated_seconds=report.simulated_seconds,
        write_throughput=report.write_throughput,
    )


@contextmanager
def open_reader(source: str, cost: CostModel | None = None, *, queue_per_call: bool = False,
                jitter: bool = False, seed: int = 0) -> Iterator[Union[StoreReader, FileReader]]:
    """Reader over a store directory or a flat file."""
    if is_store(source):
        with open_session(source, cost, queue_per_call=queue_per_call, jitter=jitter, seed=seed,
                          require_complete=True) as session:
            yield StoreReader(session)
    else:
        with FileReader(source) as reader:
            yield reader


def do_analyze(req: AnalyzeRequest) -> AnalyzeResponse:
    per_call = parse_scenario(req.scenario).queue_per_call if req.scenario else False
    h = req.histogram
    hist = Histogram(h.bins, h.lo, h.hi if h.hi is not None else math.sqrt(req.read_columns))
    with open_reader(req.source, CostModel.parse(req.cost_model), queue_per_call=per_call,
                     jitter=req.jitter, seed=req.seed) as reader:
        hist, report = analyze(reader, req.read_columns, hist)
    return AnalyzeResponse(
        histogram=HistogramBody(num_bins=hist.num_bins, lo=hist.lo, hi=hist.hi, counts=hist.counts,
                                underflow=hist.underflow, overflow=hist.overflow),
        histogram_csv=hist.to_csv(), entries=report.entries, bytes_read=report.bytes_read,
        stored_bytes_read=report.stored_bytes_read, store_calls=report.data_calls,
        simulated_seconds=report.simulated_seconds, read_throughput=report.read_throughput,
    )


def bench_config(req: BenchRequest) -> BenchConfig:
    return BenchConfig(
        page_sizes=tuple(req.page_sizes), scenarios=tuple(parse_scenario(s) for s in req.scenarios),
        codecs=tuple(Codec.parse(c) for c in req.codecs), repeats=req.repeats, seed=req.seed,
        entries=req.entries, columns=req.columns, read_columns=req.read_columns,
        cluster_entries=req.cluster_entries, target_block_size=req.target_block_size,
        cost_model=CostModel.parse(req.cost_model), jitter=req.jitter, zstd_level=req.zstd_level,
    )


def do_bench(req: BenchRequest) -> BenchResponse:
    records = run_sweep(bench_config(req))
    return BenchResponse(csv=records_to_csv(records), runs=len(records))


def do_report(req: ReportRequest) -> ReportResponse:
    speedups = report_compare(req.csv, req.page_size, req.baseline, req.target)
    rows = [SpeedupRow(codec=s.codec, page_size=s.page_size, baseline_write_gbps=s.baseline_write,
                       target_write_gbps=s.target_write, write_speedup=s.write_speedup,
                       baseline_read_gbps=s.baseline_read, target_read_gbps=s.target_read,
                       read_speedup=s.read_speedup) for s in speedups]
    return ReportResponse(rows=rows, reference=dict(REFERENCE_SPEEDUP), table=format_report(speedups))


# command -> (response model, handler)
HANDLERS = {
    "generate": (GenerateResponse, do_generate),
    "import": (ImportResponse, do_import),
    "analyze": (AnalyzeResponse, do_analyze),
    "bench": (BenchResponse, do_bench),
    "report": (ReportResponse, do_report),
}

_STATUS = {1: 400, 2: 422, 3: 409}

app = FastAPI(title="colstore", version=__version__)


@app.exception_handler(ColstoreError)
async def _colstore_error(request: Request, exc: ColstoreError) -> JSONResponse:
    return JSONResponse(status_code=_STATUS.get(exc.exit_code, 500),
                        content={"error": type(exc).__name__, "detail": str(exc), "exit_code": exc.exit_code})


@app.exception_handler(RequestValidationError)
async def _validation_error(request: Request, exc: RequestValidationError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": ConfigError.__name__, "detail": str(exc.errors()),
                                                  "exit_code": 1})


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/generate", response_model=GenerateResponse)
def generate_endpoint(req: GenerateRequest):
    return do_generate(req)


@app.post("/import", response_model=ImportResponse)
def import_endpoint(req: ImportRequest):
    return do_import(req)


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze_endpoint(req: AnalyzeRequest):
    return do_analyze(req)


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest):
    return do_bench(req)


@app.post("/report", response_model=ReportResponse)
def report_endpoint(req: ReportRequest):
    return do_report(req)
