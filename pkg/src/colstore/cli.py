"""Command-line client.

Each subcommand builds a service request and either calls the handler
in-process or, with ``--server URL`` (or ``COLSTORE_SERVER``), posts it to a
running ``colstore serve``. Paths are resolved where the handler runs.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 store error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

from pydantic import BaseModel, ValidationError

from . import service
from .errors import ColstoreError, ConfigError

_SIZE = re.compile(r"^\s*(\d+)\s*(b|k|kb|kib|m|mb|mib|g|gb|gib)?\s*$", re.IGNORECASE)
_UNITS = {None: 1, "b": 1, "k": 1 << 10, "kb": 1 << 10, "kib": 1 << 10,
          "m": 1 << 20, "mb": 1 << 20, "mib": 1 << 20, "g": 1 << 30, "gb": 1 << 30, "gib": 1 << 30}


def parse_size(text: str) -> int:
    """``65536``, ``64KiB``, ``64k``, ``1MiB``; binary units throughout."""
    m = _SIZE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}")
    unit = m.group(2).lower() if m.group(2) else None
    return int(m.group(1)) * _UNITS[unit]


def parse_size_list(text: str) -> list[int]:
    return [parse_size(t) for t in text.split(",") if t.strip()]


def on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "yes", "1"):
        return True
    if text.lower() in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class RemoteError(Exception):
    def __init__(self, detail: str, exit_code: int):
        super().__init__(detail)
        self.exit_code = exit_code


def call(command: str, body: BaseModel, server: str | None) -> BaseModel:
    response_type, handler = service.HANDLERS[command]
    if not server:
        return handler(body)
    import httpx

    try:
        r = httpx.post(f"{server.rstrip('/')}/{command}", json=body.model_dump(), timeout=None)
    except httpx.HTTPError as exc:
        raise RemoteError(f"cannot reach {server}: {exc}", 3) from exc
    if r.status_code >= 400:
        try:
            payload = r.json()
        except ValueError:
            payload = {}
        raise RemoteError(payload.get("detail", r.text), int(payload.get("exit_code", 3)))
    return response_type.model_validate(r.json())


def _workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--entries", type=int, default=1_000_000)
    p.add_argument("--columns", type=int, default=26)
    p.add_argument("--read-columns", type=int, default=18)
    p.add_argument("--page-size", type=parse_size, default=64 << 10)
    p.add_argument("--cluster-entries", type=int, default=100_000)
    p.add_argument("--codec", choices=["none", "zstd"], default="none")
    p.add_argument("--zstd-level", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)


def _transport_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cost-model", default=None, metavar="KEY=VALUE,...")
    p.add_argument("--jitter", type=on_off, default=False, metavar="{on|off}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="colstore", description=__doc__.splitlines()[0])
    parser.add_argument("--server", default=os.environ.get("COLSTORE_SERVER"),
                        help="URL of a running `colstore serve`; default runs in-process")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a synthetic dataset into a flat file")
    _workload_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("import", help="import a dataset into an object store")
    p.add_argument("source", nargs="?", help="flat dataset file; generated when omitted")
    p.add_argument("--store", required=True)
    _workload_args(p)
    p.add_argument("--scenario")
    p.add_argument("--mapping", choices=["object-per-page", "locality-driven"])
    p.add_argument("--vector-writes", type=on_off, metavar="{on|off}")
    p.add_argument("--target-block-size", type=parse_size, help="0 disables splicing")
    _transport_args(p)

    p = sub.add_parser("analyze", help="histogram analysis over a store or flat file")
    p.add_argument("source", nargs="?", help="flat dataset file or store directory")
    p.add_argument("--store")
    p.add_argument("--read-columns", type=int, default=18)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float)
    p.add_argument("--scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="histogram CSV; printed to stdout when omitted")
    _transport_args(p)

    p = sub.add_parser("bench", help="scenario x page-size sweep, CSV output")
    p.add_argument("--page-size", type=parse_size_list, default=None, help="comma-separated sizes")
    p.add_argument("--scenario", default=None, help="comma-separated scenarios")
    p.add_argument("--codec", default="none", help="comma-separated: none,zstd")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--entries", type=int, default=1_000_000)
    p.add_argument("--columns", type=int, default=26)
    p.add_argument("--read-columns", type=int, default=18)
    p.add_argument("--cluster-entries", type=int, default=100_000)
    p.add_argument("--target-block-size", type=parse_size, default=1 << 20)
    p.add_argument("--zstd-level", type=int, default=3)
    p.add_argument("--out", help="CSV path; printed to stdout when omitted")
    _transport_args(p)

    p = sub.add_parser("report", help="Target/Baseline speedups from a bench CSV")
    p.add_argument("csv")
    p.add_argument("--page-size", type=parse_size, default=64 << 10)
    p.add_argument("--baseline", default="baseline")
    p.add_argument("--target", default="target")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _workload(a) -> dict:
    return dict(entries=a.entries, columns=a.columns, read_columns=a.read_columns, page_size=a.page_size,
                cluster_entries=a.cluster_entries, codec=a.codec, zstd_level=a.zstd_level, seed=a.seed)


def _print_fields(model: BaseModel, skip=()) -> None:
    for k, v in model.model_dump().items():
        if k not in skip:
            print(f"{k}: {v}")


def run(a) -> int:
    if a.command == "generate":
        res = call("generate", service.GenerateRequest(out=a.out, **_workload(a)), a.server)
        _print_fields(res)
    elif a.command == "import":
        req = service.ImportRequest(
            store=a.store, source=a.source, workload=service.WorkloadParams(**_workload(a)), scenario=a.scenario,
            mapping=a.mapping, vector_writes=a.vector_writes, target_block_size=a.target_block_size,
            cost_model=a.cost_model, jitter=a.jitter, seed=a.seed,
        )
        _print_fields(call("import", req, a.server))
    elif a.command == "analyze":
        source = a.store or a.source
        if not source:
            raise ConfigError("analyze needs a source file or --store")
        req = service.AnalyzeRequest(
            source=source, read_columns=a.read_columns, scenario=a.scenario,
            histogram=service.HistogramSpec(bins=a.bins, lo=a.lo, hi=a.hi),
            cost_model=a.cost_model, jitter=a.jitter, seed=a.seed,
        )
        res = call("analyze", req, a.server)
        if a.out:
            Path(a.out).write_text(res.histogram_csv)
            _print_fields(res, skip=("histogram", "histogram_csv"))
        else:
            sys.stdout.write(res.histogram_csv)
    elif a.command == "bench":
        kwargs = dict(
            codecs=[c.strip() for c in a.codec.split(",") if c.strip()], repeats=a.repeats, seed=a.seed,
            entries=a.entries, columns=a.columns, read_columns=a.read_columns, cluster_entries=a.cluster_entries,
            target_block_size=a.target_block_size, cost_model=a.cost_model, jitter=a.jitter,
            zstd_level=a.zstd_level,
        )
        if a.page_size:
            kwargs["page_sizes"] = a.page_size
        if a.scenario:
            kwargs["scenarios"] = [s for s in a.scenario.split(",") if s.strip()]
        res = call("bench", service.BenchRequest(**kwargs), a.server)
        if a.out:
            with open(a.out, "w", newline="") as fh:
                fh.write(res.csv)
            print(f"wrote {res.runs} runs to {a.out}")
        else:
            sys.stdout.write(res.csv)
    elif a.command == "report":
        try:
            text = Path(a.csv).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {a.csv}: {exc}") from exc
        req = service.ReportRequest(csv=text, page_size=a.page_size, baseline=a.baseline, target=a.target)
        print(call("report", req, a.server).table)
    elif a.command == "serve":
        import uvicorn

        uvicorn.run(service.app, host=a.host, port=a.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ColstoreError, RemoteError) as exc:
        print(f"colstore: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"colstore: invalid arguments: {exc}", file=sys.stderr)
        return 1
