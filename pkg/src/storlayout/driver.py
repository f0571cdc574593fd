"""Batch driver: per-contract isolation, timeouts, result files."""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing as mp
import os
import time
import traceback
from dataclasses import dataclass, field
from multiprocessing.connection import wait
from pathlib import Path
from typing import Any, Callable

from .evm import disassemble, parse_hex
from .facts import export_facts
from .layout import compare_layouts
from .pipeline import analyze
from .report import write_report
from .rpc import NoCode, RpcError, fetch_code, is_address

log = logging.getLogger(__name__)

MODES = ("analyze", "compare", "guards", "facts-export")

TERMINATED = "terminated"
TIMEOUT = "timeout"
ERROR = "error"
NOCODE = "nocode"
DUPLICATE = "duplicate"


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    inputs: list[str]
    out_dir: str = "."
    mode: str = "analyze"
    rpc_url: str | None = None
    timeout: int = 300
    jobs: int = 1
    ground_truth: str | None = None
    dedup: bool = False
    exclude_unused: bool = False
    figures: bool = True

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.inputs:
            raise ConfigError("no inputs")
        if not isinstance(self.timeout, int) or self.timeout <= 0:
            raise ConfigError("timeout must be a positive integer")
        if not isinstance(self.jobs, int) or self.jobs <= 0:
            raise ConfigError("jobs must be a positive integer")
        for item in self.inputs:
            if item.startswith("0x") and not os.path.exists(item):
                if not is_address(item):
                    raise ConfigError(f"malformed address: {item}")
                if not self.rpc_url:
                    raise ConfigError(f"address input {item} needs an RPC endpoint")
            elif not os.path.isfile(item):
                raise ConfigError(f"no such file: {item}")
        if self.mode == "compare":
            if not self.ground_truth:
                raise ConfigError("compare mode needs ground truth")
            if os.path.isfile(self.ground_truth) and len(self.inputs) > 1:
                raise ConfigError("a single ground-truth file needs a single input")
            if not os.path.exists(self.ground_truth):
                raise ConfigError(f"no such ground truth: {self.ground_truth}")


@dataclass
class ContractResult:
    id: str
    status: str
    seconds: float = 0.0
    message: str = ""
    metrics: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"id": self.id, "status": self.status, "seconds": round(self.seconds, 4)}
        if self.message:
            out["message"] = self.message
        if self.metrics:
            out["metrics"] = self.metrics
        return out


@dataclass
class BatchResult:
    results: list[ContractResult]

    def summary(self) -> dict[str, int]:
        counts = {k: 0 for k in (TERMINATED, TIMEOUT, ERROR, NOCODE, DUPLICATE)}
        for r in self.results:
            counts[r.status] += 1
        return {
            "total": len(self.results),
            "terminated": counts[TERMINATED],
            "timeouts": counts[TIMEOUT],
            "errors": counts[ERROR],
            "nocode": counts[NOCODE],
            "duplicates": counts[DUPLICATE],
        }

    def scores(self) -> dict[str, float] | None:
        rows = [r.metrics for r in self.results if "successCount" in r.metrics]
        if not rows:
            return None
        gt = sum(m["groundTruthCount"] for m in rows)
        rep = sum(m["reportCount"] for m in rows)
        ok = sum(m["successCount"] for m in rows)
        return {
            "groundTruthCount": gt,
            "reportCount": rep,
            "successCount": ok,
            "precision": ok / rep if rep else 1.0,
            "recall": ok / gt if gt else 1.0,
        }

    @property
    def exit_status(self) -> int:
        return 1 if any(r.status == ERROR for r in self.results) else 0


def code_fingerprint(code: bytes) -> str:
    """Hash of ``code`` with every PUSH immediate zeroed."""
    h = hashlib.sha256()
    for ins in disassemble(code):
        h.update(bytes([ins.byte]))
        if ins.immediate is not None:
            h.update(bytes(ins.size - 1))
    return h.hexdigest()


def _input_id(item: str) -> str:
    if is_address(item) and not os.path.exists(item):
        return item.lower()
    return Path(item).name.split(".")[0]


def load_code(item: str, rpc_url: str | None) -> bytes:
    if is_address(item) and not os.path.exists(item):
        return fetch_code(item, rpc_url)
    text = Path(item).read_text().strip()
    if text.startswith("{"):
        doc = json.loads(text)
        text = _bytecode_from_json(doc)
    return parse_hex(text)


def _bytecode_from_json(doc: dict) -> str:
    for path in (("runtime",), ("deployedBytecode",), ("evm", "deployedBytecode", "object")):
        node: Any = doc
        for key in path:
            node = node.get(key) if isinstance(node, dict) else None
        if isinstance(node, dict):
            node = node.get("object")
        if isinstance(node, str):
            return node
    raise ValueError("no bytecode in JSON input")


def _ground_truth_for(config: JobConfig, cid: str) -> dict | None:
    gt = Path(config.ground_truth)
    if gt.is_file():
        path = gt
    else:
        path = next((p for p in (gt / f"{cid}.json", gt / f"{cid}.layout.json") if p.is_file()), None)
        if path is None:
            return None
    doc = json.loads(path.read_text())
    return doc.get("storageLayout", doc) if isinstance(doc, dict) else doc


def default_work(code: bytes, mode: str, ground_truth: dict | None, exclude_unused: bool) -> dict:
    """Analysis run inside the worker; returns plain data only."""
    a = analyze(code)
    out: dict[str, Any] = {"layout": a.layout, "diagnostics": a.diagnostics}
    if mode == "guards":
        out["guards"] = [g.to_json() for g in sorted(a.guards, key=lambda g: str(g.guard_var))]
    if mode == "facts-export":
        out["facts"] = export_facts(a.program)
    if mode == "compare" and ground_truth is not None:
        out["comparison"] = compare_layouts(a.layout, ground_truth, exclude_unused=exclude_unused).to_json()
    return out


def _child(conn, fn, args) -> None:
    try:
        start = time.perf_counter()
        payload = fn(*args)
        conn.send(("ok", payload, time.perf_counter() - start))
    except BaseException as e:  # report anything, including RecursionError
        conn.send(("error", f"{type(e).__name__}: {e}", traceback.format_exc(limit=3)))
    finally:
        conn.close()


def _write_outputs(out_dir: Path, cid: str, mode: str, payload: dict) -> None:
    (out_dir / f"{cid}.layout.json").write_text(json.dumps(payload["layout"], indent=2) + "\n")
    if "guards" in payload:
        (out_dir / f"{cid}.guards.json").write_text(json.dumps(payload["guards"], indent=2) + "\n")
    if "comparison" in payload:
        (out_dir / f"{cid}.compare.json").write_text(json.dumps(payload["comparison"], indent=2) + "\n")
    if "facts" in payload:
        fdir = out_dir / f"{cid}.facts"
        fdir.mkdir(exist_ok=True)
        for name, rows in payload["facts"].items():
            (fdir / f"{name}.facts").write_text("".join("\t".join(r) + "\n" for r in rows))


def _metrics(payload: dict) -> dict:
    m = {"entries": len(payload["layout"]["storage"])}
    if "guards" in payload:
        m["guards"] = len(payload["guards"])
    cmp = payload.get("comparison")
    if cmp:
        m.update({k: cmp[k] for k in ("groundTruthCount", "reportCount", "successCount", "precision", "recall")})
    return m


def run(config: JobConfig, work: Callable[..., dict] | None = None) -> BatchResult:
    """Analyze every input of ``config``; never aborts on a single contract.

    ``work`` replaces the per-contract analysis (it runs in the worker
    process and receives ``(code, mode, ground_truth, exclude_unused)``).
    """
    config.validate()
    work = work or default_work
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = mp.get_context("fork")

    results: dict[int, ContractResult] = {}
    pending: list[tuple[int, str, bytes]] = []
    seen_prints: dict[str, str] = {}
    for i, item in enumerate(config.inputs):
        cid = _input_id(item)
        try:
            code = load_code(item, config.rpc_url)
        except NoCode as e:
            results[i] = ContractResult(cid, NOCODE, message=str(e))
            continue
        except (RpcError, OSError, ValueError) as e:
            results[i] = ContractResult(cid, ERROR, message=f"{type(e).__name__}: {e}")
            continue
        if config.dedup:
            fp = code_fingerprint(code)
            if fp in seen_prints:
                results[i] = ContractResult(cid, DUPLICATE, message=f"same code as {seen_prints[fp]}")
                continue
            seen_prints[fp] = cid
        pending.append((i, cid, code))

    running: dict[Any, tuple[int, str, Any, float]] = {}  # conn -> (index, id, process, start)
    queue = list(reversed(pending))
    while queue or running:
        while queue and len(running) < config.jobs:
            i, cid, code = queue.pop()
            gt = _ground_truth_for(config, cid) if config.mode == "compare" else None
            if config.mode == "compare" and gt is None:
                results[i] = ContractResult(cid, ERROR, message="no ground truth")
                continue
            recv, send = ctx.Pipe(duplex=False)
            proc = ctx.Process(
                target=_child, args=(send, work, (code, config.mode, gt, config.exclude_unused)), daemon=True
            )
            proc.start()
            send.close()
            running[recv] = (i, cid, proc, time.monotonic())
        if not running:
            continue
        now = time.monotonic()
        nearest = min(start + config.timeout for (_, _, _, start) in running.values())
        ready = wait(list(running), timeout=max(0.0, nearest - now))
        for conn in ready:
            i, cid, proc, start = running.pop(conn)
            try:
                status, payload, extra = conn.recv()
            except EOFError:
                status, payload, extra = "error", f"worker died (exit code {proc.exitcode})", ""
            conn.close()
            proc.join()
            elapsed = time.monotonic() - start
            if status == "ok":
                _write_outputs(out_dir, cid, config.mode, payload)
                results[i] = ContractResult(cid, TERMINATED, extra, metrics=_metrics(payload))
            else:
                log.debug("%s failed: %s", cid, extra)
                results[i] = ContractResult(cid, ERROR, elapsed, message=payload)
        now = time.monotonic()
        for conn, (i, cid, proc, start) in list(running.items()):
            if now - start >= config.timeout:
                proc.kill()
                proc.join()
                conn.close()
                del running[conn]
                results[i] = ContractResult(cid, TIMEOUT, now - start, message=f"exceeded {config.timeout}s")

    batch = BatchResult([results[i] for i in sorted(results)])
    summary = {"summary": batch.summary(), "results": [r.to_json() for r in batch.results]}
    if batch.scores() is not None:
        summary["scores"] = batch.scores()
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_report(batch, out_dir, figures=config.figures)
    return batch
