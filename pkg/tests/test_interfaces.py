"""RPC client, batch driver, report and command line."""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from evmasm import asm_hex
from helpers import CORPUS
from storlayout.cli import main
from storlayout.driver import ConfigError, JobConfig, code_fingerprint, run
from storlayout.rpc import NoCode, RpcError, fetch_code, is_address

ADDR_CODE = "0x" + "11" * 20
ADDR_EMPTY = "0x" + "22" * 20
ADDR_ERROR = "0x" + "33" * 20
ADDR_JUNK = "0x" + "44" * 20
RUNTIME = asm_hex("1 0 SSTORE STOP")


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append(body)
        addr = body["params"][0]
        if addr == ADDR_CODE:
            out = {"jsonrpc": "2.0", "id": body["id"], "result": "0x" + RUNTIME}
        elif addr == ADDR_EMPTY:
            out = {"jsonrpc": "2.0", "id": body["id"], "result": "0x"}
        elif addr == ADDR_ERROR:
            out = {"jsonrpc": "2.0", "id": body["id"], "error": {"code": -32000, "message": "boom"}}
        else:
            raw = b"not json"
            self.send_response(200)
            self.end_headers()
            self.wfile.write(raw)
            return
        raw = json.dumps(out).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def rpc_url():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


# -- rpc -------------------------------------------------------------------------


def test_fetch_code(rpc_url):
    assert fetch_code(ADDR_CODE, rpc_url).hex() == RUNTIME


def test_fetch_no_code(rpc_url):
    with pytest.raises(NoCode):
        fetch_code(ADDR_EMPTY, rpc_url)


def test_fetch_rpc_error(rpc_url):
    with pytest.raises(RpcError, match="boom"):
        fetch_code(ADDR_ERROR, rpc_url)


def test_fetch_non_json(rpc_url):
    with pytest.raises(RpcError):
        fetch_code(ADDR_JUNK, rpc_url)


def test_fetch_unreachable():
    with pytest.raises(RpcError):
        fetch_code(ADDR_CODE, "http://127.0.0.1:9", timeout=2)


def test_malformed_address():
    assert not is_address("0x1234")
    with pytest.raises(ValueError):
        fetch_code("0x1234", "http://127.0.0.1:9")


# -- driver ----------------------------------------------------------------------


def _write_inputs(tmp_path, n=3):
    paths = []
    for i in range(n):
        p = tmp_path / f"c{i}.hex"
        p.write_text(asm_hex(f"{i} SLOAD 1 ADD {i} SSTORE STOP"))
        paths.append(str(p))
    return paths


def _sleepy(code, mode, gt, exclude_unused):
    if code.hex().startswith("6001"):  # the contract reading slot 1
        time.sleep(30)
    return {"layout": {"storage": [], "types": {}}, "diagnostics": {}}


def test_timeout_is_isolated(tmp_path):
    inputs = _write_inputs(tmp_path)
    start = time.monotonic()
    batch = run(JobConfig(inputs, out_dir=str(tmp_path / "out"), timeout=1, jobs=2, figures=False), work=_sleepy)
    assert time.monotonic() - start < 10
    assert batch.summary()["terminated"] == 2
    assert batch.summary()["timeouts"] == 1
    assert batch.summary()["errors"] == 0
    assert [r.status for r in batch.results] == ["terminated", "timeout", "terminated"]


def _crash(code, mode, gt, exclude_unused):
    raise RuntimeError("bad input")


def test_worker_error_is_recorded(tmp_path):
    inputs = _write_inputs(tmp_path, 2)
    batch = run(JobConfig(inputs, out_dir=str(tmp_path / "out"), figures=False), work=_crash)
    assert batch.summary()["errors"] == 2
    assert "bad input" in batch.results[0].message
    assert batch.exit_status == 1


def test_outputs_and_report(tmp_path):
    inputs = _write_inputs(tmp_path)
    out = tmp_path / "out"
    batch = run(JobConfig(inputs, out_dir=str(out), mode="guards"))
    assert batch.summary()["terminated"] == 3
    for i in range(3):
        doc = json.loads((out / f"c{i}.layout.json").read_text())
        assert doc["storage"][0]["slot"] == str(i)
        assert (out / f"c{i}.guards.json").exists()
    rows = (out / "results.tsv").read_text().splitlines()
    assert rows[0].split("\t")[:2] == ["id", "status"] and len(rows) == 4
    assert (out / "outcomes.png").stat().st_size > 0
    assert json.loads((out / "summary.json").read_text())["summary"]["total"] == 3


def test_results_do_not_depend_on_jobs(tmp_path):
    inputs = [str(p) for p in CORPUS[:6]]
    a = run(JobConfig(inputs, out_dir=str(tmp_path / "a"), jobs=1, figures=False))
    b = run(JobConfig(inputs, out_dir=str(tmp_path / "b"), jobs=4, figures=False))
    assert [r.id for r in a.results] == [r.id for r in b.results]
    for r in a.results:
        assert (tmp_path / "a" / f"{r.id}.layout.json").read_text() == (tmp_path / "b" / f"{r.id}.layout.json").read_text()


def test_address_needs_rpc(tmp_path):
    with pytest.raises(ConfigError):
        run(JobConfig([ADDR_CODE], out_dir=str(tmp_path)))
    with pytest.raises(ConfigError):
        run(JobConfig(["0x12"], out_dir=str(tmp_path), rpc_url="http://x"))


@pytest.mark.parametrize(
    "kwargs",
    [{"mode": "nope"}, {"timeout": 0}, {"jobs": 0}, {"mode": "compare"}, {"inputs": []}, {"inputs": ["/no/such"]}],
)
def test_config_validation(tmp_path, kwargs):
    args = {"inputs": _write_inputs(tmp_path, 1), "out_dir": str(tmp_path)}
    args.update(kwargs)
    with pytest.raises(ConfigError):
        JobConfig(**args).validate()


def test_addresses_through_rpc(tmp_path, rpc_url):
    batch = run(JobConfig([ADDR_CODE, ADDR_EMPTY, ADDR_ERROR], out_dir=str(tmp_path), rpc_url=rpc_url, figures=False))
    assert [r.status for r in batch.results] == ["terminated", "nocode", "error"]
    assert (tmp_path / f"{ADDR_CODE}.layout.json").exists()


def test_dedup_skips_push_variants(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.hex", "b.hex", "c.hex"))
    a.write_text(asm_hex("1 SLOAD POP STOP"))
    b.write_text(asm_hex("2 SLOAD POP STOP"))
    c.write_text(asm_hex("1 SLOAD 1 ADD POP STOP"))
    assert code_fingerprint(bytes.fromhex(a.read_text())) == code_fingerprint(bytes.fromhex(b.read_text()))
    batch = run(JobConfig([str(a), str(b), str(c)], out_dir=str(tmp_path / "o"), dedup=True, figures=False))
    assert [r.status for r in batch.results] == ["terminated", "duplicate", "terminated"]


def test_compare_mode_scores(tmp_path):
    inputs = [str(p) for p in CORPUS if p.stem in ("StorageExample", "PackedTwo")]
    batch = run(JobConfig(inputs, out_dir=str(tmp_path), mode="compare", ground_truth=str(CORPUS[0].parent),
                          figures=True))
    assert batch.scores()["precision"] == 1.0 and batch.scores()["recall"] == 1.0
    assert (tmp_path / "StorageExample.compare.json").exists()
    assert (tmp_path / "scores.png").exists()


def test_facts_export_mode(tmp_path):
    inputs = _write_inputs(tmp_path, 1)
    run(JobConfig(inputs, out_dir=str(tmp_path / "o"), mode="facts-export", figures=False))
    assert (tmp_path / "o" / "c0.facts" / "STORE.facts").read_text().strip()


# -- cli ---------------------------------------------------------------------------


def test_cli_analyze(tmp_path, capsys):
    inputs = _write_inputs(tmp_path, 2)
    assert main(["analyze", *inputs, "-o", str(tmp_path / "o"), "--no-figures", "--jobs", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["summary"] == {"total": 2, "terminated": 2, "timeouts": 0, "errors": 0, "nocode": 0, "duplicates": 0}


def test_cli_rpc_from_environment(tmp_path, capsys, monkeypatch, rpc_url):
    monkeypatch.setenv("ETH_RPC_URL", rpc_url)
    assert main(["analyze", ADDR_CODE, "-o", str(tmp_path), "--no-figures"]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["terminated"] == 1


def test_cli_config_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ETH_RPC_URL", raising=False)
    assert main(["analyze", ADDR_CODE, "-o", str(tmp_path)]) == 2
    assert "RPC" in capsys.readouterr().err


def test_cli_compare_with_single_ground_truth(tmp_path, capsys):
    path = next(p for p in CORPUS if p.stem == "Signed")
    gt = tmp_path / "gt.json"
    gt.write_text(json.dumps(json.loads(path.read_text())["storageLayout"]))
    assert main(["compare", str(path), "--ground-truth", str(gt), "-o", str(tmp_path), "--no-figures"]) == 0
    assert json.loads(capsys.readouterr().out)["scores"]["recall"] == 1.0


def test_cli_rejects_unknown_mode():
    with pytest.raises(SystemExit):
        main(["explode", "x"])


def test_cli_timeout_default():
    from storlayout.cli import build_parser

    args = build_parser().parse_args(["analyze", "x"])
    assert args.timeout == 300 and args.jobs == 1
