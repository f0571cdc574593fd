"""Minimal Ethereum JSON-RPC client for fetching deployed code."""

from __future__ import annotations

import re

import requests

_ADDRESS = re.compile(r"^0x[0-9a-fA-F]{40}$")


class RpcError(RuntimeError):
    """Transport failure or malformed/erroneous JSON-RPC response."""


class NoCode(LookupError):
    """The address holds no code (an EOA or a destroyed contract)."""

    def __init__(self, address: str):
        super().__init__(f"no code at {address}")
        self.address = address


def is_address(text: str) -> bool:
    return bool(_ADDRESS.match(text))


def validate_address(text: str) -> str:
    if not is_address(text):
        raise ValueError(f"malformed address: {text!r}")
    return text.lower()


def make_body(method: str, params: list, id: int = 1) -> dict:
    return {"jsonrpc": "2.0", "method": method, "params": params, "id": id}


def fetch_code(address: str, rpc_url: str, *, block: str = "latest", timeout: float = 30.0) -> bytes:
    """Return the code at ``address`` via ``eth_getCode``."""
    address = validate_address(address)
    try:
        res = requests.post(rpc_url, json=make_body("eth_getCode", [address, block]), timeout=timeout)
        res.raise_for_status()
        body = res.json()
    except requests.RequestException as e:
        raise RpcError(f"{rpc_url}: {e}") from e
    except ValueError as e:
        raise RpcError(f"{rpc_url}: response is not JSON") from e
    if not isinstance(body, dict):
        raise RpcError("unexpected JSON-RPC response")
    if body.get("error"):
        err = body["error"]
        msg = err.get("message", err) if isinstance(err, dict) else err
        raise RpcError(f"eth_getCode failed: {msg}")
    result = body.get("result")
    if not isinstance(result, str) or not result.startswith("0x"):
        raise RpcError(f"bad eth_getCode result: {result!r}")
    try:
        code = bytes.fromhex(result[2:])
    except ValueError as e:
        raise RpcError("eth_getCode result is not hex") from e
    if not code:
        raise NoCode(address)
    return code
