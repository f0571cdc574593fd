#!/usr/bin/env python3
"""Compile the Solidity corpus into frozen test fixtures.

Each fixture is a JSON file holding the runtime and creation bytecode and
the compiler's ``storageLayout`` for one contract.  The fixtures are
committed so the test suite never needs a compiler.

    python3 tools/compile_corpus.py --solcjs /path/to/solcjs \\
        --node-modules /path/to/node_modules

Sources under ``tools/corpus`` become ``tests/fixtures/corpus``; the
generated library sample (``--library-sample``) becomes
``tests/fixtures/library``.
"""

from __future__ import annotations

import argparse
import json
import posixpath
import re
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
IMPORT = re.compile(r'^\s*import\s+(?:[^"\']*from\s+)?["\']([^"\']+)["\']', re.M)


def resolve_sources(entry: str, text: str, node_modules: Path) -> dict[str, dict]:
    """Collect ``entry`` and everything it imports, keyed by import path."""
    sources = {entry: {"content": text}}
    stack = [entry]
    while stack:
        unit = stack.pop()
        for imp in IMPORT.findall(sources[unit]["content"]):
            if imp.startswith("."):
                key = posixpath.normpath(posixpath.join(posixpath.dirname(unit), imp))
            else:
                key = imp
            if key in sources:
                continue
            path = node_modules / key
            if not path.is_file():
                raise FileNotFoundError(f"{unit}: cannot resolve import {imp!r}")
            sources[key] = {"content": path.read_text()}
            stack.append(key)
    return sources


def compile_unit(solcjs: str, sources: dict, optimize: bool) -> dict:
    request = {
        "language": "Solidity",
        "sources": sources,
        "settings": {
            "optimizer": {"enabled": optimize, "runs": 200},
            "outputSelection": {
                "*": {"*": ["storageLayout", "evm.bytecode.object", "evm.deployedBytecode.object"]}
            },
        },
    }
    # node can fail with EAGAIN on a piped stdin and truncate a piped
    # stdout on exit; regular files avoid both
    with tempfile.TemporaryFile("w+") as fin, tempfile.TemporaryFile("w+") as fout:
        json.dump(request, fin)
        fin.seek(0)
        proc = subprocess.run([solcjs, "--standard-json"], stdin=fin, stdout=fout, stderr=subprocess.PIPE, text=True)
        fout.seek(0)
        out = fout.read()
    if proc.returncode != 0:
        raise RuntimeError(f"solcjs exited with {proc.returncode}: {proc.stderr.strip()[-300:]}")
    out = json.loads(out[out.index("{") :])  # solcjs may print a banner first
    errors = [e for e in out.get("errors", []) if e.get("severity") == "error"]
    if errors:
        raise RuntimeError("\n".join(e["formattedMessage"] for e in errors))
    return out


def solc_version(solcjs: str) -> str:
    return subprocess.run([solcjs, "--version"], capture_output=True, text=True).stdout.strip()


def emit_fixtures(out: dict, unit: str, dest: Path, meta: dict, only: list[str] | None) -> list[Path]:
    written = []
    for name, c in out["contracts"].get(unit, {}).items():
        runtime = c["evm"]["deployedBytecode"]["object"]
        if not runtime or (only and name not in only):
            continue
        doc = {
            "contract": name,
            "source": unit,
            **meta,
            "runtime": runtime,
            "creation": c["evm"]["bytecode"]["object"],
            "storageLayout": c["storageLayout"],
        }
        path = dest / f"{name}.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        written.append(path)
    return written


# Concrete subclasses of library contracts, used as a stand-in for a
# sample of deployed contracts.
LIBRARY_SAMPLE = {
    "token/ERC20/ERC20.sol": ["ERC20"],
    "token/ERC20/extensions/ERC20Burnable.sol": ["ERC20Burnable"],
    "token/ERC20/extensions/ERC20Capped.sol": ["ERC20Capped"],
    "token/ERC20/extensions/ERC20Pausable.sol": ["ERC20Pausable"],
    "token/ERC20/extensions/ERC20Snapshot.sol": ["ERC20Snapshot"],
    "token/ERC20/extensions/ERC20Permit.sol": ["ERC20Permit"],
    "token/ERC20/extensions/ERC20Votes.sol": ["ERC20Votes"],
    "token/ERC20/extensions/ERC20VotesComp.sol": ["ERC20VotesComp"],
    "token/ERC20/extensions/ERC20FlashMint.sol": ["ERC20FlashMint"],
    "token/ERC20/extensions/ERC4626.sol": ["ERC4626"],
    "token/ERC20/extensions/ERC20Wrapper.sol": ["ERC20Wrapper"],
    "token/ERC721/ERC721.sol": ["ERC721"],
    "token/ERC721/extensions/ERC721Enumerable.sol": ["ERC721Enumerable"],
    "token/ERC721/extensions/ERC721URIStorage.sol": ["ERC721URIStorage"],
    "token/ERC721/extensions/ERC721Burnable.sol": ["ERC721Burnable"],
    "token/ERC721/extensions/ERC721Pausable.sol": ["ERC721Pausable"],
    "token/ERC721/extensions/ERC721Royalty.sol": ["ERC721Royalty"],
    "token/ERC721/extensions/ERC721Votes.sol": ["ERC721Votes"],
    "token/ERC721/extensions/ERC721Consecutive.sol": ["ERC721Consecutive"],
    "token/ERC1155/ERC1155.sol": ["ERC1155"],
    "token/ERC1155/extensions/ERC1155Supply.sol": ["ERC1155Supply"],
    "token/ERC1155/extensions/ERC1155Burnable.sol": ["ERC1155Burnable"],
    "token/ERC1155/extensions/ERC1155Pausable.sol": ["ERC1155Pausable"],
    "token/ERC1155/extensions/ERC1155URIStorage.sol": ["ERC1155URIStorage"],
    "access/Ownable.sol": ["Ownable"],
    "access/Ownable2Step.sol": ["Ownable2Step"],
    "access/AccessControl.sol": ["AccessControl"],
    "access/AccessControlEnumerable.sol": ["AccessControlEnumerable"],
    "access/AccessControlDefaultAdminRules.sol": ["AccessControlDefaultAdminRules"],
    "security/Pausable.sol": ["Pausable"],
    "security/ReentrancyGuard.sol": ["ReentrancyGuard"],
    "security/PullPayment.sol": ["PullPayment"],
    "finance/PaymentSplitter.sol": ["PaymentSplitter"],
    "finance/VestingWallet.sol": ["VestingWallet"],
    "governance/TimelockController.sol": ["TimelockController"],
    "governance/utils/Votes.sol": ["Votes"],
    "utils/Multicall.sol": ["Multicall"],
    "utils/Nonces.sol": [],
    "utils/escrow/Escrow.sol": ["Escrow"],
    "utils/escrow/ConditionalEscrow.sol": [],
    "utils/escrow/RefundEscrow.sol": ["RefundEscrow"],
    "metatx/MinimalForwarder.sol": ["MinimalForwarder"],
    "proxy/transparent/ProxyAdmin.sol": ["ProxyAdmin"],
    "proxy/beacon/UpgradeableBeacon.sol": ["UpgradeableBeacon"],
    "proxy/ERC1967/ERC1967Proxy.sol": ["ERC1967Proxy"],
    "proxy/transparent/TransparentUpgradeableProxy.sol": ["TransparentUpgradeableProxy"],
    "proxy/beacon/BeaconProxy.sol": ["BeaconProxy"],
    "token/common/ERC2981.sol": ["ERC2981"],
    "token/ERC721/utils/ERC721Holder.sol": ["ERC721Holder"],
    "token/ERC1155/utils/ERC1155Holder.sol": ["ERC1155Holder"],
    "utils/cryptography/EIP712.sol": ["EIP712"],
    "token/ERC20/presets/ERC20PresetFixedSupply.sol": ["ERC20PresetFixedSupply"],
    "token/ERC20/presets/ERC20PresetMinterPauser.sol": ["ERC20PresetMinterPauser"],
    "token/ERC721/presets/ERC721PresetMinterPauserAutoId.sol": ["ERC721PresetMinterPauserAutoId"],
    "token/ERC1155/presets/ERC1155PresetMinterPauser.sol": ["ERC1155PresetMinterPauser"],
}

_CONCRETE = {
    "ERC20": 'ERC20("T", "T")',
    "ERC721": 'ERC721("T", "T")',
    "ERC1155": 'ERC1155("u")',
    "ERC20Capped": "ERC20Capped(1e27)",
    "ERC20Permit": 'ERC20Permit("T")',
    "ERC4626": "ERC4626(IERC20(address(1)))",
    "ERC20Wrapper": "ERC20Wrapper(IERC20(address(1)))",
    "AccessControlDefaultAdminRules": "AccessControlDefaultAdminRules(1, msg.sender)",
    "PaymentSplitter": "PaymentSplitter(_payees(), _shares())",
    "VestingWallet": "VestingWallet(address(1), 0, 100)",
    "TimelockController": "TimelockController(1, new address[](0), new address[](0), address(0))",
    "EIP712": 'EIP712("T", "1")',
    "UpgradeableBeacon": "UpgradeableBeacon(address(this))",
    "ERC1967Proxy": 'ERC1967Proxy(address(this), "")',
    "TransparentUpgradeableProxy": 'TransparentUpgradeableProxy(address(this), msg.sender, "")',
    "BeaconProxy": 'BeaconProxy(address(this), "")',
    "RefundEscrow": "RefundEscrow(payable(msg.sender))",
    "ERC20PresetFixedSupply": 'ERC20PresetFixedSupply("T", "T", 1e24, msg.sender)',
    "ERC20PresetMinterPauser": 'ERC20PresetMinterPauser("T", "T")',
    "ERC721PresetMinterPauserAutoId": 'ERC721PresetMinterPauserAutoId("T", "T", "u")',
    "ERC1155PresetMinterPauser": 'ERC1155PresetMinterPauser("u")',
}

_BASES = {
    "ERC20Burnable": ["ERC20"],
    "ERC20Capped": ["ERC20"],
    "ERC20Pausable": ["ERC20"],
    "ERC20Snapshot": ["ERC20"],
    "ERC20Permit": ["ERC20"],
    "ERC20Votes": ["ERC20", "ERC20Permit"],
    "ERC20VotesComp": ["ERC20", "ERC20Permit"],
    "Votes": ["EIP712"],
    "ERC20FlashMint": ["ERC20"],
    "ERC4626": ["ERC20"],
    "ERC20Wrapper": ["ERC20"],
    "ERC721Enumerable": ["ERC721"],
    "ERC721URIStorage": ["ERC721"],
    "ERC721Burnable": ["ERC721"],
    "ERC721Pausable": ["ERC721"],
    "ERC721Royalty": ["ERC721"],
    "ERC721Votes": ["ERC721", "EIP712"],
    "ERC721Consecutive": ["ERC721"],
    "ERC1155Supply": ["ERC1155"],
    "ERC1155Burnable": ["ERC1155"],
    "ERC1155Pausable": ["ERC1155"],
    "ERC1155URIStorage": ["ERC1155"],
}


def library_wrapper(path: str, contract: str) -> tuple[str, str]:
    """Source of a deployable subclass of ``contract``."""
    bases = _BASES.get(contract, []) + [contract]
    ctor = " ".join(_CONCRETE[b] for b in bases if b in _CONCRETE)
    name = f"Sample{contract}"
    helpers = ""
    if contract == "PaymentSplitter":
        helpers = (
            "function _payees() private view returns (address[] memory p) "
            "{ p = new address[](1); p[0] = msg.sender; }\n"
            "function _shares() private pure returns (uint256[] memory s) "
            "{ s = new uint256[](1); s[0] = 1; }\n"
        )
    elif contract == "Votes":
        helpers = "function _getVotingUnits(address) internal pure override returns (uint256) { return 1; }\n"
    imports = "".join(
        f'import "@openzeppelin/contracts/{p}";\n'
        for p in {path, *(_path_of(b) for b in bases if b != contract)}
    )
    src = (
        "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.0;\n"
        f"{imports}"
        f"contract {name} is {contract} {{\n"
        f"  constructor() {ctor} {{}}\n{helpers}}}\n"
    )
    return name, src


def _path_of(contract: str) -> str:
    for p, names in LIBRARY_SAMPLE.items():
        if contract in names:
            return p
    raise KeyError(contract)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--solcjs", required=True)
    ap.add_argument("--node-modules", required=True, type=Path)
    ap.add_argument("--library-sample", action="store_true")
    args = ap.parse_args(argv)
    meta = {"compiler": solc_version(args.solcjs)}

    dest = ROOT / "tests" / "fixtures" / "corpus"
    dest.mkdir(parents=True, exist_ok=True)
    manifest = json.loads((ROOT / "tools" / "corpus" / "manifest.json").read_text())
    for entry in manifest:
        src = ROOT / "tools" / "corpus" / entry["file"]
        sources = resolve_sources(entry["file"], src.read_text(), args.node_modules)
        out = compile_unit(args.solcjs, sources, entry.get("optimize", False))
        emit = {**meta, "optimize": entry.get("optimize", False), "tags": entry.get("tags", [])}
        for p in emit_fixtures(out, entry["file"], dest, emit, entry.get("contracts")):
            print(p.relative_to(ROOT))

    if args.library_sample:
        lib = ROOT / "tests" / "fixtures" / "library"
        lib.mkdir(parents=True, exist_ok=True)
        for path, names in LIBRARY_SAMPLE.items():
            for contract in names:
                name, text = library_wrapper(path, contract)
                unit = f"{name}.sol"
                try:
                    sources = resolve_sources(unit, text, args.node_modules)
                    out = compile_unit(args.solcjs, sources, True)
                except (RuntimeError, subprocess.CalledProcessError, FileNotFoundError) as e:
                    print(f"skip {contract}: {str(e).splitlines()[0]}", file=sys.stderr)
                    continue
                for p in emit_fixtures(out, unit, lib, {**meta, "optimize": True}, [name]):
                    print(p.relative_to(ROOT))
    return 0


if __name__ == "__main__":
    sys.exit(main())
