"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .driver import MODES, ConfigError, JobConfig, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="storlayout",
        description="Recover Solidity storage layouts from EVM bytecode.",
    )
    p.add_argument("mode", choices=MODES)
    p.add_argument("inputs", nargs="+", help="hex bytecode files or contract addresses")
    p.add_argument("-o", "--out-dir", default=".", help="where result files go (default: .)")
    p.add_argument(
        "--rpc-url",
        default=os.environ.get("ETH_RPC_URL"),
        help="JSON-RPC endpoint for address inputs (default: $ETH_RPC_URL)",
    )
    p.add_argument("--timeout", type=int, default=300, help="seconds per contract (default: 300)")
    p.add_argument("--jobs", type=int, default=1, help="contracts analyzed in parallel")
    p.add_argument("--ground-truth", help="solc storageLayout JSON, or a directory of <id>.json")
    p.add_argument("--dedup", action="store_true", help="skip inputs equal modulo PUSH constants")
    p.add_argument(
        "--exclude-unused",
        action="store_true",
        help="compare: ignore ground-truth slots with no inferred entry",
    )
    p.add_argument("--no-figures", action="store_true", help="skip the PNG report figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    config = JobConfig(
        inputs=args.inputs,
        out_dir=args.out_dir,
        mode=args.mode,
        rpc_url=args.rpc_url,
        timeout=args.timeout,
        jobs=args.jobs,
        ground_truth=args.ground_truth,
        dedup=args.dedup,
        exclude_unused=args.exclude_unused,
        figures=not args.no_figures,
    )
    try:
        batch = run(config)
    except ConfigError as e:
        print(f"storlayout: error: {e}", file=sys.stderr)
        return 2
    out = {"summary": batch.summary()}
    if batch.scores() is not None:
        out["scores"] = batch.scores()
    print(json.dumps(out, indent=2))
    for r in batch.results:
        if r.status != "terminated":
            print(f"{r.id}: {r.status} {r.message}", file=sys.stderr)
    return batch.exit_status


if __name__ == "__main__":
    sys.exit(main())
