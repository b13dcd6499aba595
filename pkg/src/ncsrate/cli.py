"""Command-line entry point: ``ncsrate {dinf,bound,simulate,sweep,verify-di}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .lqg import NotStabilizableError, d_inf
from .sweep import ConfigError, SweepConfig, emit_outputs, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("ncsrate")


def _load(args) -> SweepConfig:
    cfg = SweepConfig.from_json(args.config) if args.config else SweepConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _write_json(out: Path | None, name: str, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _cmd_dinf(cfg: SweepConfig, args) -> int:
    rows = [{"h": h, "d_inf": d_inf(cfg.plant, h).value} for h in sorted(set(cfg.delays))]
    _write_json(args.out, "dinf.json", rows)
    return EXIT_OK


def _cmd_sweep(cfg: SweepConfig, args) -> int:
    result = run_sweep(cfg, jobs=args.jobs)
    paths = emit_outputs(result, args.out, cfg)
    for r in result.rows:
        if r.status != "ok":
            log.warning("h=%d D=%.6g: %s (%s)", r.h, r.D, r.status, r.message)
    code = EXIT_PARTIAL if result.n_failed else EXIT_OK
    if cfg.verify_di:
        checks = [
            {
                "h": r.h,
                "D": r.D,
                "rate_operational_bits": r.rate_operational_bits,
                "di_bits": r.di_bits,
                "rate_lower_bits": r.rate_lower_bits,
                "holds": r.status == "ok" and r.rate_operational_bits >= r.di_bits - 0.05,
            }
            for r in result.rows
        ]
        _write_json(args.out, "verify_di.json", checks)
        if not all(c["holds"] for c in checks):
            code = EXIT_PARTIAL
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ncsrate", description="Rate bounds for control over delayed digital channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "dinf": "performance floor d_inf(h) for each delay",
        "bound": "lower-bound rate curves",
        "simulate": "lower-bound curves plus quantized-loop simulations",
        "sweep": "run the sweep exactly as configured",
        "verify-di": "simulations with the directed-information check",
    }
    for name, text in specs.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="JSON sweep configuration (defaults to the benchmark plant)")
        p.add_argument("--out", type=Path, default=None if name == "dinf" else Path("out"), help="output directory")
        p.add_argument("--seed", type=_u64, help="override the simulation seed")
        p.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1, help="worker processes")
        p.add_argument("--verify-di", action="store_true", help="estimate directed information on every simulated run")
        p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "bound":
            cfg = dataclasses.replace(cfg, simulate=False, verify_di=False)
        elif args.command == "simulate":
            cfg = dataclasses.replace(cfg, simulate=True, verify_di=cfg.verify_di or args.verify_di)
        elif args.command == "verify-di":
            cfg = dataclasses.replace(cfg, simulate=True, verify_di=True)
        elif args.verify_di:
            cfg = dataclasses.replace(cfg, verify_di=True, simulate=True)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        if args.command == "dinf":
            return _cmd_dinf(cfg, args)
        return _cmd_sweep(cfg, args)
    except NotStabilizableError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
