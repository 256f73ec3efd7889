"""Command-line front end: ``qbc run``, ``qbc verify``, ``qbc keys init``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, QbcError
from .keys import KeyRegistry
from .runner import SCHEMES, RunConfig, run
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _attack_arg(text: str) -> dict:
    """'none', 'intercept:Z', 'intercept:X:silent', 'tamper:IY', or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    parts = text.split(":")
    kind = parts[0]
    if kind == "none":
        return {}
    if kind == "intercept":
        spec = {"type": "intercept", "basis": parts[1] if len(parts) > 1 else "Z"}
        if len(parts) > 2:
            spec["policy"] = parts[2]
        return spec
    if kind == "tamper":
        return {"type": "tamper", "op": parts[1] if len(parts) > 1 else "X"}
    if kind == "probe":
        return {"type": "probe", "unitary_file": parts[1]}
    raise argparse.ArgumentTypeError(f"unrecognised attack {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbc", description="Simulator for multiparty quantum broadcast protocols")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run K sessions and write transcripts and a CSV summary")
    r.add_argument("--config", help="JSON run config")
    r.add_argument("--scheme", choices=SCHEMES)
    r.add_argument("--attack", type=_attack_arg)
    r.add_argument("--sessions", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--r", type=int, dest="r")
    r.add_argument("--n-states", type=int, dest="n_states")
    r.add_argument("--secret")
    r.add_argument("--payload", help="hex (0xA5) or bitstring")
    r.add_argument("--workers", type=int)
    r.add_argument("--registry")
    r.add_argument("--commit-counters", action="store_true",
                   help="write advanced key counters back to the registry")

    v = sub.add_parser("verify", help="run built-in exact-enumeration suites")
    v.add_argument("suite", choices=SUITES + ("all",))

    k = sub.add_parser("keys", help="identity registry management")
    ksub = k.add_subparsers(dest="keys_command", required=True)
    ki = ksub.add_parser("init", help="create a registry with fresh identities")
    ki.add_argument("--registry", required=True)
    ki.add_argument("--users", type=int, default=2)
    ki.add_argument("--seed", type=int, help="deterministic identities (testing only)")
    ki.add_argument("--force", action="store_true", help="overwrite an existing file")
    return p


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in
                 ("scheme", "attack", "sessions", "seed", "out", "r", "n_states", "secret",
                  "payload", "workers", "registry")}
    if args.config:
        cfg = RunConfig.from_file(args.config, **overrides)
    else:
        cfg = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    agg, _ = run(cfg, commit_counters=args.commit_counters)
    print(agg.summary_text())
    print(f"artifacts written to {cfg.out}")
    return EXIT_VIOLATION if agg.violations else EXIT_OK


def _cmd_verify(args) -> int:
    results = run_suite(args.suite)
    for res in results:
        print(res.report())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def _cmd_keys(args) -> int:
    path = Path(args.registry)
    if path.exists() and not args.force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    reg = KeyRegistry.generate(args.users, rng)
    reg.save(path)
    print(f"wrote {len(reg.identities)} identities to {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "keys": _cmd_keys}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"qbc: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QbcError as exc:
        print(f"qbc: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
