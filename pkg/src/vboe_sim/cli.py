"""Command line entry point: ``vboe-sim {run,replay,bounds,audit,record}``.

Exit codes: 0 when every embedded assertion passes, 1 on an assertion
failure or transcript mismatch, 2 on a configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .adversary import HonestServer
from .errors import VBOEError
from .harness import SEED_ENV, config_from_dict, load_config, replay_transcript, run_experiment
from .mbqc import load_pattern, path_pattern
from .protocol import ProtocolParams
from .traps import build_test_round, greedy_coloring, run_test_round
from .ubqc import run_ubqc_round

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Global flags; the subcommand copy suppresses defaults so it never clobbers earlier values."""

    def d(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), metavar="PATH", help="experiment config (JSON)")
    p.add_argument(
        "--seed", type=lambda s: int(s, 0), default=d(None), metavar="U64", help=f"master seed ({SEED_ENV} wins)"
    )
    p.add_argument("--trials", type=int, default=d(None), metavar="N", help="override the config's trial count")
    p.add_argument("--out", default=d("results"), metavar="DIR", help="output directory (default: results)")
    p.add_argument("--threads", type=int, default=d(1), metavar="N", help="worker processes, 0 = one per CPU")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="vboe-sim", description=__doc__.splitlines()[0], parents=[_global_flags(suppress=False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run the experiment described by --config")

    rp = sub.add_parser("replay", parents=[common], help="re-check a recorded round transcript")
    rp.add_argument("transcript", help="JSON-lines transcript file")
    rp.add_argument("--pattern", help="pattern file the round was run on (default: built-in 3-vertex path)")

    bp = sub.add_parser("bounds", parents=[common], help="evaluate the security bound terms")
    for name, typ in (("N_c", int), ("N_t", int), ("k", int), ("w", float), ("epsilon", float)):
        bp.add_argument(f"--{name}", type=typ)
    bp.add_argument("--gamma1", type=float)
    bp.add_argument("--gamma2", type=float)

    ap = sub.add_parser("audit", parents=[common], help="exact blindness audit")
    ap.add_argument("--max-vertices", type=int, default=3, help="audit every small pattern up to this size")
    ap.add_argument("--pattern", help="audit a single pattern file instead")

    rc = sub.add_parser("record", parents=[common], help="write honest computation and test round transcripts")
    rc.add_argument("--pattern", help="pattern file (default: built-in 3-vertex path)")
    return parser


def _pattern(path: str | None):
    return path_pattern((1, 3, 0)) if path is None else load_pattern(path)


def _emit(report, out: str) -> int:
    report.write(out)
    for a in report.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}")
    print(f"report written to {Path(out) / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_run(args) -> int:
    if not args.config:
        raise VBOEError("run needs --config")
    cfg = load_config(args.config, seed=args.seed, trials=args.trials)
    return _emit(run_experiment(cfg, threads=args.threads), args.out)


def _cmd_replay(args) -> int:
    text = Path(args.transcript).read_text()
    found = replay_transcript(text, _pattern(args.pattern))
    print(json.dumps({"mismatches": found}, indent=2))
    return EXIT_FAIL if found else EXIT_OK


def _cmd_bounds(args) -> int:
    if args.config:
        cfg = load_config(args.config, seed=args.seed, trials=args.trials)
        return _emit(run_experiment(cfg, threads=args.threads), args.out)
    names = ("N_c", "N_t", "w", "epsilon", "k", "gamma1", "gamma2")
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise VBOEError(f"bounds needs --config or all of {', '.join('--' + n for n in missing)}")
    params = ProtocolParams(**{n: getattr(args, n) for n in names})
    rep = bounds.security_failure_bound(params)
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK


def _cmd_audit(args) -> int:
    doc = {"kind": "blindness_audit", "pattern": None, "options": {}}
    base = "."
    if args.pattern:
        doc["pattern"] = str(Path(args.pattern).resolve())
    else:
        doc["options"]["max_vertices"] = args.max_vertices
    cfg = config_from_dict(doc, base, seed=args.seed)
    return _emit(run_experiment(cfg), args.out)


def _cmd_record(args) -> int:
    pattern = _pattern(args.pattern)
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 0])
    tr, _ = run_ubqc_round(pattern, HonestServer(pattern.graph, rng), rng)
    (out / "computation.jsonl").write_text(tr.to_jsonl())
    rng = np.random.default_rng([seed, 1])
    plan = build_test_round(pattern.graph, greedy_coloring(pattern.graph), rng)
    _, tr = run_test_round(plan, pattern.graph, HonestServer(pattern.graph, rng), rng, order=pattern.order)
    (out / "test.jsonl").write_text(tr.to_jsonl())
    print(f"transcripts written to {out}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "replay": _cmd_replay, "bounds": _cmd_bounds, "audit": _cmd_audit, "record": _cmd_record}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (VBOEError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
