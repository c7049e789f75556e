"""Command-line entry point ``muon-flow``."""

import argparse
import sys
from dataclasses import replace

from .errors import InvalidConfig, NonPositiveForLog
from .harness.check import run_checks
from .harness.config import PRESETS, load_config, preset_config
from .harness.presets import run_preset

EXIT_OK, EXIT_INVARIANT, EXIT_IO = 0, 2, 3


def _parser():
    ap = argparse.ArgumentParser(prog="muon-flow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment preset")
    run.add_argument("--preset", choices=[p for p in PRESETS if p != "custom"], default=None)
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir")
    run.add_argument("--stride", type=int, dest="record_stride")
    run.add_argument("--iters", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--M", type=int)
    run.add_argument("--N", type=int)
    chk = sub.add_parser("check", help="run the fast oracle checks")
    chk.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "check":
        return EXIT_OK if run_checks(args.seed) else EXIT_INVARIANT

    overrides = dict(
        seed=args.seed, out_dir=args.out_dir, record_stride=args.record_stride,
        iters=args.iters, workers=args.workers, M=args.M, N=args.N,
    )
    try:
        if args.config:
            if args.preset:
                overrides["preset"] = args.preset
            cfg = load_config(args.config, **overrides)
        else:
            cfg = preset_config(args.preset or "exp1", **overrides)
        if cfg.out_dir == "runs":
            cfg = replace(cfg, out_dir=f"runs/{cfg.preset}")
        result = run_preset(cfg)
    except (InvalidConfig, NonPositiveForLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    for row in result.summary:
        print(",".join("" if v is None else str(v) for v in row))
    if "chaos" in result.extra:
        res = result.extra["chaos"]
        print(f"chaos slope {res.slope:.3f}, C_poc {res.c_poc:.3e}")
    if result.failures:
        print(f"non-finite runs: {', '.join(result.failures)}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
