"""``ergosde`` command line.

Exit codes: 0 success, 2 configuration error, 3 numeric or divergence error.
"""

import argparse
import json
import sys

from .config import parse_config
from .errors import ConfigError, NumericError
from .pipeline import report, run_pipeline, run_sweep

STAGES = {
    "simulate": ("simulate",),
    "fit": ("simulate", "fit"),
    "diffusion": ("simulate", "fit", "diffusion"),
    "stats": ("simulate", "fit", "diffusion", "stats"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="ergosde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "simulate the configured model and write trajectory and training set"),
        ("fit", "simulate, then fit the drift estimator"),
        ("diffusion", "simulate, fit, then estimate and factor the diffusion"),
        ("stats", "full pipeline including statistics of the learned model"),
        ("sweep", "error scaling of a perturbation family"),
        ("report", "rebuild plots and a summary from an output directory"),
    ]:
        sp = sub.add_parser(name, help=help_)
        if name != "report":
            sp.add_argument("--config", required=True, help="JSON experiment config")
            sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        if args.command == "report":
            summary, _ = report(args.out)
            if not args.quiet:
                print(json.dumps(summary, indent=2, sort_keys=True))
            return 0
        cfg = parse_config(args.config, seed=args.seed)
        if args.command == "sweep":
            _, summary = run_sweep(cfg, args.out, log)
            if not args.quiet:
                print(json.dumps(summary, indent=2, sort_keys=True))
        else:
            man = run_pipeline(cfg, args.out, STAGES[args.command], log)
            log(f"wrote {len(man.files)} files to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
