"""Command-line entry point: one subcommand per experiment plus ``rerun``.

Exit codes: 0 success, 2 configuration error, 3 numerical or physicality
error, 4 calibration failure.
"""

import argparse
import json
import os
import sys

from . import __version__
from .config import EXPERIMENTS, default_config_text, load_config, parse_config
from .errors import CalibrationFailed, ConfigError, Su11Error
from .experiments import config_from_manifest, run


def _common(p, with_config=True):
    if with_config:
        p.add_argument("--config", help="TOML experiment config (defaults apply to omitted keys)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--shots", type=int, help="override run.shots")
        p.add_argument("--format", choices=("csv", "json"), help="override run.format for data tables")
    p.add_argument("--out", default=None, help="output directory (default: ./runs/<experiment>)")
    p.add_argument("--workers", type=int, default=None, help="worker threads; 0 uses all cores")


def build_parser():
    parser = argparse.ArgumentParser(prog="su11readout", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    rr = sub.add_parser("rerun", help="re-run an experiment from its manifest.json")
    rr.add_argument("manifest")
    rr.add_argument("--verify", action="store_true", help="compare output digests with the manifest")
    _common(rr, with_config=False)
    sub.add_parser("defaults", help="print the documented default config")
    return parser


def _override(cfg, args):
    run_updates = {k: getattr(args, k) for k in ("seed", "shots", "format") if getattr(args, k) is not None}
    if run_updates:
        data = cfg.model_dump()
        data["run"].update(run_updates)
        cfg = parse_config(data, source="command line")
    return cfg


def _rerun(args):
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
    cfg = config_from_manifest(manifest)
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    new = run(cfg, out, workers=args.workers)
    if args.verify:
        # the manifest itself differs by wall-clock, so only data files are compared
        bad = [name for name, digest in manifest["outputs"].items()
               if new["outputs"].get(name) != digest]
        if bad:
            print(f"digest mismatch: {', '.join(sorted(bad))}", file=sys.stderr)
            return 3
        print(f"verified {len(manifest['outputs'])} outputs")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "defaults":
            sys.stdout.write(default_config_text())
            return 0
        if args.command == "rerun":
            return _rerun(args)
        cfg = _override(load_config(args.config), args)
        out = args.out or os.path.join("runs", args.command)
        manifest = run(cfg, out, experiment=args.command, workers=args.workers)
        print(f"{args.command}: wrote {len(manifest['outputs'])} files to {out}")
        return 0
    except CalibrationFailed as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ConfigError, Su11Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
