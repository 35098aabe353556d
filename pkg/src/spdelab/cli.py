"""Command-line entry point: ``spdelab <simulate|uniqueness|estimate|verify|kernels>``.

Exit codes: 0 success, 1 hard-check failure, 2 config error, 3 blow-up.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, parse_overrides, parse_text
from .drift import BlowUp
from .results import OutputError
from .runner import EXIT_BLOWUP, EXIT_CONFIG, execute


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdelab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=EXPERIMENTS)
    ap.add_argument("--config", metavar="PATH", help="flat key = value config file")
    ap.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                    dest="overrides", help="override a config key (repeatable)")
    ap.add_argument("--out", metavar="DIR", help="output directory (output.dir)")
    ap.add_argument("--seed", type=int, metavar="U64", help="noise seed (noise.seed)")
    ap.add_argument("--workers", type=int, metavar="INT",
                    help="worker threads; results do not depend on it")
    ap.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    extra = {"experiment": args.command, "output.dir": args.out, "noise.seed": args.seed,
             "run.workers": args.workers}
    try:
        raw = _file_and_overrides(args)
        raw.update({k: str(v) for k, v in extra.items() if v is not None})
        cfg = ExperimentConfig.from_raw(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(r):
        if not args.quiet:
            flag = "PASS" if r.passed else "FAIL"
            print(f"[{flag}] {r.name:<34} {r.kind:<11} observed={r.observed:.6g} "
                  f"bound: {r.bound}", flush=True)

    try:
        code, summary = execute(cfg, workers=cfg["run.workers"], progress=progress)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUp as exc:
        level = getattr(exc, "level", None)
        where = "" if level is None else f" at level/m {level}"
        print(f"blow-up{where}: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet and cfg["experiment"] != "verify":
        print(json.dumps(summary, indent=2, default=str))
    elif not args.quiet:
        print(f"hard failures: {summary['hard_failures'] or 'none'}; "
              f"statistical failures: {summary['statistical_failures'] or 'none'}")
    return code


def _file_and_overrides(args) -> dict:
    raw: dict[str, str] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw.update(parse_text(fh.read(), args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    raw.update(parse_overrides(args.overrides))
    return raw


if __name__ == "__main__":
    sys.exit(main())
