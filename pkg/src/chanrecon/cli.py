"""Command-line interface.

Verbs: ingest, train-diffusion, featurize, train-detector, eval, robustness,
visualize, run, audit. Each consumes a YAML run config; a handful of flags
mirror the most-used config fields and override the file when given.

Exit codes: 0 success, 2 config error, 3 data error, 4 training error,
5 evaluation error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import RunConfig, load_config
from .errors import ChanreconError, ConfigError
from .pipeline import audit, run_experiment

STAGE_VERBS = {
    "ingest": "ingest",
    "train-diffusion": "train-diffusion",
    "featurize": "featurize",
    "train-detector": "train-detector",
}
FULL_VERBS = ("eval", "robustness", "visualize", "run")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="YAML run config file")
    parser.add_argument("--out-dir", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--data-root", help="dataset root for manifest datasets")
    parser.add_argument("--channels", help="comma-separated channels, e.g. G,R,B")
    parser.add_argument("--resolution", type=int, help="square image resolution")
    parser.add_argument("--t-star", type=int, dest="t_star",
                        help="reverse-chain entry step")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. denoiser.epochs=5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chanrecon",
        description="Channel-removal reconstruction-error detection pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, doc in [
        ("ingest", "materialize/scan the dataset and write the manifest"),
        ("train-diffusion", "train (or reuse) the reconstruction denoiser"),
        ("featurize", "populate the error-map cache for all splits"),
        ("train-detector", "train (or reuse) the per-channel classifiers"),
        ("eval", "evaluate and write the report"),
        ("robustness", "evaluate including the perturbation sweep"),
        ("visualize", "regenerate the report and the residual grid"),
        ("run", "full pipeline end to end"),
    ]:
        p = sub.add_parser(verb, help=doc)
        _add_common(p)
    p = sub.add_parser("audit", help="verify no orphan artifacts exist")
    p.add_argument("--out-dir", required=True)
    return parser


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _apply_override(cfg: RunConfig, dotted: str) -> None:
    if "=" not in dotted:
        raise ConfigError(f"--set expects KEY=VALUE, got {dotted!r}")
    key, value = dotted.split("=", 1)
    target = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ConfigError(f"unknown config section {part!r} in {key!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config key {key!r}")
    if "," in value or isinstance(getattr(target, leaf), tuple):
        setattr(target, leaf, tuple(_parse_scalar(v) for v in value.split(",") if v))
    else:
        setattr(target, leaf, _parse_scalar(value))


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.data_root:
        cfg.data.root = args.data_root
        cfg.data.kind = "manifest"
    if args.channels:
        cfg.channels = tuple(c.strip().upper() for c in args.channels.split(",") if c.strip())
    if args.resolution is not None:
        cfg.resolution = args.resolution
    if args.t_star is not None:
        cfg.t_star = args.t_star
    for dotted in args.set:
        _apply_override(cfg, dotted)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.verb == "audit":
            orphans = audit(args.out_dir)
            if orphans:
                print("orphan artifacts:", file=sys.stderr)
                for path in orphans:
                    print(f"  {path}", file=sys.stderr)
                return 5
            print("audit clean: every artifact is reachable from the report")
            return 0
        cfg = _resolve_config(args)
        if args.verb in STAGE_VERBS:
            run_experiment(cfg, until=STAGE_VERBS[args.verb])
            return 0
        if args.verb == "robustness":
            cfg.robustness.enabled = True
        report, paths = run_experiment(cfg)
        print(report.render_text())
        print(f"report: {paths.report_json}")
        return 0
    except ChanreconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
