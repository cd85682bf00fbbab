"""Command-line entry point: ``arcapacity <command> [--config PATH] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .pipeline import (
    STAGES,
    ConfigError,
    PipelineConfig,
    StageError,
    SyntheticSpec,
    run_pipeline,
    summary_lines,
    synthesize_dataset,
)
from .verify import VerifySettings, run_suites

ENV_OUT = "ARCAPACITY_OUT"
ENV_THREADS = "ARCAPACITY_THREADS"

# command -> (default first stage, last stage)
_STAGE_SPANS = {
    "pipeline": ("ingest", "bounds"),
    "fit-ar": ("ingest", "enroll"),
    "distances": ("ingest", "distances"),
    "fit-imposter": ("ingest", "fit"),
    "bounds": ("bounds", "bounds"),
}


def _load_config(args) -> tuple[PipelineConfig, dict]:
    raw: dict = {}
    base = Path.cwd()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        base = path.parent
    verify = raw.pop("verify", {})
    cfg = PipelineConfig.from_dict(raw, base)
    if os.environ.get(ENV_OUT):
        cfg.out = Path(os.environ[ENV_OUT])
    if os.environ.get(ENV_THREADS):
        cfg.threads = int(os.environ[ENV_THREADS])
    if args.out is not None:
        cfg.out = Path(args.out)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    return cfg, verify


def cmd_synth(args) -> int:
    cfg, _ = _load_config(args)
    spec = cfg.synthetic or SyntheticSpec()
    for name in ("classes", "order", "samples_per_class", "vector_length"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(spec, name, value)
    spec.validate()
    out = Path(cfg.out) / "synth"
    pop, manifest = synthesize_dataset(spec, cfg.seed, cfg.split_fraction, out)
    print(f"wrote {pop.M} classes x {spec.samples_per_class} vectors to {out}")
    return 0


def cmd_stages(args) -> int:
    cfg, _ = _load_config(args)
    start, stop = _STAGE_SPANS[args.command]
    if args.command == "bounds" and cfg.fit_overrides:
        start = "bounds"
    if args.stage:
        start = args.stage
    run_pipeline(cfg, start, stop)
    for line in summary_lines(Path(cfg.out)):
        print(line)
    return 0


def cmd_verify(args) -> int:
    cfg, raw = _load_config(args)
    settings = VerifySettings.from_dict(raw)
    if args.seed is not None:
        settings.seed = args.seed
    settings.workers = cfg.threads
    report = run_suites(settings)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "verify.json", report)
    for suite in report["suites"]:
        print(f"{suite['name']:<20} {suite['status']}")
    print("verify:", "PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


def cmd_report(args) -> int:
    cfg, _ = _load_config(args)
    lines = summary_lines(Path(cfg.out))
    if not lines:
        print(f"no artifacts in {cfg.out}", file=sys.stderr)
        return 1
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcapacity", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON pipeline config")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        return p

    synth = common(sub.add_parser("synth", help="write a synthetic AR population"))
    synth.add_argument("--classes", type=int)
    synth.add_argument("--order", type=int)
    synth.add_argument("--samples-per-class", dest="samples_per_class", type=int)
    synth.add_argument("--vector-length", dest="vector_length", type=int)
    synth.set_defaults(func=cmd_synth)

    helps = {
        "pipeline": "run every stage from vectors to bounds",
        "fit-ar": "order selection, Burg spectra and enrollment templates",
        "distances": "pairwise log-likelihood and relative-entropy scores",
        "fit-imposter": "fit imposter histograms",
        "bounds": "sphere-packing and Daugman-like bounds",
    }
    for name, text in helps.items():
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--stage", choices=STAGES, help="resume from this stage")
        p.set_defaults(func=cmd_stages)

    common(sub.add_parser("verify", help="Monte Carlo self-checks")).set_defaults(func=cmd_verify)
    common(sub.add_parser("report", help="summarize an output directory")).set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: stage {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
