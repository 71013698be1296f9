"""``faircl`` command line: run experiment grids, export synthetic data, print reports."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import domain_counts, synth_generate, write_manifest
from .experiment.config import ConfigError, load_config, make_synth_config
from .experiment.report import ReportError, format_csv, format_text, load_records
from .experiment.runner import run_grid

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"faircl: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, out=args.out)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_USAGE
    if args.jobs < 1:
        _err("--jobs must be >= 1")
        return EXIT_USAGE
    result = run_grid(cfg, workers=args.jobs, force=args.force)
    ok = len(result.records) - result.failed
    print(f"{len(result.records)} cells: {ok} ok, {result.failed} failed, {result.new_runs} trained; "
          f"results in {cfg.output}")
    return EXIT_FAILED if result.failed else EXIT_OK


def _ratios(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None


def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        _err(f"{out} is not empty; use --force to overwrite")
        return EXIT_USAGE
    imbalance = args.imbalance
    if imbalance is None:
        imbalance = (0.8, 0.2) if args.domains == 2 else tuple([1.0 / args.domains] * args.domains)
    fields = {"mode": "image" if args.image else "vector", "task": args.task, "num_domains": args.domains,
              "num_classes": args.classes, "n_samples": args.n, "imbalance": imbalance, "shift": args.shift,
              "seed": args.seed}
    if args.dim is not None:
        fields["dim"] = args.dim
    if args.noise is not None:
        fields["noise"] = args.noise
    try:
        cfg = make_synth_config(fields)
    except (TypeError, ValueError) as exc:
        _err(f"invalid synthetic config: {exc}")
        return EXIT_USAGE
    samples = synth_generate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(samples, out / "manifest.csv")
    counts = domain_counts(samples)
    side = {"synth_config": cfg.to_dict(), "seed": cfg.seed, "counts": counts,
            "train_counts": domain_counts(samples, "train"), "test_counts": domain_counts(samples, "test")}
    (out / "synth.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for d in cfg.names:
        print(f"{d}: {counts[d]}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = load_records(args.runs)
    except ReportError as exc:
        _err(str(exc))
        return EXIT_USAGE
    sys.stdout.write(format_csv(records) if args.format == "csv" else format_text(records))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faircl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a method x augmentation x seed grid")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--force", action="store_true", help="retrain cached cells")
    r.add_argument("--out", default=None, help="output directory (overrides FAIRCL_OUT and the file)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic dataset as a manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--domains", type=int, default=2)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--imbalance", type=_ratios, default=None)
    s.add_argument("--shift", type=float, default=1.4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--image", action="store_true")
    s.add_argument("--dim", type=int, default=None)
    s.add_argument("--noise", type=float, default=None)
    s.add_argument("--task", choices=("expression", "au"), default="expression")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_synth)

    rep = sub.add_parser("report", help="print fairness and accuracy matrices")
    rep.add_argument("--runs", required=True)
    rep.add_argument("--format", choices=("text", "csv"), default="text")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
