"""Command-line entry point: ``ovaib {verify,gradcheck,train,eval,ablate}``.

Reports go to stdout as JSON. Exit status is 0 on success, 1 when a check
fails or a run diverges, 2 on usage or configuration errors. Every nonzero
exit prints a JSON failure record to stderr (and writes ``failure.json``
under ``--out`` when given).
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import gradcheck, runs, verify
from .checkpoint import read_tensors
from .config import DEFAULT_SEEDS, RunConfig, load_config
from .errors import ConfigError, DivergenceError, OvaibError, ShapeError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=float)


def _emit(report, out=None, name="report.json", stream=None):
    text = _dump(report)
    print(text, file=stream or sys.stdout)
    if out is not None:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text + "\n")


def _fail(code, kind, message, out=None, **extra):
    record = {"ok": False, "exit_code": code, "error": kind, "message": message, **extra}
    _emit(record, out, "failure.json", sys.stderr)
    return code


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


# ------------------------------------------------------------- subcommands


def cmd_verify(args):
    ms = tuple(args.m) if args.m else verify.DEFAULT_MS
    if min(ms) < 2:
        raise UsageError("--m values must be >= 2")
    report = verify.run_checks(args.scope, ms, args.count)
    _emit(report, args.out, "verify.json")
    if report["ok"]:
        return EXIT_OK
    failing = [c["name"] for c in report["checks"] if c["failures"]]
    first = next(c["failures"][0] for c in report["checks"] if c["failures"])
    return _fail(EXIT_FAIL, "check_failure", f"failing checks: {', '.join(failing)}",
                 args.out, checks=failing, first_failure=first)


def cmd_gradcheck(args):
    cfg = _config(args)
    base = replace(cfg.loss, tau=cfg.gradcheck_tau)
    report = gradcheck.run_gradchecks(base, gradcheck.SHAPES)
    _emit(report, args.out, "gradcheck.json")
    if report["ok"]:
        return EXIT_OK
    return _fail(EXIT_FAIL, "gradient_mismatch", f"{len(report['failures'])} gradient checks failed",
                 args.out, failures=report["failures"])


def cmd_train(args):
    cfg = _config(args)
    out = args.out or cfg.out_dir
    try:
        summary = runs.run_train(cfg, out)
    except DivergenceError as exc:
        return _fail(EXIT_FAIL, "divergence", str(exc), out, step=exc.step)
    _emit({"ok": True, "out": str(out), **summary})
    return EXIT_OK


def cmd_eval(args):
    checkpoint = args.checkpoint
    if checkpoint is None and not args.untrained:
        base = args.out or (load_config(args.config).out_dir if args.config else None)
        if base is None:
            raise UsageError("eval needs --checkpoint, --out holding checkpoint.bin, or --untrained")
        checkpoint = Path(base) / "checkpoint.bin"
    if args.config is None and checkpoint is not None:
        stored = read_tensors(checkpoint)[1]["meta"].get("config")
        if stored is None:
            raise ConfigError("checkpoint carries no config; pass --config")
        cfg = RunConfig.from_dict(stored)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    else:
        cfg = _config(args)
    records = runs.run_eval(cfg, checkpoint, args.out, untrained=args.untrained)
    for rec in records:
        print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else (args.seeds or list(DEFAULT_SEEDS))
    out = args.out or str(Path(cfg.out_dir) / "ablation")
    summary = runs.run_ablation(cfg, out, seeds, workers=args.workers)
    _emit({"ok": True, "out": out, **summary})
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="RunConfig JSON (defaults when omitted)")
    common.add_argument("--seed", type=int, metavar="N", help="override run and data seed")
    common.add_argument("--out", metavar="DIR", help="output directory")

    parser = _Parser(prog="ovaib", description="One-vs-all information bottleneck toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", parents=[common], help="run the information-theory sweeps")
    p.add_argument("--scope", choices=("oracle", "losses", "all"), default="all")
    p.add_argument("--m", type=int, nargs="+", metavar="M", help="modality counts for the joint sweeps")
    p.add_argument("--count", type=int, default=200, help="random joints per modality count")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check every loss variant")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", parents=[common], help="train encoders and write metrics + checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="retrieval, subset probes and nuisance probes")
    p.add_argument("--checkpoint", metavar="PATH", help="checkpoint (default: OUT/checkpoint.bin)")
    p.add_argument("--untrained", action="store_true", help="evaluate freshly initialized encoders")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="beta x projector grid over seeds")
    p.add_argument("--seeds", type=int, nargs="+", metavar="N")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    out = None
    try:
        args = build_parser().parse_args(argv)
        out = getattr(args, "out", None)
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc), out)
    except (ConfigError, ShapeError) as exc:
        return _fail(EXIT_USAGE, "config", str(exc), out)
    except DivergenceError as exc:
        return _fail(EXIT_FAIL, "divergence", str(exc), out, step=exc.step)
    except OvaibError as exc:
        return _fail(EXIT_FAIL, type(exc).__name__, str(exc), out)
    except OSError as exc:
        return _fail(EXIT_USAGE, "io", str(exc), out)


if __name__ == "__main__":
    sys.exit(main())
