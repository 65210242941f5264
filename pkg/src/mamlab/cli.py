"""Command-line entry point.

Subcommands: synth, pretrain, finetune, eval, sweep, gradcheck. Options can
come from a key=value config file (--config) with flags overriding. Exit
codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, FormatError, InputError, MamlabError, NumericError
from .train import (
    RunConfig,
    build_run_config,
    evaluate_checkpoint,
    finetune,
    parse_config_file,
    pretrain,
    run_ablation_sweep,
)

log = logging.getLogger("mamlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--mode", help="mam | mam-clap | supmam | supmam-clap")
    parser.add_argument("--mask-ratio", type=float, dest="mask_ratio")
    parser.add_argument("--lambda-cls", type=float, dest="lambda_cls")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--teacher", help="frozen-random or file:<path>")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--eval-every", type=int, dest="eval_every")
    parser.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    parser.add_argument("--data", help="dataset directory (overrides config 'dataset')")
    parser.add_argument("--out", help="output directory")


def _collect_options(args: argparse.Namespace) -> dict[str, str]:
    options: dict[str, str] = {}
    if getattr(args, "config", None):
        options.update(parse_config_file(args.config))
    overrides = {
        "mode": args.mode, "mask_ratio": args.mask_ratio, "lambda_cls": args.lambda_cls,
        "tau": args.tau, "teacher": args.teacher, "seed": args.seed, "steps": args.steps,
        "batch_size": args.batch_size, "lr": args.lr, "eval_every": args.eval_every,
        "checkpoint_every": args.checkpoint_every, "dataset": args.data, "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            options[key] = str(value)
    return options


def _run_config_from(args: argparse.Namespace) -> RunConfig:
    cfg = build_run_config(_collect_options(args))
    if not cfg.dataset_dir:
        raise ConfigError("no dataset directory given (--data or config 'dataset')")
    if not cfg.out_dir:
        raise ConfigError("no output directory given (--out or config 'out')")
    return cfg


def _cmd_synth(args) -> int:
    from .data import SynthDatasetSpec, generate_synth_dataset
    spec = SynthDatasetSpec(num_classes=args.classes, clips_per_class=args.clips_per_class,
                            clip_seconds=args.seconds, label_mode=args.label_mode,
                            seed=args.seed)
    manifest = generate_synth_dataset(spec, args.out)
    print(f"wrote {spec.num_classes * spec.clips_per_class} clips; manifest at {manifest}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    cfg = _run_config_from(args)
    ckpt, report = pretrain(cfg, resume_from=args.resume)
    print(f"checkpoint: {ckpt}")
    print(f"total loss: {report.first_total:.6f} -> {report.last_total:.6f} "
          f"({report.wall_clock:.1f}s, gamma {report.realized_gamma:.3f})")
    return EXIT_OK


def _cmd_finetune(args) -> int:
    cfg = _run_config_from(args)
    ckpt, report = finetune(cfg, init_checkpoint=args.init)
    metric = report.final.get("acc")
    name = "accuracy"
    if metric is None:
        metric, name = report.final.get("map"), "mAP"
    print(f"checkpoint: {ckpt}")
    print(f"eval {name}: {metric}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    report = evaluate_checkpoint(args.ckpt, args.data, split=args.split)
    for key in ("acc", "map"):
        if report.final.get(key) is not None:
            print(f"{key}: {report.final[key]}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _run_config_from(args)
    values = [v for v in args.values.split(",") if v]
    table, _ = run_ablation_sweep(cfg, args.axis, values)
    print(f"sweep table: {table}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .validation import gradient_suite
    results = gradient_suite(deep=args.full)
    failed = False
    for name, err, tolerance in results:
        status = "ok" if err < tolerance else "FAIL"
        failed = failed or err >= tolerance
        print(f"{status:4s} {name:40s} max rel err {err:.3e} (tol {tolerance:g})")
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mamlab",
                                     description="Masked audio modeling lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--clips-per-class", type=int, default=50, dest="clips_per_class")
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--label-mode", choices=["single", "multi"], default="single",
                   dest="label_mode")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("pretrain", help="run a pretraining job")
    _add_run_flags(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=_cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune (from a checkpoint or scratch)")
    _add_run_flags(p)
    p.add_argument("--init", help="pretrained checkpoint (omit to train from scratch)")
    p.set_defaults(fn=_cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["eval", "train"], default="eval")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="ablation sweep over one axis")
    _add_run_flags(p)
    p.add_argument("--axis", required=True,
                   choices=["mask_ratio", "decoder_layers", "lambda_cls", "objectives"])
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="run the gradient verification suite")
    p.add_argument("--full", action="store_true",
                   help="include the end-to-end objective check (slower)")
    p.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError,) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InputError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except MamlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
