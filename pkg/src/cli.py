"""Command-line entry point.

    python -m src.cli <subcommand> [options]

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from src import device
from src.evalbench.evaluate import BICUBIC, evaluate
from src.evalbench.reports import write_report
from src.evalbench.studies import laplacian_study, run_ablation, run_dim_sweep
from src.imaging.image_io import list_pngs, load_png, save_png
from src.imaging.resample import bicubic_resize
from src.imaging.synthetic import DEFAULT_COUNT, DEFAULT_SIZE, make_dataset
from src.model.network import render
from src.training.checkpoint import load_checkpoint
from src.training.config import load_train_config, schema_summary
from src.training.trainer import default_log_path, train

logger = logging.getLogger("ultrasr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def scaled_dims(scale: float, h: int, w: int):
    """floor(scale * dims); the epsilon keeps 3.5 * 20 at 70 despite rounding."""
    return int(math.floor(scale * h + 1e-9)), int(math.floor(scale * w + 1e-9))


def _scale(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"scale must be a positive number, got {text!r}")
    return value


def _scale_list(text: str) -> List[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected a comma-separated list of scales")
    values = [_scale(p.strip()) for p in parts]
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"scales must be >= 1, got {text!r}")
    return values


def _int_list(text: str) -> List[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _out_size(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"output size must be >= 1x1, got {text!r}")
    return h, w


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker thread cap (default: ${device.THREADS_ENV} or CPU count)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="ultrasr", description="Desk-scale arbitrary-scale super-resolution.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="<command>")
    config_help = dict(epilog=schema_summary(), formatter_class=argparse.RawDescriptionHelpFormatter)

    p = sub.add_parser("train", parents=[common], help="train one model from a JSON config", **config_help)
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--log", default=None, help="JSON-lines training log (default: <out>.log.jsonl)")

    p = sub.add_parser("upscale", parents=[common], help="super-resolve one PNG",
                       description="Output dims are floor(scale * input dims) or exactly --out-size.")
    p.add_argument("--ckpt", required=True, help="checkpoint")
    p.add_argument("--input", required=True, help="input RGB PNG")
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--scale", type=_scale, help="real-valued upscaling factor")
    size.add_argument("--out-size", type=_out_size, help="explicit output size HxW")
    p.add_argument("--output", required=True, help="output PNG")

    p = sub.add_parser("eval", parents=[common], help="multi-scale PSNR evaluation")
    p.add_argument("--ckpt", default=None, help="checkpoint (not needed with --baseline)")
    p.add_argument("--dataset", required=True, help="directory of HR PNGs")
    p.add_argument("--scales", type=_scale_list, default=[2.0, 3.0, 4.0], help="comma-separated, e.g. 2,3,4")
    p.add_argument("--report", required=True, help="report JSON path (a .txt table is written next to it)")
    p.add_argument("--baseline", choices=[BICUBIC], default=None, help="skip the model, upsample bicubically")

    p = sub.add_parser("ablate", parents=[common], help="train and evaluate all 8 R/C/S combinations",
                       **config_help)
    p.add_argument("--config", required=True, help="base training config JSON")
    p.add_argument("--dataset", required=True, help="directory of HR PNGs")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--work-dir", default=None, help="checkpoint directory (default: <report stem>_runs)")

    p = sub.add_parser("dimsweep", parents=[common], help="encoding-dimension sweep over R+C models",
                       **config_help)
    p.add_argument("--config", required=True, help="base training config JSON")
    p.add_argument("--dims", type=_int_list, default=[12, 24, 48], help="comma-separated, multiples of 4")
    p.add_argument("--dataset", required=True, help="directory of HR PNGs")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--work-dir", default=None, help="checkpoint directory (default: <report stem>_runs)")

    p = sub.add_parser("lapstudy", parents=[common], help="Laplacian sharpness with vs without encoding")
    p.add_argument("--ckpt-s", required=True, help="checkpoint trained with the encoding")
    p.add_argument("--ckpt-nos", required=True, help="checkpoint trained without the encoding")
    p.add_argument("--dataset", required=True, help="directory of HR PNGs")
    p.add_argument("--scales", type=_scale_list, default=[2.0, 3.0, 4.0, 6.0, 12.0])
    p.add_argument("--report", required=True, help="report JSON path")

    p = sub.add_parser("make-dataset", parents=[common], help="write the seeded synthetic HR corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=_positive_int, default=DEFAULT_COUNT)
    p.add_argument("--size", type=_positive_int, default=DEFAULT_SIZE)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("make-lr", parents=[common], help="bicubic-downscale a directory of PNGs")
    p.add_argument("--input", required=True, help="directory of HR PNGs")
    p.add_argument("--scale", type=_scale, required=True, help="downscale factor >= 1")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _work_dir(args) -> Path:
    if args.work_dir:
        return Path(args.work_dir)
    report = Path(args.report)
    return report.with_name(report.stem + "_runs")


def cmd_train(args):
    cfg = load_train_config(args.config)
    out = train(cfg, args.out, log_path=args.log)
    print(f"[OK] checkpoint -> {out}")
    print(f"[OK] training log -> {args.log or default_log_path(out)}")


def cmd_upscale(args):
    params, cfg = load_checkpoint(args.ckpt)
    lr = load_png(args.input)
    h, w = lr.shape[:2]
    out_h, out_w = args.out_size if args.out_size else scaled_dims(args.scale, h, w)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"scale {args.scale} gives an empty {out_h}x{out_w} output for a {h}x{w} input")
    logger.info("upscaling %dx%d -> %dx%d on %s", h, w, out_h, out_w, device.name(args.threads))
    save_png(render(lr, out_h, out_w, params, cfg, threads=args.threads), args.output)
    print(f"[OK] {out_h}x{out_w} image -> {args.output}")


def cmd_eval(args, parser):
    if args.baseline is None and args.ckpt is None:
        parser.error("eval: --ckpt is required unless --baseline is given")
    report = evaluate(args.ckpt, args.dataset, args.scales, baseline=args.baseline, threads=args.threads)
    for path in write_report(report, args.report):
        print(f"[OK] report -> {path}")


def cmd_ablate(args):
    cfg = load_train_config(args.config)
    report = run_ablation(cfg, args.dataset, _work_dir(args), threads=args.threads)
    for path in write_report(report, args.report):
        print(f"[OK] report -> {path}")


def cmd_dimsweep(args):
    cfg = load_train_config(args.config)
    report = run_dim_sweep(cfg, args.dims, args.dataset, _work_dir(args), threads=args.threads)
    for path in write_report(report, args.report):
        print(f"[OK] report -> {path}")


def cmd_lapstudy(args):
    report = laplacian_study(args.ckpt_s, args.ckpt_nos, args.dataset, args.scales, threads=args.threads)
    for path in write_report(report, args.report):
        print(f"[OK] report -> {path}")


def cmd_make_dataset(args):
    paths = make_dataset(args.out, count=args.count, size=args.size, seed=args.seed)
    print(f"[OK] {len(paths)} images -> {args.out}")


def cmd_make_lr(args):
    if args.scale < 1:
        raise ValueError(f"make-lr: scale must be >= 1, got {args.scale}")
    paths = list_pngs(args.input)
    if not paths:
        raise FileNotFoundError(f"no PNG images in {args.input}")
    out_dir = Path(args.out)
    for path in paths:
        hr = load_png(path)
        h, w = hr.shape[:2]
        lr_h, lr_w = int(math.floor(h / args.scale + 1e-9)), int(math.floor(w / args.scale + 1e-9))
        if lr_h < 1 or lr_w < 1:
            raise ValueError(f"{path.name}: {h}x{w} is too small for x{args.scale}")
        save_png(bicubic_resize(hr, lr_h, lr_w), out_dir / path.name)
    print(f"[OK] {len(paths)} LR images (x{args.scale:g}) -> {out_dir}")


COMMANDS = {
    "train": cmd_train,
    "upscale": cmd_upscale,
    "ablate": cmd_ablate,
    "dimsweep": cmd_dimsweep,
    "lapstudy": cmd_lapstudy,
    "make-dataset": cmd_make_dataset,
    "make-lr": cmd_make_lr,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(levelname)s] %(message)s",
        force=True,
    )
    try:
        if args.command == "eval":
            cmd_eval(args, parser)
        else:
            COMMANDS[args.command](args)
    except UsageError:
        return 1
    except Exception as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        sys.stderr.write(f"[ERROR] {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
