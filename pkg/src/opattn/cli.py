"""Command-line entry point: synthesize, train, restore, evaluate, analyze.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every run prints its
resolved configuration before acting, and all randomness is pinned by seeds.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__

log = logging.getLogger("opattn")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exceptions (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> Parser:
    p = Parser(prog="opattn",
               description="Restore images with unknown combined distortions: "
                           "dataset synthesis, training, restoration, evaluation, "
                           "attention analysis.")
    p.add_argument("--version", action="version", version=f"opattn {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    sp = sub.add_parser("synth", parents=[], help="synthesize a distorted patch dataset",
                        description="Crop patches from clean images and apply a "
                                    "distortion protocol; writes clean/, distorted/ "
                                    "and manifest.csv.")
    sp.add_argument("--protocol", required=True,
                    choices=["div2k", "mixed", "novel-train", "novel-test"],
                    help="distortion protocol preset")
    sp.add_argument("--in", dest="input_dir", required=True, metavar="DIR",
                    help="directory of clean source images")
    sp.add_argument("--out", dest="output_dir", required=True, metavar="DIR",
                    help="output dataset directory")
    sp.add_argument("--count", type=int, default=4,
                    help="patches per source image (default: %(default)s)")
    sp.add_argument("--patch-size", type=int, default=63,
                    help="square patch size in pixels (default: %(default)s)")
    sp.add_argument("--seed", type=int, default=0,
                    help="master seed (default: %(default)s)")
    sp.add_argument("--severity", choices=["mild", "moderate", "severe"],
                    default="moderate",
                    help="severity class for the div2k protocol (default: %(default)s)")

    tp = sub.add_parser("train", help="train a model from a config file",
                        description="Config file format: flat key=value lines, "
                                    "'#' comments.")
    tp.add_argument("--config", required=True, metavar="FILE",
                    help="key=value training configuration file")
    tp.add_argument("--resume", metavar="CKPT", default=None,
                    help="checkpoint to continue from (default: fresh run)")

    rp = sub.add_parser("restore", help="restore a directory of images")
    rp.add_argument("--ckpt", required=True, metavar="FILE", help="trained checkpoint")
    rp.add_argument("--in", dest="input_dir", required=True, metavar="DIR",
                    help="directory of distorted images")
    rp.add_argument("--out", dest="output_dir", required=True, metavar="DIR",
                    help="directory for restored images")
    rp.add_argument("--attention-csv", metavar="FILE", default=None,
                    help="also export per-sample attention weights (default: off)")
    rp.add_argument("--tile-size", type=int, default=256,
                    help="max forward-pass tile edge (default: %(default)s)")
    rp.add_argument("--overlap", type=int, default=16,
                    help="tile overlap in pixels (default: %(default)s)")

    ep = sub.add_parser("eval", help="PSNR/SSIM report for restored vs reference")
    ep.add_argument("--restored", required=True, metavar="DIR",
                    help="directory of restored images")
    ep.add_argument("--reference", required=True, metavar="DIR",
                    help="directory of ground-truth images")
    ep.add_argument("--report", required=True, metavar="FILE", help="CSV report path")

    ap = sub.add_parser("analyze", help="attention-weight statistics per distortion tag",
                        description="Repeat --data/--tag per distortion type; with "
                                    "two or more tags, difference maps against the "
                                    "pooled mean are also written.")
    ap.add_argument("--ckpt", required=True, metavar="FILE", help="trained checkpoint")
    ap.add_argument("--data", action="append", required=True, metavar="DIR",
                    help="dataset directory (repeatable)")
    ap.add_argument("--tag", action="append", required=True, metavar="NAME",
                    help="distortion tag naming each --data (repeatable)")
    ap.add_argument("--out", required=True, metavar="FILE", help="stats CSV path")
    ap.add_argument("--diff-out", metavar="FILE", default=None,
                    help="difference-map CSV path (default: <out>.diff.csv)")
    return p


def _print_config(args: argparse.Namespace) -> None:
    print(f"[opattn {args.command}] resolved configuration:")
    for key in sorted(vars(args)):
        if key == "command":
            continue
        print(f"  {key} = {getattr(args, key)}")


def _run_synth(args) -> None:
    from .distortion import build_dataset
    rows = build_dataset(args.input_dir, args.output_dir, args.protocol, args.seed,
                         patches_per_image=args.count, patch_size=args.patch_size,
                         severity=args.severity)
    print(f"wrote {len(rows)} samples to {args.output_dir}")


def _run_train(args) -> None:
    from .training import load_train_config, train
    cfg = load_train_config(args.config)
    print("[opattn train] training configuration:")
    for key, value in sorted(vars(cfg).items()):
        print(f"  {key} = {value}")
    result = train(cfg, resume=args.resume)
    final_loss = result.rows[-1][2] if result.rows else float("nan")
    print(f"finished at step {len(result.rows)}; final loss {final_loss:.6f}; "
          f"checkpoint: {result.checkpoint_path}")


def _run_restore(args) -> None:
    from .training import restore_images
    written = restore_images(args.ckpt, args.input_dir, args.output_dir,
                             attention_csv=args.attention_csv,
                             tile_size=args.tile_size, overlap=args.overlap)
    print(f"restored {len(written)} images to {args.output_dir}")


def _run_eval(args) -> None:
    from .metrics import evaluate_pairs, write_report
    report = evaluate_pairs(args.restored, args.reference)
    write_report(report, args.report)
    print(f"evaluated {report.count} pairs ({len(report.errors)} errors); "
          f"mean PSNR {report.mean_psnr:.4f} dB, mean SSIM {report.mean_ssim:.6f}")
    print(f"report written to {args.report}")


def _run_analyze(args) -> None:
    from .analysis import collect_attention, diff_maps, export_diff_csv, export_stats_csv, stats
    if len(args.data) != len(args.tag):
        raise UsageError("--data and --tag must be given the same number of times")
    all_stats = []
    for directory, tag in zip(args.data, args.tag):
        records = collect_attention(args.ckpt, directory, tag)
        all_stats.append(stats(records, tag))
        print(f"tag {tag!r}: {all_stats[-1].count} samples, "
              f"{len(records)} attention records")
    export_stats_csv(all_stats, args.out)
    print(f"stats written to {args.out}")
    if len(all_stats) >= 2:
        diff_path = args.diff_out or f"{args.out}.diff.csv"
        export_diff_csv(diff_maps(all_stats), diff_path)
        print(f"difference maps written to {diff_path}")


_COMMANDS = {"synth": _run_synth, "train": _run_train, "restore": _run_restore,
             "eval": _run_eval, "analyze": _run_analyze}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        _print_config(args)
        _COMMANDS[args.command](args)
        return 0
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
