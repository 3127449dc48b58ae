"""Command-line entry points: train, eval, sr, ablate.

Exit codes: 0 success, 2 config errors, 3 data/checkpoint errors, 4 NaN
abort, 5 checkpoint/config mismatch. HIPA_THREADS caps BLAS parallelism and
must take effect before numpy loads, hence the lazy imports.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NAN = 4
EXIT_MISMATCH = 5

ABLATION_SUITES = {
    "patch": [("variable", {"hierarchy_mode": "variable"}),
              ("fixed", {"hierarchy_mode": "fixed"})],
    "ape": [("pe", {"ape_mode": "pe"}),
            ("cpe", {"ape_mode": "cpe"}),
            ("ape", {"ape_mode": "ape"})],
    "mrfag": [("rf1", {"branches": (1,)}),
              ("rf3", {"branches": (2,)}),
              ("rf5", {"branches": (3,)}),
              ("rf1_3", {"branches": (1, 2)}),
              ("rf1_5", {"branches": (1, 3)}),
              ("rf3_5", {"branches": (2, 3)}),
              ("rf1_3_5", {"branches": (1, 2, 3)})],
}


def _apply_thread_cap() -> None:
    cap = os.environ.get("HIPA_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hipa",
        description="Hierarchical-patch transformer for single image super resolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", required=True, help="config file path")
    p_train.add_argument("--data", required=True, help="training manifest path")
    p_train.add_argument("--steps", required=True, type=int)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None, help="override train.seed")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint or baseline")
    p_eval.add_argument("--ckpt", default=None, help="checkpoint path")
    p_eval.add_argument("--data", required=True, help="evaluation manifest path")
    p_eval.add_argument("--scale", required=True, type=int)
    p_eval.add_argument("--out", required=True, help="CSV report path")
    p_eval.add_argument("--baseline", choices=["bicubic"], default=None,
                        help="evaluate a baseline instead of a model")

    p_sr = sub.add_parser("sr", help="super-resolve one image")
    p_sr.add_argument("--ckpt", required=True)
    p_sr.add_argument("--in", dest="input", required=True, help="input PNG")
    p_sr.add_argument("--out", required=True, help="output PNG")
    p_sr.add_argument("--emit-stages", action="store_true",
                      help="also write the intermediate stage predictions")

    p_ab = sub.add_parser("ablate", help="train and compare config variants")
    p_ab.add_argument("--suite", required=True, choices=sorted(ABLATION_SUITES))
    p_ab.add_argument("--config", required=True)
    p_ab.add_argument("--data", required=True)
    p_ab.add_argument("--steps", required=True, type=int)
    p_ab.add_argument("--out", required=True, help="output directory")
    return parser


def cmd_train(args) -> int:
    from .config import load_config
    from .data import load_manifest
    from .train import load_checkpoint, train

    config = load_config(args.config)
    if args.seed is not None:
        config = _replace_validated(config, seed=args.seed)
    manifest = load_manifest(args.data, config.scale)
    resume = load_checkpoint(args.resume) if args.resume else None
    result = train(config, manifest, args.steps, args.out, resume=resume)
    print(f"final checkpoint: {result.checkpoint_path}", file=sys.stderr)
    print(f"training log: {result.log_path}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import SRDataset, load_manifest
    from .metrics import bicubic_predictor, evaluate
    from .train import load_checkpoint, model_from_checkpoint

    scale = args.scale
    if args.baseline == "bicubic":
        predict = bicubic_predictor(scale)
    else:
        if not args.ckpt:
            raise FileNotFoundError("eval needs --ckpt unless --baseline is given")
        ckpt = load_checkpoint(args.ckpt)
        if ckpt.config.scale != scale:
            from .errors import ConfigMismatch

            raise ConfigMismatch(
                f"checkpoint was trained at scale {ckpt.config.scale}, "
                f"--scale is {scale}"
            )
        model = model_from_checkpoint(ckpt)
        predict = lambda lr: model.super_resolve(lr)  # noqa: E731
    dataset = SRDataset(load_manifest(args.data, scale))
    report = evaluate(predict, dataset, scale)
    report.write_csv(args.out)
    print(f"mean PSNR: {report.mean_psnr:.4f} dB  mean SSIM: {report.mean_ssim:.6f}")
    return EXIT_OK


def cmd_sr(args) -> int:
    from .autodiff import Tensor
    from .data import load_png, save_png
    from .train import load_checkpoint, model_from_checkpoint

    ckpt = load_checkpoint(args.ckpt)
    model = model_from_checkpoint(ckpt)
    image = load_png(args.input)
    preds = model.super_resolve(Tensor(image.data[None]), all_stages=True)
    out_path = Path(args.out)
    if args.emit_stages:
        for i, pred in enumerate(preds[:2], start=1):
            stage_path = out_path.with_name(f"{out_path.stem}_stage{i}{out_path.suffix}")
            save_png(pred.data[0], stage_path)
    save_png(preds[-1].data[0], out_path)
    return EXIT_OK


def _replace_validated(config, **changes):
    from dataclasses import replace

    return replace(config, **changes).validate()


def cmd_ablate(args) -> int:
    from .data import SRDataset, load_manifest
    from .metrics import evaluate
    from .train import load_checkpoint, model_from_checkpoint, train

    from .config import load_config

    base = load_config(args.config)
    manifest = load_manifest(args.data, base.scale)
    dataset = SRDataset(manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = ["variant,mean_psnr,mean_ssim,params"]
    for name, overrides in ABLATION_SUITES[args.suite]:
        variant = _replace_validated(base, **overrides)
        print(f"[{args.suite}/{name}] seed={variant.seed} steps={args.steps}",
              file=sys.stderr)
        result = train(variant, dataset, args.steps, out_dir / name)
        ckpt = load_checkpoint(result.checkpoint_path)
        model = model_from_checkpoint(ckpt)
        report = evaluate(lambda lr: model.super_resolve(lr), dataset, base.scale)
        rows.append(
            f"{name},{report.mean_psnr:.4f},{report.mean_ssim:.6f},"
            f"{model.params.num_values()}"
        )
    csv_path = out_dir / "comparison.csv"
    tmp = csv_path.with_name(csv_path.name + ".tmp")
    tmp.write_text("\n".join(rows) + "\n", encoding="utf-8")
    tmp.replace(csv_path)
    print(f"comparison written to {csv_path}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)

    from .errors import (
        ConfigError,
        ConfigMismatch,
        CorruptCheckpoint,
        DataError,
        DecodeError,
        HipaError,
        InvalidSize,
        NanLossError,
        TooSmall,
        UnsupportedColorType,
    )

    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "sr": cmd_sr,
        "ablate": cmd_ablate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigMismatch as exc:
        print(f"config mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NanLossError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_NAN
    except (DataError, DecodeError, UnsupportedColorType, TooSmall, InvalidSize,
            CorruptCheckpoint, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HipaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
