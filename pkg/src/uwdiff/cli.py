"""Command-line entry point: synth, train-prompts, finetune, enhance, eval, verify.

Every subcommand prints its resolved configuration (defaults merged with the
config file and the --seed override) before doing any work, and obeys a fixed
exit-code contract: 0 success, 1 verification or training failure, 2 usage or
input errors. The output directory comes from --out or the UWDIFF_OUT
environment variable.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .config import RunConfig, load_config, resolve_text
from .denoiser import ConditionalDenoiser
from .errors import TrainingDivergedError, UwdiffError
from .imageio import load_image
from .images import RgbImage
from .jointnet import init_params, train_prompts
from .metrics import MetricReport, evaluate
from .pipeline import (
    enhance_directory,
    joint_context_from_checkpoint,
    load_model_checkpoint,
    pairs_from_manifest,
    save_model_checkpoint,
    save_prompts_checkpoint,
)
from .synthesis import synthesize_dataset
from .training import fine_tune
from .verification import run_all

ENV_OUT_DIR = "UWDIFF_OUT"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _resolve_out(args) -> str:
    out = args.out or os.environ.get(ENV_OUT_DIR)
    if not out:
        raise UwdiffError(f"no output directory: pass --out or set {ENV_OUT_DIR}")
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    print("# resolved configuration")
    print(resolve_text(config), end="")
    print(f"# seed in effect: {config.seed}")
    return config


def _labeled_dir(directory, label: int) -> list[tuple[RgbImage, int]]:
    names = sorted(
        n for n in os.listdir(os.fspath(directory)) if n.lower().endswith((".png", ".ppm"))
    )
    if not names:
        raise UwdiffError(f"no images (.png/.ppm) found in {os.fspath(directory)!r}")
    return [(load_image(os.path.join(os.fspath(directory), n)), label) for n in names]


def cmd_synth(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args)
    manifest = synthesize_dataset(
        args.clean,
        args.templates,
        out,
        seed=config.seed,
        method=config.synth_method,
        ranges=config.scatter_ranges(),
        warn=lambda msg: print(f"warning: {msg}", file=sys.stderr),
    )
    print(f"wrote {len(manifest.entries)} pairs ({len(manifest.skipped)} skipped)")
    print(os.path.join(out, "manifest.tsv"))
    return EXIT_OK


def cmd_train_prompts(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args)
    dataset = _labeled_dir(args.natural, 1) + _labeled_dir(args.underwater, 0)
    params = init_params(config.classifier(), config.seed)
    result = train_prompts(dataset, params, config.prompt_training())
    ckpt_path = os.path.join(out, "prompts.ckpt")
    save_prompts_checkpoint(ckpt_path, params, result.prompt_natural, result.prompt_underwater, config)
    log_path = os.path.join(out, "prompts.log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch\tloss\n")
        for epoch, loss in enumerate(result.losses, start=1):
            fh.write(f"{epoch}\t{loss:.12e}\n")
    print(
        f"trained {len(result.losses)} epochs on {result.train_count} samples; "
        f"held-out accuracy {result.holdout_accuracy:.3f} on {result.holdout_count}; "
        f"loss trend monotone: {result.trend_monotone}"
    )
    print(ckpt_path)
    return EXIT_OK


def cmd_finetune(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args)
    pairs = pairs_from_manifest(args.manifest)
    model = ConditionalDenoiser(width=config.denoiser_width, seed=config.seed)
    context = None
    if args.prompts:
        context = joint_context_from_checkpoint(args.prompts, config.grad2_source)
    guidance = config.guidance()
    weights = config.loss_weights()
    if weights.lambda2 > 0 and context is None:
        print("note: no prompts checkpoint given; disabling the semantic loss term")
        weights = type(weights)(lambda1=weights.lambda1, lambda2=0.0)
    result = fine_tune(
        model,
        pairs,
        config.schedule(),
        weights=weights,
        optimizer=config.optimizer(),
        guidance=guidance if context is not None else None,
        context=context,
        embed_source=config.embed_source,
        t_range=(config.train_t_min, config.schedule_steps),
        augmentation=config.augmentation(),
    )
    ckpt_path = os.path.join(out, "model.ckpt")
    save_model_checkpoint(ckpt_path, model, config)
    log_path = os.path.join(out, "training.log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.log_text())
    print(f"fine-tuned {len(result.log)} steps on {len(pairs)} pairs")
    print(ckpt_path)
    return EXIT_OK


def cmd_enhance(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args)
    model, model_config = load_model_checkpoint(args.model)
    context = None
    if args.prompts:
        context = joint_context_from_checkpoint(args.prompts, config.grad2_source)
    written = enhance_directory(
        args.input,
        out,
        model,
        config.schedule(),
        seed=config.seed,
        guidance=config.guidance() if context is not None else None,
        context=context,
        variance=config.reverse_variance,
        progress=print,
    )
    print(f"enhanced {len(written)} images into {out}")
    return EXIT_OK


def _format_cell(value: float | None) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def _metric_columns(config: RunConfig, with_reference: bool) -> list[str]:
    columns = []
    if with_reference and config.metric_psnr:
        columns.append("psnr")
    if with_reference and config.metric_ssim:
        columns.append("ssim")
    if config.metric_uiqm:
        columns.append("uiqm")
    if config.metric_uciqe:
        columns.append("uciqe")
    if config.metric_cpbd:
        columns.append("cpbd")
    return columns


def cmd_eval(args) -> int:
    config = _load_config(args)
    out = _resolve_out(args)
    names = sorted(
        n for n in os.listdir(os.fspath(args.enhanced)) if n.lower().endswith((".png", ".ppm"))
    )
    if not names:
        raise UwdiffError(f"no images (.png/.ppm) found in {args.enhanced!r}")
    columns = _metric_columns(config, args.reference is not None)
    rows: list[tuple[str, MetricReport]] = []
    for name in names:
        img = load_image(os.path.join(args.enhanced, name))
        reference = None
        if args.reference is not None:
            stem = os.path.splitext(name)[0]
            candidates = [
                os.path.join(args.reference, stem + ext) for ext in (".png", ".ppm")
            ]
            ref_path = next((p for p in candidates if os.path.exists(p)), None)
            if ref_path is None:
                raise UwdiffError(f"reference image missing for {name!r}")
            reference = load_image(ref_path)
        rows.append((name, evaluate(img, reference, include=columns)))

    header = ["image"] + [c.upper() for c in columns]
    table = [header]
    for name, report in rows:
        table.append([name] + [_format_cell(getattr(report, c)) for c in columns])
    means = []
    for c in columns:
        values = [getattr(report, c) for _, report in rows]
        means.append(sum(values) / len(values))
    table.append(["mean"] + [_format_cell(v) for v in means])

    text = "\n".join("\t".join(row) for row in table) + "\n"
    text_path = os.path.join(out, "metrics.tsv")
    with open(text_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(text, end="")
    if config.markdown_table:
        md_lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for row in table[1:]:
            md_lines.append("| " + " | ".join(row) + " |")
        md_path = os.path.join(out, "metrics.md")
        with open(md_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(md_lines) + "\n")
        print(md_path)
    print(text_path)
    return EXIT_OK


def cmd_verify(args) -> int:
    config = _load_config(args)
    results = run_all(seed=config.seed, sched=config.schedule())
    failed = 0
    for result in results:
        status = "pass" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        failed += 0 if result.passed else 1
    if failed:
        print(f"{failed}/{len(results)} checks failed")
        return EXIT_FAILURE
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwdiff",
        description="Underwater image enhancement toolkit (synthesis, guided diffusion, metrics).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_out: bool = True):
        p.add_argument("--config", default=None, help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if needs_out:
            p.add_argument("--out", default=None, help=f"output directory (or ${ENV_OUT_DIR})")

    p = sub.add_parser("synth", help="synthesize a paired degraded/clean dataset")
    common(p)
    p.add_argument("--clean", required=True, help="directory of clean in-air images")
    p.add_argument("--templates", required=True, help="directory of underwater template images")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-prompts", help="train the two prompt tensors")
    common(p)
    p.add_argument("--natural", required=True, help="directory of in-air natural images")
    p.add_argument("--underwater", required=True, help="directory of underwater images")
    p.set_defaults(func=cmd_train_prompts)

    p = sub.add_parser("finetune", help="fine-tune the conditional denoiser on a manifest")
    common(p)
    p.add_argument("--manifest", required=True, help="dataset manifest from `synth`")
    p.add_argument("--prompts", default=None, help="prompts checkpoint from `train-prompts`")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("enhance", help="run guided reverse sampling over degraded images")
    common(p)
    p.add_argument("--input", required=True, help="directory of degraded images")
    p.add_argument("--model", required=True, help="model checkpoint from `finetune`")
    p.add_argument("--prompts", default=None, help="prompts checkpoint enabling guidance")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="compute the metric table for a directory of images")
    common(p)
    p.add_argument("--enhanced", required=True, help="directory of images to score")
    p.add_argument("--reference", default=None, help="directory of reference images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the analytic-oracle verification suite")
    common(p, needs_out=False)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (UwdiffError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
