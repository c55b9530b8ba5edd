"""Command-line entry point.

One subcommand per subsystem; every run is deterministic given --seed
(the MLLM_LAB_SEED environment variable overrides it) and embeds its
resolved configuration in the artifact it writes. Exit codes: 0 ok,
1 input/usage error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import random
import sys
from pathlib import Path

import numpy as np

from .corruption import (
    DEFAULT_DISTRIBUTION,
    emit_sample,
    load_annotations,
)
from .errors import InvariantViolation, MllmLabError
from .hybrid_rl import (
    ArithmeticTask,
    Mode,
    RewardBreakdown,
    TrainConfig,
    Verifier,
    default_answer_scorer,
    format_reward,
    grpo_advantages,
    repetition_penalty,
    rm_score,
    route_verifier,
    rule_reward,
    standardize,
    train_toy,
)
from .hybrid_rl.grpo import RolloutGroup
from .partitioner import (
    DEFAULT_MAX_SLICES,
    DEFAULT_TOKENS_PER_SLICE,
    ENCODER_SIDE,
    ImageGeometry,
    partition_score,
    select_partition,
    slice_image,
)
from .resampler3d import (
    ResamplerConfig,
    encode_video,
    grad_check_report,
    init_weights,
    resample_package,
)
from .tensorio import read_tensor, write_tensor
from .token_accountant import DEFAULT_PATCH_SIDE, compression_report
from .video_packer import FrameSamplingSpec, augment, pack, sample_frames

GRADCHECK_THRESHOLD = 1e-4


def _resolved_seed(args) -> int:
    env = os.environ.get("MLLM_LAB_SEED")
    if env is not None:
        return int(env)
    return args.seed


def _config_dict(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    if "seed" in cfg:
        cfg["seed"] = _resolved_seed(args)
    return cfg


def _emit(payload: dict, out_path: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _cmd_partition(args):
    if args.image:
        from PIL import Image

        with Image.open(args.image) as img:
            geometry = ImageGeometry(width=img.width, height=img.height)
            pixels = np.asarray(img.convert("RGB"))
    elif args.width and args.height:
        geometry = ImageGeometry(width=args.width, height=args.height)
        pixels = None
    else:
        raise MllmLabError("provide --image or both --width and --height")
    plan = select_partition(
        geometry,
        base=args.base,
        max_slices=args.max_slices,
        tokens_per_slice=args.queries,
    )
    expected_score = partition_score(
        geometry, plan.grid_cols, plan.grid_rows, base=args.base
    )
    if (
        plan.num_slices > args.max_slices
        or plan.tokens_per_slice != args.queries
        or not math.isclose(plan.score, expected_score, rel_tol=0, abs_tol=1e-12)
    ):
        raise InvariantViolation(f"inconsistent partition plan: {plan}")
    if args.slices_dir and pixels is not None:
        from PIL import Image

        out_dir = Path(args.slices_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, tile in enumerate(slice_image(pixels, plan)):
            Image.fromarray(tile).save(out_dir / f"slice_{i:03d}.png")
    _emit(
        {
            "grid": [plan.grid_cols, plan.grid_rows],
            "slice": [plan.slice_width, plan.slice_height],
            "tokens_total": plan.total_tokens,
            "score": plan.score,
            "config": _config_dict(args),
        },
        args.out,
    )


def _cmd_pack(args):
    seed = _resolved_seed(args)
    spec = FrameSamplingSpec(
        duration_s=args.duration,
        native_fps=args.fps,
        max_frames=args.max_frames,
        max_fps=args.max_fps,
    )
    package_size = args.package_size
    if args.augment:
        package_size, drawn_fps = augment(spec, seed)
        spec = dataclasses.replace(spec, max_fps=drawn_fps)
    timestamps = sample_frames(spec)
    packages = pack(len(timestamps), package_size, timestamps_s=timestamps)
    _emit(
        {
            "n_frames": len(timestamps),
            "packages": [list(p.frame_indices) for p in packages],
            "package_size": package_size,
            "fps": min(spec.native_fps, spec.max_fps),
            "config": _config_dict(args),
        },
        args.out,
    )


def _cmd_budget(args):
    report = compression_report(
        args.frames, args.package_size, args.queries, patch_side=args.patch_side
    )
    if report.our_tokens != math.ceil(args.frames / args.package_size) * args.queries:
        raise InvariantViolation(f"inconsistent token budget: {report}")
    payload = report.to_dict()
    payload["config"] = _config_dict(args)
    _emit(payload, args.out)


def _build_resampler_config(args, n_patches: int, feature_dim: int) -> ResamplerConfig:
    rows, cols = args.patch_rows, args.patch_cols
    if rows is None and cols is None:
        side = math.isqrt(n_patches)
        if side * side != n_patches:
            raise MllmLabError(
                f"{n_patches} patches per frame is not square; "
                "pass --patch-rows/--patch-cols"
            )
        rows = cols = side
    elif rows is None or cols is None:
        raise MllmLabError("pass both --patch-rows and --patch-cols or neither")
    return ResamplerConfig(
        feature_dim=feature_dim,
        model_dim=args.model_dim,
        patch_grid=(rows, cols),
        num_queries=args.queries,
        max_package=args.max_package,
    )


def _cmd_encode(args):
    seed = _resolved_seed(args)
    features = read_tensor(args.input)
    if features.ndim == 3:
        packages = [features]
    elif features.ndim == 4:
        p = features.shape[0]
        arr = features.to_numpy()
        from .numerics import DenseArray

        packages = [DenseArray(arr[i]) for i in range(p)]
    else:
        raise MllmLabError(
            f"expected (T, N, d_in) or (P, T, N, d_in) input, got {features.shape}"
        )
    cfg = _build_resampler_config(args, packages[0].shape[1], packages[0].shape[2])
    weights = init_weights(cfg, seed)
    if len(packages) == 1:
        tokens = resample_package(packages[0], 0, weights, cfg)
    else:
        tokens = encode_video(packages, weights, cfg)
    if tokens.shape != (len(packages) * cfg.num_queries, cfg.model_dim):
        raise InvariantViolation(f"unexpected token shape {tokens.shape}")
    write_tensor(args.output, tokens)
    _emit(
        {
            "input_shape": list(features.shape),
            "output_shape": list(tokens.shape),
            "output": args.output,
            "config": _config_dict(args),
        },
        args.out,
    )


def _cmd_gradcheck(args):
    seed = _resolved_seed(args)
    cfg = ResamplerConfig(
        feature_dim=3,
        model_dim=4,
        patch_grid=(2, 2),
        num_queries=2,
        max_package=3,
    )
    report = grad_check_report(cfg, seed=seed, eps=args.eps)
    worst = max(report.values())
    _emit(
        {
            "max_relative_error": worst,
            "per_parameter": report,
            "eps": args.eps,
            "threshold": GRADCHECK_THRESHOLD,
            "passed": worst < GRADCHECK_THRESHOLD,
            "config": _config_dict(args),
        },
        args.out,
    )
    if worst >= GRADCHECK_THRESHOLD:
        raise InvariantViolation(
            f"analytic gradients disagree with finite differences: {worst:.3e}"
        )


def _cmd_corrupt(args):
    from PIL import Image

    seed = _resolved_seed(args)
    distribution = {
        "low": args.p_low,
        "moderate": args.p_moderate,
        "high": args.p_high,
    }
    docs = load_annotations(args.annotations)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = random.Random(seed)
    lines = []
    for i, doc in enumerate(docs):
        doc_seed = master.getrandbits(32)
        with Image.open(doc.image_path) as img:
            pixels = np.asarray(img.convert("L" if img.mode == "L" else "RGB"))
        sample = emit_sample(
            pixels,
            doc.regions,
            doc_seed,
            distribution=distribution,
            target_fraction=args.fraction,
        )
        out_name = f"{i:05d}_{Path(doc.image_path).stem}.png"
        Image.fromarray(sample.image).save(out_dir / out_name)
        lines.append(
            {
                "image": doc.image_path,
                "output": out_name,
                "seed": doc_seed,
                "targets": [dataclasses.asdict(t) for t in sample.targets],
            }
        )
    with open(out_dir / "targets.jsonl", "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    (out_dir / "run_config.json").write_text(
        json.dumps(_config_dict(args), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _emit(
        {
            "documents": len(lines),
            "out_dir": str(out_dir),
            "config": _config_dict(args),
        },
        args.out,
    )


def _cmd_train_toy(args):
    seed = _resolved_seed(args)
    task = ArithmeticTask(seed=seed)
    cfg = TrainConfig(
        prompts_per_batch=args.prompts_per_batch,
        group_size=args.group_size,
        p_long=args.p_long,
        learning_rate=args.lr,
        temperature=args.temperature,
        seed=seed,
    )
    trace = train_toy(task, args.steps, cfg)
    header = f"# config: {json.dumps(_config_dict(args), sort_keys=True)}\n"
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            fh.write(header)
            trace.write_csv(fh)
    else:
        sys.stdout.write(header)
        trace.write_csv(sys.stdout)


def _cmd_rewards(args):
    if args.input:
        payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    else:
        payload = json.load(sys.stdin)
    mode = Mode(payload["mode"])
    reference = payload["reference"]
    responses = payload["responses"]
    verifier = route_verifier(reference)
    if verifier is Verifier.PROBABILITY:
        raise MllmLabError(
            "probability-routed references need a policy; this offline tool "
            "only scores rule-verifiable references"
        )
    rm_raws = [rm_score(r, default_answer_scorer, mode) for r in responses]
    rm_stds = standardize(rm_raws)
    breakdowns = [
        RewardBreakdown.build(
            r_acc=float(rule_reward(resp, reference)),
            r_format=format_reward(resp, mode),
            r_rep=repetition_penalty(resp),
            r_rm_raw=raw,
            r_rm_std=std,
        )
        for resp, raw, std in zip(responses, rm_raws, rm_stds)
    ]
    group = RolloutGroup(
        prompt_id=payload.get("prompt_id", 0),
        mode=mode,
        responses=responses,
        rewards=breakdowns,
    )
    _emit(
        {
            "verifier": verifier.value,
            "rewards": [dataclasses.asdict(rb) for rb in breakdowns],
            "advantages": grpo_advantages(group),
            "config": _config_dict(args),
        },
        args.out,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mllm-lab",
        description=(
            "Desk-scale multimodal efficiency lab: image partitioning, frame "
            "packing, token budgets, cross-attention resampling, document "
            "corruption sampling, and hybrid-mode GRPO on a toy task."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="plan a slice grid for an image")
    p.add_argument("--image", help="PNG/JPEG input; geometry read from the file")
    p.add_argument("--width", type=int, help="image width in pixels")
    p.add_argument("--height", type=int, help="image height in pixels")
    p.add_argument("--base", type=int, default=ENCODER_SIDE,
                   help="encoder pretraining side length (default 448)")
    p.add_argument("--max-slices", type=int, default=DEFAULT_MAX_SLICES)
    p.add_argument("--queries", type=int, default=DEFAULT_TOKENS_PER_SLICE,
                   help="tokens per slice (default 64)")
    p.add_argument("--slices-dir", help="also write the slice PNGs here")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_partition)

    p = sub.add_parser("pack", help="sample video frames and group them")
    p.add_argument("--duration", type=float, required=True, help="seconds")
    p.add_argument("--fps", type=float, required=True, help="native frame rate")
    p.add_argument("--max-frames", type=int, default=1080)
    p.add_argument("--max-fps", type=float, default=10.0)
    p.add_argument("--package-size", type=int, default=6)
    p.add_argument("--augment", action="store_true",
                   help="draw package size and fps randomly (seeded)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_pack)

    p = sub.add_parser("budget", help="token budget and compression report")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--package-size", type=int, required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--patch-side", type=int, default=DEFAULT_PATCH_SIDE)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_budget)

    p = sub.add_parser("encode", help="resample a feature tensor into tokens")
    p.add_argument("--input", required=True, help="tensor file (T,N,d) or (P,T,N,d)")
    p.add_argument("--output", required=True, help="token tensor file to write")
    p.add_argument("--queries", type=int, default=64)
    p.add_argument("--model-dim", type=int, default=64)
    p.add_argument("--max-package", type=int, default=6)
    p.add_argument("--patch-rows", type=int)
    p.add_argument("--patch-cols", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write summary JSON here instead of stdout")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("gradcheck",
                       help="verify analytic resampler gradients against "
                            "central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("corrupt", help="emit corrupted document samples")
    p.add_argument("--annotations", required=True, help="JSONL annotation file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.5,
                   help="fraction of regions to target (default 0.5)")
    p.add_argument("--p-low", type=float, default=DEFAULT_DISTRIBUTION["low"])
    p.add_argument("--p-moderate", type=float,
                   default=DEFAULT_DISTRIBUTION["moderate"])
    p.add_argument("--p-high", type=float, default=DEFAULT_DISTRIBUTION["high"])
    p.add_argument("--out", help="write summary JSON here instead of stdout")
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("train-toy", help="hybrid-mode GRPO on toy arithmetic")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--prompts-per-batch", type=int, default=16)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--p-long", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the CSV trace here instead of stdout")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("rewards",
                       help="score a response group (JSON in, JSON out)")
    p.add_argument("--input", help="JSON file; stdin when omitted. Expects "
                                   '{"mode", "reference", "responses": [...]}')
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_rewards)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MllmLabError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
