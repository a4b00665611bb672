"""Command-line surface.

Subcommands: edit, mask, eval, gen-synthetic, dump-schedule. Every run
writes a machine-readable JSON record next to its human-readable output.
Exit codes: 0 success, 1 usage or validation error, 2 partial evaluation
failure, 3 IO failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import evalkit, fileio, maskgen, synthetic
from .attention import TokenSequence, aggregate_rounds, read_attention_dump
from .editor import EditConfig, OracleBackend, edit
from .maskgen import MaskGenConfig
from .numerics import GaussianParams, resize_nearest
from .schedule import build_schedule, encode_image

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class PartialFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map to 1
        raise UsageError(message)


def _mask_config(args) -> MaskGenConfig:
    return MaskGenConfig(
        gamma1=args.gamma1, gamma2=args.gamma2, phi=args.phi,
        gaussian=GaussianParams(sigma=args.sigma, radius=args.radius))


def _add_mask_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=float, default=0.2,
                   help="mask binarization threshold")
    p.add_argument("--gamma1", type=float, default=0.9,
                   help="upper similarity threshold (+1 weight above)")
    p.add_argument("--gamma2", type=float, default=0.6,
                   help="lower similarity threshold (-1 weight below)")
    p.add_argument("--sigma", type=float, default=0.5,
                   help="smoothing sigma in cells")
    p.add_argument("--radius", type=int, default=2,
                   help="smoothing kernel half-width")


def build_parser() -> _Parser:
    parser = _Parser(prog="instmask",
                     description="Attention-derived instant-mask image editing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edit", parents=[], help="edit one image")
    p.add_argument("--image", required=True, help="input RGB PNG")
    p.add_argument("--tokens", required=True,
                   help="edit prompt, whitespace separated")
    p.add_argument("--strength", "-r", type=float, default=0.5,
                   help="noise strength in [0, 1]")
    _add_mask_flags(p)
    p.add_argument("--steps", type=int, default=50, help="inference steps")
    p.add_argument("--scale", type=float, default=7.5, help="guidance scale")
    p.add_argument("--rounds", type=int, default=3,
                   help="parallel denoising rounds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("synthetic", "oracle"),
                   default="oracle")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("mask", help="mask from an attention dump")
    p.add_argument("--dump", required=True, help="ATNS attention dump")
    _add_mask_flags(p)
    p.add_argument("--upsample", type=int, default=32,
                   help="side of the upsampled mask PNG")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="evaluate edit outputs against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outputs", required=True,
                   help="directory of per-sample edit outputs")
    p.add_argument("--report", default=None,
                   help="report JSON path (default <outputs>/report.json)")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("dump-schedule", help="emit the noise schedule as JSON")
    p.add_argument("--timesteps", "-T", type=int, default=1000, dest="T")
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", default=None, help="output path (stdout if absent)")

    return parser


def run_edit(args) -> int:
    try:
        cfg = EditConfig(strength=args.strength, steps=args.steps,
                         cfg_scale=args.scale, rounds=args.rounds,
                         maskgen=_mask_config(args), seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    image = fileio.load_rgb_png(args.image)
    tokens = TokenSequence.from_text(args.tokens)
    schedule = build_schedule(steps=cfg.steps)
    if args.backend == "synthetic":
        backend = synthetic.SyntheticBackend.from_files(args.image, schedule)
    else:
        backend = OracleBackend(encode_image(image), schedule,
                                n_content_tokens=tokens.n_content)

    session = edit(image, tokens, cfg, backend, schedule)

    out = Path(args.out_dir)
    h, w = image.shape[:2]
    mask_px = resize_nearest(session.final_mask.grid, h, w) * 255
    fileio.save_rgb_png(out / "output.png", session.output_image)
    fileio.save_gray_png(out / "final_mask.png", mask_px)
    record = session.to_json_dict()
    record["outputs"] = {"image": "output.png", "mask": "final_mask.png"}
    fileio.write_json(out / "session.json", record)
    fileio.write_json(out / "timings.json", session.timings)
    print(f"edited {args.image}: mask area "
          f"{session.final_mask.area_ratio:.3f}, outputs in {out}")
    return EXIT_OK


def run_mask(args) -> int:
    try:
        cfg = _mask_config(args)
        if args.upsample < 16:
            raise ValueError("--upsample must be >= 16")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    stacks, _words = read_attention_dump(args.dump)
    stack = aggregate_rounds(stacks)
    idx = maskgen.index_token(stack)
    sims = maskgen.similarity_vector(stack, idx)
    p = maskgen.position_vector(sims, cfg, computed_at=stack.timestep)
    mask = maskgen.make_mask(maskgen.refine(stack, p), cfg)

    out = Path(args.out_dir)
    fileio.save_gray_png(out / "mask16.png", mask.grid * 255)
    fileio.save_gray_png(out / "mask_upsampled.png",
                         mask.resize(args.upsample, args.upsample).grid * 255)
    fileio.write_json(out / "mask.json", {
        "index_token": idx,
        "S": [float(v) for v in sims.values],
        "P": [int(v) for v in p.values],
        "phi": cfg.phi,
        "area_ratio": mask.area_ratio,
    })
    print(f"mask from {args.dump}: index token {idx}, "
          f"area {mask.area_ratio:.3f}, outputs in {out}")
    return EXIT_OK


def run_eval(args) -> int:
    t0 = time.perf_counter()
    manifest = evalkit.Manifest.load(args.manifest)
    try:
        report = evalkit.evaluate_corpus(manifest, args.outputs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report_path = Path(args.report) if args.report else (
        Path(args.outputs) / "report.json")
    fileio.write_json(report_path, report.to_json_dict(
        config={"manifest": str(args.manifest), "outputs": str(args.outputs)}))
    fileio.write_json(Path(str(report_path) + ".timings.json"),
                      {"eval_s": time.perf_counter() - t0})
    print(evalkit.format_summary(report))
    print(f"report written to {report_path}")
    if report.error_count:
        raise PartialFailure(
            f"{report.error_count} of {len(report.per_sample)} samples failed")
    return EXIT_OK


def run_gen_synthetic(args) -> int:
    try:
        manifest = synthetic.generate_corpus(args.count, args.seed,
                                             args.out_dir)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"wrote {len(manifest['samples'])} samples to {args.out_dir}")
    return EXIT_OK


def run_dump_schedule(args) -> int:
    try:
        s = build_schedule(T=args.T, beta_start=args.beta_start,
                           beta_end=args.beta_end, steps=args.steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    record = {
        "version": 1,
        "T": s.T,
        "steps": s.steps,
        "timesteps": [int(t) for t in s.timesteps],
        "alpha": [float(v) for v in s.alpha],
        "alpha_bar": [float(v) for v in s.alpha_bar],
        "sigma": [float(v) for v in s.sigma],
    }
    if args.out:
        fileio.write_json(args.out, record)
        print(f"schedule written to {args.out}")
    else:
        import json

        print(json.dumps(record, indent=2, sort_keys=True))
    return EXIT_OK


_RUNNERS = {
    "edit": run_edit,
    "mask": run_mask,
    "eval": run_eval,
    "gen-synthetic": run_gen_synthetic,
    "dump-schedule": run_dump_schedule,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _RUNNERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PartialFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    try:
        code = main()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream closed the pipe (e.g. | head); exit quietly
        import os

        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    entry()
