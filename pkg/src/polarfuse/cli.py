"""``polarfuse`` command line: stokes, synth, train, infer, eval and ablate.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
Every command writes into a fresh (or empty) ``--out`` directory and
echoes the effective configuration there as ``resolved.cfg``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .errors import ConfigError, NumericalError, PolarfuseError

log = logging.getLogger("polarfuse")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "POLARFUSE_THREADS"


class InputError(PolarfuseError):
    """Bad command-line input; maps to exit code 2."""


# --------------------------------------------------------------------- helpers


def _out_dir(path):
    if path is None:
        raise InputError("--out is required")
    out = Path(path)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise InputError(f"output directory {out} exists and is not empty; refusing to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set or ():
        cfg.override(item)
    if args.seed is not None:
        cfg.dataset.seed = cfg.train.seed = cfg.eval.seed = args.seed
    return cfg


def _read_image(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"input image not found: {path}")
    img = io.read_pfm(path) if path.suffix.lower() == ".pfm" else io.read_png(path)
    return img.mean(axis=0) if img.ndim == 3 else img


def _preview(out_dir, stem, image):
    """Viridis preview of a scalar map (or RGB view of a normal field); range goes in the filename."""
    import matplotlib

    lo, hi = float(np.min(image)), float(np.max(image))
    if image.ndim == 3:
        rgb = np.clip((image + 1.0) / 2.0, 0.0, 1.0)
    else:
        scaled = (image - lo) / (hi - lo) if hi > lo else np.zeros_like(image)
        rgb = np.moveaxis(matplotlib.colormaps["viridis"](scaled)[..., :3], -1, 0)
    name = f"{stem}_min{lo:+.4f}_max{hi:+.4f}.png"
    io.write_png(Path(out_dir) / name, rgb)
    return name


def _split(cfg, ids):
    from .data import split_ids

    if cfg.eval.split == "all":
        return list(ids)
    train_ids, test_ids = split_ids(ids, cfg.dataset.test_count)
    if cfg.eval.split == "test":
        return test_ids
    if cfg.eval.split == "train":
        return train_ids
    raise ConfigError(f"[eval] split must be train, test or all, got {cfg.eval.split!r}")


# -------------------------------------------------------------------- commands


def cmd_stokes(args, cfg):
    from .polar import PolarizerStack, polarization_from_stokes, stokes_from_measurements

    if args.stack:
        stacked = _read_image(args.stack)
        if stacked.shape[0] % 4:
            raise InputError(f"stacked image height {stacked.shape[0]} is not a multiple of 4")
        images = np.split(stacked, 4, axis=0)
    elif args.images and len(args.images) == 4:
        images = [_read_image(p) for p in args.images]
    else:
        raise InputError("give four images (0, 45, 90, 135 degrees) or --stack")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise InputError(f"polarizer images differ in size: {sorted(shapes)}")
    out = _out_dir(args.out)
    stokes = stokes_from_measurements(PolarizerStack(*images))
    pol = polarization_from_stokes(stokes)
    io.write_pfm(out / "aolp.pfm", pol.aolp)
    io.write_pfm(out / "dolp.pfm", pol.dolp)
    io.write_pfm(out / "s0.pfm", stokes.s0)
    cfg.write(out / "resolved.cfg")
    invalid = int(np.count_nonzero(~pol.valid))
    print(f"stokes: clamped {stokes.clamped} pixel(s), {invalid} pixel(s) without defined AoLP", file=sys.stderr)


def cmd_synth(args, cfg):
    from .synth import make_dataset

    if args.count is not None:
        cfg.dataset.count = args.count
    if cfg.dataset.count < 1:
        raise InputError(f"count must be >= 1, got {cfg.dataset.count}")
    out = _out_dir(args.out)
    cfg.dataset.manifest = str((out / "manifest.json").resolve())
    make_dataset(cfg.scene_config(), cfg.dataset.count, out, seed=cfg.dataset.seed)
    cfg.write(out / "resolved.cfg")
    print(f"synth: wrote {cfg.dataset.count} samples to {out}", file=sys.stderr)


def _train_one(cfg, out, dataset=None, quiet=False):
    """Train with ``cfg`` into ``out``; returns the final checkpoint hash."""
    from .data import load_dataset, load_manifest, split_ids
    from .diffusion import PolarDiffusionModel, train

    if dataset is None:
        manifest, _ = load_manifest(cfg.dataset.manifest)
        train_ids, _ = split_ids([s["id"] for s in manifest["samples"]], cfg.dataset.test_count)
        dataset = load_dataset(cfg.dataset.manifest, train_ids)
    model = PolarDiffusionModel(cfg.model_config())
    every = max(1, cfg.train.checkpoint_every)
    state = {"window": [], "best": np.inf, "best_step": None}
    meta = {"train": {"steps": cfg.train.steps, "seed": cfg.train.seed}}

    with open(out / "train_log.jsonl", "w", encoding="utf-8") as logf:

        def on_step(rec):
            logf.write(json.dumps(rec, sort_keys=True) + "\n")
            state["window"].append(rec["loss"])
            if rec["step"] % every == 0 or rec["step"] == cfg.train.steps:
                mean = float(np.mean(state["window"]))
                state["window"].clear()
                if mean < state["best"]:
                    state.update(best=mean, best_step=rec["step"])
                    model.save(out / "best.pfck", {**meta, "step": rec["step"], "window_loss": mean})
                if not quiet:
                    log.info("step %d  loss %.4f", rec["step"], mean)

        history = train(model, dataset, cfg.train_config(), target=cfg.model.target, on_step=on_step)
    digest = model.save(out / "final.pfck", {**meta, "step": cfg.train.steps})
    summary = {
        "final_sha256": digest,
        "best_step": state["best_step"],
        "best_window_loss": state["best"],
        "first_loss": history[0]["loss"],
        "last_loss": history[-1]["loss"],
        "fusion": cfg.model.fusion,
        "modality": cfg.model.modality,
        "has_confidence_predictor": model.predictor is not None,
    }
    io.write_json(out / "summary.json", summary)
    cfg.write(out / "resolved.cfg")
    return digest


def cmd_train(args, cfg):
    for key in ("steps", "fusion", "modality", "target"):
        value = getattr(args, key, None)
        if value is not None:
            section = "train" if key == "steps" else "model"
            setattr(getattr(cfg, section), key, value)
    if args.data:
        cfg.dataset.manifest = str(Path(args.data).resolve())
    out = _out_dir(args.out)
    digest = _train_one(cfg, out)
    print(f"train: final checkpoint {out / 'final.pfck'} sha256 {digest}", file=sys.stderr)


def _load_model(path):
    from .diffusion import PolarDiffusionModel

    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    return PolarDiffusionModel.load(path)


def _input_samples(path, cfg):
    """``(ids, sample_dirs)`` for a single sample directory or a dataset manifest."""
    from .data import load_manifest

    path = Path(path)
    if path.is_file() or (path / "manifest.json").exists():
        manifest, root = load_manifest(path)
        ids = _split(cfg, [s["id"] for s in manifest["samples"]])
        return ids, [root / i for i in ids]
    if not (path / "rgb.png").exists():
        raise InputError(f"{path} is neither a sample directory nor a dataset")
    return [None], [path]


def cmd_infer(args, cfg):
    from .data import load_sample
    from .diffusion import infer
    from .polar import encode_polarization

    if args.mode:
        cfg.eval.mode = args.mode
    model = _load_model(args.checkpoint)
    ids, dirs = _input_samples(args.input, cfg)
    try:
        samples = [load_sample(d) for d in dirs]
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    rgb = np.stack([2.0 * s["rgb"] - 1.0 for s in samples])
    pol = np.stack([encode_polarization(s["pol"]) for s in samples])
    out = _out_dir(args.out)
    result = infer(model, rgb, pol, mode=cfg.eval.mode, seed=cfg.eval.seed, batch_size=cfg.eval.batch_size)
    records = []
    for k, sid in enumerate(ids):
        d = out if sid is None else out / sid
        d.mkdir(exist_ok=True)
        pred = result.prediction[k]
        pred = pred[0] if pred.shape[0] == 1 else pred
        io.write_pfm(d / "prediction.pfm", pred)
        rec = {"id": sid, "preview": _preview(d, "prediction", pred)}
        if result.alpha is not None:
            io.write_pfm(d / "alpha.pfm", result.alpha[k, 0])
            rec["alpha_preview"] = _preview(d, "alpha", result.alpha[k, 0])
            rec["mean_alpha"] = float(result.alpha[k].mean())
        records.append(rec)
    io.write_json(
        out / "infer.json",
        {
            "checkpoint_sha256": io.file_sha256(args.checkpoint),
            "mode": cfg.eval.mode,
            "seed": cfg.eval.seed,
            "target": model.config.target,
            "denoiser_calls": result.denoiser_calls,
            "samples": records,
        },
    )
    cfg.write(out / "resolved.cfg")
    print(f"infer: {len(ids)} sample(s), {result.denoiser_calls} denoiser call(s)", file=sys.stderr)


def cmd_eval(args, cfg):
    from .data import load_dataset, load_manifest
    from .evaluation import score_depth, score_normals
    from .metrics import MetricsReport

    task = args.task or cfg.model.target
    manifest_path = args.data or cfg.dataset.manifest
    try:
        manifest, _ = load_manifest(manifest_path)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    ids = _split(cfg, [s["id"] for s in manifest["samples"]])
    pred_root = Path(args.predictions)
    missing = [i for i in ids if not (pred_root / i / "prediction.pfm").exists()]
    if missing:
        raise InputError(f"missing prediction.pfm for sample(s): {', '.join(missing)}")
    data = load_dataset(manifest_path, ids)
    preds = []
    for i in ids:
        p = io.read_pfm(pred_root / i / "prediction.pfm")
        preds.append(p[None] if p.ndim == 2 else p)
    preds = np.stack(preds)
    out = _out_dir(args.out)
    provenance = {}
    if (pred_root / "infer.json").exists():
        info = io.read_json(pred_root / "infer.json")
        provenance = {"seed": info.get("seed"), "checkpoint_hash": info.get("checkpoint_sha256")}
    if task == "depth":
        summary, _ = score_depth(preds, data, d_min=cfg.eval.d_min)
        report = MetricsReport.from_depth(summary, len(ids), **provenance)
    elif task == "normal":
        summary, _ = score_normals(preds, data)
        report = MetricsReport.from_normal(summary, len(ids), **provenance)
    else:
        raise InputError(f"unknown task {task!r}")
    io.write_json(out / "metrics.json", report.to_json())
    cfg.write(out / "resolved.cfg")
    print(json.dumps(report.to_json(), sort_keys=True))


def cmd_ablate(args, cfg):
    from .ablation import run_ablation, write_ablation

    for key in ("betas", "strategies", "seeds"):
        value = getattr(args, key)
        if value:
            cfg.override(f"eval.{key}={value}")
    if args.data:
        cfg.dataset.manifest = str(Path(args.data).resolve())
    ck_root = Path(args.checkpoints)
    out = _out_dir(args.out)
    result = run_ablation(cfg, ck_root, train_missing=args.train_missing, train_fn=_train_one)
    write_ablation(out, result)
    cfg.write(out / "resolved.cfg")
    print((out / "ablation.md").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="overrides every seed in the configuration")
    common.add_argument("--out", help="output directory (must be new or empty)")
    common.add_argument("--threads", type=int, help=f"BLAS threads (fallback: ${THREADS_ENV})")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="polarfuse", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stokes", parents=[common], help="AoLP/DoLP/S0 from four polarizer images")
    p.add_argument("images", nargs="*", help="images at 0, 45, 90 and 135 degrees (PNG or PFM)")
    p.add_argument("--stack", help="single PFM/PNG holding the four images stacked vertically")
    p.set_defaults(func=cmd_stokes)

    p = sub.add_parser("synth", parents=[common], help="render a procedural dataset")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", help="dataset manifest (overrides [dataset] manifest)")
    p.add_argument("--steps", type=int)
    p.add_argument("--fusion", choices=("confidence", "fixed", "random", "early"))
    p.add_argument("--modality", choices=("full", "rgb", "pol"))
    p.add_argument("--target", choices=("depth", "normal"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="predict with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="sample directory or dataset manifest")
    p.add_argument("--mode", choices=("standard", "accelerated"))
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("--predictions", required=True, help="directory with <id>/prediction.pfm")
    p.add_argument("--data", help="dataset manifest (overrides [dataset] manifest)")
    p.add_argument("--task", choices=("depth", "normal"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="fusion strategy x noise level table")
    p.add_argument("--checkpoints", required=True, help="directory with <strategy>-s<seed>/final.pfck")
    p.add_argument("--data", help="dataset manifest (overrides [dataset] manifest)")
    p.add_argument("--betas", help="comma-separated noise levels")
    p.add_argument("--strategies", help="comma-separated fusion strategies")
    p.add_argument("--seeds", help="comma-separated training seeds")
    p.add_argument("--train-missing", action="store_true", help="train absent checkpoints instead of failing")
    p.set_defaults(func=cmd_ablate)
    return parser


def _thread_limit(args):
    n = args.threads
    if n is None and os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise InputError(f"${THREADS_ENV} must be an integer") from None
    if n is None:
        return nullcontext()
    if n < 1:
        raise InputError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load_config(args)
        with _thread_limit(args):
            args.func(args, cfg)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(exc.diagnostics, sort_keys=True, default=str), file=sys.stderr)
        return EXIT_NUMERIC
    except (PolarfuseError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
