"""Command-line entry points.

Exit codes: 0 success, 2 invalid input, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cascade import (
    LevelTrainConfig,
    TrainingDivergedError,
    default_level_specs,
    load_cascade,
    sample,
    save_cascade,
    train_cascade,
)
from .config import ConfigError, RunConfig, load_config, save_config
from .data import (
    CorruptDataError,
    Dataset,
    SyntheticSpec,
    crop_augment,
    load_cifar_binary,
    save_records,
    split,
    synthesize,
)
from .likelihood import EvalConfig, likelihood_report, render_likelihood_report
from .pnm import read_image, write_image
from .pyramid import SizeSchedule, SizeScheduleError, build_pyramid, reconstruct


def build_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset["kind"] == "synthetic":
        return synthesize(cfg.synthetic_spec())
    path = Path(cfg.dataset["path"])
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    ds = load_cifar_binary(path)
    crop = cfg.dataset.get("crop")
    if crop:
        ds = crop_augment(ds, (int(crop[0]), int(crop[1])))
    return ds


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out_dir)
    ds = build_dataset(cfg)
    train_ds = split(ds, cfg.split, cfg.seed)[0]
    schedule = cfg.size_schedule()
    if train_ds.image_shape[1:] != tuple(schedule.levels[0]):
        raise ConfigError(
            f"dataset images are {train_ds.image_shape[1:]}, schedule starts at "
            f"{schedule.levels[0]}"
        )
    if cfg.class_conditional and train_ds.class_count is None:
        raise ConfigError("class_conditional needs a labelled dataset")
    specs = default_level_specs(
        schedule,
        train_ds.image_shape[0],
        class_count=train_ds.class_count if cfg.class_conditional else None,
        **cfg.model,
    )
    out.mkdir(parents=True, exist_ok=True)
    telemetry = out / "telemetry.jsonl"
    if telemetry.exists():
        telemetry.unlink()
    level_cfg = LevelTrainConfig(
        schedule=schedule,
        seed=cfg.seed,
        out_dir=str(out),
        telemetry_path=str(telemetry),
        **cfg.train,
    )
    cascade = train_cascade(train_ds, specs, level_cfg)
    manifest = save_cascade(out, cascade)
    save_config(out / "config.json", cfg)
    print(f"trained {len(cascade.levels)} levels -> {manifest}")
    return 0


def cmd_sample(args) -> int:
    cascade = load_cascade(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    start = read_image(args.start) if args.start else None
    ext = "pgm" if cascade.channels == 1 else "ppm"
    for i in range(args.n):
        img, trace = sample(cascade, rng, start=start, class_index=args.class_index)
        write_image(out / f"sample_{i:03d}.{ext}", img)
        if args.trace:
            for e in trace.entries:
                h, w = e["image"].shape[-2:]
                write_image(out / f"sample_{i:03d}_level_{h}x{w}.{ext}", e["image"])
    print(f"wrote {args.n} samples to {out}")
    return 0


def cmd_eval_ll(args) -> int:
    cascade = load_cascade(args.manifest)
    cfg = load_config(args.config)
    if len(cfg.split) < 3:
        raise ConfigError("eval-ll needs a 3-way split (train, validation, test)")
    ds = build_dataset(cfg)
    _, validation, test = split(ds, cfg.split, cfg.seed)[:3]
    estimators = ["flat", "multiscale"] if args.estimator == "both" else [args.estimator]
    reports = []
    for est in estimators:
        ecfg = EvalConfig(
            estimator=est,
            n_model_samples=int(cfg.eval["n_model_samples"]),
            seed=int(cfg.eval["seed"]),
        )
        rep = likelihood_report(cascade, test, validation, ecfg)
        reports.append(rep)
        print(render_likelihood_report(rep))
        print()
    if args.json:
        Path(args.json).write_text(json.dumps(reports, indent=2, sort_keys=True))
    return 0


def cmd_pyramid(args) -> int:
    img = read_image(args.image)
    if args.sizes:
        side_list = [int(s) for s in args.sizes.split(",")]
        schedule = SizeSchedule.from_sizes(side_list)
    else:
        schedule = SizeSchedule.auto(*img.shape[-2:])
    pyr = build_pyramid(img, schedule)
    recon = reconstruct(pyr)
    err = float(np.abs(recon - img).max())
    print(f"levels: {list(schedule.levels)}")
    print(f"round-trip max abs error: {err:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ext = "pgm" if img.shape[0] == 1 else "ppm"
        for k, c in enumerate(pyr.coeffs):
            write_image(out / f"band_{k}.{ext}", c)
        write_image(out / f"reconstruction.{ext}", recon)
    return 0


def load_source_images(root: Path) -> dict:
    images = {}
    for sub in sorted(root.iterdir()) if root.exists() else []:
        if not sub.is_dir():
            continue
        files = sorted(list(sub.glob("*.pgm")) + list(sub.glob("*.ppm")))
        if files:
            images[sub.name] = [read_image(f) for f in files]
    return images


def cmd_serve_eval(args) -> int:
    from .evalserve import DEFAULT_DURATIONS_MS, create_app

    root = Path(args.images)
    images = load_source_images(root)
    if not images:
        raise ConfigError(f"no per-source image directories with .pgm/.ppm under {root}")
    durations = (
        tuple(int(d) for d in args.durations.split(","))
        if args.durations
        else DEFAULT_DURATIONS_MS
    )
    app = create_app(images, args.records, durations=durations, seed=args.seed)
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_data_synth(args) -> int:
    spec = SyntheticSpec(args.kind, (args.size, args.size), args.count, args.seed)
    ds = synthesize(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_records(args.out, ds)
    print(f"wrote {len(ds)} records ({args.kind}, {args.size}x{args.size}) to {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pyrgan")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train all pyramid levels from a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None, help="override the config's out_dir")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="draw images from a trained cascade")
    s.add_argument("--manifest", required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="samples")
    s.add_argument("--trace", action="store_true", help="also write every level image")
    s.add_argument("--start", default=None, help="PGM/PPM image replacing the coarsest draw")
    s.add_argument("--class-index", type=int, default=None, dest="class_index")
    s.set_defaults(fn=cmd_sample)

    e = sub.add_parser("eval-ll", help="Parzen log-likelihood report")
    e.add_argument("--manifest", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--estimator", choices=["flat", "multiscale", "both"], default="both")
    e.add_argument("--json", default=None, help="also write reports as JSON")
    e.set_defaults(fn=cmd_eval_ll)

    y = sub.add_parser("pyramid", help="build/reconstruct an image, report round-trip error")
    y.add_argument("--image", required=True)
    y.add_argument("--sizes", default=None, help="comma-separated square sizes, finest first")
    y.add_argument("--out", default=None, help="write band and reconstruction images here")
    y.set_defaults(fn=cmd_pyramid)

    v = sub.add_parser("serve-eval", help="run the judgment-collection service")
    v.add_argument("--images", required=True, help="directory with per-source subdirectories")
    v.add_argument("--records", default="records.jsonl")
    v.add_argument("--durations", default=None, help="comma-separated ms values")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(fn=cmd_serve_eval)

    d = sub.add_parser("data", help="dataset utilities")
    dsub = d.add_subparsers(dest="data_command", required=True)
    g = dsub.add_parser("synth", help="write a synthetic dataset as binary records")
    g.add_argument("--kind", required=True)
    g.add_argument("--size", type=int, default=16)
    g.add_argument("--count", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_data_synth)

    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.checkpoint_path is not None:
            print(f"last good checkpoint: {exc.checkpoint_path}", file=sys.stderr)
        return 3
    except (ConfigError, CorruptDataError, SizeScheduleError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
