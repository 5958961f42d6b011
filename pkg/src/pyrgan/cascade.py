"""Per-level conditional training and the coarse-to-fine sampling cascade.

Each pyramid level k < K gets its own conditional (G_k, D_k) pair trained on
residuals h_k against the upsampled coarse image l_k; the coarsest level is a
plain unconditional pair on the low-frequency residual.  Levels share no
state, so they can be trained independently and in any order.

Sampling runs the recurrence I_k = u(I_{k+1}) + G_k(z_k, u(I_{k+1})) from the
coarsest generator (or a provided start image) down to full resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .adversarial import (
    GanBatch,
    d_step,
    g_step,
    sample_noise,
    telemetry_line,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset
from .nn import Network, NetworkSpec, NumericOverflowError, build_network
from .optim import SgdSchedule, init_velocity
from .pyramid import SizeSchedule, downsample, upsample


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; ``checkpoint_path`` is the last good save (or None)."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class LevelSpec:
    level_index: int
    size: Tuple[int, int]
    is_final: bool
    g_spec: NetworkSpec
    d_spec: NetworkSpec
    noise: dict  # {"kind": "plane"} or {"kind": "vector", "dim": d}
    class_conditional: bool = False

    def __post_init__(self):
        kind = self.noise.get("kind")
        if self.is_final and kind != "vector":
            raise ValueError("final level uses vector noise")
        if not self.is_final and kind != "plane":
            raise ValueError("non-final levels use plane noise")

    def to_dict(self):
        return {
            "level_index": self.level_index,
            "size": list(self.size),
            "is_final": self.is_final,
            "g_spec": self.g_spec.to_dict(),
            "d_spec": self.d_spec.to_dict(),
            "noise": self.noise,
            "class_conditional": self.class_conditional,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            level_index=d["level_index"],
            size=tuple(d["size"]),
            is_final=d["is_final"],
            g_spec=NetworkSpec.from_dict(d["g_spec"]),
            d_spec=NetworkSpec.from_dict(d["d_spec"]),
            noise=d["noise"],
            class_conditional=d["class_conditional"],
        )


def _first_conv_in_ch(spec: NetworkSpec) -> Optional[int]:
    for layer in spec.layers:
        if layer["kind"] == "conv2d":
            return layer["in_ch"]
    return None


def assert_conditioning_channels(spec: LevelSpec, channels: int) -> None:
    """Non-final G_k must consume image channels + noise plane (+ class plane)."""
    if spec.is_final:
        return
    extra = 1 if spec.class_conditional else 0
    g_in = _first_conv_in_ch(spec.g_spec)
    if g_in != channels + 1 + extra:
        raise ValueError(
            f"level {spec.level_index}: generator first conv takes {g_in} channels, "
            f"need {channels + 1 + extra} (image + noise plane"
            + (" + class plane)" if extra else ")")
        )
    d_in = _first_conv_in_ch(spec.d_spec)
    if d_in != 2 * channels + extra:
        raise ValueError(
            f"level {spec.level_index}: discriminator first conv takes {d_in} "
            f"channels, need {2 * channels + extra} (residual+conditioning, "
            "conditioning" + (", class plane)" if extra else ")")
        )


@dataclass
class LevelModel:
    spec: LevelSpec
    g: Network
    d: Network


@dataclass
class CascadeModel:
    levels: List[LevelModel]  # ordered k = 0..K
    schedule: SizeSchedule
    channels: int
    class_count: Optional[int] = None

    def __post_init__(self):
        if len(self.levels) != len(self.schedule.levels):
            raise ValueError(
                f"{len(self.levels)} level models for a "
                f"{len(self.schedule.levels)}-level schedule"
            )
        for k, lm in enumerate(self.levels):
            if lm.spec.level_index != k:
                raise ValueError(f"level {k} holds a model for index {lm.spec.level_index}")
            if tuple(lm.spec.size) != tuple(self.schedule.levels[k]):
                raise ValueError(
                    f"level {k} size {lm.spec.size} != schedule {self.schedule.levels[k]}"
                )
            if lm.spec.is_final != (k == len(self.levels) - 1):
                raise ValueError("exactly the coarsest level must be final")

    @property
    def class_conditional(self) -> bool:
        return self.levels[0].spec.class_conditional


def default_level_specs(
    schedule: SizeSchedule,
    channels: int,
    *,
    class_count: Optional[int] = None,
    noise_dim: int = 100,
    conv_maps: int = 64,
    final_g_units: int = 1200,
    final_d_units: int = 600,
    dropout: float = 0.5,
) -> List[LevelSpec]:
    """One LevelSpec per schedule level; coarsest is the unconditional pair."""
    cc = class_count is not None
    extra = 1 if cc else 0
    specs = []
    n = len(schedule.levels)
    for k, (h, w) in enumerate(schedule.levels):
        if k < n - 1:
            g_layers = []
            d_layers = []
            if cc:
                plane = {"kind": "linear-class-embed", "classes": class_count, "shape": [1, h, w]}
                g_layers.append(dict(plane))
                d_layers.append(dict(plane))
            g_layers += [
                {"kind": "concat-channels", "source": "noise", "channels": 1},
                {"kind": "conv2d", "in_ch": channels + 1 + extra, "out_ch": conv_maps,
                 "ksize": 3, "pad": 1},
                {"kind": "relu"},
                {"kind": "conv2d", "in_ch": conv_maps, "out_ch": conv_maps, "ksize": 3, "pad": 1},
                {"kind": "relu"},
                {"kind": "conv2d", "in_ch": conv_maps, "out_ch": channels, "ksize": 3, "pad": 1},
            ]
            d_layers += [
                {"kind": "concat-channels", "source": "cond", "channels": channels},
                {"kind": "conv2d", "in_ch": 2 * channels + extra, "out_ch": conv_maps,
                 "ksize": 3, "pad": 1},
                {"kind": "relu"},
                {"kind": "conv2d", "in_ch": conv_maps, "out_ch": conv_maps, "ksize": 3,
                 "stride": 2, "pad": 1},
                {"kind": "relu"},
                {"kind": "reshape", "shape": [conv_maps * ((h + 1) // 2) * ((w + 1) // 2)]},
                {"kind": "dense", "in_dim": conv_maps * ((h + 1) // 2) * ((w + 1) // 2),
                 "out_dim": 1},
                {"kind": "sigmoid"},
            ]
            specs.append(
                LevelSpec(
                    level_index=k,
                    size=(h, w),
                    is_final=False,
                    g_spec=NetworkSpec((channels, h, w), g_layers),
                    d_spec=NetworkSpec((channels, h, w), d_layers),
                    noise={"kind": "plane"},
                    class_conditional=cc,
                )
            )
        else:
            flat = channels * h * w
            g_in = noise_dim + (class_count if cc else 0)
            g_layers = []
            d_layers = [{"kind": "reshape", "shape": [flat]}]
            if cc:
                g_layers.append(
                    {"kind": "linear-class-embed", "classes": class_count, "shape": [class_count]}
                )
                d_layers.append(
                    {"kind": "linear-class-embed", "classes": class_count, "shape": [class_count]}
                )
            g_layers += [
                {"kind": "dense", "in_dim": g_in, "out_dim": final_g_units},
                {"kind": "relu"},
                {"kind": "dense", "in_dim": final_g_units, "out_dim": final_g_units},
                {"kind": "relu"},
                {"kind": "dense", "in_dim": final_g_units, "out_dim": flat},
                {"kind": "reshape", "shape": [channels, h, w]},
            ]
            d_layers += [
                {"kind": "dense", "in_dim": flat + (class_count if cc else 0),
                 "out_dim": final_d_units},
                {"kind": "relu"},
                {"kind": "dropout", "p": dropout},
                {"kind": "dense", "in_dim": final_d_units, "out_dim": final_d_units},
                {"kind": "relu"},
                {"kind": "dropout", "p": dropout},
                {"kind": "dense", "in_dim": final_d_units, "out_dim": 1},
                {"kind": "sigmoid"},
            ]
            specs.append(
                LevelSpec(
                    level_index=k,
                    size=(h, w),
                    is_final=True,
                    g_spec=NetworkSpec((noise_dim,), g_layers),
                    d_spec=NetworkSpec((channels, h, w), d_layers),
                    noise={"kind": "vector", "dim": noise_dim},
                    class_conditional=cc,
                )
            )
    for s in specs:
        assert_conditioning_channels(s, channels)
    return specs


def build_level_model(spec: LevelSpec, rng: np.random.Generator, channels: int) -> LevelModel:
    assert_conditioning_channels(spec, channels)
    return LevelModel(spec, build_network(spec.g_spec, rng), build_network(spec.d_spec, rng))


def level_training_data(dataset: Dataset, schedule: SizeSchedule, k: int):
    """(h_k, l_k) residual/conditioning arrays for level k; l is None at the coarsest."""
    if dataset.image_shape[1:] != tuple(schedule.levels[0]):
        raise ValueError(
            f"dataset images are {dataset.image_shape[1:]}, schedule starts at "
            f"{schedule.levels[0]}"
        )
    gauss = dataset.images
    for j in range(1, k + 1):
        gauss = downsample(gauss, schedule.levels[j])
    if k == len(schedule.levels) - 1:
        return gauss, None
    coarse = downsample(gauss, schedule.levels[k + 1])
    l = upsample(coarse, schedule.levels[k])
    return gauss - l, l


def presentation_mask(rng: np.random.Generator, n: int) -> np.ndarray:
    """Coin flip per slot: True shows D the real example, False the generated one."""
    return rng.random(n) < 0.5


def _onehot(labels: np.ndarray, count: int) -> np.ndarray:
    out = np.zeros((len(labels), count), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclass
class LevelTrainConfig:
    schedule: SizeSchedule
    epochs: int = 1
    batch_size: int = 128
    max_iterations: Optional[int] = None
    seed: int = 0
    g_mode: str = "nonsaturating"
    d_per_iter: int = 1
    g_per_iter: int = 1
    presentation: str = "coin-flip"  # or "both-sides"
    sgd: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    telemetry_path: Optional[str] = None
    checkpoint_every: Optional[int] = None  # iterations; default epoch end only


def _level_rng(seed: int, k: int) -> np.random.Generator:
    # A level owns its whole random stream, so training order cannot matter.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))


def checkpoint_path_for(out_dir, k: int) -> Path:
    return Path(out_dir) / f"level_{k}.ckpt"


def train_level(k: int, dataset: Dataset, spec: LevelSpec, config: LevelTrainConfig) -> LevelModel:
    """Train one level's (G_k, D_k) pair on the dataset's residuals."""
    if k != spec.level_index:
        raise ValueError(f"asked to train level {k} with a spec for {spec.level_index}")
    if tuple(spec.size) != tuple(config.schedule.levels[k]):
        raise ValueError(
            f"spec size {spec.size} != schedule level {config.schedule.levels[k]}"
        )
    if spec.class_conditional and dataset.labels is None:
        raise ValueError("class-conditional level needs a labeled dataset")
    if config.presentation not in ("coin-flip", "both-sides"):
        raise ValueError(f"unknown presentation {config.presentation!r}")

    channels = dataset.image_shape[0]
    rng = _level_rng(config.seed, k)
    model = build_level_model(spec, rng, channels)
    h_all, l_all = level_training_data(dataset, config.schedule, k)
    onehot_all = (
        _onehot(dataset.labels, dataset.class_count) if spec.class_conditional else None
    )

    g_sched = SgdSchedule(**config.sgd)
    d_sched = SgdSchedule(**config.sgd)
    g_vel = init_velocity(model.g)
    d_vel = init_velocity(model.d)

    last_ckpt = None

    def save(iteration):
        nonlocal last_ckpt
        if config.out_dir is None:
            return
        path = checkpoint_path_for(config.out_dir, k)
        save_checkpoint(
            path,
            {"g": model.g, "d": model.d},
            extra={"level": spec.to_dict(), "iteration": iteration},
        )
        last_ckpt = path

    telemetry = open(config.telemetry_path, "a") if config.telemetry_path else None
    iteration = 0
    try:
        for epoch in range(config.epochs):
            g_sched.epoch = d_sched.epoch = epoch
            order = rng.permutation(len(dataset))
            for at in range(0, len(order) - config.batch_size + 1, config.batch_size):
                if config.max_iterations is not None and iteration >= config.max_iterations:
                    save(iteration)
                    return model
                idx = order[at : at + config.batch_size]
                l = None if l_all is None else l_all[idx]
                oh = None if onehot_all is None else onehot_all[idx]
                report = None
                for _ in range(config.d_per_iter):
                    z = _draw_noise(spec, rng, len(idx))
                    batch = GanBatch(h_all[idx], z, l, oh)
                    mask = (
                        presentation_mask(rng, len(idx))
                        if config.presentation == "coin-flip"
                        else None
                    )
                    report = d_step(model.d, model.g, batch, d_sched, d_vel,
                                    rng=rng, present=mask)
                for _ in range(config.g_per_iter):
                    z = _draw_noise(spec, rng, len(idx))
                    batch = GanBatch(h_all[idx], z, l, oh)
                    report = g_step(model.g, model.d, batch, g_sched, g_vel,
                                    rng=rng, mode=config.g_mode)
                iteration += 1
                if telemetry is not None and report is not None:
                    rec = json.loads(telemetry_line(iteration, report))
                    rec["level"] = k
                    rec["epoch"] = epoch
                    telemetry.write(json.dumps(rec, sort_keys=True) + "\n")
                if config.checkpoint_every and iteration % config.checkpoint_every == 0:
                    save(iteration)
            save(iteration)
    except NumericOverflowError as exc:
        raise TrainingDivergedError(
            f"level {k} diverged at iteration {iteration}: {exc}", last_ckpt
        ) from exc
    finally:
        if telemetry is not None:
            telemetry.close()
    return model


def _draw_noise(spec: LevelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.noise["kind"] == "vector":
        return sample_noise((n, spec.noise["dim"]), rng)
    return sample_noise((n, 1) + tuple(spec.size), rng)


def train_cascade(dataset: Dataset, specs: List[LevelSpec], config: LevelTrainConfig) -> CascadeModel:
    """Train every level (independently) and assemble the cascade."""
    models = [train_level(s.level_index, dataset, s, config) for s in specs]
    sched = SizeSchedule(tuple(tuple(s.size) for s in specs))
    if tuple(sched.levels) != tuple(config.schedule.levels):
        raise ValueError("level specs do not cover the configured schedule")
    return CascadeModel(
        models, sched, dataset.image_shape[0],
        dataset.class_count if specs[0].class_conditional else None,
    )


@dataclass
class SampleTrace:
    """Per-level (z_k, h_k, image_k) from coarse to fine; image_k = u(image_{k+1}) + h_k."""

    entries: List[dict]

    def validate(self):
        for a, b in zip(self.entries, self.entries[1:]):
            up = upsample(a["image"], b["image"].shape[-2:])
            if not np.array_equal(up + b["h"], b["image"]):
                raise ValueError("trace violates the reconstruction identity")


def sample(
    cascade: CascadeModel,
    rng: np.random.Generator,
    start: Optional[np.ndarray] = None,
    class_index: Optional[int] = None,
):
    """Draw one image, returning (image, trace); ``start`` replaces the coarsest draw."""
    onehot = None
    if cascade.class_conditional:
        if class_index is None:
            class_index = int(rng.integers(cascade.class_count))
        onehot = _onehot(np.array([class_index]), cascade.class_count)

    entries = []
    image = None
    for lm in reversed(cascade.levels):
        spec = lm.spec
        was = lm.g.mode
        lm.g.eval()
        try:
            if spec.is_final:
                if start is not None:
                    if start.shape[-2:] != tuple(spec.size):
                        raise ValueError(
                            f"start image is {start.shape[-2:]}, coarsest level is {spec.size}"
                        )
                    h = np.asarray(start, dtype=np.float32).reshape(
                        (1, cascade.channels) + tuple(spec.size)
                    )
                    z = None
                else:
                    z = _draw_noise(spec, rng, 1)
                    aux = {} if onehot is None else {"class_onehot": onehot}
                    h, _ = lm.g.forward(z, aux=aux)
                image = h
            else:
                l = upsample(image, spec.size)
                z = _draw_noise(spec, rng, 1)
                aux = {"noise": z}
                if onehot is not None:
                    aux["class_onehot"] = onehot
                h, _ = lm.g.forward(l.astype(np.float32), aux=aux)
                image = l + h
            entries.append({"z": z, "h": h[0], "image": image[0]})
        finally:
            lm.g.mode = was
    trace = SampleTrace(entries)
    return image[0], trace


def sample_grid(
    cascade: CascadeModel,
    n: int,
    rng: np.random.Generator,
    per_class: Optional[int] = None,
):
    """n independent samples; with per_class, that many per class label instead."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if per_class is not None and not cascade.class_conditional:
        raise ValueError("per_class requires a class-conditional cascade")
    images, labels = [], []
    if per_class is None:
        for _ in range(n):
            img, _ = sample(cascade, rng)
            images.append(img)
            labels.append(None)
    else:
        for c in range(cascade.class_count):
            for _ in range(per_class):
                img, _ = sample(cascade, rng, class_index=c)
                images.append(img)
                labels.append(c)
    return images, (labels if per_class is not None else None)


def nearest_neighbor(query: np.ndarray, trainset) -> np.ndarray:
    """Closest training image in squared L2; ties go to the lowest index."""
    imgs = trainset.images if isinstance(trainset, Dataset) else np.asarray(trainset)
    if len(imgs) == 0:
        raise ValueError("empty training set")
    if imgs.shape[1:] != query.shape:
        raise ValueError(f"query shape {query.shape} != trainset images {imgs.shape[1:]}")
    flat = imgs.reshape(len(imgs), -1).astype(np.float64)
    q = query.reshape(-1).astype(np.float64)
    d = ((flat - q) ** 2).sum(axis=1)
    return imgs[int(np.argmin(d))]


MANIFEST_NAME = "manifest.json"


def save_cascade(out_dir, cascade: CascadeModel) -> Path:
    """Write per-level checkpoints plus the manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    levels = []
    for k, lm in enumerate(cascade.levels):
        path = checkpoint_path_for(out, k)
        save_checkpoint(path, {"g": lm.g, "d": lm.d}, extra={"level": lm.spec.to_dict()})
        levels.append({"index": k, "checkpoint": path.name, "spec": lm.spec.to_dict()})
    manifest = {
        "format": "cascade-manifest",
        "schedule": [list(s) for s in cascade.schedule.levels],
        "channels": cascade.channels,
        "class_count": cascade.class_count,
        "levels": levels,
    }
    mpath = out / MANIFEST_NAME
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return mpath


def load_cascade(manifest_path) -> CascadeModel:
    mpath = Path(manifest_path)
    if mpath.is_dir():
        mpath = mpath / MANIFEST_NAME
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != "cascade-manifest":
        raise ValueError(f"{mpath}: not a cascade manifest")
    models = []
    for entry in sorted(manifest["levels"], key=lambda e: e["index"]):
        nets, extra = load_checkpoint(mpath.parent / entry["checkpoint"])
        spec = LevelSpec.from_dict(extra["level"])
        models.append(LevelModel(spec, nets["g"], nets["d"]))
    return CascadeModel(
        models,
        SizeSchedule(tuple(tuple(s) for s in manifest["schedule"])),
        manifest["channels"],
        manifest["class_count"],
    )
