"""Dataset ingestion, augmentation, and synthetic desk-scale generators.

Images live in float32 arrays shaped (N, C, H, W) with values in [-1, 1]
(byte pixels map through v/127.5 - 1).  The binary record layout is one
label byte followed by C*H*W channel-major pixel bytes per record, which is
the standard CIFAR10 binary format when C=3 and H=W=32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .pyramid import Pyramid, SizeSchedule, _blur, build_pyramid, reconstruct


class CorruptDataError(ValueError):
    """Malformed binary records; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def normalize_bytes(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / 127.5) - 1.0


def denormalize_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round((np.asarray(img) + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [-1, 1]
    labels: Optional[np.ndarray] = None
    class_count: Optional[int] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise ValueError("images must be (N, C, H, W)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != len(self.images):
                raise ValueError("labels length must match images length")

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.images[idx],
            None if self.labels is None else self.labels[idx],
            self.class_count,
        )


def load_records(path, channels: int, size: Tuple[int, int], max_label: Optional[int] = None) -> Dataset:
    """Read 1-label-byte + channel-major pixel-byte records."""
    raw = np.fromfile(str(path), dtype=np.uint8)
    h, w = size
    rec = 1 + channels * h * w
    if raw.size == 0:
        raise CorruptDataError("empty file", 0)
    if raw.size % rec != 0:
        raise CorruptDataError(
            f"truncated record: file size {raw.size} not a multiple of {rec}",
            (raw.size // rec) * rec,
        )
    n = raw.size // rec
    recs = raw.reshape(n, rec)
    labels = recs[:, 0].astype(np.int64)
    if max_label is not None and labels.max(initial=0) > max_label:
        bad = int(np.argmax(labels > max_label))
        raise CorruptDataError(f"label {labels[bad]} exceeds {max_label}", bad * rec)
    images = normalize_bytes(recs[:, 1:]).reshape(n, channels, h, w)
    n_classes = max_label + 1 if max_label is not None else int(labels.max()) + 1
    return Dataset(images, labels, n_classes)


def load_cifar_binary(path) -> Dataset:
    """CIFAR10 binary batches: 3073-byte records, labels 0..9."""
    return load_records(path, 3, (32, 32), max_label=9)


def save_records(path, ds: Dataset) -> None:
    """Inverse of load_records; pixel bytes round-trip exactly."""
    n, c, h, w = ds.images.shape
    out = np.empty((n, 1 + c * h * w), dtype=np.uint8)
    labels = ds.labels if ds.labels is not None else np.zeros(n, dtype=np.int64)
    out[:, 0] = labels.astype(np.uint8)
    out[:, 1:] = denormalize_bytes(ds.images).reshape(n, -1)
    out.tofile(str(path))


def crop_augment(ds: Dataset, crop: Tuple[int, int], mode: str = "four-corners") -> Dataset:
    """Four corner windows per image (TL, TR, BL, BR), labels replicated."""
    if mode != "four-corners":
        raise ValueError(f"unknown crop mode {mode!r}")
    ch, cw = crop
    n, c, h, w = ds.images.shape
    if ch > h or cw > w:
        raise ValueError(f"crop {crop} exceeds image size {(h, w)}")
    corners = [(0, 0), (0, w - cw), (h - ch, 0), (h - ch, w - cw)]
    out = np.empty((4 * n, c, ch, cw), dtype=ds.images.dtype)
    for j, (i0, j0) in enumerate(corners):
        out[j::4] = ds.images[:, :, i0 : i0 + ch, j0 : j0 + cw]
    labels = None if ds.labels is None else np.repeat(ds.labels, 4)
    return Dataset(out, labels, ds.class_count)


SYNTHETIC_KINDS = ("multiscale-texture", "gaussian-blobs", "two-mode-mixture")

# Mixture centers for the two-mode-mixture kind, one point per "image" of
# shape (1, 1, 2).
MIXTURE_CENTERS = np.array([[-0.5, -0.5], [0.5, 0.5]], dtype=np.float32)
MIXTURE_STD = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    size: Tuple[int, int] = (16, 16)
    count: int = 1000
    seed: int = 0
    # multiscale-texture only: target per-band RMS, finest first, last entry
    # being the coarsest low-pass; None derives 0.1 * 2^j per octave.
    band_rms: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def texture_schedule(size: Tuple[int, int]) -> SizeSchedule:
    """Octave schedule used to calibrate and measure multiscale-texture."""
    return SizeSchedule.auto(size[0], size[1], max_coarse=4)


def _texture_targets(spec: SyntheticSpec, n_levels: int) -> np.ndarray:
    if spec.band_rms is not None:
        if len(spec.band_rms) != n_levels:
            raise ValueError(f"band_rms needs {n_levels} entries for size {spec.size}")
        return np.asarray(spec.band_rms, dtype=np.float64)
    return np.array([0.1 * 2.0**j for j in range(n_levels)])


def _synth_texture(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    sched = texture_schedule(spec.size)
    targets = _texture_targets(spec, len(sched.levels))
    images = np.empty((spec.count, 1) + spec.size, dtype=np.float32)
    for i in range(spec.count):
        # Band-limited noise per level: white noise, lightly smoothed.
        coeffs = [
            _blur(rng.normal(0.0, 1.0, (1,) + sz).astype(np.float32))
            for sz in sched.levels
        ]
        # A couple of fixed-point passes pin the measured band RMS to the
        # targets (inserting a residual and re-measuring are not identical
        # operations, but the coupling is weak).
        for _ in range(3):
            img = reconstruct(Pyramid(coeffs, sched))
            measured = [
                np.sqrt((c**2).mean()) for c in build_pyramid(img, sched).coeffs
            ]
            for k in range(len(coeffs)):
                coeffs[k] = coeffs[k] * (targets[k] / max(measured[k], 1e-12))
        images[i, 0] = np.clip(reconstruct(Pyramid(coeffs, sched))[0], -1.0, 1.0)
    return images


def _synth_blobs(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.size
    yy, xx = np.mgrid[0:h, 0:w]
    images = np.empty((spec.count, 1, h, w), dtype=np.float32)
    for i in range(spec.count):
        img = np.zeros((h, w))
        for _ in range(int(rng.integers(1, 4))):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            s = rng.uniform(h / 8, h / 4)
            amp = rng.uniform(0.5, 1.0)
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        img -= img.mean()
        peak = np.abs(img).max()
        images[i, 0] = img / max(peak, 1e-12)
    return images


def synthesize(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic dataset for the given spec."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "two-mode-mixture":
        modes = rng.integers(0, 2, spec.count)
        pts = MIXTURE_CENTERS[modes] + rng.normal(0, MIXTURE_STD, (spec.count, 2))
        pts = np.clip(pts, -1.0, 1.0).astype(np.float32)
        return Dataset(pts.reshape(spec.count, 1, 1, 2), modes, 2)
    if spec.kind == "gaussian-blobs":
        return Dataset(_synth_blobs(spec, rng))
    return Dataset(_synth_texture(spec, rng))


def split(ds: Dataset, fractions: Sequence[float], seed: int):
    """Seed-deterministic shuffled partition; returns one Dataset per fraction."""
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if sum(fractions) > 1.0 + 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)} > 1")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    sizes = [int(np.floor(f * n)) for f in fractions]
    if abs(sum(fractions) - 1.0) < 1e-9:
        for i in range(n - sum(sizes)):  # hand rounding leftovers out in order
            sizes[i % len(sizes)] += 1
    parts = []
    at = 0
    for s in sizes:
        parts.append(ds.subset(order[at : at + s]))
        at += s
    return tuple(parts)
