"""Gaussian/Laplacian pyramid operators and the orthonormal 2x2 block transform.

Images are numpy arrays whose last two axes are spatial (height, width);
leading axes (channels, batch) are carried through untouched.  The band-pass
decomposition is exactly invertible for *any* smoothing choice because the
reconstruction recurrence is the algebraic inverse of the analysis step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Classic 5-tap binomial smoothing kernel (Burt & Adelson).
KERNEL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# Orthonormal basis on a flattened 2x2 block [a, b; c, d] -> [a, b, c, d].
# Rows: scaled block mean, row difference, column difference, diagonal.
BLOCK_BASIS = 0.5 * np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ]
)


class SizeScheduleError(ValueError):
    """Raised when a list of level sizes is not a valid pyramid schedule."""


@dataclass(frozen=True)
class SizeSchedule:
    """Spatial sizes of the pyramid levels, finest to coarsest.

    ``levels[k]`` is the (height, width) of level k; the last entry is the
    low-frequency residual.  Sizes must decrease strictly in both dimensions.
    """

    levels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.levels) < 1:
            raise SizeScheduleError("schedule needs at least one level")
        for h, w in self.levels:
            if h < 1 or w < 1:
                raise SizeScheduleError(f"non-positive level size {(h, w)}")
        for (h0, w0), (h1, w1) in zip(self.levels, self.levels[1:]):
            if h1 >= h0 or w1 >= w0:
                raise SizeScheduleError(
                    f"level sizes must strictly decrease, got {(h0, w0)} -> {(h1, w1)}"
                )

    @property
    def num_bands(self) -> int:
        """Number of band-pass levels (the residual is not a band)."""
        return len(self.levels) - 1

    @classmethod
    def auto(cls, height: int, width: int, max_coarse: int = 8) -> "SizeSchedule":
        """Halve (rounding up) until both sides are <= ``max_coarse``."""
        levels = [(height, width)]
        h, w = height, width
        while h > max_coarse or w > max_coarse:
            h, w = (h + 1) // 2, (w + 1) // 2
            levels.append((h, w))
        return cls(tuple(levels))

    @classmethod
    def from_sizes(cls, sizes) -> "SizeSchedule":
        """Build from square sizes or (h, w) pairs, finest first."""
        levels = tuple((s, s) if np.isscalar(s) else (int(s[0]), int(s[1])) for s in sizes)
        return cls(levels)


@dataclass
class Pyramid:
    """Band-pass coefficient images plus the coarse residual as the last entry."""

    coeffs: list
    schedule: SizeSchedule

    def validate(self):
        if len(self.coeffs) != len(self.schedule.levels):
            raise ValueError(
                f"{len(self.coeffs)} coefficient images for "
                f"{len(self.schedule.levels)} schedule levels"
            )
        for k, (c, (h, w)) in enumerate(zip(self.coeffs, self.schedule.levels)):
            if c.shape[-2:] != (h, w):
                raise ValueError(f"level {k} has size {c.shape[-2:]}, schedule says {(h, w)}")


def _spatial(img: np.ndarray) -> tuple[int, int]:
    if img.ndim < 2:
        raise ValueError(f"image needs at least 2 axes, got shape {img.shape}")
    return img.shape[-2], img.shape[-1]


def _blur(img: np.ndarray) -> np.ndarray:
    """Separable binomial blur with edge-inclusive mirror padding."""
    out = img
    for axis in (-2, -1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (2, 2)
        xp = np.pad(out, pad, mode="symmetric")
        n = out.shape[axis]
        sl = [slice(None)] * out.ndim
        acc = np.zeros_like(out)
        for i, w in enumerate(KERNEL5):
            sl[axis] = slice(i, i + n)
            acc = acc + w * xp[tuple(sl)]
        out = acc
    return out


def _resample_axis(img: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    """Linear resampling along one axis using half-pixel sample centers."""
    n_in = img.shape[axis]
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1.0)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (coords - i0).astype(img.dtype)
    shape = [1] * img.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return np.take(img, i0, axis=axis) * (1 - frac) + np.take(img, i1, axis=axis) * frac


def _resample(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    out = _resample_axis(img, target[0], axis=img.ndim - 2)
    return _resample_axis(out, target[1], axis=out.ndim - 1)


def _upsample2_axis(img: np.ndarray, axis: int) -> np.ndarray:
    # Polyphase form of zero-insertion + gain-4 binomial blur: even outputs
    # take taps (1, 6, 1)/8, odd outputs (1, 1)/2, mirrored at the edges.
    pad = [(0, 0)] * img.ndim
    pad[axis] = (1, 1)
    xp = np.pad(img, pad, mode="symmetric")
    n = img.shape[axis]

    def seg(start):
        sl = [slice(None)] * img.ndim
        sl[axis] = slice(start, start + n)
        return xp[tuple(sl)]

    even = (seg(0) + 6.0 * seg(1) + seg(2)) / 8.0
    odd = (seg(1) + seg(2)) / 2.0
    shape = list(img.shape)
    shape[axis] = 2 * n
    out = np.empty(shape, dtype=img.dtype)
    sl_even = [slice(None)] * img.ndim
    sl_even[axis] = slice(0, None, 2)
    sl_odd = [slice(None)] * img.ndim
    sl_odd[axis] = slice(1, None, 2)
    out[tuple(sl_even)] = even
    out[tuple(sl_odd)] = odd
    return out


def downsample(img: np.ndarray, target: tuple[int, int] | None = None) -> np.ndarray:
    """Blur and decimate to ``target`` (default: sides halved, rounding up).

    The exact factor-2 case uses binomial blur followed by decimation; other
    targets blur once and then resample linearly along each axis.
    """
    h, w = _spatial(img)
    if target is None:
        target = ((h + 1) // 2, (w + 1) // 2)
    th, tw = int(target[0]), int(target[1])
    if th >= h or tw >= w:
        raise ValueError(f"downsample target {(th, tw)} not smaller than source {(h, w)}")
    if th < 1 or tw < 1:
        raise ValueError(f"non-positive downsample target {(th, tw)}")
    if not np.isfinite(img).all():
        raise ValueError("downsample input contains non-finite values")
    blurred = _blur(img)
    if h % 2 == 0 and w % 2 == 0 and (th, tw) == (h // 2, w // 2):
        return blurred[..., ::2, ::2]
    return _resample(blurred, (th, tw))


def upsample(img: np.ndarray, target: tuple[int, int] | None = None) -> np.ndarray:
    """Smooth and expand to ``target`` (default: sides doubled).

    The factor-2 case is zero-insertion plus gain-normalized binomial blur;
    other targets blur once and then resample linearly.  Constant images map
    to the same constant either way.
    """
    h, w = _spatial(img)
    if target is None:
        target = (2 * h, 2 * w)
    th, tw = int(target[0]), int(target[1])
    if th <= h or tw <= w:
        raise ValueError(f"upsample target {(th, tw)} not larger than source {(h, w)}")
    if (th, tw) == (2 * h, 2 * w):
        out = _upsample2_axis(img, img.ndim - 2)
        return _upsample2_axis(out, out.ndim - 1)
    return _resample(_blur(img), (th, tw))


def build_pyramid(img: np.ndarray, schedule: SizeSchedule | None = None) -> Pyramid:
    """Decompose into band-pass coefficients h_k = I_k - u(I_{k+1}) plus residual.

    Gaussian levels I_k come from repeated ``downsample``; the last
    coefficient image is the coarsest Gaussian level itself.
    """
    h, w = _spatial(img)
    if schedule is None:
        schedule = SizeSchedule.auto(h, w)
    if (h, w) != schedule.levels[0]:
        raise ValueError(f"image size {(h, w)} does not match schedule root {schedule.levels[0]}")
    if not np.isfinite(img).all():
        raise ValueError("pyramid input contains non-finite values")
    gaussian = [img]
    for size in schedule.levels[1:]:
        gaussian.append(downsample(gaussian[-1], size))
    coeffs = []
    for k in range(schedule.num_bands):
        coeffs.append(gaussian[k] - upsample(gaussian[k + 1], schedule.levels[k]))
    coeffs.append(gaussian[-1])
    return Pyramid(coeffs, schedule)


def reconstruct(pyr: Pyramid) -> np.ndarray:
    """Invert ``build_pyramid`` via I_k = u(I_{k+1}) + h_k, coarse to fine."""
    pyr.validate()
    img = pyr.coeffs[-1]
    for k in range(pyr.schedule.num_bands - 1, -1, -1):
        img = upsample(img, pyr.schedule.levels[k]) + pyr.coeffs[k]
    return img


def _gather_blocks(img: np.ndarray) -> np.ndarray:
    """Stack the four samples of each disjoint 2x2 block on a new axis -3."""
    h, w = _spatial(img)
    if h % 2 or w % 2:
        raise ValueError(f"block transform needs even spatial dims, got {(h, w)}")
    parts = (
        img[..., 0::2, 0::2],
        img[..., 0::2, 1::2],
        img[..., 1::2, 0::2],
        img[..., 1::2, 1::2],
    )
    return np.stack(parts, axis=-3)


def block_forward(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unitary per-block transform: (low, high) coordinates of each 2x2 block.

    ``low`` holds the mean-aligned coefficient (twice the block mean) at half
    resolution; ``high`` holds the three orthonormal complement coefficients
    stacked on axis -3.  Energy is preserved: ||img||^2 = ||low||^2 + ||high||^2.
    """
    blocks = _gather_blocks(img)
    coeffs = np.einsum("ji,...ihw->...jhw", BLOCK_BASIS, blocks)
    return coeffs[..., 0, :, :], coeffs[..., 1:, :, :]


def block_inverse(low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Invert ``block_forward`` (transpose of the orthonormal basis)."""
    if high.shape[-3] != 3 or low.shape[-2:] != high.shape[-2:]:
        raise ValueError(
            f"inconsistent block coefficients: low {low.shape}, high {high.shape}"
        )
    if low.shape[:-2] != high.shape[:-3]:
        raise ValueError(
            f"leading axes disagree: low {low.shape}, high {high.shape}"
        )
    coeffs = np.concatenate([low[..., None, :, :], high], axis=-3)
    blocks = np.einsum("ji,...jhw->...ihw", BLOCK_BASIS, coeffs)
    h2, w2 = low.shape[-2], low.shape[-1]
    out = np.empty(low.shape[:-2] + (2 * h2, 2 * w2), dtype=blocks.dtype)
    out[..., 0::2, 0::2] = blocks[..., 0, :, :]
    out[..., 0::2, 1::2] = blocks[..., 1, :, :]
    out[..., 1::2, 0::2] = blocks[..., 2, :, :]
    out[..., 1::2, 1::2] = blocks[..., 3, :, :]
    return out


def block_mean(img: np.ndarray) -> np.ndarray:
    """Average over each disjoint 2x2 block (half-resolution image, image units)."""
    return _gather_blocks(img).mean(axis=-3)


def block_replicate(img: np.ndarray, times: int = 1) -> np.ndarray:
    """Duplicate each pixel into a 2x2 block, ``times`` doublings."""
    out = img
    for _ in range(times):
        out = out.repeat(2, axis=-2).repeat(2, axis=-1)
    return out
