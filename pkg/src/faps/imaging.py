"""Pixel-level alignment: bilinear warping, crop+resize, and the two alignment paths.

Pixel centres sit at integer coordinates. Warps use inverse mapping: every
output pixel is pulled back through the transform and sampled bilinearly;
samples falling outside the source are 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import (
    BaseTemplate,
    SimilarityTransform,
    derive_template_landmarks,
    estimate_similarity,
)
from .geometry import AlignmentPolicy, Rect, policy_to_box

# slack for sample positions that land a rounding error outside the image
_EDGE_EPS = 1e-6


class ImageError(ValueError):
    pass


@dataclass
class ImageBuffer:
    """Real-valued image, ``pixels`` shaped ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ImageError(f"expected (h, w, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ImageError("image dimensions must be positive")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def channel(self, c: int) -> "ImageBuffer":
        return ImageBuffer(self.pixels[:, :, c : c + 1].copy())

    def to_uint8(self) -> np.ndarray:
        clipped = np.clip(self.pixels, 0.0, 255.0)
        # round half away from zero; values are non-negative here
        return np.floor(clipped + 0.5).astype(np.uint8)


def _bilinear(px: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w, c = px.shape
    inside = (xs >= -_EDGE_EPS) & (xs <= w - 1 + _EDGE_EPS) & (ys >= -_EDGE_EPS) & (ys <= h - 1 + _EDGE_EPS)
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    top = px[y0, x0] * (1 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1 - fx) + px[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    out[~inside] = 0.0
    return out


def warp_affine(img: ImageBuffer, t: SimilarityTransform, out_w: int, out_h: int) -> ImageBuffer:
    """Resample ``img`` into an ``out_w`` x ``out_h`` frame where ``t`` maps source -> output."""
    if out_w <= 0 or out_h <= 0:
        raise ImageError(f"output size must be positive, got {out_w}x{out_h}")
    inv = t.inverse()
    gy, gx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    xs = inv.a * gx - inv.b * gy + inv.tx
    ys = inv.b * gx + inv.a * gy + inv.ty
    return ImageBuffer(_bilinear(img.pixels, xs, ys))


def crop_transform(box: Rect, out_size: int) -> SimilarityTransform:
    k = out_size / box.width
    return SimilarityTransform(k, 0.0, -box.left * k, -box.top * k)


def crop_resize(img: ImageBuffer, box: Rect, out_size: int) -> ImageBuffer:
    """Crop ``box`` and resize it to ``out_size`` squared in a single resampling pass."""
    if box.left < 0 or box.top < 0 or box.right > img.width or box.bottom > img.height:
        raise ImageError(f"{box!r} is outside the {img.width}x{img.height} image")
    if box.width != box.height:
        raise ImageError("crop box must be square")
    return warp_affine(img, crop_transform(box, out_size), out_size, out_size)


def align_direct(img: ImageBuffer, landmarks, p: AlignmentPolicy, base: BaseTemplate) -> ImageBuffer:
    """Warp straight onto the template that ``p`` stands for."""
    t = estimate_similarity(landmarks, derive_template_landmarks(p, base))
    return warp_affine(img, t, base.output_size, base.output_size)


class CanvasAligner:
    """Aligns an image to the base template once and crops any number of policies from it."""

    def __init__(self, img: ImageBuffer, landmarks, base: BaseTemplate):
        self.img = img
        self.landmarks = landmarks
        self.base = base
        self.canvas_warps = 0
        self._canvas = None

    @property
    def canvas(self) -> ImageBuffer:
        if self._canvas is None:
            t0 = estimate_similarity(self.landmarks, self.base.points)
            self._canvas = warp_affine(self.img, t0, self.base.canvas, self.base.canvas)
            self.canvas_warps += 1
        return self._canvas

    def align(self, p: AlignmentPolicy) -> ImageBuffer:
        box = policy_to_box(p, self.base.canvas)
        return crop_resize(self.canvas, box, self.base.output_size)


def align_via_canvas(img: ImageBuffer, landmarks, p: AlignmentPolicy, base: BaseTemplate) -> ImageBuffer:
    return CanvasAligner(img, landmarks, base).align(p)


def read_pnm(path) -> ImageBuffer:
    """Read a binary P5 (grey) or P6 (RGB) file with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_pnm(data)


def parse_pnm(data: bytes) -> ImageBuffer:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageError(f"unsupported PNM magic {magic!r}")
    channels = 1 if magic == b"P5" else 3
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        if pos >= n:
            raise ImageError("truncated PNM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < n and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise ImageError(f"malformed PNM header near byte {pos}")
    if pos >= n or not data[pos : pos + 1].isspace():
        raise ImageError("PNM header must end with a single whitespace byte")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageError(f"bad PNM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageError(f"unsupported maxval {maxval}; only 255 is handled")
    size = width * height * channels
    payload = data[pos : pos + size]
    if len(payload) < size:
        raise ImageError(f"truncated PNM payload: {len(payload)} of {size} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(arr.astype(np.float64))


def format_pnm(img: ImageBuffer) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + img.to_uint8().tobytes()


def write_pnm(img: ImageBuffer, path) -> None:
    with open(path, "wb") as fh:
        fh.write(format_pnm(img))
