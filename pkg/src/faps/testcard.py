"""Smooth synthetic images with known landmarks, for exercising the alignment paths."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .affine import BaseTemplate, SimilarityTransform
from .imaging import ImageBuffer


def smooth_image(rng: np.random.Generator, size: int = 400, channels: int = 1, blobs: int = 6) -> ImageBuffer:
    """Gentle gradient plus a few wide gaussian blobs, clipped to [0, 255]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    planes = []
    for _ in range(channels):
        gx, gy = rng.uniform(-0.15, 0.15, 2)
        img = 128 + gx * (xx - size / 2) + gy * (yy - size / 2)
        for _ in range(blobs):
            cx, cy = rng.uniform(0, size, 2)
            sigma = rng.uniform(15, 40)
            amp = rng.uniform(-60, 60)
            img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma**2))
        planes.append(np.clip(img, 0, 255))
    return ImageBuffer(np.stack(planes, axis=-1))


def random_face_pose(rng: np.random.Generator, base: BaseTemplate, size: int) -> SimilarityTransform:
    """Canvas -> image transform that keeps the whole canvas inside a ``size`` image."""
    scale = rng.uniform(1.0, 1.15) * size / (base.canvas * 1.35)
    angle = rng.uniform(-0.2, 0.2)
    t = SimilarityTransform.from_scale_rotation(scale, angle)
    cx, cy = t.apply(np.array(base.anchor))
    jitter = rng.uniform(-5, 5, 2)
    return SimilarityTransform(t.a, t.b, size / 2 - cx + jitter[0], size / 2 - cy + jitter[1])


def make_test_card(
    seed: int = 0,
    base: BaseTemplate = BaseTemplate(),
    size: int = 400,
    channels: int = 1,
    landmark_noise: float = 0.5,
    marker: bool = False,
) -> Tuple[ImageBuffer, np.ndarray]:
    """A smooth image plus landmarks placed by a random similarity of the base template.

    With ``marker`` the image gets a small bright gaussian dot at the image
    position of the template anchor (nose mid-point).
    """
    rng = np.random.default_rng(seed)
    img = smooth_image(rng, size, channels)
    pose = random_face_pose(rng, base, size)
    landmarks = pose.apply(base.points) + rng.normal(0.0, landmark_noise, (len(base.landmarks), 2))
    if marker:
        ax, ay = pose.apply(np.array(base.anchor))
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        dot = 255 * np.exp(-((xx - ax) ** 2 + (yy - ay) ** 2) / (2 * 2.0**2))
        img = ImageBuffer(np.maximum(img.pixels * 0.3, dot[..., None]))
    return img, landmarks
