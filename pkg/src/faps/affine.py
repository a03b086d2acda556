"""Similarity transforms between landmark sets and the policy <-> template link.

A :class:`SimilarityTransform` is the 2x3 matrix ``[[a, -b, tx], [b, a, ty]]``.
Treating a point as the complex number ``x + iy`` it is ``z -> c*z + t`` with
``c = a + ib`` and ``t = tx + i*ty``, which is how the least-squares solve
below is written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Tuple

import numpy as np

from .geometry import AlignmentPolicy, policy_to_box


class DegenerateLandmarksError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    a: float = 1.0
    b: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not self.a**2 + self.b**2 > 0:
            raise ValueError("similarity transform must have positive scale")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @classmethod
    def from_scale_rotation(cls, scale, angle, tx=0.0, ty=0.0) -> "SimilarityTransform":
        return cls(scale * np.cos(angle), scale * np.sin(angle), tx, ty)

    @property
    def scale(self) -> float:
        return float(np.hypot(self.a, self.b))

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.b, self.a))

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.tx, self.ty])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, -self.b, self.tx], [self.b, self.a, self.ty]])

    def apply(self, points) -> np.ndarray:
        """Map an ``(n, 2)`` array (or a single ``(2,)`` point)."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([self.a * x - self.b * y + self.tx, self.b * x + self.a * y + self.ty], axis=-1)

    __call__ = apply

    def inverse(self) -> "SimilarityTransform":
        c = 1.0 / complex(self.a, self.b)
        t = -c * complex(self.tx, self.ty)
        return SimilarityTransform(c.real, c.imag, t.real, t.imag)

    def __matmul__(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        return compose(self, inner)


def compose(outer: SimilarityTransform, inner: SimilarityTransform) -> SimilarityTransform:
    """``outer ∘ inner``: apply ``inner`` first."""
    c1, t1 = complex(outer.a, outer.b), complex(outer.tx, outer.ty)
    c2, t2 = complex(inner.a, inner.b), complex(inner.tx, inner.ty)
    c, t = c1 * c2, c1 * t2 + t1
    return SimilarityTransform(c.real, c.imag, t.real, t.imag)


def as_landmarks(points: Iterable) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateLandmarksError(f"expected (n, 2) landmarks, got shape {pts.shape}")
    if len(pts) < 2:
        raise DegenerateLandmarksError("need at least two landmarks")
    if not np.all(np.isfinite(pts)):
        raise DegenerateLandmarksError("landmarks must be finite")
    return pts


def estimate_similarity(src, dst) -> SimilarityTransform:
    """Least-squares rotation + uniform scale + translation taking src onto dst.

    Closed form, never reflects. Exact when ``dst`` is a similarity image of
    ``src``.
    """
    src, dst = as_landmarks(src), as_landmarks(dst)
    if src.shape != dst.shape:
        raise DegenerateLandmarksError(f"point counts differ: {len(src)} vs {len(dst)}")
    z = src[:, 0] + 1j * src[:, 1]
    w = dst[:, 0] + 1j * dst[:, 1]
    zc, wc = z - z.mean(), w - w.mean()
    denom = np.vdot(zc, zc).real
    if denom <= 1e-12 * max(1.0, np.abs(z).max() ** 2):
        raise DegenerateLandmarksError("source landmarks are all coincident")
    c = np.vdot(zc, wc) / denom
    t = w.mean() - c * z.mean()
    return SimilarityTransform(float(c.real), float(c.imag), float(t.real), float(t.imag))


# Five-point layout on the 300px canvas: eyes, nose tip, mouth corners.
DEFAULT_LANDMARKS = ((105.0, 125.0), (195.0, 125.0), (150.0, 150.0), (118.0, 190.0), (182.0, 190.0))


@dataclass(frozen=True)
class BaseTemplate:
    """Base landmark layout on a square canvas, nose mid-point at the centre."""

    canvas: int = 300
    landmarks: Tuple[Tuple[float, float], ...] = field(default=DEFAULT_LANDMARKS)
    output_size: int = 112

    def __post_init__(self):
        pts = as_landmarks(self.landmarks)
        object.__setattr__(self, "landmarks", tuple(map(tuple, pts.tolist())))
        mirrored = pts.copy()
        mirrored[:, 0] = self.canvas - mirrored[:, 0]
        # mirror image must be the same point set
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        morder = np.lexsort((mirrored[:, 1], mirrored[:, 0]))
        if not np.allclose(pts[order], mirrored[morder], atol=1e-9, rtol=0):
            raise ValueError("template landmarks must be mirror-symmetric about x = canvas/2")

    @property
    def anchor(self) -> Tuple[float, float]:
        return (self.canvas / 2, self.canvas / 2)

    @property
    def points(self) -> np.ndarray:
        return np.array(self.landmarks)

    def scaled(self, factor: int) -> "BaseTemplate":
        """Same template on a canvas ``factor`` times larger (output size unchanged)."""
        return BaseTemplate(
            canvas=self.canvas * factor,
            landmarks=tuple((x * factor, y * factor) for x, y in self.landmarks),
            output_size=self.output_size,
        )


def policy_transform(p: AlignmentPolicy, base: BaseTemplate) -> SimilarityTransform:
    """Canvas coordinates -> ``output_size`` frame of the crop selected by ``p``."""
    box = policy_to_box(p, base.canvas)
    k = base.output_size / p.m
    return SimilarityTransform(k, 0.0, -box.left * k, -box.top * k)


def derive_template_landmarks(p: AlignmentPolicy, base: BaseTemplate) -> np.ndarray:
    """Landmarks of the template equivalent to policy ``p``, in the output frame."""
    return policy_transform(p, base).apply(base.points)
