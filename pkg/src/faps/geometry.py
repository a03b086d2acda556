"""Policy-space arithmetic on the aligned face canvas.

A policy ``{m, delta}`` selects a square crop of side ``m`` that is centred
horizontally on the canvas and whose vertical centre sits ``delta`` pixels
below the canvas centre (image y grows downward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple


class PolicyError(ValueError):
    """Raised for policies that do not describe a valid crop."""


@dataclass(frozen=True, order=True)
class AlignmentPolicy:
    m: int
    delta: int

    def __post_init__(self):
        if self.m <= 0:
            raise PolicyError(f"crop size must be positive, got {self.m}")

    def as_tuple(self) -> Tuple[int, int]:
        return (self.m, self.delta)

    def __str__(self):
        return f"{{{self.m},{self.delta}}}"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; used for crop boxes and their intersections."""

    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> Tuple[float, float]:
        return (self.left + self.width / 2, self.top + self.height / 2)

    def contains(self, other: "Rect") -> bool:
        return (
            self.left <= other.left
            and self.top <= other.top
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def intersection(self, other: "Rect") -> Optional["Rect"]:
        left = max(self.left, other.left)
        top = max(self.top, other.top)
        right = min(self.right, other.right)
        bottom = min(self.bottom, other.bottom)
        if right <= left or bottom <= top:
            return None
        return Rect(left, top, right - left, bottom - top)


@dataclass(frozen=True)
class CropBox(Rect):
    """Square crop region ``[left, top, side, side]``."""

    @classmethod
    def square(cls, left: float, top: float, side: float) -> "CropBox":
        if side <= 0:
            raise PolicyError(f"crop side must be positive, got {side}")
        return cls(left, top, side, side)

    @property
    def side(self) -> float:
        return self.width

    def __repr__(self):
        return f"CropBox(left={self.left:g}, top={self.top:g}, side={self.side:g})"


def policy_to_box(p: AlignmentPolicy, canvas: float) -> CropBox:
    if p.m > canvas:
        raise PolicyError(f"crop size {p.m} exceeds canvas {canvas}")
    left = (canvas - p.m) / 2
    box = CropBox.square(left, left + p.delta, p.m)
    if box.top < 0 or box.bottom > canvas:
        raise PolicyError(f"policy {p} puts the crop outside the {canvas}px canvas")
    return box


def box_iou(b1: Rect, b2: Rect) -> float:
    """Intersection over union of two axis-aligned rectangles.

    Zero-area rectangles score 0 against everything except an identical
    zero-area rectangle, which scores 1.
    """
    if b1.area == 0 or b2.area == 0:
        same = (b1.left, b1.top, b1.width, b1.height) == (b2.left, b2.top, b2.width, b2.height)
        return 1.0 if same else 0.0
    inter = b1.intersection(b2)
    if inter is None:
        return 0.0
    ia = inter.area
    return ia / (b1.area + b2.area - ia)


@dataclass(frozen=True)
class SearchSpace:
    m_min: int = 160
    m_max: int = 232
    s_m: int = 8
    delta_min: int = -32
    delta_max: int = 24
    s_delta: int = 4
    canvas: int = 300

    def __post_init__(self):
        if self.s_m <= 0 or self.s_delta <= 0:
            raise ValueError("step sizes must be positive")
        if self.m_min <= 0 or self.m_min > self.m_max:
            raise ValueError(f"bad crop range [{self.m_min}, {self.m_max}]")
        if self.delta_min > self.delta_max:
            raise ValueError(f"bad shift range [{self.delta_min}, {self.delta_max}]")
        if (self.m_max - self.m_min) % self.s_m:
            raise ValueError("crop range is not a multiple of s_m")
        if (self.delta_max - self.delta_min) % self.s_delta:
            raise ValueError("shift range is not a multiple of s_delta")
        if not (self.delta_min <= 0 <= self.delta_max) or self.delta_min % self.s_delta:
            raise ValueError("delta = 0 must lie on the shift grid")
        if self.m_max > self.canvas:
            raise ValueError("m_max exceeds the canvas")

    @property
    def super_roi(self) -> AlignmentPolicy:
        return AlignmentPolicy(self.m_max, 0)

    @property
    def m_grid(self) -> range:
        return range(self.m_min, self.m_max + 1, self.s_m)

    @property
    def delta_grid(self) -> range:
        return range(self.delta_min, self.delta_max + 1, self.s_delta)

    def box(self, p: AlignmentPolicy) -> CropBox:
        return policy_to_box(p, self.canvas)

    def shift_interval(self, m: int) -> Tuple[int, int]:
        """Grid-aligned ``[lo, hi]`` of shifts keeping an ``m`` crop inside SuperROI."""
        half = (self.m_max - m) / 2
        lo = max(self.delta_min, -half)
        hi = min(self.delta_max, half)
        # 0 is on the grid, so grid points are multiples of s_delta
        lo = math.ceil(lo / self.s_delta) * self.s_delta
        hi = math.floor(hi / self.s_delta) * self.s_delta
        return lo, hi

    def contains(self, p: AlignmentPolicy) -> bool:
        if p.m not in self.m_grid or p.delta not in self.delta_grid:
            return False
        return self.box(self.super_roi).contains(self.box(p))

    def candidates(self) -> Tuple[AlignmentPolicy, ...]:
        return enumerate_space(self)


@lru_cache(maxsize=64)
def enumerate_space(space: SearchSpace) -> Tuple[AlignmentPolicy, ...]:
    """All grid policies whose crop lies inside the SuperROI crop.

    Ordered by ascending ``m`` then ascending ``delta``.
    """
    outer = space.box(space.super_roi)
    out = []
    for m in space.m_grid:
        for d in space.delta_grid:
            p = AlignmentPolicy(m, d)
            if outer.contains(space.box(p)):
                out.append(p)
    return tuple(out)


@lru_cache(maxsize=64)
def candidate_boxes(space: SearchSpace) -> Tuple[CropBox, ...]:
    return tuple(space.box(p) for p in enumerate_space(space))


def clip_policy(p: AlignmentPolicy, space: SearchSpace) -> AlignmentPolicy:
    """Pull a (possibly out-of-range) policy back into the space.

    ``m`` is clamped first because the admissible shifts depend on it.
    Off-grid values are snapped toward ``m_min`` / toward zero.
    """
    return clip_values(p.m, p.delta, space)


def clip_values(m: int, delta: int, space: SearchSpace) -> AlignmentPolicy:
    """:func:`clip_policy` for raw values, which may not form a valid policy yet."""
    m = min(max(m, space.m_min), space.m_max)
    m = space.m_min + (m - space.m_min) // space.s_m * space.s_m
    d = int(math.copysign(abs(delta) // space.s_delta * space.s_delta, delta))
    lo, hi = space.shift_interval(m)
    return AlignmentPolicy(m, min(max(d, lo), hi))


def intersection_crossover(
    p1: AlignmentPolicy,
    p2: AlignmentPolicy,
    space: SearchSpace,
    acc1: Optional[float] = None,
    acc2: Optional[float] = None,
) -> Tuple[AlignmentPolicy, int]:
    """Child policy whose crop best matches the overlap of both parents' crops.

    Returns ``(child, parent_index)`` where ``parent_index`` (1 or 2) names the
    parent whose crop overlaps the child's crop more; that parent's weights
    are the ones to inherit.

    IOU ties among candidates go to the crop whose centre is closest to the
    overlap centre, then to enumeration order. Parent ties go to the higher
    ``acc``, then to parent 1.
    """
    a1, a2 = space.box(p1), space.box(p2)
    overlap = a1.intersection(a2)
    if overlap is None:
        raise PolicyError(f"crops of {p1} and {p2} do not intersect")
    cx, cy = overlap.center

    best, best_key = None, None
    for idx, (p, b) in enumerate(zip(space.candidates(), candidate_boxes(space))):
        bx, by = b.center
        key = (-box_iou(b, overlap), (bx - cx) ** 2 + (by - cy) ** 2, idx)
        if best_key is None or key < best_key:
            best, best_key = p, key

    child_box = space.box(best)
    s1, s2 = box_iou(child_box, a1), box_iou(child_box, a2)
    if s1 != s2:
        return best, (1 if s1 > s2 else 2)
    if acc1 is not None and acc2 is not None and acc2 > acc1:
        return best, 2
    return best, 1

