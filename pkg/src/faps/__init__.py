"""Face alignment policy search."""

from .affine import BaseTemplate, SimilarityTransform, compose, derive_template_landmarks, estimate_similarity, policy_transform
from .geometry import (
    AlignmentPolicy,
    CropBox,
    Rect,
    SearchSpace,
    box_iou,
    clip_policy,
    enumerate_space,
    intersection_crossover,
    policy_to_box,
)
from .imaging import ImageBuffer, align_direct, align_via_canvas, crop_resize, read_pnm, warp_affine, write_pnm
from .search import SearchConfig, SearchResult, explore, run_search
from .trainers import SyntheticTrainer, SyntheticTrainerConfig, Trainer, run_grid

__all__ = [
    "AlignmentPolicy",
    "BaseTemplate",
    "CropBox",
    "ImageBuffer",
    "Rect",
    "SearchConfig",
    "SearchResult",
    "SearchSpace",
    "SimilarityTransform",
    "SyntheticTrainer",
    "SyntheticTrainerConfig",
    "Trainer",
    "align_direct",
    "align_via_canvas",
    "box_iou",
    "clip_policy",
    "compose",
    "crop_resize",
    "derive_template_landmarks",
    "enumerate_space",
    "estimate_similarity",
    "explore",
    "intersection_crossover",
    "policy_to_box",
    "policy_transform",
    "read_pnm",
    "run_grid",
    "run_search",
    "warp_affine",
    "write_pnm",
]
