"""Pixel residual between direct alignment and crop-from-canvas, at two canvas scales."""

import argparse

import numpy as np

from faps.affine import BaseTemplate
from faps.geometry import AlignmentPolicy, SearchSpace, enumerate_space
from faps.imaging import CanvasAligner, align_direct
from faps.testcard import make_test_card


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--factors", type=int, nargs="+", default=[1, 2])
    args = ap.parse_args()

    base = BaseTemplate()
    policies = enumerate_space(SearchSpace())
    cards = [make_test_card(seed=s) for s in range(args.images)]
    print("canvas,max_abs_diff,mean_abs_diff")
    for k in args.factors:
        big = base.scaled(k)
        worst, means = 0.0, []
        for img, lms in cards:
            aligner = CanvasAligner(img, lms, big)
            for p in policies:
                d = np.abs(align_direct(img, lms, p, base).pixels - aligner.align(AlignmentPolicy(p.m * k, p.delta * k)).pixels)
                worst = max(worst, float(d.max()))
                means.append(float(d.mean()))
        print(f"{big.canvas},{worst:.4f},{np.mean(means):.6f}")


if __name__ == "__main__":
    main()
