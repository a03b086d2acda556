"""Write a synthetic face-like test card (PGM/PPM) and its 5-point landmark CSV."""

import argparse
from pathlib import Path

from faps.cli import write_landmarks_csv
from faps.imaging import write_pnm
from faps.testcard import make_test_card


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=400)
    ap.add_argument("--color", action="store_true")
    ap.add_argument("--marker", action="store_true", help="bright dot at the template anchor (sharp edge, not smooth)")
    ap.add_argument("--out", default="card")
    args = ap.parse_args()

    img, lms = make_test_card(seed=args.seed, size=args.size, channels=3 if args.color else 1, marker=args.marker)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    image_path = stem.with_suffix(".ppm" if args.color else ".pgm")
    write_pnm(img, image_path)
    write_landmarks_csv(lms, stem.with_suffix(".csv"))
    print(image_path)
    print(stem.with_suffix(".csv"))


if __name__ == "__main__":
    main()
