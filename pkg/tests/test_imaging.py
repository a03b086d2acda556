import numpy as np
import pytest

from faps.affine import SimilarityTransform as ST, derive_template_landmarks, estimate_similarity, policy_transform
from faps.geometry import AlignmentPolicy as P, CropBox, policy_to_box
from faps.imaging import (
    CanvasAligner,
    ImageBuffer,
    ImageError,
    align_direct,
    align_via_canvas,
    crop_resize,
    warp_affine,
)
from faps.testcard import make_test_card


def gradient(w, h, fx=1.0, fy=0.0, c=0.0):
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return ImageBuffer(fx * xx + fy * yy + c)


def test_identity_warp_is_exact(rng):
    img = ImageBuffer(rng.uniform(0, 255, (37, 53, 3)))
    out = warp_affine(img, ST.identity(), 53, 37)
    assert np.array_equal(out.pixels, img.pixels)


def test_integer_translation(rng):
    img = ImageBuffer(rng.uniform(1, 255, (20, 30)))
    out = warp_affine(img, ST(1, 0, 3, -2), 30, 20)
    assert np.array_equal(out.pixels[:-2, 3:], img.pixels[2:, :-3])
    assert np.all(out.pixels[:, :3] == 0) and np.all(out.pixels[-2:, :] == 0)


def test_scale_two_halves_gradient():
    img = gradient(100, 100)
    out = warp_affine(img, ST(2, 0, 0, 0), 190, 190)
    xs = np.arange(190) / 2
    assert np.abs(out.pixels[10:-10, 10:-10, 0] - xs[None, 10:-10]).max() <= 0.5
    # outside the source footprint is filled with zeros
    assert warp_affine(img, ST(2, 0, 0, 0), 220, 220).pixels[0, 219, 0] == 0


def test_zero_output_rejected():
    with pytest.raises(ImageError):
        warp_affine(gradient(4, 4), ST.identity(), 0, 4)


def test_per_channel_warp_matches(rng):
    img = ImageBuffer(rng.uniform(0, 255, (40, 40, 3)))
    t = ST.from_scale_rotation(0.9, 0.3, 5, -2)
    whole = warp_affine(img, t, 33, 35)
    for c in range(3):
        assert np.array_equal(warp_affine(img.channel(c), t, 33, 35).pixels[..., 0], whole.pixels[..., c])


def test_crop_full_box_is_identity(rng):
    img = ImageBuffer(rng.uniform(0, 255, (64, 64)))
    assert np.array_equal(crop_resize(img, CropBox.square(0, 0, 64), 64).pixels, img.pixels)


def test_crop_same_size_is_integer_crop(rng):
    img = ImageBuffer(rng.uniform(0, 255, (80, 90, 3)))
    out = crop_resize(img, CropBox.square(7, 11, 40), 40)
    assert np.array_equal(out.pixels, img.pixels[11:51, 7:47])


def test_crop_downscale_gradient():
    img = gradient(100, 100, fx=1.0, fy=0.5)
    out = crop_resize(img, CropBox.square(0, 0, 100), 50)
    yy, xx = np.mgrid[0:50, 0:50]
    assert np.abs(out.pixels[..., 0] - (2 * xx + 0.5 * 2 * yy)).max() <= 0.5


def test_crop_outside_rejected():
    with pytest.raises(ImageError):
        crop_resize(gradient(50, 50), CropBox.square(10, 10, 45), 20)


def test_direct_alignment_of_pre_aligned_image(base, rng):
    img = ImageBuffer(rng.uniform(0, 255, (150, 150)))
    p = P(200, 8)
    out = align_direct(img, derive_template_landmarks(p, base), p, base)
    assert np.allclose(out.pixels, img.pixels[:112, :112], atol=1e-9)


def test_anchor_lands_at_centre(base):
    img, landmarks = make_test_card(seed=3, marker=True, landmark_noise=0.0)
    out = align_direct(img, landmarks, P(232, 0), base).pixels[..., 0]
    yy, xx = np.mgrid[0:112, 0:112]
    w = np.where(out > 0.5 * out.max(), out, 0)
    cy, cx = (w * yy).sum() / w.sum(), (w * xx).sum() / w.sum()
    assert abs(cx - 56) <= 0.5 and abs(cy - 56) <= 0.5


def test_canvas_path_matches_linear_image(base):
    """Bilinear sampling reproduces linear images, so both warps can be checked analytically."""
    img = gradient(500, 500, fx=0.3, fy=0.2, c=10)
    pose = ST.from_scale_rotation(1.2, 0.15, 40, 30)
    landmarks = pose.apply(base.points)
    p = P(192, 4)
    out = align_via_canvas(img, landmarks, p, base)
    # output -> canvas -> source, composed by hand
    t0 = estimate_similarity(landmarks, base.points)
    back = t0.inverse() @ policy_transform(p, base).inverse()
    yy, xx = np.mgrid[0:112, 0:112].astype(float)
    src = back.apply(np.stack([xx, yy], axis=-1))
    expected = 0.3 * src[..., 0] + 0.2 * src[..., 1] + 10
    assert np.abs(out.pixels[..., 0] - expected).max() <= 1.0


def test_two_paths_agree_on_smooth_card(base):
    img, landmarks = make_test_card(seed=11)
    p = P(232, 0)
    d = align_direct(img, landmarks, p, base).pixels - align_via_canvas(img, landmarks, p, base).pixels
    assert np.abs(d).max() <= 2.0 and np.abs(d).mean() <= 0.5


def test_canvas_is_warped_once_for_many_policies(base):
    img, landmarks = make_test_card(seed=1)
    aligner = CanvasAligner(img, landmarks, base)
    a = aligner.align(P(232, 0))
    b = aligner.align(P(160, -32))
    assert aligner.canvas_warps == 1
    assert a.pixels.shape == b.pixels.shape == (112, 112, 1)


def test_uint8_conversion_rounds_half_away():
    img = ImageBuffer(np.array([[0.5, 1.49, 2.5, 254.5, 300.0, -3.0]]))
    assert img.to_uint8()[0, :, 0].tolist() == [1, 1, 3, 255, 255, 0]


def test_bad_buffers_rejected():
    with pytest.raises(ImageError):
        ImageBuffer(np.zeros((4, 4, 2)))
    with pytest.raises(ImageError):
        ImageBuffer(np.zeros((0, 4)))


def test_policy_box_inside_canvas(base):
    box = policy_to_box(P(232, 0), base.canvas)
    assert box.right <= base.canvas and box.bottom <= base.canvas
