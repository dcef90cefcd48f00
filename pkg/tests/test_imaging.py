import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image as PILImage

from src.imaging.image_io import ImageFormatError, list_pngs, load_png, save_png, to_bytes
from src.imaging.metrics import LAPLACIAN_KERNEL, PSNR_INF, laplacian, laplacian_stats, mse, psnr
from src.imaging.pairs import hr_side, make_lr_hr_pair
from src.imaging.resample import bicubic_resize, center_crop, cubic_kernel, resample_matrix
from src.imaging.synthetic import make_dataset, synth_image


# -- PNG IO ------------------------------------------------------------------


def test_png_round_trip_is_exact_on_8bit_values(tmp_path, rng):
    img = rng.integers(0, 256, size=(7, 9, 3)) / 255.0
    save_png(img, tmp_path / "a.png")
    back = load_png(tmp_path / "a.png")
    assert back.shape == (7, 9, 3)
    np.testing.assert_array_equal(back, img)


def test_to_bytes_rounds_and_clips():
    img = np.array([[[-0.2, 0.5, 1.7]]])
    np.testing.assert_array_equal(to_bytes(img), [[[0, 128, 255]]])


@pytest.mark.parametrize("mode", ["L", "RGBA", "P"])
def test_non_rgb_png_rejected(tmp_path, mode):
    path = tmp_path / f"{mode}.png"
    PILImage.new(mode, (4, 4)).save(path)
    with pytest.raises(ImageFormatError):
        load_png(path)


def test_16bit_png_rejected(tmp_path):
    path = tmp_path / "deep.png"
    PILImage.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(ImageFormatError):
        load_png(path)


def test_not_a_png(tmp_path):
    path = tmp_path / "fake.png"
    path.write_bytes(b"definitely not an image")
    with pytest.raises(ImageFormatError):
        load_png(path)


def test_missing_png():
    with pytest.raises(FileNotFoundError):
        load_png("/nonexistent/x.png")


def test_list_pngs_sorted(tmp_path):
    for name in ("b.png", "a.png", "c.txt"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in list_pngs(tmp_path)] == ["a.png", "b.png"]


# -- resampling --------------------------------------------------------------


def test_cubic_kernel_values():
    np.testing.assert_allclose(cubic_kernel(np.array([0.0, 1.0, 2.0, 0.5])), [1.0, 0.0, 0.0, 0.5625])


@pytest.mark.parametrize("n_in,n_out", [(8, 8), (8, 16), (16, 5), (7, 13), (1, 4), (30, 1)])
def test_resample_rows_are_normalized(n_in, n_out):
    m = resample_matrix(n_in, n_out)
    assert m.shape == (n_out, n_in)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)


def test_bicubic_identity_when_dims_match(random_image):
    np.testing.assert_array_equal(bicubic_resize(random_image, 12, 10), random_image)


def test_bicubic_constant_image_stays_constant():
    img = np.full((9, 11, 3), 0.3)
    for h, w in [(4, 5), (20, 33), (9, 2)]:
        np.testing.assert_allclose(bicubic_resize(img, h, w), 0.3, atol=1e-12)


def test_bicubic_output_clamped(rng):
    img = (rng.random((8, 8, 3)) > 0.5).astype(np.float64)
    out = bicubic_resize(img, 29, 31)
    assert out.shape == (29, 31, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_bicubic_rejects_empty_output(random_image):
    with pytest.raises(ValueError):
        bicubic_resize(random_image, 0, 4)


def test_center_crop():
    img = np.arange(5 * 6 * 3, dtype=float).reshape(5, 6, 3)
    crop = center_crop(img, 3, 2)
    np.testing.assert_array_equal(crop, img[1:4, 2:4])
    with pytest.raises(ValueError):
        center_crop(img, 6, 2)


# -- metrics -----------------------------------------------------------------


def test_psnr_matches_brute_force(rng):
    for _ in range(100):
        h, w = rng.integers(1, 9, size=2)
        a, b = rng.random((h, w, 3)), rng.random((h, w, 3))
        total = 0.0
        for i in range(h):
            for j in range(w):
                for c in range(3):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
        ref = 10.0 * np.log10(1.0 / (total / (h * w * 3)))
        assert abs(psnr(a, b) - ref) < 1e-9


def test_psnr_identical_is_inf(random_image):
    assert psnr(random_image, random_image.copy()) == PSNR_INF


def test_psnr_dimension_mismatch(random_image):
    with pytest.raises(ValueError):
        psnr(random_image, random_image[:-1])


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 5, 3), elements=st.floats(0, 1)),
    arrays(np.float64, (4, 5, 3), elements=st.floats(0, 1)),
)
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)
    assert mse(a, b) >= 0.0


def _brute_laplacian(img):
    h, w, _ = img.shape
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            for c in range(3):
                out[i, j, c] = np.sum(LAPLACIAN_KERNEL * padded[i : i + 3, j : j + 3, c])
    return out


def test_laplacian_stats_match_brute_force(rng):
    for _ in range(100):
        h, w = rng.integers(1, 8, size=2)
        img, gt = rng.random((h, w, 3)), rng.random((h, w, 3))
        lap, lap_gt = _brute_laplacian(img), _brute_laplacian(gt)
        mean_abs, err = laplacian_stats(img, gt)
        assert abs(mean_abs - np.mean(np.abs(lap))) < 1e-9
        assert abs(err - np.mean(np.abs(lap - lap_gt))) < 1e-9


def test_laplacian_of_constant_interior_is_zero():
    lap = laplacian(np.full((5, 5, 3), 0.7))
    np.testing.assert_allclose(lap[1:-1, 1:-1], 0.0, atol=1e-12)
    assert laplacian_stats(np.full((5, 5, 3), 0.7), np.full((5, 5, 3), 0.7))[1] == 0.0


# -- LR/HR pairs and the synthetic corpus --------------------------------------


def test_pair_shapes_and_side():
    hr = np.random.default_rng(0).random((100, 100, 3))
    lr, patch = make_lr_hr_pair(hr, 2.0, 48, np.random.default_rng(1))
    assert patch.shape == (96, 96, 3)
    assert lr.shape == (48, 48, 3)
    assert hr_side(2.5, 10) == 25


def test_pair_takes_exactly_one_draw():
    hr = np.random.default_rng(0).random((40, 40, 3))
    rng = np.random.default_rng(5)
    twin = np.random.default_rng(5)
    make_lr_hr_pair(hr, 3.0, 8, rng)
    twin.integers(0, [40 - 24 + 1, 40 - 24 + 1])
    assert rng.random() == twin.random()


def test_pair_crop_is_aligned():
    hr = np.random.default_rng(0).random((30, 30, 3))
    lr, patch = make_lr_hr_pair(hr, 2.0, 6, np.random.default_rng(3))
    np.testing.assert_array_equal(lr, bicubic_resize(patch, 6, 6))
    # the patch is a verbatim window of the source
    found = any(
        np.array_equal(hr[t : t + 12, l : l + 12], patch) for t in range(19) for l in range(19)
    )
    assert found


def test_pair_errors():
    hr = np.zeros((20, 20, 3))
    with pytest.raises(ValueError, match="too small"):
        make_lr_hr_pair(hr, 4.0, 8, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_lr_hr_pair(hr, 0.5, 8, np.random.default_rng(0))


def test_synthetic_corpus_is_seeded(tmp_path):
    a = make_dataset(tmp_path / "a", count=2, size=24, seed=3)
    b = make_dataset(tmp_path / "b", count=2, size=24, seed=3)
    assert [p.name for p in a] == ["img_0000.png", "img_0001.png"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_synthetic_image_range():
    img = synth_image(32, np.random.default_rng(0))
    assert img.shape == (32, 32, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0


def _keys_weight(x):
    x = abs(x)
    if x <= 1:
        return 1.5 * x**3 - 2.5 * x**2 + 1
    if x < 2:
        return -0.5 * x**3 + 2.5 * x**2 - 4 * x + 2
    return 0.0


def test_bicubic_ramp_upscale_matches_closed_form():
    ramp = np.arange(8) / 7.0
    img = np.repeat(ramp[None, :, None], 3, axis=2)
    out = bicubic_resize(img, 2, 16)
    for j in range(16):
        center = (j + 0.5) / 2 - 0.5
        taps = [t for t in range(8) if abs(t - center) < 2]
        w = np.array([_keys_weight(t - center) for t in taps])
        expected = np.clip(np.dot(w, ramp[taps]) / w.sum(), 0.0, 1.0)
        np.testing.assert_allclose(out[:, j, :], expected, atol=1e-12)
        if 1.0 <= center <= 6.0:
            # interior samples reproduce the linear ramp
            assert out[0, j, 0] == pytest.approx(center / 7.0, abs=1e-12)


def test_bicubic_round_trip_on_smooth_image():
    yy, xx = np.mgrid[0:64, 0:64] / 64.0
    img = np.stack(
        [0.5 + 0.3 * np.sin(2 * np.pi * xx), 0.5 + 0.3 * np.cos(2 * np.pi * yy), 0.4 + 0.2 * xx * yy], axis=-1
    )
    back = bicubic_resize(bicubic_resize(img, 32, 32), 64, 64)
    assert psnr(back, img) > 35.0


def test_laplacian_of_interior_impulse():
    img = np.zeros((7, 9, 3))
    img[3, 4, 1] = 1.0
    lap = laplacian(img)
    assert np.mean(np.abs(lap[:, :, 1])) == pytest.approx(8.0 / 63)
    assert np.abs(lap[:, :, 0]).sum() == 0.0
    mean_abs, _ = laplacian_stats(img, np.zeros_like(img))
    assert mean_abs == pytest.approx(8.0 / (63 * 3))
