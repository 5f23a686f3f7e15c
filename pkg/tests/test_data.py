import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from tpmamba.data import (
    DataError,
    ImageFolder,
    PatchStream,
    bicubic_down,
    bicubic_resize,
    bicubic_up,
    cubic,
    dihedral,
    dihedral_inverse,
    load_png,
    mod_crop,
    resize_matrix,
    rgb_to_ycbcr_y,
    sample_patch,
    save_png,
)
from tpmamba.rng import SplitMix64


def test_cubic_kernel_values():
    assert cubic(np.array([0.0, 1.0, 2.0, 2.5])).tolist() == [1.0, 0.0, 0.0, 0.0]
    assert cubic(np.array([0.5]))[0] == pytest.approx(0.5625, abs=1e-15)
    assert cubic(np.array([1.5]))[0] == pytest.approx(-0.0625, abs=1e-15)


@given(st.integers(2, 40), st.integers(2, 40))
def test_resize_rows_are_normalised(n_in, n_out):
    m = resize_matrix(n_in, n_out)
    assert m.shape == (n_out, n_in)
    assert np.allclose(m.sum(1), 1.0, atol=1e-14)


def test_upsampled_ramp_is_linear_in_the_interior():
    ramp = np.tile(np.arange(16.0), (3, 16, 1)) / 16
    up = bicubic_up(ramp, 2)[0]
    inner = up[:, 4:-4]
    # half-pixel mapping: output x samples input at (x + 0.5)/2 - 0.5
    xs = (np.arange(32)[4:-4] + 0.5) / 2 - 0.5
    assert np.allclose(inner, xs / 16, atol=1e-14)


def test_constant_survives_resampling():
    c = np.full((3, 24, 24), 0.37)
    for out in (bicubic_down(c, 3), bicubic_up(c, 2), bicubic_resize(c, 10, 17)):
        assert np.allclose(out, 0.37, atol=1e-15)


def test_down_requires_divisible_extents_and_mod_crop():
    with pytest.raises(DataError):
        bicubic_down(np.zeros((3, 10, 9)), 2)
    assert mod_crop(np.zeros((3, 10, 9)), 4).shape == (3, 8, 8)


def test_dihedral_group():
    img = np.random.default_rng(0).random((3, 6, 6))
    outs = [dihedral(img, k) for k in range(8)]
    assert len({o.tobytes() for o in outs}) == 8
    for k in range(8):
        assert np.array_equal(dihedral(outs[k], dihedral_inverse(k)), img)
    assert np.array_equal(dihedral(img, 4), img[:, :, ::-1])


def test_dihedral_commutes_with_degradation():
    img = np.random.default_rng(1).random((3, 24, 24))
    for k in range(8):
        a = bicubic_down(dihedral(img, k), 2)
        b = dihedral(bicubic_down(img, 2), k)
        assert np.max(np.abs(a - b)) < 1e-14


def test_luma_endpoints():
    assert rgb_to_ycbcr_y(np.zeros((3, 1, 1)))[0, 0] == pytest.approx(16 / 255, abs=1e-15)
    assert rgb_to_ycbcr_y(np.ones((3, 1, 1)))[0, 0] == pytest.approx(235 / 255, abs=1e-12)


def test_png_round_trip(tmp_path):
    raw = np.random.default_rng(2).integers(0, 256, (3, 7, 5)).astype(np.float64) / 255
    save_png(raw, tmp_path / "a.png")
    assert np.array_equal(load_png(tmp_path / "a.png"), raw)
    save_png(raw, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_png_gray_and_16bit(tmp_path):
    g8 = np.array([[0, 255], [128, 64]], dtype=np.uint8)
    Image.fromarray(g8, "L").save(tmp_path / "g.png")
    out = load_png(tmp_path / "g.png")
    assert out.shape == (3, 2, 2) and np.array_equal(out[1], g8 / 255.0)
    g16 = np.array([[0, 65535], [1000, 40000]], dtype=np.uint16)
    Image.fromarray(g16).save(tmp_path / "g16.png")
    assert np.allclose(load_png(tmp_path / "g16.png")[0], g16 / 65535.0, atol=1e-15)


def test_png_rejects_other_files(tmp_path):
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "x.jpg", format="JPEG")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    for name in ("x.jpg", "junk.png", "missing.png"):
        with pytest.raises(DataError):
            load_png(tmp_path / name)


def test_image_folder_and_stream(desk_root):
    data = ImageFolder(desk_root / "train")
    hr, lr = data.pair(0, 3)
    assert hr.shape[1] == 3 * lr.shape[1] and hr.shape[2] == 3 * lr.shape[2]
    a, b = PatchStream(data, 2, 8, 3, seed=5), PatchStream(data, 2, 8, 3, seed=5)
    la, ha = a.next_batch()
    lb, hb = b.next_batch()
    assert la.shape == (3, 3, 8, 8) and ha.shape == (3, 3, 16, 16)
    assert np.array_equal(la, lb) and np.array_equal(ha, hb)
    saved = a.state
    nxt = a.next_batch()
    a.state = saved
    assert all(np.array_equal(x, y) for x, y in zip(nxt, a.next_batch()))


def test_stream_lr_is_degraded_hr(desk_root):
    data = ImageFolder(desk_root / "train")
    lr, hr = PatchStream(data, 2, 8, 4, seed=1).next_batch()
    for l, h in zip(lr, hr):
        assert np.allclose(bicubic_down(h, 2), l, atol=1e-14)


def test_sample_patch_too_small():
    with pytest.raises(DataError):
        sample_patch(np.zeros((3, 20, 20)), 2, 16, SplitMix64(0))


def test_folder_errors_and_lr_cache(tmp_path, desk_root):
    with pytest.raises(DataError):
        ImageFolder(tmp_path)
    (tmp_path / "HR").mkdir()
    with pytest.raises(DataError):
        ImageFolder(tmp_path)
    data = ImageFolder(desk_root / "val")
    out = data.cache_lr(2)
    files = sorted(out.glob("*.png"))
    assert len(files) == len(data)
    assert load_png(files[0]).shape[1:] == tuple(s // 2 for s in data.images[0].shape[1:])
