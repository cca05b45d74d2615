import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from chanrecon import Channel, RGBImage, load_image, remove_channel, save_image
from chanrecon.errors import ChannelCountError, DecodeError, DimensionError


def random_image(rng, h=8, w=8):
    return RGBImage(rng.random((h, w, 3)).astype(np.float32))


class TestRGBImage:
    def test_invariants_enforced(self):
        with pytest.raises(DimensionError):
            RGBImage(np.zeros((4, 4, 2)))
        with pytest.raises(DimensionError):
            RGBImage(np.full((4, 4, 3), 1.5))
        with pytest.raises(DimensionError):
            RGBImage(np.full((4, 4, 3), np.nan))
        with pytest.raises(DimensionError):
            RGBImage(np.zeros((0, 4, 3)))

    def test_data_is_readonly(self):
        img = RGBImage(np.zeros((4, 4, 3)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0


class TestLoadImage:
    def test_identity_resize_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        u8 = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        path = tmp_path / "img.png"
        Image.fromarray(u8).save(path)
        loaded = load_image(path, (16, 16))
        assert np.array_equal(loaded.data, (u8 / 255.0).astype(np.float32))

    def test_8bit_endpoints(self, tmp_path):
        u8 = np.zeros((4, 4, 3), dtype=np.uint8)
        u8[0, 0] = 255
        path = tmp_path / "endpoints.png"
        Image.fromarray(u8).save(path)
        loaded = load_image(path, (4, 4))
        assert loaded.data[0, 0, 0] == 1.0
        assert loaded.data[1, 1, 0] == 0.0

    def test_two_channel_file_rejected(self, tmp_path):
        path = tmp_path / "la.png"
        Image.fromarray(np.zeros((4, 4, 2), dtype=np.uint8), mode="LA").save(path)
        with pytest.raises(ChannelCountError):
            load_image(path, (4, 4))

    def test_grayscale_and_alpha_rejected(self, tmp_path):
        gray = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(gray)
        with pytest.raises(ChannelCountError):
            load_image(gray, (4, 4))
        rgba = tmp_path / "rgba.png"
        Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8), mode="RGBA").save(rgba)
        with pytest.raises(ChannelCountError):
            load_image(rgba, (4, 4))

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(DecodeError):
            load_image(path, (4, 4))

    def test_resize_hits_target_and_range(self, tmp_path):
        rng = np.random.default_rng(1)
        u8 = rng.integers(0, 256, (13, 9, 3), dtype=np.uint8)
        path = tmp_path / "odd.png"
        Image.fromarray(u8).save(path)
        loaded = load_image(path, (32, 24))
        assert (loaded.height, loaded.width) == (32, 24)
        assert loaded.data.min() >= 0.0 and loaded.data.max() <= 1.0

    def test_load_fuzz_over_random_files(self, tmp_path):
        # load output must satisfy RGBImage invariants for arbitrary valid files
        rng = np.random.default_rng(2)
        for i in range(25):
            h, w = rng.integers(1, 40, 2)
            u8 = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
            path = tmp_path / f"fuzz_{i}.png"
            Image.fromarray(u8).save(path)
            loaded = load_image(path, (16, 16))
            assert loaded.data.shape == (16, 16, 3)
            assert loaded.data.min() >= 0.0 and loaded.data.max() <= 1.0

    def test_save_round_half_up(self, tmp_path):
        img = RGBImage(np.full((2, 2, 3), 0.5, dtype=np.float64))
        path = tmp_path / "half.png"
        save_image(img, path)
        back = np.asarray(Image.open(path))
        assert back[0, 0, 0] == 128  # 0.5*255 = 127.5 rounds up


class TestRemoveChannel:
    def test_pixel_example(self):
        img = RGBImage(np.array([[[0.47, 0.78, 0.18]]], dtype=np.float32))
        out = remove_channel(img, Channel.G)
        assert np.allclose(out.data[0, 0], [0.47, 0.0, 0.18])
        assert out.data[0, 0, 1] == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        img = random_image(rng)
        once = remove_channel(img, Channel.G)
        twice = remove_channel(once, Channel.G)
        assert np.array_equal(once.data, twice.data)

    def test_zero_image_fixed_point(self):
        img = RGBImage(np.zeros((4, 4, 3)))
        for ch in Channel:
            assert np.array_equal(remove_channel(img, ch).data, img.data)

    def test_input_not_modified(self):
        rng = np.random.default_rng(4)
        img = random_image(rng)
        before = img.data.copy()
        remove_channel(img, Channel.R)
        assert np.array_equal(img.data, before)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_zero_plane_and_others_identical(self, seed):
        rng = np.random.default_rng(seed)
        img = random_image(rng, h=int(rng.integers(1, 12)), w=int(rng.integers(1, 12)))
        for ch in Channel:
            out = remove_channel(img, ch)
            assert np.all(out.plane(ch) == 0.0)
            for other in Channel:
                if other != ch:
                    assert np.array_equal(out.plane(other), img.plane(other))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_commutes_across_channels(self, seed):
        rng = np.random.default_rng(seed)
        img = random_image(rng)
        ab = remove_channel(remove_channel(img, Channel.R), Channel.B)
        ba = remove_channel(remove_channel(img, Channel.B), Channel.R)
        assert np.array_equal(ab.data, ba.data)
