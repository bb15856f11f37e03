import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bytehue.encoder import (
    ColorImage,
    EncodingConfig,
    PixelSequence,
    bytes_to_pixels,
    encode_bytecode,
    image_to_png,
    image_to_tensor,
    pixels_to_bytes,
    pixels_to_image,
    png_to_image,
    resize,
)
from bytehue.errors import InconsistentLengthError, UnsupportedPngVariantError


class TestBytesToPixels:
    def test_worked_example(self):
        # 606060 -> (96,96,96), 405260 -> (64,82,96)
        seq = bytes_to_pixels(bytes.fromhex("606060405260"))
        assert seq.pixels.tolist() == [[96, 96, 96], [64, 82, 96]]

    def test_direct_conversion_00357c(self):
        seq = bytes_to_pixels(bytes.fromhex("00357c"))
        assert seq.pixels.tolist() == [[0, 53, 124]]

    def test_padding_rule(self):
        seq = bytes_to_pixels(bytes.fromhex("6060"))
        assert seq.pixels.tolist() == [[96, 96, 0]]
        assert seq.source_len == 2

    def test_custom_pad_byte(self):
        seq = bytes_to_pixels(b"\x60", EncodingConfig(pad_byte=0xAB))
        assert seq.pixels.tolist() == [[0x60, 0xAB, 0xAB]]

    def test_pixel_count_law(self):
        for n in (1, 2, 3, 4, 7, 300):
            seq = bytes_to_pixels(bytes(i % 256 for i in range(n)))
            assert len(seq.pixels) == math.ceil(n / 3)


class TestPixelsToBytes:
    def test_inverse_of_worked_example(self):
        seq = PixelSequence(np.array([[96, 96, 96], [64, 82, 96]], dtype=np.uint8), 6)
        assert pixels_to_bytes(seq) == bytes.fromhex("606060405260")

    def test_padding_removed(self):
        seq = PixelSequence(np.array([[96, 96, 0]], dtype=np.uint8), 2)
        assert pixels_to_bytes(seq) == bytes.fromhex("6060")

    def test_inconsistent_length(self):
        seq = PixelSequence(np.array([[96, 96, 0]], dtype=np.uint8), 9)
        with pytest.raises(InconsistentLengthError):
            pixels_to_bytes(seq)

    @given(st.binary(min_size=1, max_size=2048))
    @settings(max_examples=300)
    def test_roundtrip(self, code):
        assert pixels_to_bytes(bytes_to_pixels(code)) == code


class TestPixelsToImage:
    def test_square_with_tail_padding(self):
        seq = bytes_to_pixels(bytes(range(15)))  # 5 pixels
        img = pixels_to_image(seq)
        assert (img.height, img.width) == (3, 3)
        flat = img.data.reshape(-1, 3)
        assert np.array_equal(flat[:5], seq.pixels)
        assert np.all(flat[5:] == 0)

    def test_single_pixel(self):
        img = pixels_to_image(bytes_to_pixels(b"\x01\x02\x03"))
        assert (img.height, img.width) == (1, 1)
        assert img.data[0, 0].tolist() == [1, 2, 3]

    def test_fixed_width(self):
        cfg = EncodingConfig(layout="fixed_width", fixed_width=4)
        img = pixels_to_image(bytes_to_pixels(bytes(range(18)), cfg), cfg)  # 6 pixels
        assert (img.height, img.width) == (2, 4)
        assert np.all(img.data.reshape(-1, 3)[6:] == 0)


def random_image(rng, h, w):
    return ColorImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class TestResize:
    def test_identity_at_same_size(self, rng):
        img = random_image(rng, 7, 7)
        out = resize(img, EncodingConfig(target_size=(7, 7)))
        assert np.array_equal(out.data, img.data)

    def test_2x2_to_4x4_blocks(self, rng):
        img = random_image(rng, 2, 2)
        out = resize(img, EncodingConfig(target_size=(4, 4)))
        # index formula gives src rows/cols [0,0,1,1]
        expected = img.data[[0, 0, 1, 1]][:, [0, 0, 1, 1]]
        assert np.array_equal(out.data, expected)

    def test_1x1_upscale_constant(self, rng):
        img = random_image(rng, 1, 1)
        for filt in ("nearest", "bilinear"):
            out = resize(img, EncodingConfig(target_size=(5, 9), resize_filter=filt))
            assert np.all(out.data == img.data[0, 0])

    def test_monochrome_preserved(self):
        img = ColorImage(np.full((6, 11, 3), [13, 200, 77], dtype=np.uint8))
        for filt in ("nearest", "bilinear"):
            out = resize(img, EncodingConfig(target_size=(4, 4), resize_filter=filt))
            assert np.all(out.data == [13, 200, 77])

    def test_nearest_matches_index_formula_oracle(self, rng):
        img = random_image(rng, 5, 9)
        th, tw = 8, 4
        out = resize(img, EncodingConfig(target_size=(th, tw)))
        for i in range(th):
            for j in range(tw):
                si = min(int((i + 0.5) * 5 / th), 4)
                sj = min(int((j + 0.5) * 9 / tw), 8)
                assert np.array_equal(out.data[i, j], img.data[si, sj])

    def test_bilinear_downscale_average_oracle(self):
        # 2x downscale with center alignment averages each 2x2 block exactly
        rng = np.random.default_rng(7)
        img = random_image(rng, 4, 4)
        out = resize(img, EncodingConfig(target_size=(2, 2), resize_filter="bilinear"))
        blocks = img.data.astype(np.float64).reshape(2, 2, 2, 2, 3).mean(axis=(1, 3))
        expected = np.floor(blocks + 0.5).astype(np.uint8)
        assert np.array_equal(out.data, expected)


class TestTensor:
    def test_red_pixel(self):
        img = ColorImage(np.array([[[255, 0, 0]]], dtype=np.uint8))
        t = image_to_tensor(img)
        assert t.shape == (3, 1, 1)
        assert t.dtype == np.float64
        assert t[:, 0, 0].tolist() == [1.0, 0.0, 0.0]

    def test_all_black(self):
        t = image_to_tensor(ColorImage(np.zeros((4, 4, 3), dtype=np.uint8)))
        assert np.all(t == 0.0)

    def test_gray_96(self):
        img = ColorImage(np.full((1, 1, 3), 96, dtype=np.uint8))
        t = image_to_tensor(img)
        assert np.allclose(t, 96 / 255)

    def test_determinism_end_to_end(self):
        code = bytes.fromhex("606060405260") * 100
        cfg = EncodingConfig(target_size=(16, 16))
        a = encode_bytecode(code, cfg)
        b = encode_bytecode(code, cfg)
        assert np.array_equal(a, b)


class TestPng:
    def test_roundtrip_random_16x16(self, rng, tmp_path):
        img = random_image(rng, 16, 16)
        path = tmp_path / "img.png"
        image_to_png(img, path)
        back = png_to_image(path)
        assert np.array_equal(back.data, img.data)

    def test_png_bytes_deterministic(self, rng, tmp_path):
        img = random_image(rng, 8, 8)
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        image_to_png(img, p1)
        image_to_png(img, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_grayscale_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
        with pytest.raises(UnsupportedPngVariantError):
            png_to_image(path)

    def test_decodable_by_independent_reader(self, tmp_path):
        cv2 = pytest.importorskip("cv2")
        code = bytes.fromhex("6060604052" + "0035" + "7c" * 20)
        seq = bytes_to_pixels(code)
        img = pixels_to_image(seq)
        path = tmp_path / "dao.png"
        image_to_png(img, path)
        decoded = cv2.imread(str(path), cv2.IMREAD_COLOR)  # BGR order
        assert decoded is not None
        assert np.array_equal(decoded[:, :, ::-1], img.data)
