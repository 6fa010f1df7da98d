"""
Tests for image buffers, bilinear interpolation, convolution and image I/O.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detblind.common.errors import DomainError, ImageFormatError
from detblind.imaging import (
    CornerQuad,
    ImageBuffer,
    bilinear_interpolate,
    conv2d,
    decode_uint16_png,
    encode_class_map_pgm,
    encode_image,
    encode_uint16_png,
    load_image,
    resize_bilinear,
    save_image,
    upsample,
)

unit_floats = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


def matrix_form(q: CornerQuad, a: float, b: float) -> float:
    """Closed-form bilinear interpolation as a row-vector / matrix / column-vector product."""
    left = np.array([q.a2 - a, a - q.a1])
    values = np.array([[q.f11, q.f12], [q.f21, q.f22]])
    right = np.array([q.b2 - b, b - q.b1])
    return float(left @ values @ right / ((q.a2 - q.a1) * (q.b2 - q.b1)))


def random_quad(rng: np.random.Generator) -> CornerQuad:
    a1, b1 = rng.uniform(-5, 5, size=2)
    a2, b2 = a1 + rng.uniform(0.1, 5), b1 + rng.uniform(0.1, 5)
    f11, f12, f21, f22 = rng.uniform(-3, 3, size=4)
    return CornerQuad(a1=a1, a2=a2, b1=b1, b2=b2, f11=f11, f12=f12, f21=f21, f22=f22)


def naive_conv(data: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    height, width, channels = data.shape
    k = kernel.shape[-1]
    oh, ow = (height - k) // stride + 1, (width - k) // stride + 1
    out = np.zeros((oh, ow))
    for i in range(oh):
        for j in range(ow):
            for c in range(channels):
                for di in range(k):
                    for dj in range(k):
                        out[i, j] += data[stride * i + di, stride * j + dj, c] * kernel[di, dj]
    return out


@pytest.mark.unit
class TestImageBuffer:
    """Buffer invariants."""

    def test_shape_and_pixels_length(self, small_image):
        assert small_image.dims == (16, 16, 3)
        assert small_image.pixels.size == 16 * 16 * 3

    def test_rejects_out_of_range_values(self):
        with pytest.raises(DomainError):
            ImageBuffer(np.full((2, 2, 3), 1.5))

    def test_from_array_clamps(self):
        img = ImageBuffer.from_array(np.array([[[-0.5], [2.0]]]))
        assert img.data.min() == 0.0 and img.data.max() == 1.0

    def test_rejects_unsupported_channels(self):
        with pytest.raises(DomainError):
            ImageBuffer(np.zeros((2, 2, 4)))

    def test_rejects_empty_dims(self):
        with pytest.raises(DomainError):
            ImageBuffer(np.zeros((0, 2, 3)))

    def test_buffer_is_read_only(self, small_image):
        with pytest.raises(ValueError):
            small_image.data[0, 0, 0] = 0.5

    def test_with_pixels_checks_shape(self, small_image):
        with pytest.raises(DomainError):
            small_image.with_pixels(np.zeros((2, 2, 3)))


@pytest.mark.unit
class TestBilinearInterpolation:
    """Two-step interpolation on a corner quad."""

    def test_constant_field(self):
        q = CornerQuad(a1=0, a2=3, b1=1, b2=2, f11=5.0, f12=5.0, f21=5.0, f22=5.0)
        assert bilinear_interpolate(q, 1.3, 1.7) == 5.0

    def test_symmetric_center(self):
        q = CornerQuad(a1=0, a2=1, b1=0, b2=1, f11=0.0, f12=0.0, f21=1.0, f22=1.0)
        assert bilinear_interpolate(q, 0.5, 0.5) == 0.5

    def test_corners_are_exact(self, rng):
        for _ in range(50):
            q = random_quad(rng)
            assert bilinear_interpolate(q, q.a1, q.b1) == q.f11
            assert bilinear_interpolate(q, q.a1, q.b2) == q.f12
            assert bilinear_interpolate(q, q.a2, q.b1) == q.f21
            assert bilinear_interpolate(q, q.a2, q.b2) == q.f22

    def test_edges_are_exact_in_both_orders(self, rng):
        for _ in range(50):
            q = random_quad(rng)
            b = float(rng.uniform(q.b1, q.b2))
            a = float(rng.uniform(q.a1, q.a2))
            assert bilinear_interpolate(q, q.a1, b, "ab") == bilinear_interpolate(q, q.a1, b, "ba")
            assert bilinear_interpolate(q, a, q.b2, "ab") == bilinear_interpolate(q, a, q.b2, "ba")

    def test_matches_matrix_oracle(self, rng):
        for _ in range(200):
            q = random_quad(rng)
            a = rng.uniform(q.a1, q.a2)
            b = rng.uniform(q.b1, q.b2)
            assert abs(bilinear_interpolate(q, a, b) - matrix_form(q, a, b)) <= 1e-12

    def test_outside_quad_is_rejected(self):
        q = CornerQuad(a1=0, a2=1, b1=0, b2=1, f11=0, f12=0, f21=0, f22=0)
        with pytest.raises(DomainError):
            bilinear_interpolate(q, 1.5, 0.5)

    def test_degenerate_quad_is_rejected(self):
        with pytest.raises(DomainError):
            CornerQuad(a1=1, a2=1, b1=0, b2=1, f11=0, f12=0, f21=0, f22=0)

    @settings(max_examples=100, deadline=None)
    @given(st.tuples(*[unit_floats] * 4), st.floats(0, 1), st.floats(0, 1))
    def test_axis_order_commutes(self, values, ta, tb):
        q = CornerQuad(a1=0.0, a2=2.0, b1=-1.0, b2=1.0, f11=values[0], f12=values[1], f21=values[2], f22=values[3])
        a, b = 2.0 * ta, -1.0 + 2.0 * tb
        assert abs(bilinear_interpolate(q, a, b, "ab") - bilinear_interpolate(q, a, b, "ba")) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.tuples(*[unit_floats] * 8), unit_floats, unit_floats)
    def test_linear_in_corner_values(self, values, alpha, beta):
        f, g = values[:4], values[4:]
        mix = [alpha * x + beta * y for x, y in zip(f, g)]

        def at(v):
            q = CornerQuad(a1=0.0, a2=1.0, b1=0.0, b2=1.0, f11=v[0], f12=v[1], f21=v[2], f22=v[3])
            return bilinear_interpolate(q, 0.3, 0.6)

        assert abs(at(mix) - (alpha * at(f) + beta * at(g))) <= 1e-9


@pytest.mark.unit
class TestUpsample:
    """Align-corners upsampling."""

    def test_factor_one_is_identity(self, small_image):
        assert upsample(small_image, 1).equals(small_image)

    def test_single_pixel_becomes_constant(self):
        img = ImageBuffer(np.full((1, 1, 3), 0.25))
        out = upsample(img, 4)
        assert out.dims == (4, 4, 3)
        assert np.all(out.data == 0.25)

    def test_zero_factor_is_rejected(self, small_image):
        with pytest.raises(DomainError):
            upsample(small_image, 0)

    def test_matches_per_pixel_oracle(self, rng):
        src = ImageBuffer(rng.uniform(0, 1, size=(2, 3, 1)))
        out = upsample(src, 2)
        h, w = src.height, src.width
        for row in range(out.height):
            for col in range(out.width):
                b = row * (h - 1) / (out.height - 1)
                a = col * (w - 1) / (out.width - 1)
                r0 = min(int(np.floor(b)), h - 2)
                c0 = min(int(np.floor(a)), w - 2)
                q = CornerQuad(
                    a1=c0, a2=c0 + 1, b1=r0, b2=r0 + 1,
                    f11=src.data[r0, c0, 0], f12=src.data[r0 + 1, c0, 0],
                    f21=src.data[r0, c0 + 1, 0], f22=src.data[r0 + 1, c0 + 1, 0],
                )
                assert abs(out.data[row, col, 0] - bilinear_interpolate(q, a, b)) <= 1e-12

    def test_resize_keeps_corners(self, small_image):
        out = resize_bilinear(small_image, 40, 23)
        assert out.dims == (40, 23, 3)
        for (r, c), (sr, sc) in [((0, 0), (0, 0)), ((22, 39), (15, 15)), ((0, 39), (0, 15))]:
            assert np.array_equal(out.data[r, c], small_image.data[sr, sc])


@pytest.mark.unit
class TestConv2d:
    """Valid-padding convolution."""

    def test_all_ones_counts(self):
        out = conv2d(np.ones((3, 3)), np.ones((2, 2)))
        assert out.shape == (2, 2)
        assert np.all(out == 4.0)

    def test_unit_kernel_is_identity(self, small_image):
        out = conv2d(small_image.data[:, :, :1], np.array([[1.0]]))
        assert np.array_equal(out, small_image.data[:, :, 0])

    def test_kernel_larger_than_input(self):
        with pytest.raises(DomainError):
            conv2d(np.ones((2, 2)), np.ones((3, 3)))

    def test_returns_unclamped_array(self, small_image):
        out = conv2d(small_image, np.full((2, 2), 2.0))
        assert type(out) is np.ndarray
        assert out.max() > 1.0
        negative = conv2d(small_image, -np.ones((2, 2)))
        assert negative.min() < 0.0

    def test_matches_naive_oracle(self, rng):
        for _ in range(100):
            channels = int(rng.choice([1, 3]))
            data = rng.uniform(0, 1, size=(5, 5, channels))
            kernel = rng.normal(size=(3, 3))
            stride = int(rng.integers(1, 3))
            assert np.max(np.abs(conv2d(data, kernel, stride) - naive_conv(data, kernel, stride))) <= 1e-12


class TestImageIO:
    """PNG and netpbm round trips."""

    def test_png_round_trip_within_quantization(self, temp_directory, rng):
        img = ImageBuffer(rng.uniform(0, 1, size=(7, 5, 3)))
        path = temp_directory / "x.png"
        save_image(img, path)
        loaded = load_image(path)
        assert loaded.dims == img.dims
        assert np.max(np.abs(loaded.data - img.data)) <= 1 / 255 + 1e-12

    def test_save_load_is_byte_stable(self, temp_directory, rng):
        path = temp_directory / "x.png"
        save_image(ImageBuffer(rng.uniform(0, 1, size=(4, 4, 3))), path)
        first = path.read_bytes()
        save_image(load_image(path), path)
        assert path.read_bytes() == first

    def test_ascii_ppm_literal(self, temp_directory):
        path = temp_directory / "tiny.ppm"
        path.write_bytes(b"P3\n# two by two\n2 2\n255\n255 0 0  0 255 0\n0 0 255  255 255 255\n")
        img = load_image(path)
        assert img.dims == (2, 2, 3)
        assert np.array_equal(img.to_uint8()[0, 0], [255, 0, 0])
        assert np.array_equal(img.to_uint8()[0, 1], [0, 255, 0])
        assert np.array_equal(img.to_uint8()[1, 0], [0, 0, 255])
        assert np.array_equal(img.to_uint8()[1, 1], [255, 255, 255])

    @pytest.mark.parametrize("suffix,ascii", [(".ppm", True), (".ppm", False)])
    def test_netpbm_round_trip(self, temp_directory, rng, suffix, ascii):
        img = ImageBuffer(np.round(rng.uniform(0, 1, size=(3, 4, 3)) * 255) / 255)
        path = temp_directory / f"x{suffix}"
        save_image(img, path, ascii=ascii)
        assert np.array_equal(load_image(path).to_uint8(), img.to_uint8())

    def test_binary_pgm_gray(self, temp_directory):
        path = temp_directory / "g.pgm"
        path.write_bytes(b"P5\n2 1\n255\n\x00\xff")
        img = load_image(path)
        assert img.dims == (2, 1, 1)
        assert img.data[0, 1, 0] == 1.0

    def test_truncated_header(self, temp_directory):
        path = temp_directory / "bad.ppm"
        path.write_bytes(b"P3\n2 ")
        with pytest.raises(ImageFormatError) as exc:
            load_image(path)
        assert exc.value.offset == 5

    def test_truncated_raster_reports_offset(self, temp_directory):
        path = temp_directory / "bad.pgm"
        raw = b"P5\n4 4\n255\n" + b"\x00" * 5
        path.write_bytes(raw)
        with pytest.raises(ImageFormatError) as exc:
            load_image(path)
        assert exc.value.offset == len(raw)

    def test_sixteen_bit_netpbm_is_rejected(self, temp_directory):
        path = temp_directory / "deep.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(ImageFormatError, match="bit depth"):
            load_image(path)

    def test_unknown_extension(self, small_image):
        with pytest.raises(DomainError):
            encode_image(small_image, ".bmp")

    def test_class_map_pgm_switches_to_sixteen_bit(self):
        small = encode_class_map_pgm(np.array([[0, 18]]))
        large = encode_class_map_pgm(np.array([[0, 300]]))
        assert small.startswith(b"P5\n2 1\n255\n") and small.endswith(b"\x00\x12")
        assert large.startswith(b"P5\n2 1\n65535\n") and large.endswith(b"\x01\x2c")

    def test_uint16_png_round_trip(self):
        grid = np.array([[0, 1, 65535], [40000, 7, 12]], dtype=np.uint16)
        assert np.array_equal(decode_uint16_png(encode_uint16_png(grid)), grid)

    def test_uint16_png_rejects_eight_bit(self, small_image):
        with pytest.raises(ImageFormatError):
            decode_uint16_png(encode_image(small_image, ".png"))
