import io
import zlib

import numpy as np
import pytest

from uwdiff.errors import DimensionLimitError, TruncatedFileError, UnsupportedFormatError
from uwdiff.imageio import (
    decode_png,
    decode_ppm,
    encode_png,
    encode_ppm,
    load_image,
    save_image,
)
from uwdiff.images import RgbImage


def random_image(rng, h=7, w=11):
    return RgbImage.from_array(rng.uniform(0, 1, (h, w, 3)))


class TestPngRoundTrip:
    def test_known_2x2_quantization_bound(self):
        img = RgbImage.from_array(
            np.array([[[0.0, 0.5, 1.0], [0.1, 0.2, 0.3]], [[0.9, 0.8, 0.7], [1.0, 0.0, 0.5]]])
        )
        back = decode_png(encode_png(img, 8))
        assert np.max(np.abs(back.data - img.data)) <= 1 / 510 + 1e-12

    def test_16bit_round_trip(self, rng):
        img = random_image(rng)
        back = decode_png(encode_png(img, 16))
        assert np.max(np.abs(back.data - img.data)) <= 1 / 131070 + 1e-12

    def test_quantization_is_round_half_up(self):
        # 0.5/255 rounds up to sample 1
        img = RgbImage.from_array(np.full((1, 1, 3), 0.5 / 255))
        back = decode_png(encode_png(img, 8))
        assert back.data[0, 0, 0] == pytest.approx(1 / 255)

    def test_encode_deterministic(self, rng):
        img = random_image(rng)
        assert encode_png(img, 8) == encode_png(img, 8)


class TestPngForeignFiles:
    def test_decodes_pil_filtered_png(self, rng):
        PIL = pytest.importorskip("PIL.Image")
        quant = np.floor(rng.uniform(0, 1, (23, 17, 3)) * 255 + 0.5).astype(np.uint8)
        buf = io.BytesIO()
        PIL.fromarray(quant).save(buf, format="PNG", optimize=True)
        img = decode_png(buf.getvalue())
        assert np.array_equal(np.floor(img.data * 255 + 0.5).astype(np.uint8), quant)

    def test_rgba_alpha_dropped(self, rng):
        PIL = pytest.importorskip("PIL.Image")
        rgb = (rng.uniform(0, 1, (5, 6, 3)) * 255).astype(np.uint8)
        rgba = np.dstack([rgb, np.full((5, 6, 1), 77, np.uint8)])
        buf = io.BytesIO()
        PIL.fromarray(rgba, "RGBA").save(buf, format="PNG")
        img = decode_png(buf.getvalue())
        assert np.array_equal(np.floor(img.data * 255 + 0.5).astype(np.uint8), rgb)

    def test_hand_built_paeth_filtered_png(self):
        # one 3-pixel row per filter type, built chunk by chunk
        width, height = 3, 5
        rows = np.arange(width * height * 3, dtype=np.uint8).reshape(height, width * 3) * 3
        raw = bytearray()
        for r, ftype in enumerate([0, 1, 2, 3, 4]):
            line = rows[r].tolist()
            prev = rows[r - 1].tolist() if r > 0 else [0] * (width * 3)
            filtered = []
            for i, value in enumerate(line):
                left = line[i - 3] if i >= 3 else 0
                up = prev[i]
                upleft = prev[i - 3] if i >= 3 else 0
                if ftype == 0:
                    pred = 0
                elif ftype == 1:
                    pred = left
                elif ftype == 2:
                    pred = up
                elif ftype == 3:
                    pred = (left + up) // 2
                else:
                    p = left + up - upleft
                    pa, pb, pc = abs(p - left), abs(p - up), abs(p - upleft)
                    pred = left if pa <= pb and pa <= pc else (up if pb <= pc else upleft)
                filtered.append((value - pred) & 0xFF)
            raw.append(ftype)
            raw.extend(filtered)
        ihdr = width.to_bytes(4, "big") + height.to_bytes(4, "big") + bytes([8, 2, 0, 0, 0])
        blob = bytearray(b"\x89PNG\r\n\x1a\n")
        for ctype, data in ((b"IHDR", ihdr), (b"IDAT", zlib.compress(bytes(raw))), (b"IEND", b"")):
            blob += len(data).to_bytes(4, "big") + ctype + data
            blob += zlib.crc32(ctype + data).to_bytes(4, "big")
        img = decode_png(bytes(blob))
        assert np.array_equal(
            np.floor(img.data * 255 + 0.5).astype(np.uint8).reshape(height, width * 3), rows
        )


class TestPngErrors:
    def test_truncated_png_no_partial_image(self, rng):
        blob = encode_png(random_image(rng), 8)
        for cut in (4, 12, len(blob) // 2, len(blob) - 2):
            with pytest.raises(TruncatedFileError):
                decode_png(blob[:cut])

    def test_crc_corruption_detected(self, rng):
        blob = bytearray(encode_png(random_image(rng), 8))
        blob[40] ^= 0xFF
        with pytest.raises(TruncatedFileError):
            decode_png(bytes(blob))

    def test_unsupported_color_type(self):
        ihdr = (1).to_bytes(4, "big") + (1).to_bytes(4, "big") + bytes([8, 0, 0, 0, 0])
        blob = bytearray(b"\x89PNG\r\n\x1a\n")
        for ctype, data in ((b"IHDR", ihdr), (b"IDAT", zlib.compress(b"\x00\x00")), (b"IEND", b"")):
            blob += len(data).to_bytes(4, "big") + ctype + data
            blob += zlib.crc32(ctype + data).to_bytes(4, "big")
        with pytest.raises(UnsupportedFormatError):
            decode_png(bytes(blob))

    def test_dimension_overflow(self):
        huge = (1 << 25).to_bytes(4, "big")
        ihdr = huge + huge + bytes([8, 2, 0, 0, 0])
        blob = bytearray(b"\x89PNG\r\n\x1a\n")
        for ctype, data in ((b"IHDR", ihdr), (b"IDAT", b"x"), (b"IEND", b"")):
            blob += len(data).to_bytes(4, "big") + ctype + data
            blob += zlib.crc32(ctype + data).to_bytes(4, "big")
        with pytest.raises(DimensionLimitError):
            decode_png(bytes(blob))

    def test_not_a_png(self):
        with pytest.raises(UnsupportedFormatError):
            decode_png(b"GIF89a such image")


class TestPpm:
    def test_8bit_round_trip(self, rng):
        img = random_image(rng)
        back = decode_ppm(encode_ppm(img, 8))
        assert np.max(np.abs(back.data - img.data)) <= 1 / 510 + 1e-12

    def test_16bit_round_trip(self, rng):
        img = random_image(rng)
        back = decode_ppm(encode_ppm(img, 16))
        assert np.max(np.abs(back.data - img.data)) <= 1 / 131070 + 1e-12

    def test_header_comments_allowed(self):
        body = bytes([10, 20, 30])
        blob = b"P6\n# comment line\n1 1\n# another\n255\n" + body
        img = decode_ppm(blob)
        assert img.data[0, 0, 0] == pytest.approx(10 / 255)

    def test_truncated_body(self):
        with pytest.raises(TruncatedFileError):
            decode_ppm(b"P6\n2 2\n255\n\x00\x01")

    def test_bad_maxval(self):
        with pytest.raises(UnsupportedFormatError):
            decode_ppm(b"P6\n1 1\n1023\n\x00\x00\x00")


class TestPathApi:
    def test_save_load_sniffs_format(self, rng, tmp_path):
        img = random_image(rng)
        png_path = tmp_path / "a.png"
        ppm_path = tmp_path / "b.ppm"
        save_image(img, png_path)
        save_image(img, ppm_path, bit_depth=16)
        assert np.max(np.abs(load_image(png_path).data - img.data)) <= 1 / 510 + 1e-12
        assert np.max(np.abs(load_image(ppm_path).data - img.data)) <= 1 / 131070 + 1e-12

    def test_unknown_extension(self, rng, tmp_path):
        with pytest.raises(UnsupportedFormatError):
            save_image(random_image(rng), tmp_path / "c.bmp")

    def test_unknown_magic(self, tmp_path):
        path = tmp_path / "f.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(UnsupportedFormatError):
            load_image(path)
