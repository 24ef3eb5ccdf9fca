"""PPM codec, luma, Laplacian blur scoring, and frame streams."""

from __future__ import annotations

import json
import random

import numpy as np
import pytest

from scopeline.errors import MediaFormatError
from scopeline.media import (
    DirectoryFrameStream,
    Frame,
    MemoryFrameStream,
    decode_ppm,
    encode_ppm,
    heuristic_blur_gate,
    laplacian_variance,
    luma,
)

from conftest import checkerboard_frame, solid_frame


class TestPpmCodec:
    def test_single_pixel(self):
        assert decode_ppm(b"P6\n1 1\n255\n" + bytes([255, 0, 0])) == (1, 1, bytes([255, 0, 0]))

    def test_comment_in_header(self):
        plain = b"P6\n2 1\n255\n" + bytes(6)
        commented = b"P6\n# c\n2 1\n255\n" + bytes(6)
        assert decode_ppm(commented) == decode_ppm(plain)

    def test_crlf_and_multiple_spaces(self):
        data = b"P6\r\n  3   2\t255 " + bytes(18)
        assert decode_ppm(data)[:2] == (3, 2)

    def test_unsupported_maxval(self):
        with pytest.raises(MediaFormatError, match="maxval 65535"):
            decode_ppm(b"P6\n1 1\n65535\n" + bytes(6))

    def test_bad_magic_names_offset(self):
        with pytest.raises(MediaFormatError, match="byte 0"):
            decode_ppm(b"P5\n1 1\n255\n\x00")

    def test_truncated_payload_names_offset(self):
        with pytest.raises(MediaFormatError, match="byte"):
            decode_ppm(b"P6\n2 2\n255\n" + bytes(5))

    def test_missing_header_token(self):
        with pytest.raises(MediaFormatError, match="height"):
            decode_ppm(b"P6\n17")

    def test_round_trip_random_rasters(self):
        rng = random.Random(99)
        for _ in range(200):
            w = rng.randrange(1, 17)
            h = rng.randrange(1, 17)
            pixels = bytes(rng.randrange(256) for _ in range(3 * w * h))
            encoded = encode_ppm(w, h, pixels)
            assert decode_ppm(encoded) == (w, h, pixels)
            # Canonical header: re-encoding the decode is byte-identical.
            assert encode_ppm(*decode_ppm(encoded)) == encoded


class TestLuma:
    def test_white_is_255(self):
        assert luma(solid_frame((255, 255, 255)))[0, 0] == pytest.approx(255.0)

    def test_pure_red(self):
        assert luma(solid_frame((255, 0, 0)))[0, 0] == pytest.approx(76.245)

    def test_black_is_zero(self):
        assert not luma(solid_frame((0, 0, 0))).any()

    def test_shape(self):
        frame = solid_frame((1, 2, 3), width=5, height=3)
        assert luma(frame).shape == (3, 5)


def oracle_laplacian_variance(gray: np.ndarray) -> float:
    """Direct per-pixel reference implementation."""
    h, w = gray.shape
    responses = []
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            responses.append(
                gray[y - 1, x] + gray[y + 1, x] + gray[y, x - 1] + gray[y, x + 1] - 4 * gray[y, x]
            )
    mean = sum(responses) / len(responses)
    return sum((r - mean) ** 2 for r in responses) / len(responses)


class TestLaplacianVariance:
    def test_constant_image_is_zero(self):
        assert laplacian_variance(np.full((8, 8), 77.0)) == 0.0

    def test_checkerboard_matches_oracle(self):
        gray = luma(checkerboard_frame(4, 4))
        assert laplacian_variance(gray) == pytest.approx(oracle_laplacian_variance(gray))

    def test_random_grids_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            gray = rng.uniform(0, 255, size=(rng.integers(3, 12), rng.integers(3, 12)))
            assert laplacian_variance(gray) == pytest.approx(oracle_laplacian_variance(gray))

    def test_smoothing_lowers_score(self):
        sharp = luma(checkerboard_frame(8, 8))
        # Cheap 3x3 box blur as a stand-in Gaussian smoothing.
        padded = np.pad(sharp, 1, mode="edge")
        smooth = sum(
            padded[dy : dy + 8, dx : dx + 8] for dy in range(3) for dx in range(3)
        ) / 9.0
        assert laplacian_variance(smooth) < laplacian_variance(sharp)

    def test_invariant_under_constant_shift(self):
        rng = np.random.default_rng(13)
        gray = rng.uniform(0, 200, size=(9, 9))
        assert laplacian_variance(gray + 40.0) == pytest.approx(laplacian_variance(gray))

    def test_too_small_grid_rejected(self):
        with pytest.raises(ValueError):
            laplacian_variance(np.zeros((2, 5)))


class TestBlurGate:
    def test_constant_frame_is_blurry(self):
        assert heuristic_blur_gate(solid_frame((128, 128, 128)), 10.0) is True

    def test_checkerboard_is_clear(self):
        assert heuristic_blur_gate(checkerboard_frame(), 10.0) is False

    def test_zero_threshold_never_blurry(self):
        assert heuristic_blur_gate(solid_frame((0, 0, 0)), 0.0) is False

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            raster = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
            frame = Frame(0, 0.0, 6, 6, raster.tobytes())
            verdicts = [heuristic_blur_gate(frame, t) for t in (0.0, 1.0, 50.0, 1e4, 1e9)]
            # Once blurry at some threshold, blurry at every higher threshold.
            first_blurry = verdicts.index(True) if True in verdicts else len(verdicts)
            assert all(verdicts[i] for i in range(first_blurry, len(verdicts)))


class TestFrameInvariants:
    def test_payload_length_checked(self):
        with pytest.raises(ValueError):
            Frame(0, 0.0, 2, 2, bytes(5))


class TestDirectoryFrameStream:
    def _write_stream(self, tmp_path, frames, fps=60.0):
        manifest = {
            "video_id": "vid",
            "fps": fps,
            "width": frames[0].width,
            "height": frames[0].height,
            "frame_count": len(frames),
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        for i, frame in enumerate(frames):
            (tmp_path / f"{i:06d}.ppm").write_bytes(
                encode_ppm(frame.width, frame.height, frame.pixels)
            )

    def test_iterates_in_order_with_timestamps(self, tmp_path):
        frames = [solid_frame((i, i, i), index=i) for i in range(5)]
        self._write_stream(tmp_path, frames, fps=50.0)
        stream = DirectoryFrameStream(tmp_path)
        got = list(stream)
        assert [f.frame_index for f in got] == [0, 1, 2, 3, 4]
        assert [f.timestamp_ms for f in got] == [i * 20.0 for i in range(5)]

    def test_default_fps_matches_paper_window(self, tmp_path):
        # 6 frames must span 100 ms at the default rate.
        frames = [solid_frame((0, 0, 0), index=i) for i in range(7)]
        self._write_stream(tmp_path, frames, fps=60.0)
        stream = DirectoryFrameStream(tmp_path)
        assert stream.read_frame(6).timestamp_ms - stream.read_frame(0).timestamp_ms == 100.0

    def test_fps_override(self, tmp_path):
        frames = [solid_frame((0, 0, 0), index=i) for i in range(2)]
        self._write_stream(tmp_path, frames, fps=60.0)
        stream = DirectoryFrameStream(tmp_path, fps_override=30.0)
        assert stream.fps == 30.0

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MediaFormatError, match="manifest"):
            DirectoryFrameStream(tmp_path)

    def test_size_mismatch_rejected(self, tmp_path):
        frames = [solid_frame((0, 0, 0))]
        self._write_stream(tmp_path, frames)
        (tmp_path / "000000.ppm").write_bytes(encode_ppm(2, 2, bytes(12)))
        with pytest.raises(MediaFormatError, match="manifest declares"):
            DirectoryFrameStream(tmp_path).read_frame(0)


def test_memory_stream_round_trip():
    frames = [solid_frame((9, 9, 9), index=i) for i in range(3)]
    stream = MemoryFrameStream(frames, fps=30.0)
    assert stream.frame_count == 3
    assert stream.read_frame(1) is frames[1]
    assert list(stream) == frames
