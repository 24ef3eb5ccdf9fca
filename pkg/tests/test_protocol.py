"""Wire protocol framing, codecs, and external-backend integration via the stub."""

from __future__ import annotations

import io
import random
import socket
import struct
import subprocess
import sys
import time

import pytest

from scopeline.backends import protocol
from scopeline.backends.external import (
    ExternalBlurGate,
    ExternalDetectorBackend,
    connect_tcp_client,
    spawn_subprocess_client,
)
from scopeline.errors import BackendError, DataFormatError, DesyncError, ProtocolError
from scopeline.geometry import SOURCE_A, BoundingBox, ScoredBox

from conftest import checkerboard_frame, solid_frame

STUB = [sys.executable, "-m", "scopeline.backends.stub"]


class TestFraming:
    def test_encode_prefixes_big_endian_length(self):
        framed = protocol.encode_message({"type": "detect"})
        (length,) = struct.unpack(">I", framed[:4])
        assert length == len(framed) - 4

    def test_round_trip_single(self):
        body = {"type": "detections", "frame_index": 3, "boxes": []}
        assert protocol.read_message(io.BytesIO(protocol.encode_message(body))) == body

    def test_clean_eof_returns_none(self):
        assert protocol.read_message(io.BytesIO(b"")) is None

    def test_torn_header_rejected(self):
        with pytest.raises(ProtocolError, match="length prefix"):
            protocol.read_message(io.BytesIO(b"\x00\x00"))

    def test_torn_body_rejected(self):
        framed = protocol.encode_message({"type": "x"})
        with pytest.raises(ProtocolError, match="body"):
            protocol.read_message(io.BytesIO(framed[:-2]))

    def test_body_must_be_json_object_with_type(self):
        bad = struct.pack(">I", 2) + b"[]"
        with pytest.raises(ProtocolError):
            protocol.read_message(io.BytesIO(bad))
        with pytest.raises(ProtocolError):
            protocol.encode_message({"no_type": 1})

    def test_fuzz_concatenated_stream_round_trips(self):
        rng = random.Random(17)
        for _ in range(50):
            messages = []
            for _ in range(rng.randrange(0, 10)):
                messages.append(
                    {
                        "type": rng.choice(["detect", "detections", "blur", "blur_verdict"]),
                        "frame_index": rng.randrange(0, 1 << 20),
                        "payload": "x" * rng.randrange(0, 64),
                        "nested": {"k": [rng.random() for _ in range(rng.randrange(0, 4))]},
                    }
                )
            blob = b"".join(protocol.encode_message(m) for m in messages)
            assert list(protocol.iter_messages(blob)) == messages

    def test_trailing_garbage_detected(self):
        blob = protocol.encode_message({"type": "x"}) + b"\x00\x00\x00"
        with pytest.raises(ProtocolError):
            list(protocol.iter_messages(blob))


class TestCodecs:
    def test_detect_request_base64(self):
        frame = solid_frame((255, 0, 0), width=1, height=1)
        body = protocol.encode_detect_request(frame)
        assert body["pixels_b64"] == "/wAA"
        assert body["type"] == "detect"
        assert (body["width"], body["height"]) == (1, 1)

    def test_frame_payload_round_trip(self):
        frame = checkerboard_frame(4, 2, index=9)
        body = protocol.encode_detect_request(frame)
        frame_index, width, height, pixels = protocol.decode_frame_payload(body)
        assert (frame_index, width, height, pixels) == (9, 4, 2, frame.pixels)

    def test_detections_round_trip(self):
        boxes = [
            ScoredBox(BoundingBox(1, 2, 3, 4), 0.5),
            ScoredBox(BoundingBox(9, 9, 20, 12), 0.25),
        ]
        body = protocol.encode_detections(7, boxes)
        decoded = protocol.decode_detections(body, 7, SOURCE_A)
        assert [(sb.box, sb.score) for sb in decoded] == [(sb.box, sb.score) for sb in boxes]

    def test_wrong_frame_index_is_desync(self):
        body = protocol.encode_detections(8, [])
        with pytest.raises(DesyncError):
            protocol.decode_detections(body, 7, SOURCE_A)

    def test_invalid_box_names_index(self):
        body = {
            "type": "detections",
            "frame_index": 0,
            "boxes": [{"x": 0, "y": 0, "w": 4, "h": 4, "score": 0.5}, {"x": 0, "y": 0, "w": 0, "h": 4, "score": 0.5}],
        }
        with pytest.raises(DataFormatError, match="index 1"):
            protocol.decode_detections(body, 0, SOURCE_A)

    def test_box_outside_image_rejected(self):
        body = {
            "type": "detections",
            "frame_index": 0,
            "boxes": [{"x": 60, "y": 0, "w": 10, "h": 4, "score": 0.5}],
        }
        with pytest.raises(DataFormatError, match="index 0"):
            protocol.decode_detections(body, 0, SOURCE_A, image_w=64, image_h=64)

    def test_blur_verdict_round_trip(self):
        assert protocol.decode_blur_verdict(protocol.encode_blur_verdict(4, True), 4) is True
        assert protocol.decode_blur_verdict(protocol.encode_blur_verdict(4, False), 4) is False

    def test_blur_verdict_missing_field(self):
        with pytest.raises(ProtocolError, match="blurry"):
            protocol.decode_blur_verdict({"type": "blur_verdict", "frame_index": 4}, 4)


class TestStubSubprocess:
    def test_detect_round_trip(self):
        client = spawn_subprocess_client(STUB + ["--box", "5,6,20,10,0.75"])
        backend = ExternalDetectorBackend(client, SOURCE_A)
        try:
            frame = solid_frame((1, 2, 3), width=64, height=48, index=4)
            out = backend.detect(frame)
            assert out == [ScoredBox(BoundingBox(5, 6, 20, 10), 0.75, SOURCE_A)]
            out2 = backend.detect(solid_frame((1, 2, 3), width=64, height=48, index=5))
            assert [sb.box for sb in out2] == [BoundingBox(5, 6, 20, 10)]
            assert backend.invocations == 2
        finally:
            backend.close()

    def test_blur_gate_round_trip(self):
        client = spawn_subprocess_client(STUB)
        gate = ExternalBlurGate(client)
        try:
            assert gate.is_blurry(solid_frame((50, 50, 50), width=8, height=8)) is True
            assert gate.is_blurry(checkerboard_frame(8, 8, index=1)) is False
        finally:
            gate.close()

    def test_desync_closes_connection(self):
        client = spawn_subprocess_client(STUB + ["--desync"])
        backend = ExternalDetectorBackend(client, SOURCE_A)
        try:
            with pytest.raises(DesyncError):
                backend.detect(solid_frame((0, 0, 0), width=8, height=8, index=1))
            with pytest.raises(BackendError, match="closed"):
                backend.detect(solid_frame((0, 0, 0), width=8, height=8, index=2))
        finally:
            backend.close()

    def test_dead_process_reported_as_backend_error(self):
        client = spawn_subprocess_client([sys.executable, "-c", "pass"])
        backend = ExternalDetectorBackend(client, SOURCE_A)
        try:
            with pytest.raises(BackendError):
                backend.detect(solid_frame((0, 0, 0), width=8, height=8))
        finally:
            backend.close()


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestStubTcp:
    def test_detect_over_tcp(self):
        port = _free_port()
        server = subprocess.Popen(STUB + ["--box", "0,0,8,8,0.5", "--tcp-port", str(port)])
        try:
            client = None
            for _ in range(100):
                try:
                    client = connect_tcp_client("127.0.0.1", port)
                    break
                except BackendError:
                    time.sleep(0.05)
            assert client is not None, "stub TCP server never came up"
            backend = ExternalDetectorBackend(client, SOURCE_A)
            out = backend.detect(solid_frame((9, 9, 9), width=16, height=16, index=0))
            assert [sb.box for sb in out] == [BoundingBox(0, 0, 8, 8)]
            backend.close()
        finally:
            server.terminate()
            server.wait(timeout=10)
