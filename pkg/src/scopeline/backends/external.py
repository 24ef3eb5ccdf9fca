"""Clients for external-process backends speaking the framed JSON protocol.

Transport is a local byte stream: either the standard streams of a child
process or a TCP socket. Requests on one connection are serialized; a
desync (wrong frame_index echo) closes the connection.
"""

from __future__ import annotations

import socket
import subprocess
from typing import BinaryIO, Sequence

from ..annotations import FrameAnnotation
from ..errors import BackendError, DesyncError
from ..geometry import ScoredBox
from ..media import Frame
from . import protocol
from .base import BackendDescriptor


class SubprocessTransport:
    """Child process reached through its stdin/stdout pipes."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend process {self.command}: {exc}") from exc

    @property
    def reader(self) -> BinaryIO:
        return self._proc.stdout

    @property
    def writer(self) -> BinaryIO:
        return self._proc.stdin

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport:
    """TCP connection to a backend serving the same protocol."""

    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise BackendError(f"cannot connect to backend at {host}:{port}: {exc}") from exc
        self.reader: BinaryIO = self._sock.makefile("rb")
        self.writer: BinaryIO = self._sock.makefile("wb")

    def close(self) -> None:
        for stream in (self.reader, self.writer):
            try:
                stream.close()
            except OSError:
                pass
        self._sock.close()


class ExternalClient:
    """Request/response layer over a transport; one outstanding request at a time."""

    def __init__(self, transport):
        self._transport = transport
        self._closed = False

    def request(self, body: dict) -> dict:
        if self._closed:
            raise BackendError("backend connection is closed")
        try:
            protocol.write_message(self._transport.writer, body)
            response = protocol.read_message(self._transport.reader)
        except (OSError, ValueError) as exc:
            self.close()
            raise BackendError(f"backend transport failed: {exc}") from exc
        if response is None:
            self.close()
            raise BackendError("backend closed the connection")
        return response

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._transport.close()


class ExternalDetectorBackend:
    """DetectorBackend adapter over an :class:`ExternalClient`."""

    def __init__(self, client: ExternalClient, source: str, name: str = "external"):
        self.client = client
        self.source = source
        self.descriptor = BackendDescriptor(f"{name}:{source}")
        self.invocations = 0

    def detect(self, frame: Frame, truth: FrameAnnotation | None = None) -> list[ScoredBox]:
        self.invocations += 1
        response = self.client.request(protocol.encode_detect_request(frame))
        try:
            return protocol.decode_detections(
                response, frame.frame_index, self.source, frame.width, frame.height
            )
        except DesyncError:
            self.client.close()
            raise

    def close(self) -> None:
        self.client.close()


class ExternalBlurGate:
    """BlurGate adapter over an :class:`ExternalClient`."""

    def __init__(self, client: ExternalClient, name: str = "external"):
        self.client = client
        self.descriptor = BackendDescriptor(f"{name}:blur-gate")
        self.invocations = 0

    def is_blurry(self, frame: Frame) -> bool:
        self.invocations += 1
        response = self.client.request(protocol.encode_blur_request(frame))
        try:
            return protocol.decode_blur_verdict(response, frame.frame_index)
        except DesyncError:
            self.client.close()
            raise

    def close(self) -> None:
        self.client.close()


def spawn_subprocess_client(command: Sequence[str]) -> ExternalClient:
    return ExternalClient(SubprocessTransport(command))


def connect_tcp_client(host: str, port: int) -> ExternalClient:
    return ExternalClient(TcpTransport(host, port))
