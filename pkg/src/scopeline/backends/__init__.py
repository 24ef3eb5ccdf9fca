"""Detector and blur-gate backends: synthetic simulation and external processes."""

from .base import BackendDescriptor, BlurGate, DetectorBackend, HeuristicBlurGate
from .external import (
    ExternalBlurGate,
    ExternalClient,
    ExternalDetectorBackend,
    SubprocessTransport,
    TcpTransport,
    connect_tcp_client,
    spawn_subprocess_client,
)
from .synthetic import SyntheticDetector, SyntheticDetectorConfig, synthetic_detect

__all__ = [
    "BackendDescriptor",
    "BlurGate",
    "DetectorBackend",
    "HeuristicBlurGate",
    "ExternalBlurGate",
    "ExternalClient",
    "ExternalDetectorBackend",
    "SubprocessTransport",
    "TcpTransport",
    "connect_tcp_client",
    "spawn_subprocess_client",
    "SyntheticDetector",
    "SyntheticDetectorConfig",
    "synthetic_detect",
]
