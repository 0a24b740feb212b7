"""HTTP sidecar serving document-layout detection over a small wire contract."""

from layout_service.app import ServiceState, create_app
from layout_service.detector import Box, StubDetector, TorchScriptDetector, sanitize_box

__all__ = [
    "Box",
    "ServiceState",
    "StubDetector",
    "TorchScriptDetector",
    "create_app",
    "sanitize_box",
]
