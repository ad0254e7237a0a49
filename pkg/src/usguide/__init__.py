"""Synthetic ultrasound scanning guidance toolkit.

Pipeline: phantom simulator -> demonstration datasets -> multi-modal
quality model -> sampling-based scanning guidance, plus a CLI and a
session HTTP/WebSocket service.
"""

__version__ = "0.1.0"
