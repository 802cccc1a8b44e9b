"""Reference adapter exposing a scoring callable over the wire protocol.

Wrap any per-sequence scoring function and serve it to the explainer over
stdio or TCP, one JSON document per line. A built-in demo model (mean of the
last event's features through an optional sigmoid) makes the round trip
testable without any ML framework.
"""

from .server import AdapterConfig, demo_model, serve, serve_lines

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "demo_model", "serve", "serve_lines"]
