"""Serve a scoring callable over the newline-delimited JSON protocol.

Protocol, one JSON document per line, UTF-8:

  hello    {"type": "hello", "protocol": 1, "concurrency": "serial"|"concurrent"}
           (adapter -> client, first line)
  request  {"type": "score", "id": <int>, "batch": [[ [f1..fd] per event ] per sequence]}
  response {"type": "scores", "id": <int>, "scores": [<float>, ...]}
  error    {"type": "error", "id": <int|null>, "message": <string>}

A malformed request line produces an error response (reusing the request id
when one can be salvaged from the line) and the adapter keeps serving; an
exception inside the wrapped model likewise becomes an error response rather
than a crash.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import socket
import sys
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

PROTOCOL_VERSION = 1

# One sequence on the wire: a list of events, each a list of feature values.
ScoreFunction = Callable[[Sequence[Sequence[float]]], float]

_ID_PATTERN = re.compile(r'"id"\s*:\s*(-?\d+)')


@dataclass(frozen=True)
class AdapterConfig:
    transport: str = "stdio"  # "stdio" or "tcp:HOST:PORT"
    concurrency: str = "serial"
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.concurrency not in ("serial", "concurrent"):
            raise ValueError(f"concurrency must be serial or concurrent, got {self.concurrency!r}")
        if self.transport != "stdio" and not self.transport.startswith("tcp:"):
            raise ValueError(f"transport must be stdio or tcp:HOST:PORT, got {self.transport!r}")


def demo_model(squash: str = "sigmoid") -> ScoreFunction:
    """Mean of the last event's features, optionally through a sigmoid."""
    if squash not in ("sigmoid", "none"):
        raise ValueError(f"squash must be sigmoid or none, got {squash!r}")

    def score(sequence: Sequence[Sequence[float]]) -> float:
        if not sequence:
            raise ValueError("cannot score an empty sequence")
        last_event = sequence[-1]
        if not last_event:
            raise ValueError("cannot score an event with no features")
        value = sum(last_event) / len(last_event)
        if squash == "sigmoid":
            return 1.0 / (1.0 + math.exp(-value))
        return value

    return score


def _salvage_id(line: str):
    match = _ID_PATTERN.search(line)
    return int(match.group(1)) if match else None


def _error(request_id, message: str) -> str:
    return json.dumps({"type": "error", "id": request_id, "message": message})


def _handle_request(line: str, score_fn: ScoreFunction) -> str:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error(_salvage_id(line), f"request is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        return _error(None, "request must be a JSON object")
    request_id = doc.get("id") if isinstance(doc.get("id"), int) else _salvage_id(line)
    if doc.get("type") != "score":
        return _error(request_id, f"unsupported request type {doc.get('type')!r}")
    if request_id is None:
        return _error(None, "request has no integer id")
    batch = doc.get("batch")
    if not isinstance(batch, list):
        return _error(request_id, "request has no batch array")
    try:
        scores = [float(score_fn(sequence)) for sequence in batch]
    except Exception as exc:  # wrapped model failed: report, stay alive
        return _error(request_id, f"scoring failed: {exc}")
    return json.dumps({"type": "scores", "id": request_id, "scores": scores})


def serve_lines(
    score_fn: ScoreFunction,
    lines: Iterable[str],
    write_line: Callable[[str], None],
    config: AdapterConfig | None = None,
) -> None:
    """Protocol loop over an arbitrary line transport: hello, then one response per request."""
    config = config or AdapterConfig()
    write_line(
        json.dumps(
            {
                "type": "hello",
                "protocol": config.protocol_version,
                "concurrency": config.concurrency,
            }
        )
    )
    for line in lines:
        if not line.strip():
            continue
        write_line(_handle_request(line, score_fn))


def _serve_stdio(score_fn: ScoreFunction, config: AdapterConfig) -> None:
    def write_line(line: str) -> None:
        sys.stdout.write(line + "\n")
        sys.stdout.flush()

    serve_lines(score_fn, sys.stdin, write_line, config)


def _serve_tcp(score_fn: ScoreFunction, config: AdapterConfig) -> None:
    endpoint = config.transport[len("tcp:"):]
    host, _, port_text = endpoint.rpartition(":")
    listener = socket.create_server((host or "127.0.0.1", int(port_text)))
    try:
        connection, _ = listener.accept()
    finally:
        listener.close()
    with connection:
        reader = connection.makefile("r", encoding="utf-8", newline="\n")

        def write_line(line: str) -> None:
            connection.sendall((line + "\n").encode("utf-8"))

        serve_lines(score_fn, reader, write_line, config)


def serve(score_fn: ScoreFunction, config: AdapterConfig | None = None) -> None:
    """Serve until end-of-input (stdio) or until the single TCP client disconnects."""
    config = config or AdapterConfig()
    if config.transport == "stdio":
        _serve_stdio(score_fn, config)
    else:
        _serve_tcp(score_fn, config)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqadapter",
        description="Serve the built-in demo model over the scoring wire protocol.",
    )
    parser.add_argument("--transport", default="stdio", help="stdio (default) or tcp:HOST:PORT")
    parser.add_argument("--squash", default="sigmoid", choices=("sigmoid", "none"))
    parser.add_argument("--concurrency", default="serial", choices=("serial", "concurrent"))
    args = parser.parse_args(argv)
    serve(
        demo_model(args.squash),
        AdapterConfig(transport=args.transport, concurrency=args.concurrency),
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
