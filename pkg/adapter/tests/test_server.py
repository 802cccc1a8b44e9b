"""Protocol conformance and resilience of the adapter loop."""

import json
import socket
import threading

import pytest

from seqadapter import AdapterConfig, demo_model, serve, serve_lines


def run_adapter(request_lines, config=None, score_fn=None):
    """Drive the protocol loop in-process; returns parsed output documents."""
    out = []
    serve_lines(
        score_fn or demo_model("none"),
        request_lines,
        lambda line: out.append(json.loads(line)),
        config,
    )
    return out


def score_request(request_id, batch):
    return json.dumps({"type": "score", "id": request_id, "batch": batch})


class TestHello:
    def test_hello_is_first_line(self):
        docs = run_adapter([])
        assert docs == [{"type": "hello", "protocol": 1, "concurrency": "serial"}]

    def test_concurrency_declaration(self):
        docs = run_adapter([], AdapterConfig(concurrency="concurrent"))
        assert docs[0]["concurrency"] == "concurrent"

    def test_bad_concurrency_rejected(self):
        with pytest.raises(ValueError):
            AdapterConfig(concurrency="parallel-ish")

    def test_bad_transport_rejected(self):
        with pytest.raises(ValueError):
            AdapterConfig(transport="carrier-pigeon")


class TestScoring:
    def test_mean_of_last_event_no_squash(self):
        docs = run_adapter([score_request(0, [[[1, 3]]])])
        assert docs[1] == {"type": "scores", "id": 0, "scores": [2.0]}

    def test_empty_batch_gives_empty_scores(self):
        docs = run_adapter([score_request(0, [])])
        assert docs[1] == {"type": "scores", "id": 0, "scores": []}

    def test_multi_sequence_batch_order(self):
        batch = [[[1.0, 1.0]], [[2.0, 4.0], [4.0, 8.0]]]
        docs = run_adapter([score_request(5, batch)])
        assert docs[1]["scores"] == [1.0, 6.0]

    def test_sigmoid_squash(self):
        docs = run_adapter([score_request(0, [[[0.0, 0.0]]])], score_fn=demo_model("sigmoid"))
        assert docs[1]["scores"] == [0.5]

    def test_ids_echoed(self):
        lines = [score_request(i, [[[float(i)]]]) for i in range(10)]
        docs = run_adapter(lines)
        assert [d["id"] for d in docs[1:]] == list(range(10))

    def test_scores_length_matches_batch(self):
        batch = [[[1.0]], [[2.0]], [[3.0]]]
        docs = run_adapter([score_request(0, batch)])
        assert len(docs[1]["scores"]) == len(batch)


class TestResilience:
    def test_malformed_json_line_then_next_request_served(self):
        docs = run_adapter(["{this is not json", score_request(1, [[[4.0]]])])
        assert docs[1]["type"] == "error"
        assert docs[2] == {"type": "scores", "id": 1, "scores": [4.0]}

    def test_malformed_line_salvages_id(self):
        docs = run_adapter(['{"type": "score", "id": 7, "batch": [[[1,'])
        assert docs[1]["type"] == "error"
        assert docs[1]["id"] == 7

    def test_malformed_line_without_id_uses_null(self):
        docs = run_adapter(["%%%"])
        assert docs[1]["type"] == "error"
        assert docs[1]["id"] is None

    def test_unsupported_type_is_error(self):
        docs = run_adapter([json.dumps({"type": "train", "id": 3})])
        assert docs[1]["type"] == "error"
        assert docs[1]["id"] == 3

    def test_model_exception_becomes_error_and_adapter_survives(self):
        # empty sequence makes the demo model raise
        docs = run_adapter([
            score_request(0, [[]]),
            score_request(1, [[[2.0]]]),
        ])
        assert docs[1]["type"] == "error"
        assert "scoring failed" in docs[1]["message"]
        assert docs[2] == {"type": "scores", "id": 1, "scores": [2.0]}

    def test_missing_batch_is_error(self):
        docs = run_adapter([json.dumps({"type": "score", "id": 2})])
        assert docs[1]["type"] == "error"
        assert docs[1]["id"] == 2

    def test_blank_lines_skipped(self):
        docs = run_adapter(["", "   ", score_request(0, [[[1.0]]])])
        assert len(docs) == 2
        assert docs[1]["type"] == "scores"


class TestTcpTransport:
    def test_single_connection_round_trip(self):
        port_holder = {}
        ready = threading.Event()

        def run_server():
            # bind first on a fixed free port chosen by the OS
            probe = socket.create_server(("127.0.0.1", 0))
            port_holder["port"] = probe.getsockname()[1]
            probe.close()
            ready.set()
            serve(demo_model("none"), AdapterConfig(transport=f"tcp:127.0.0.1:{port_holder['port']}"))

        thread = threading.Thread(target=run_server, daemon=True)
        thread.start()
        ready.wait(5)

        deadline_error = None
        for _ in range(50):  # the server needs a moment to start listening
            try:
                conn = socket.create_connection(("127.0.0.1", port_holder["port"]), timeout=0.2)
                break
            except OSError as exc:
                deadline_error = exc
                import time

                time.sleep(0.05)
        else:
            raise AssertionError(f"could not reach adapter: {deadline_error}")

        with conn, conn.makefile("rw", encoding="utf-8") as stream:
            hello = json.loads(stream.readline())
            assert hello["type"] == "hello"
            stream.write(score_request(0, [[[3.0, 5.0]]]) + "\n")
            stream.flush()
            reply = json.loads(stream.readline())
            assert reply == {"type": "scores", "id": 0, "scores": [4.0]}
        thread.join(5)
