"""The remote-predictor client against the pinned golden wire fixtures.

Any service speaking the protocol (the sidecar included) must reproduce the
golden response for the golden request; here a replay server stands in for
the service and the client side of the contract is checked.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from spanrel.predictors import remote_predict
from spanrel.reduction import SpDataset, SpInstance

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def golden():
    request = json.loads((DATA_DIR / "wire_golden_request.json").read_text("utf-8"))
    response = json.loads((DATA_DIR / "wire_golden_response.json").read_text("utf-8"))
    return request, response


def _golden_dataset(request) -> SpDataset:
    instances = tuple(
        SpInstance(
            qid=item["id"],
            context=item["context"],
            question=item["question"],
            answerable=False,
        )
        for item in request["items"]
    )
    return SpDataset(instances=instances, variant="question", source="golden")


@pytest.fixture
def replay_server(golden):
    _, response = golden
    by_id = {rec["id"]: rec for rec in response["predictions"]}

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_GET(self):
            self._reply(200, {"status": "ok"})

        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            self._reply(
                200, {"predictions": [by_id[item["id"]] for item in body["items"]]}
            )

        def _reply(self, code, payload):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_remote_client_parses_golden_response(golden, replay_server):
    request, response = golden
    ds = _golden_dataset(request)
    pset = remote_predict(replay_server, ds, batch_size=3, max_in_flight=2)
    assert len(pset) == len(request["items"])
    for rec in response["predictions"]:
        pred = pset.by_qid[rec["id"]]
        assert pred.text == rec["text"]
        assert pred.char_span.start == rec["start_char"]
        assert pred.char_span.end == rec["end_char"]
        assert pred.span_score == pytest.approx(rec["span_score"], abs=1e-4)
        assert pred.null_score == pytest.approx(rec["null_score"], abs=1e-4)
        context = next(i["context"] for i in request["items"] if i["id"] == rec["id"])
        assert context[pred.char_span.start : pred.char_span.end] == pred.text
