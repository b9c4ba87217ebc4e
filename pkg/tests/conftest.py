import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class ChatStub:
    """Local chat-completions endpoint.

    ``script`` is a list of status codes served before normal replies; normal
    replies say Yes when the prompt mentions a fever and No otherwise.
    """

    def __init__(self):
        self.script = []
        self.retry_after = None
        self.bodies = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub.lock:
                    stub.bodies.append({"path": self.path, "auth": self.headers.get("Authorization"), **body})
                    status = stub.script.pop(0) if stub.script else 200
                if status != 200:
                    self.send_response(status)
                    if stub.retry_after is not None:
                        self.send_header("Retry-After", str(stub.retry_after))
                    self.send_header("Content-Length", "2")
                    self.end_headers()
                    self.wfile.write(b"{}")
                    return
                prompt = body["messages"][0]["content"]
                verdict = "Yes" if "has a fever" in prompt else "No"
                payload = json.dumps({
                    "id": "stub", "object": "chat.completion",
                    "choices": [{"index": 0, "finish_reason": "stop",
                                 "message": {"role": "assistant",
                                             "content": f"Reasoning: stub says {verdict}.\nResponse: {verdict}"}}],
                    "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15},
                }).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def calls(self):
        return len(self.bodies)


@pytest.fixture
def chat_stub(monkeypatch):
    monkeypatch.setenv("EPIGABM_TEST_KEY", "sk-test")
    stub = ChatStub()
    stub.thread.start()
    yield stub
    stub.server.shutdown()
    stub.server.server_close()


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in name and rep.when == "call":
                n = int(name.split("test_criterion_")[1][:2])
                lines.append((n, f"criterion {n:2d}: {'PASS' if outcome == 'passed' else 'FAIL'}  ({name})"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
