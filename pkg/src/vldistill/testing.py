"""Localhost HTTP test double for the pipeline's external endpoints.

Routes are scriptable per path: a fixed JSON body, a sequence of
(status, body) responses consumed one per request, or a callable taking
the decoded request. Runs in a daemon thread; use as a context manager.
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockHttpServer:
    def __init__(self):
        self.routes = {}
        self.request_log = []
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    # behavior: callable(body) -> (status, payload), or list of (status, payload),
    # or a plain payload (always 200). payload bytes are sent raw, anything
    # else is JSON-encoded.
    def route(self, method: str, path: str, behavior, latency: float = 0.0):
        self.routes[(method, path)] = (behavior, latency)

    def url(self, path: str) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}{path}"

    def __enter__(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _handle(self, method):
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw) if raw else None
                except json.JSONDecodeError:
                    body = raw
                entry = outer.routes.get((method, self.path))
                with outer._lock:
                    outer.request_log.append(
                        (time.monotonic(), method, self.path, body))
                    if entry is None:
                        status, payload = 404, {"error": "no route"}
                        latency = 0.0
                    else:
                        behavior, latency = entry
                        if callable(behavior):
                            status, payload = behavior(body)
                        elif isinstance(behavior, list):
                            status, payload = behavior.pop(0) if behavior \
                                else (200, {"error": "script exhausted"})
                        else:
                            status, payload = 200, behavior
                if latency:
                    time.sleep(latency)
                data = payload if isinstance(payload, bytes) else \
                    json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._handle("GET")

            def do_POST(self):
                self._handle("POST")

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
        return False


def lvlm_behavior(text: str):
    """Chat-completion behavior returning a fixed response text."""
    return lambda body: (200, {"content": text})


def embedding_behavior(dims: int = 32, seed: int = 0):
    """Deterministic embedding endpoint matching the provider wire format."""
    from .curate import DeterministicMockProvider

    provider = DeterministicMockProvider(dims=dims, seed=seed)

    def handle(body):
        vectors = provider.embed(body["input"])
        return 200, {"data": [{"index": i, "embedding": v}
                              for i, v in enumerate(vectors)]}

    return handle
