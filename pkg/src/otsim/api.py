"""Operator-facing HTTP API around a running simulation.

Three endpoints, JSON in and out:

* ``GET /state`` — the most recent snapshot.
* ``GET /stream`` — newline-delimited snapshots, one per refresh, until
  the run finishes or the client disconnects.
* ``POST /command`` — an operator command; validated immediately,
  applied at the next tick boundary.  The response reports acceptance,
  not completion.

The server runs on daemon threads beside the simulation loop and must
never take it down: handler errors turn into HTTP error responses.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

__all__ = ["ApiServer", "serve"]

MAX_BODY = 64 * 1024


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "otsim"

    # the ApiServer fills this in on the server object
    sim = None

    def log_message(self, *_args):
        pass

    def _send_json(self, status: int, payload: dict):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        sim = self.server.sim
        if self.path.split("?")[0] == "/state":
            self._send_json(200, sim.snapshot())
        elif self.path.split("?")[0] == "/stream":
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            seen = -1
            try:
                while True:
                    seen = sim.wait_snapshot(seen)
                    snap = sim.snapshot()
                    self.wfile.write(json.dumps(snap).encode() + b"\n")
                    self.wfile.flush()
                    if snap.get("finished"):
                        break
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            self.close_connection = True
        else:
            self._send_json(404, {"ok": False,
                                  "error": f"no such path {self.path!r}"})

    def do_POST(self):
        if self.path.split("?")[0] != "/command":
            self._send_json(404, {"ok": False,
                                  "error": f"no such path {self.path!r}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            self._send_json(413, {"ok": False, "error": "body too large"})
            return
        try:
            command = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError as exc:
            self._send_json(400, {"ok": False,
                                  "error": f"bad JSON: {exc}"})
            return
        result = self.server.sim.enqueue_command(command)
        self._send_json(200 if result.get("ok") else 400, result)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()


class ApiServer:
    """ThreadingHTTPServer wrapper bound to one simulation."""

    def __init__(self, sim, host: str = "127.0.0.1", port: int = 8765):
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.sim = sim
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self):
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05},
            daemon=True, name="otsim-api")
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(sim, address: str) -> ApiServer:
    """Parse ``host:port`` (port 0 picks a free one) and start serving."""
    host, _, port_text = address.rpartition(":")
    host = host or "127.0.0.1"
    return ApiServer(sim, host, int(port_text)).start()
