"""HTTP JSON view over a trained embedding model.

Endpoints (all GET):

  /health                                model id, dimension, vocabulary size
  /get-vector?concept=IRI                the stored vector for a concept
  /similarity?left=IRI&right=IRI         cosine similarity of two concepts
  /closest-concepts?concept=IRI&top=K    nearest neighbours by cosine (default 10)

Unknown concepts answer 404, missing or invalid parameters 400, both with a
machine-readable JSON body. Keys are sorted, so identical requests produce
identical bytes. The model is immutable and shared; handlers run concurrently
with no write path.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .trainer import EmbeddingModel, UnknownTokenError
from .vector_ops import cosine, nearest_neighbors


class VectorServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], model: EmbeddingModel, model_id: str = "model"):
        super().__init__(address, VectorServiceHandler)
        self.model = model
        self.model_id = model_id


def build_server(
    model: EmbeddingModel,
    host: str = "127.0.0.1",
    port: int = 8080,
    model_id: str = "model",
) -> VectorServer:
    """Bind a server; port 0 picks an ephemeral port. Call
    ``serve_forever()`` to run it."""
    return VectorServer((host, port), model, model_id)


class VectorServiceHandler(BaseHTTPRequestHandler):
    server: VectorServer
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # keep request logging off the console
        pass

    def do_GET(self):
        try:
            self._route()
        except Exception as exc:  # a handler bug must not tear down the connection
            self._send(500, {"error": "internal-error", "detail": str(exc)})

    def _route(self):
        url = urlsplit(self.path)
        params = parse_qs(url.query)
        model = self.server.model
        if url.path == "/health":
            self._send(
                200,
                {
                    "model": self.server.model_id,
                    "dimension": model.dimension,
                    "vocabulary_size": len(model.vocabulary),
                },
            )
        elif url.path == "/get-vector":
            concept = self._required(params, "concept")
            if concept is None:
                return
            try:
                vector = model.vector(concept)
            except UnknownTokenError:
                self._send(404, {"error": "unknown-concept", "concept": concept})
                return
            self._send(
                200,
                {
                    "concept": concept,
                    "model": self.server.model_id,
                    "vector": [float(x) for x in vector],
                },
            )
        elif url.path == "/similarity":
            left = self._required(params, "left")
            if left is None:
                return
            right = self._required(params, "right")
            if right is None:
                return
            missing = [c for c in (left, right) if c not in model.vocabulary]
            if missing:
                self._send(404, {"error": "unknown-concept", "concepts": missing})
                return
            score = cosine(model.vector(left), model.vector(right))
            self._send(
                200,
                {"left": left, "right": right, "model": self.server.model_id, "similarity": score},
            )
        elif url.path == "/closest-concepts":
            concept = self._required(params, "concept")
            if concept is None:
                return
            raw_top = params.get("top", ["10"])[0]
            try:
                top = int(raw_top)
            except ValueError:
                top = 0
            if top < 1:
                self._send(400, {"error": "invalid-parameter", "parameter": "top", "value": raw_top})
                return
            if concept not in model.vocabulary:
                self._send(404, {"error": "unknown-concept", "concept": concept})
                return
            neighbors = nearest_neighbors(model, concept, top)
            self._send(
                200,
                {
                    "concept": concept,
                    "model": self.server.model_id,
                    "top": top,
                    "neighbors": [{"concept": t, "score": s} for t, s in neighbors],
                },
            )
        else:
            self._send(404, {"error": "unknown-endpoint", "path": url.path})

    def _required(self, params: dict, name: str) -> str | None:
        values = params.get(name)
        if not values or not values[0]:
            self._send(400, {"error": "missing-parameter", "parameter": name})
            return None
        return values[0]

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
