"""HTTP JSON API for the review dashboard and operational peeks.

Read endpoints serve committed store state, so they are safe to hit
while a batch is running; the only write is label capture. Auth is a
single static bearer token when one is configured, which is all the
deployment model calls for.

    GET  /api/queue              ordered review queue
    POST /api/labels             {accession, category, reviewer_id}
    GET  /api/metrics/latest     newest evaluation snapshot
    GET  /api/matrices/latest    agreement matrices from that snapshot
    GET  /api/runs/<id>          one run row
    GET  /api/reference/summary  label category counts + reference size

When a static directory is configured, any non-/api GET serves files
from it (/ maps to index.html), so the dashboard can be hosted by the
same process. Static files are served without the bearer token: pages
load without headers a browser cannot send, while the data stays
guarded.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .adjudication import (
    InvalidCategory,
    ReviewPolicy,
    UnknownAccession,
    build_review_queue,
    record_label,
    reference_standard,
)
from .domain import DomainError
from .store import TriageStore


def queue_to_json(items) -> list[dict]:
    return [
        {
            "accession": it.accession,
            "impression_text": it.impression_text,
            "ai_result": it.ai_result,
            "consensus_decision": it.consensus_decision.value,
            "discordant": it.discordant,
            "current_label": (
                {
                    "category": it.current_label.category.value,
                    "reviewer_id": it.current_label.reviewer_id,
                    "labeled_at": it.current_label.labeled_at.isoformat(),
                }
                if it.current_label
                else None
            ),
            "queue_position": it.queue_position,
        }
        for it in items
    ]


class ReviewApiServer:
    """Threaded HTTP server over one store; start()/stop() or use as a
    context manager."""

    def __init__(
        self,
        store: TriageStore,
        review_policy: ReviewPolicy | None = None,
        address: tuple[str, int] = ("127.0.0.1", 0),
        token: str | None = None,
        static_dir: str | Path | None = None,
    ):
        self.store = store
        self.review_policy = review_policy
        self.token = token
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        api = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            # -- plumbing ----------------------------------------------------

            def _send(self, code: int, obj):
                payload = json.dumps(obj).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(payload)

            def _error(self, code: int, message: str):
                self._send(code, {"error": message})

            def _authorized(self) -> bool:
                if api.token is None:
                    return True
                header = self.headers.get("Authorization", "")
                return header == f"Bearer {api.token}"

            def log_message(self, *a):
                pass

            # -- routes ------------------------------------------------------

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header(
                    "Access-Control-Allow-Headers", "Authorization, Content-Type"
                )
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                raw = self.path.split("?", 1)[0]
                path = raw.rstrip("/")
                if path.startswith("/api"):
                    if not self._authorized():
                        return self._error(401, "missing or bad token")
                    if path == "/api/queue":
                        return self._queue()
                    if path == "/api/metrics/latest":
                        return self._metrics()
                    if path == "/api/matrices/latest":
                        return self._matrices()
                    if path.startswith("/api/runs/"):
                        return self._run(path.rsplit("/", 1)[1])
                    if path == "/api/reference/summary":
                        return self._reference_summary()
                    return self._error(404, f"no route for {path}")
                self._static(raw)

            def do_POST(self):
                if not self._authorized():
                    return self._error(401, "missing or bad token")
                path = self.path.split("?", 1)[0].rstrip("/")
                if path != "/api/labels":
                    return self._error(404, f"no route for {path}")
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                except (ValueError, json.JSONDecodeError):
                    return self._error(400, "body must be a JSON object")
                missing = {"accession", "category", "reviewer_id"} - set(body)
                if missing:
                    return self._error(400, f"missing fields: {sorted(missing)}")
                try:
                    label = record_label(
                        api.store, body["accession"], body["category"],
                        body["reviewer_id"],
                    )
                except InvalidCategory as exc:
                    return self._error(400, str(exc))
                except UnknownAccession as exc:
                    return self._error(404, f"unknown accession {exc}")
                except DomainError as exc:
                    return self._error(400, str(exc))
                self._send(201, {
                    "accession": label.accession,
                    "category": label.category.value,
                    "reviewer_id": label.reviewer_id,
                    "labeled_at": label.labeled_at.isoformat(),
                })

            # -- handlers ----------------------------------------------------

            def _queue(self):
                if api.review_policy is None:
                    return self._error(409, "no review policy configured")
                try:
                    items = build_review_queue(api.store, api.review_policy)
                except DomainError as exc:
                    return self._error(409, str(exc))
                self._send(200, {
                    "config_name": api.review_policy.config_name,
                    "items": queue_to_json(items),
                })

            def _metrics(self):
                snapshot = api.store.latest_metric_snapshot()
                if snapshot is None:
                    return self._error(404, "no evaluation has been run")
                self._send(200, snapshot)

            def _matrices(self):
                snapshot = api.store.latest_metric_snapshot()
                matrices = (snapshot or {}).get("panel", {}).get("matrices")
                if matrices is None:
                    return self._error(404, "no agreement matrices available")
                self._send(200, matrices)

            def _run(self, run_id: str):
                row = api.store.get_run(run_id)
                if row is None:
                    return self._error(404, f"unknown run {run_id}")
                self._send(200, row)

            def _static(self, path: str):
                root = api.static_dir
                if root is None:
                    return self._error(404, f"no route for {path}")
                rel = path.lstrip("/") or "index.html"
                target = (root / rel).resolve()
                if root != target and root not in target.parents:
                    return self._error(404, f"no such asset {path}")
                if target.is_dir():
                    target = target / "index.html"
                if not target.is_file():
                    return self._error(404, f"no such asset {path}")
                ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
                payload = target.read_bytes()
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def _reference_summary(self):
                categories = api.store.current_label_categories()
                counts: dict[str, int] = {}
                for cat in categories.values():
                    counts[cat.value] = counts.get(cat.value, 0) + 1
                reference = reference_standard(api.store)
                self._send(200, {
                    "labeled": len(categories),
                    "by_category": dict(sorted(counts.items())),
                    "reference_n": len(reference),
                    "reference_positive": sum(reference.values()),
                })

        self._server = ThreadingHTTPServer(address, Handler)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def bound_address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self):
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


__all__ = ["ReviewApiServer", "queue_to_json"]
