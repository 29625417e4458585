"""Report acquisition and impression extraction.

Reports arrive either as <accession>.txt files in a watched directory or
from an HTTP report source. Only the impression section is ever handed
to the agents; the rest of the report is kept verbatim for audit.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import requests

from .domain import DomainError, Impression, ImpressionStatus

#: Section headers that open an impression, latest occurrence wins.
DEFAULT_HEADERS = ("IMPRESSION", "CONCLUSION", "OPINION")

#: Lines starting with any of these end the impression span.
DEFAULT_STOPS = (
    "ADDENDUM",
    "SIGNED BY",
    "ELECTRONICALLY SIGNED",
    "DICTATED BY",
    "ATTESTATION",
)


class ReportSource(str, Enum):
    DIRECTORY_DROP = "directory_drop"
    HTTP_SOURCE = "http_source"


class SourceUnavailable(RuntimeError):
    """The report source could not be reached at all (after retries)."""


@dataclass(frozen=True)
class ReportDocument:
    accession: str
    full_text: str
    fetched_at: datetime
    source: ReportSource

    def __post_init__(self):
        if not self.accession:
            raise DomainError("ReportDocument.accession must be non-empty")


@dataclass(frozen=True)
class ReportSourceConfig:
    """Where finalized reports come from.

    kind "directory": ``path`` holds UTF-8 text files named
    <accession>.txt; modification time marks finalization.
    kind "http": GET <base_url>/reports?since=<iso8601>, bearer token
    read from the environment variable named by ``token_env``.
    """

    kind: str
    path: str | None = None
    base_url: str | None = None
    token_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 2
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.kind == "directory":
            if not self.path:
                raise DomainError("directory report source needs a path")
        elif self.kind == "http":
            if not self.base_url:
                raise DomainError("http report source needs a base_url")
        else:
            raise DomainError(f"unknown report source kind {self.kind!r}")


@dataclass
class FetchBatch:
    """Result of one fetch: documents plus per-document failures that
    did not abort the batch."""

    documents: list[ReportDocument] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.documents)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


def fetch_reports(source_config: ReportSourceConfig, since: datetime) -> FetchBatch:
    """All reports finalized after ``since``.

    Individual unreadable documents land in ``failures``; only a source
    that cannot be reached at all raises :class:`SourceUnavailable`.
    """
    if source_config.kind == "directory":
        return _fetch_directory(source_config, since)
    return _fetch_http(source_config, since)


def _fetch_directory(cfg: ReportSourceConfig, since: datetime) -> FetchBatch:
    root = Path(cfg.path)
    if not root.is_dir():
        raise SourceUnavailable(f"report directory {root} does not exist")
    batch = FetchBatch()
    for path in sorted(root.glob("*.txt")):
        try:
            mtime = datetime.fromtimestamp(path.stat().st_mtime, tz=timezone.utc).replace(
                tzinfo=None
            )
            if mtime <= since:
                continue
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            batch.failures.append((path.name, str(exc)))
            continue
        batch.documents.append(
            ReportDocument(
                accession=path.stem,
                full_text=text,
                fetched_at=_utcnow(),
                source=ReportSource.DIRECTORY_DROP,
            )
        )
    return batch


def _fetch_http(cfg: ReportSourceConfig, since: datetime) -> FetchBatch:
    headers = {}
    token = os.environ.get(cfg.token_env) if cfg.token_env else None
    if token:
        headers["Authorization"] = f"Bearer {token}"
    url = cfg.base_url.rstrip("/") + "/reports"
    last_error: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
        try:
            resp = requests.get(
                url,
                params={"since": since.isoformat()},
                headers=headers,
                timeout=cfg.timeout,
            )
            resp.raise_for_status()
            rows = resp.json()
            break
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
    else:
        raise SourceUnavailable(f"report source {url} unreachable: {last_error}")

    batch = FetchBatch()
    now = _utcnow()
    for row in rows:
        try:
            batch.documents.append(
                ReportDocument(
                    accession=str(row["accession"]),
                    full_text=str(row.get("report_text", "")),
                    fetched_at=now,
                    source=ReportSource.HTTP_SOURCE,
                )
            )
        except (KeyError, TypeError, DomainError) as exc:
            batch.failures.append((str(row)[:200], str(exc)))
    return batch


# --- extraction ------------------------------------------------------------


def _header_pattern(headers: tuple[str, ...]) -> re.Pattern:
    alts = "|".join(re.escape(h) for h in headers)
    # header word at line start (indentation tolerated), then a colon or
    # nothing else on the line
    return re.compile(rf"^[ \t]*({alts})[ \t]*(:|$)", re.IGNORECASE | re.MULTILINE)


def _is_stop_line(line: str, stops: tuple[str, ...]) -> bool:
    bare = line.strip().upper()
    return any(bare.startswith(s) for s in stops)


def extract_impression(
    doc: ReportDocument,
    headers: tuple[str, ...] = DEFAULT_HEADERS,
    stops: tuple[str, ...] = DEFAULT_STOPS,
) -> Impression:
    """Pull the impression section out of one report.

    The LAST impression-style header wins (earlier sections may quote a
    prior report); the span runs to the first stop header after it, or
    to the end of the document. The result is whitespace-normalized.
    An empty document reports missing_report; a document without a
    usable span reports missing_impression.
    """
    if not doc.full_text.strip():
        return Impression(doc.accession, "", ImpressionStatus.MISSING_REPORT)

    # normalize line endings so "$" anchors behave under CRLF input
    text_in = doc.full_text.replace("\r\n", "\n").replace("\r", "\n")
    matches = list(_header_pattern(headers).finditer(text_in))
    if not matches:
        return Impression(doc.accession, "", ImpressionStatus.MISSING_IMPRESSION)

    start = matches[-1].end()
    span = text_in[start:]
    kept_lines = []
    for i, line in enumerate(span.splitlines()):
        # the first line is the tail after "HEADER:", never a stop line
        if i > 0 and _is_stop_line(line, stops):
            break
        kept_lines.append(line)
    text = " ".join("\n".join(kept_lines).split())
    if not text:
        return Impression(doc.accession, "", ImpressionStatus.MISSING_IMPRESSION)
    return Impression(doc.accession, text, ImpressionStatus.OK)
