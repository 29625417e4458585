"""Embedded relational store for the whole pipeline.

Single sqlite file (or :memory:), single-writer through an internal
lock, WAL so readers never block the writer. Raw HL7 frames and raw
agent responses are always retained for audit; labels are append-only;
every write lands in a journal table with a timestamp.

The schema is versioned and migrated forward-only at open time.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from datetime import datetime, timezone
from pathlib import Path

from .consensus import ConsensusDecision, Decision
from .domain import (
    AgentVerdict,
    AIResultEvent,
    CareSetting,
    ExamRecord,
    HemorrhageSubtype,
    Impression,
    ImpressionStatus,
    LabelCategory,
    ReferenceLabel,
    Sex,
    VerdictStatus,
)
from .hl7 import Hl7Frame
from .reports import ReportDocument, ReportSource


class StoreError(RuntimeError):
    pass


class InvariantViolation(StoreError):
    """A write that would break referential integrity or a uniqueness
    rule; the message names the failing rule."""


_MIGRATIONS = [
    # version 1: full initial schema
    """
    CREATE TABLE exams (
        accession   TEXT PRIMARY KEY,
        patient_age REAL,
        patient_sex TEXT NOT NULL DEFAULT 'unknown',
        setting     TEXT NOT NULL DEFAULT 'unknown',
        exam_time   TEXT
    );
    CREATE TABLE hl7_frames (
        id          INTEGER PRIMARY KEY AUTOINCREMENT,
        raw_bytes   BLOB NOT NULL,
        received_at TEXT NOT NULL,
        peer        TEXT NOT NULL DEFAULT '',
        status      TEXT NOT NULL CHECK (status IN ('parsed', 'quarantined')),
        reason      TEXT
    );
    CREATE TABLE ai_results (
        id             INTEGER PRIMARY KEY AUTOINCREMENT,
        accession      TEXT NOT NULL REFERENCES exams(accession),
        hemorrhage     INTEGER NOT NULL,
        received_at    TEXT NOT NULL,
        raw_message_id INTEGER REFERENCES hl7_frames(id),
        is_current     INTEGER NOT NULL DEFAULT 1
    );
    CREATE INDEX ai_results_accession ON ai_results(accession);
    CREATE TABLE reports (
        accession  TEXT PRIMARY KEY REFERENCES exams(accession),
        full_text  TEXT NOT NULL,
        fetched_at TEXT NOT NULL,
        source     TEXT NOT NULL
    );
    CREATE TABLE impressions (
        accession  TEXT PRIMARY KEY REFERENCES exams(accession),
        text       TEXT NOT NULL,
        status     TEXT NOT NULL,
        updated_at TEXT NOT NULL
    );
    CREATE TABLE verdicts (
        id              INTEGER PRIMARY KEY AUTOINCREMENT,
        agent_id        TEXT NOT NULL,
        accession       TEXT NOT NULL REFERENCES exams(accession),
        run_id          TEXT NOT NULL,
        hemorrhage      INTEGER,
        subtype         TEXT,
        raw_response    TEXT NOT NULL,
        status          TEXT NOT NULL,
        latency_ms      REAL NOT NULL DEFAULT 0,
        subtype_flagged INTEGER NOT NULL DEFAULT 0,
        UNIQUE (agent_id, accession, run_id)
    );
    CREATE INDEX verdicts_accession ON verdicts(accession);
    CREATE TABLE consensus_decisions (
        id             INTEGER PRIMARY KEY AUTOINCREMENT,
        config_name    TEXT NOT NULL,
        accession      TEXT NOT NULL REFERENCES exams(accession),
        run_id         TEXT NOT NULL,
        positive_votes INTEGER NOT NULL,
        valid_votes    INTEGER NOT NULL,
        decision       TEXT NOT NULL,
        contributing   TEXT NOT NULL,
        UNIQUE (config_name, accession, run_id)
    );
    CREATE INDEX consensus_by_config ON consensus_decisions(config_name, accession);
    CREATE TABLE labels (
        id          INTEGER PRIMARY KEY AUTOINCREMENT,
        accession   TEXT NOT NULL REFERENCES exams(accession),
        category    TEXT NOT NULL,
        reviewer_id TEXT NOT NULL,
        labeled_at  TEXT NOT NULL
    );
    CREATE INDEX labels_accession ON labels(accession);
    CREATE TABLE runs (
        run_id       TEXT PRIMARY KEY,
        kind         TEXT NOT NULL,
        content_hash TEXT,
        started_at   TEXT NOT NULL,
        finished_at  TEXT,
        summary_json TEXT
    );
    CREATE TABLE metric_snapshots (
        id           INTEGER PRIMARY KEY AUTOINCREMENT,
        run_id       TEXT NOT NULL REFERENCES runs(run_id),
        created_at   TEXT NOT NULL,
        payload_json TEXT NOT NULL
    );
    CREATE TABLE counters (
        name  TEXT PRIMARY KEY,
        value INTEGER NOT NULL DEFAULT 0
    );
    CREATE TABLE journal (
        id     INTEGER PRIMARY KEY AUTOINCREMENT,
        at     TEXT NOT NULL,
        entity TEXT NOT NULL,
        ref    TEXT NOT NULL,
        action TEXT NOT NULL
    );
    """,
]


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


def _ts(dt: datetime | None) -> str | None:
    return dt.isoformat() if dt is not None else None


def _dt(s: str | None) -> datetime | None:
    return datetime.fromisoformat(s) if s else None


class TriageStore:
    """All reads and writes go through this object; it is safe to share
    across threads (writes serialize on an internal lock)."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock:
            self._conn.execute("PRAGMA foreign_keys = ON")
            if self.path != ":memory:":
                self._conn.execute("PRAGMA journal_mode = WAL")
            self._migrate()

    def close(self):
        with self._lock:
            self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- schema ------------------------------------------------------------

    def _migrate(self):
        cur = self._conn.execute("PRAGMA user_version")
        version = cur.fetchone()[0]
        for target, script in enumerate(_MIGRATIONS, start=1):
            if version < target:
                with self._conn:
                    self._conn.executescript(script)
                    self._conn.execute(f"PRAGMA user_version = {target}")
                version = target

    @property
    def schema_version(self) -> int:
        return self._conn.execute("PRAGMA user_version").fetchone()[0]

    # -- plumbing ------------------------------------------------------------

    def _journal(self, entity: str, ref: str, action: str):
        self._conn.execute(
            "INSERT INTO journal (at, entity, ref, action) VALUES (?, ?, ?, ?)",
            (_ts(_utcnow()), entity, ref, action),
        )

    def _write(self, fn):
        with self._lock:
            try:
                with self._conn:
                    return fn()
            except sqlite3.IntegrityError as exc:
                raise InvariantViolation(str(exc)) from exc

    def journal_entries(self, entity: str | None = None) -> list[sqlite3.Row]:
        with self._lock:
            if entity:
                return self._conn.execute(
                    "SELECT * FROM journal WHERE entity = ? ORDER BY id", (entity,)
                ).fetchall()
            return self._conn.execute("SELECT * FROM journal ORDER BY id").fetchall()

    # -- counters ------------------------------------------------------------

    def increment_counter(self, name: str, by: int = 1):
        def op():
            self._conn.execute(
                "INSERT INTO counters (name, value) VALUES (?, ?) "
                "ON CONFLICT(name) DO UPDATE SET value = value + excluded.value",
                (name, by),
            )

        self._write(op)

    def counter(self, name: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT value FROM counters WHERE name = ?", (name,)
            ).fetchone()
        return row[0] if row else 0

    def counters(self) -> dict[str, int]:
        with self._lock:
            rows = self._conn.execute("SELECT name, value FROM counters").fetchall()
        return {r["name"]: r["value"] for r in rows}

    # -- exams ---------------------------------------------------------------

    def upsert_exam(self, exam: ExamRecord) -> str:
        """Insert or merge. Known demographics never degrade back to
        unknown when a later message omits them."""

        def op():
            self._conn.execute(
                """
                INSERT INTO exams (accession, patient_age, patient_sex, setting, exam_time)
                VALUES (?, ?, ?, ?, ?)
                ON CONFLICT(accession) DO UPDATE SET
                    patient_age = COALESCE(excluded.patient_age, patient_age),
                    patient_sex = CASE WHEN excluded.patient_sex != 'unknown'
                                       THEN excluded.patient_sex ELSE patient_sex END,
                    setting     = CASE WHEN excluded.setting != 'unknown'
                                       THEN excluded.setting ELSE setting END,
                    exam_time   = COALESCE(excluded.exam_time, exam_time)
                """,
                (
                    exam.accession,
                    exam.patient_age,
                    exam.patient_sex.value,
                    exam.setting.value,
                    _ts(exam.exam_time),
                ),
            )
            self._journal("exam", exam.accession, "upsert")
            return exam.accession

        return self._write(op)

    def ensure_exam(self, accession: str) -> str:
        def op():
            self._conn.execute(
                "INSERT OR IGNORE INTO exams (accession) VALUES (?)", (accession,)
            )
            return accession

        return self._write(op)

    def get_exam(self, accession: str) -> ExamRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM exams WHERE accession = ?", (accession,)
            ).fetchone()
        if row is None:
            return None
        return ExamRecord(
            accession=row["accession"],
            patient_age=row["patient_age"],
            patient_sex=Sex(row["patient_sex"]),
            setting=CareSetting(row["setting"]),
            exam_time=_dt(row["exam_time"]),
        )

    def exam_count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM exams").fetchone()[0]

    # -- HL7 frames / detector events -----------------------------------------

    def insert_frame(self, frame: Hl7Frame, status: str, reason: str | None = None) -> int:
        def op():
            cur = self._conn.execute(
                "INSERT INTO hl7_frames (raw_bytes, received_at, peer, status, reason) "
                "VALUES (?, ?, ?, ?, ?)",
                (frame.raw_bytes, _ts(frame.received_at), frame.peer, status, reason),
            )
            self._journal("hl7_frame", str(cur.lastrowid), status)
            return cur.lastrowid

        return self._write(op)

    def frame_counts_by_status(self) -> dict[str, int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT status, COUNT(*) n FROM hl7_frames GROUP BY status"
            ).fetchall()
        return {r["status"]: r["n"] for r in rows}

    def insert_ai_result(self, event: AIResultEvent) -> int:
        """Append to history and mark this event current for its exam."""

        def op():
            self._conn.execute(
                "UPDATE ai_results SET is_current = 0 WHERE accession = ?",
                (event.accession,),
            )
            cur = self._conn.execute(
                "INSERT INTO ai_results (accession, hemorrhage, received_at, "
                "raw_message_id, is_current) VALUES (?, ?, ?, ?, 1)",
                (
                    event.accession,
                    int(event.hemorrhage),
                    _ts(event.received_at),
                    event.raw_message_id,
                ),
            )
            self._journal("ai_result", event.accession, "insert")
            return cur.lastrowid

        return self._write(op)

    def current_ai_results(self) -> dict[str, bool]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT accession, hemorrhage FROM ai_results WHERE is_current = 1"
            ).fetchall()
        return {r["accession"]: bool(r["hemorrhage"]) for r in rows}

    def ai_result_history(self, accession: str) -> list[AIResultEvent]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM ai_results WHERE accession = ? ORDER BY id", (accession,)
            ).fetchall()
        return [
            AIResultEvent(
                accession=r["accession"],
                hemorrhage=bool(r["hemorrhage"]),
                received_at=_dt(r["received_at"]),
                raw_message_id=r["raw_message_id"],
            )
            for r in rows
        ]

    # -- reports / impressions -------------------------------------------------

    def upsert_report(self, doc: ReportDocument):
        def op():
            self._conn.execute(
                "INSERT OR IGNORE INTO exams (accession) VALUES (?)", (doc.accession,)
            )
            self._conn.execute(
                "INSERT INTO reports (accession, full_text, fetched_at, source) "
                "VALUES (?, ?, ?, ?) "
                "ON CONFLICT(accession) DO UPDATE SET full_text = excluded.full_text, "
                "fetched_at = excluded.fetched_at, source = excluded.source",
                (doc.accession, doc.full_text, _ts(doc.fetched_at), doc.source.value),
            )
            self._journal("report", doc.accession, "upsert")

        self._write(op)

    def get_report(self, accession: str) -> ReportDocument | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM reports WHERE accession = ?", (accession,)
            ).fetchone()
        if row is None:
            return None
        return ReportDocument(
            accession=row["accession"],
            full_text=row["full_text"],
            fetched_at=_dt(row["fetched_at"]),
            source=ReportSource(row["source"]),
        )

    def upsert_impression(self, imp: Impression):
        def op():
            self._conn.execute(
                "INSERT OR IGNORE INTO exams (accession) VALUES (?)", (imp.accession,)
            )
            self._conn.execute(
                "INSERT INTO impressions (accession, text, status, updated_at) "
                "VALUES (?, ?, ?, ?) "
                "ON CONFLICT(accession) DO UPDATE SET text = excluded.text, "
                "status = excluded.status, updated_at = excluded.updated_at",
                (imp.accession, imp.text, imp.status.value, _ts(_utcnow())),
            )
            self._journal("impression", imp.accession, imp.status.value)

        self._write(op)

    def get_impression(self, accession: str) -> Impression | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM impressions WHERE accession = ?", (accession,)
            ).fetchone()
        if row is None:
            return None
        return Impression(row["accession"], row["text"], ImpressionStatus(row["status"]))

    def impressions_by_status(self, status: ImpressionStatus) -> list[Impression]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM impressions WHERE status = ? ORDER BY accession",
                (status.value,),
            ).fetchall()
        return [Impression(r["accession"], r["text"], ImpressionStatus(r["status"])) for r in rows]

    # -- verdicts ----------------------------------------------------------------

    def upsert_verdict(self, v: AgentVerdict, run_id: str) -> int:
        return self.upsert_verdicts([v], run_id)[0]

    def upsert_verdicts(self, verdicts: list[AgentVerdict], run_id: str) -> list[int]:
        """Bulk write, one transaction. Idempotent per
        (agent_id, accession, run_id)."""

        def op():
            ids = []
            for v in verdicts:
                cur = self._conn.execute(
                    """
                    INSERT INTO verdicts (agent_id, accession, run_id, hemorrhage,
                        subtype, raw_response, status, latency_ms, subtype_flagged)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                    ON CONFLICT(agent_id, accession, run_id) DO UPDATE SET
                        hemorrhage = excluded.hemorrhage,
                        subtype = excluded.subtype,
                        raw_response = excluded.raw_response,
                        status = excluded.status,
                        latency_ms = excluded.latency_ms,
                        subtype_flagged = excluded.subtype_flagged
                    """,
                    (
                        v.agent_id,
                        v.accession,
                        run_id,
                        None if v.hemorrhage is None else int(v.hemorrhage),
                        v.subtype.value if v.subtype else None,
                        v.raw_response,
                        v.status.value,
                        v.latency_ms,
                        int(v.subtype_flagged),
                    ),
                )
                self._journal("verdict", f"{v.agent_id}/{v.accession}/{run_id}", "upsert")
                ids.append(cur.lastrowid)
            return ids

        return self._write(op)

    @staticmethod
    def _row_to_verdict(r: sqlite3.Row) -> AgentVerdict:
        return AgentVerdict(
            agent_id=r["agent_id"],
            accession=r["accession"],
            hemorrhage=None if r["hemorrhage"] is None else bool(r["hemorrhage"]),
            subtype=HemorrhageSubtype(r["subtype"]) if r["subtype"] else None,
            raw_response=r["raw_response"],
            status=VerdictStatus(r["status"]),
            latency_ms=r["latency_ms"],
            subtype_flagged=bool(r["subtype_flagged"]),
        )

    def latest_verdicts(self) -> dict[str, list[AgentVerdict]]:
        """Newest verdict per (agent, accession) across runs, grouped by
        accession; this is what consensus recomputation consumes."""
        with self._lock:
            rows = self._conn.execute(
                """
                SELECT * FROM (
                    SELECT *, ROW_NUMBER() OVER (
                        PARTITION BY agent_id, accession ORDER BY id DESC) rn
                    FROM verdicts
                ) WHERE rn = 1 ORDER BY accession, agent_id
                """
            ).fetchall()
        out: dict[str, list[AgentVerdict]] = {}
        for r in rows:
            out.setdefault(r["accession"], []).append(self._row_to_verdict(r))
        return out

    def verdicts_for_run(self, run_id: str) -> list[AgentVerdict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM verdicts WHERE run_id = ? ORDER BY accession, agent_id",
                (run_id,),
            ).fetchall()
        return [self._row_to_verdict(r) for r in rows]

    def verdict_count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM verdicts").fetchone()[0]

    # -- consensus ------------------------------------------------------------

    def upsert_consensus(self, decision: ConsensusDecision, run_id: str):
        self.upsert_consensus_bulk([decision], run_id)

    def upsert_consensus_bulk(self, decisions: list[ConsensusDecision], run_id: str):
        def op():
            for d in decisions:
                self._conn.execute(
                    """
                    INSERT INTO consensus_decisions (config_name, accession, run_id,
                        positive_votes, valid_votes, decision, contributing)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                    ON CONFLICT(config_name, accession, run_id) DO UPDATE SET
                        positive_votes = excluded.positive_votes,
                        valid_votes = excluded.valid_votes,
                        decision = excluded.decision,
                        contributing = excluded.contributing
                    """,
                    (
                        d.config_name,
                        d.accession,
                        run_id,
                        d.positive_votes,
                        d.valid_votes,
                        d.decision.value,
                        json.dumps(d.contributing, sort_keys=True),
                    ),
                )
                self._journal("consensus", f"{d.config_name}/{d.accession}/{run_id}", "upsert")

        self._write(op)

    def latest_consensus(self, config_name: str) -> dict[str, ConsensusDecision]:
        with self._lock:
            rows = self._conn.execute(
                """
                SELECT * FROM (
                    SELECT *, ROW_NUMBER() OVER (
                        PARTITION BY accession ORDER BY id DESC) rn
                    FROM consensus_decisions WHERE config_name = ?
                ) WHERE rn = 1
                """,
                (config_name,),
            ).fetchall()
        return {
            r["accession"]: ConsensusDecision(
                accession=r["accession"],
                config_name=r["config_name"],
                positive_votes=r["positive_votes"],
                valid_votes=r["valid_votes"],
                decision=Decision(r["decision"]),
                contributing=json.loads(r["contributing"]),
            )
            for r in rows
        }

    def consensus_config_names(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT config_name FROM consensus_decisions ORDER BY config_name"
            ).fetchall()
        return [r["config_name"] for r in rows]

    # -- labels ------------------------------------------------------------------

    def append_label(self, label: ReferenceLabel) -> int:
        """Labels are never updated in place; relabeling appends."""

        def op():
            cur = self._conn.execute(
                "INSERT INTO labels (accession, category, reviewer_id, labeled_at) "
                "VALUES (?, ?, ?, ?)",
                (
                    label.accession,
                    label.category.value,
                    label.reviewer_id,
                    _ts(label.labeled_at),
                ),
            )
            self._journal("label", label.accession, label.category.value)
            return cur.lastrowid

        return self._write(op)

    def all_labels(self) -> list[ReferenceLabel]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM labels ORDER BY id").fetchall()
        return [
            ReferenceLabel(
                accession=r["accession"],
                category=LabelCategory(r["category"]),
                reviewer_id=r["reviewer_id"],
                labeled_at=_dt(r["labeled_at"]),
            )
            for r in rows
        ]

    def current_label_categories(self) -> dict[str, LabelCategory]:
        """Newest label per accession (labeled_at, arrival order ties)."""
        with self._lock:
            rows = self._conn.execute(
                """
                SELECT accession, category FROM (
                    SELECT accession, category, ROW_NUMBER() OVER (
                        PARTITION BY accession ORDER BY labeled_at DESC, id DESC) rn
                    FROM labels
                ) WHERE rn = 1
                """
            ).fetchall()
        return {r["accession"]: LabelCategory(r["category"]) for r in rows}

    # -- runs / snapshots -----------------------------------------------------------

    def create_run(self, run_id: str, kind: str, content_hash: str | None = None):
        def op():
            self._conn.execute(
                "INSERT INTO runs (run_id, kind, content_hash, started_at) "
                "VALUES (?, ?, ?, ?)",
                (run_id, kind, content_hash, _ts(_utcnow())),
            )
            self._journal("run", run_id, "create")

        self._write(op)

    def finish_run(self, run_id: str, summary: dict):
        def op():
            self._conn.execute(
                "UPDATE runs SET finished_at = ?, summary_json = ? WHERE run_id = ?",
                (_ts(_utcnow()), json.dumps(summary, sort_keys=True), run_id),
            )

        self._write(op)

    def get_run(self, run_id: str) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM runs WHERE run_id = ?", (run_id,)
            ).fetchone()
        if row is None:
            return None
        out = dict(row)
        out["summary"] = json.loads(row["summary_json"]) if row["summary_json"] else None
        return out

    def find_run_by_hash(self, kind: str, content_hash: str) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT run_id FROM runs WHERE kind = ? AND content_hash = ? "
                "ORDER BY started_at DESC, run_id DESC LIMIT 1",
                (kind, content_hash),
            ).fetchone()
        return row["run_id"] if row else None

    def save_metric_snapshot(self, run_id: str, payload: dict) -> int:
        def op():
            cur = self._conn.execute(
                "INSERT INTO metric_snapshots (run_id, created_at, payload_json) "
                "VALUES (?, ?, ?)",
                (run_id, _ts(_utcnow()), json.dumps(payload, sort_keys=True)),
            )
            self._journal("metric_snapshot", run_id, "insert")
            return cur.lastrowid

        return self._write(op)

    def latest_metric_snapshot(self) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT payload_json FROM metric_snapshots ORDER BY id DESC LIMIT 1"
            ).fetchone()
        return json.loads(row["payload_json"]) if row else None

    def metric_snapshot_for_run(self, run_id: str) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT payload_json FROM metric_snapshots WHERE run_id = ? "
                "ORDER BY id DESC LIMIT 1",
                (run_id,),
            ).fetchone()
        return json.loads(row["payload_json"]) if row else None

    # -- cohort query -----------------------------------------------------------------

    def cohort_query(
        self,
        setting: CareSetting | None = None,
        date_from: datetime | None = None,
        date_to: datetime | None = None,
        has_label: bool | None = None,
        discordant: bool | None = None,
        config_name: str | None = None,
        after: str | None = None,
        limit: int = 100,
    ) -> tuple[list[dict], str | None]:
        """Read-only exam listing with stable accession order and cursor
        pagination; returns (rows, next_cursor).

        ``discordant`` compares the current detector result against the
        latest decided consensus for ``config_name`` and requires it.
        """
        if discordant is not None and not config_name:
            raise StoreError("discordant filter requires config_name")
        sql = """
            SELECT e.accession, e.patient_age, e.patient_sex, e.setting, e.exam_time,
                   ai.hemorrhage AS ai_hemorrhage,
                   cd.decision AS consensus_decision,
                   lb.category AS label_category
            FROM exams e
            LEFT JOIN ai_results ai ON ai.accession = e.accession AND ai.is_current = 1
            LEFT JOIN (
                SELECT * FROM (
                    SELECT config_name, accession, decision, ROW_NUMBER() OVER (
                        PARTITION BY accession ORDER BY id DESC) rn
                    FROM consensus_decisions WHERE config_name = :config_name
                ) WHERE rn = 1
            ) cd ON cd.accession = e.accession
            LEFT JOIN (
                SELECT accession, category FROM (
                    SELECT accession, category, ROW_NUMBER() OVER (
                        PARTITION BY accession ORDER BY labeled_at DESC, id DESC) rn
                    FROM labels
                ) WHERE rn = 1
            ) lb ON lb.accession = e.accession
            WHERE 1 = 1
        """
        params: dict = {"config_name": config_name or ""}
        if setting is not None:
            sql += " AND e.setting = :setting"
            params["setting"] = setting.value
        if date_from is not None:
            sql += " AND e.exam_time >= :date_from"
            params["date_from"] = _ts(date_from)
        if date_to is not None:
            sql += " AND e.exam_time < :date_to"
            params["date_to"] = _ts(date_to)
        if has_label is True:
            sql += " AND lb.category IS NOT NULL"
        elif has_label is False:
            sql += " AND lb.category IS NULL"
        if discordant is True:
            sql += (
                " AND ai.hemorrhage IS NOT NULL"
                " AND cd.decision IN ('positive', 'negative')"
                " AND (cd.decision = 'positive') != (ai.hemorrhage = 1)"
            )
        elif discordant is False:
            sql += (
                " AND ai.hemorrhage IS NOT NULL"
                " AND cd.decision IN ('positive', 'negative')"
                " AND (cd.decision = 'positive') = (ai.hemorrhage = 1)"
            )
        if after:
            sql += " AND e.accession > :after"
            params["after"] = after
        sql += " ORDER BY e.accession LIMIT :limit"
        params["limit"] = limit + 1
        with self._lock:
            rows = [dict(r) for r in self._conn.execute(sql, params).fetchall()]
        next_cursor = None
        if len(rows) > limit:
            rows = rows[:limit]
            next_cursor = rows[-1]["accession"]
        return rows, next_cursor
