"""HTTP API surface: routes, auth, and error codes.

Exercised over real sockets with the requests client, the same way the
dashboard consumes it.
"""

from datetime import datetime, timedelta

import pytest
import requests

from triagemon.adjudication import ReviewPolicy
from triagemon.api import ReviewApiServer
from triagemon.consensus import ConsensusDecision, Decision
from triagemon.domain import (
    AIResultEvent,
    CareSetting,
    ExamRecord,
    Impression,
    ImpressionStatus,
    Sex,
)
from triagemon.store import TriageStore

T0 = datetime(2024, 3, 1, 8, 0)


def decision_for(acc, decision):
    return ConsensusDecision(
        accession=acc, config_name="panel",
        positive_votes=2 if decision is Decision.POSITIVE else 0,
        valid_votes=3 if decision is not Decision.UNDECIDED else 0,
        decision=decision, contributing={},
    )


def seeded_store() -> TriageStore:
    """Four exams: R1 discordant, R2/R3 concordant, R4 undecided."""
    store = TriageStore()
    plan = {
        "R1": (True, Decision.NEGATIVE),
        "R2": (True, Decision.POSITIVE),
        "R3": (False, Decision.NEGATIVE),
        "R4": (True, Decision.UNDECIDED),
    }
    for i, (acc, (ai, decision)) in enumerate(plan.items()):
        store.upsert_exam(ExamRecord(
            accession=acc, patient_age=60.0, patient_sex=Sex.UNKNOWN,
            setting=CareSetting.EMERGENCY, exam_time=T0 + timedelta(minutes=i),
        ))
        store.insert_ai_result(AIResultEvent(
            accession=acc, hemorrhage=ai, received_at=T0 + timedelta(hours=1, minutes=i),
        ))
        store.upsert_impression(Impression(acc, f"Impression for {acc}.",
                                           ImpressionStatus.OK))
        store.upsert_consensus(decision_for(acc, decision), "run-1")
    return store


@pytest.fixture()
def api():
    store = seeded_store()
    policy = ReviewPolicy(config_name="panel", concordant_sample_n=1, seed=3)
    with ReviewApiServer(store, review_policy=policy) as server:
        yield server


class TestQueue:
    def test_queue_shape_and_order(self, api):
        r = requests.get(f"{api.base_url}/api/queue", timeout=5)
        assert r.status_code == 200
        body = r.json()
        assert body["config_name"] == "panel"
        items = body["items"]
        assert items[0]["accession"] == "R1"
        assert items[0]["discordant"] is True
        assert items[0]["ai_result"] is True
        assert items[0]["consensus_decision"] == "negative"
        assert items[0]["current_label"] is None
        assert items[0]["impression_text"] == "Impression for R1."
        assert [it["queue_position"] for it in items] == list(range(1, len(items) + 1))
        assert len(items) == 2  # discordant R1 + one sampled concordant

    def test_queue_without_policy_is_conflict(self):
        with ReviewApiServer(seeded_store()) as server:
            r = requests.get(f"{server.base_url}/api/queue", timeout=5)
            assert r.status_code == 409

    def test_labeling_removes_from_queue(self, api):
        r = requests.post(f"{api.base_url}/api/labels", json={
            "accession": "R1", "category": "absolute_positive", "reviewer_id": "jd",
        }, timeout=5)
        assert r.status_code == 201
        body = r.json()
        assert body["accession"] == "R1"
        assert body["category"] == "absolute_positive"
        r = requests.get(f"{api.base_url}/api/queue", timeout=5)
        assert all(it["accession"] != "R1" for it in r.json()["items"])


class TestLabels:
    def test_invalid_category(self, api):
        r = requests.post(f"{api.base_url}/api/labels", json={
            "accession": "R1", "category": "definitely", "reviewer_id": "jd",
        }, timeout=5)
        assert r.status_code == 400

    def test_unknown_accession(self, api):
        r = requests.post(f"{api.base_url}/api/labels", json={
            "accession": "NOPE", "category": "incomplete", "reviewer_id": "jd",
        }, timeout=5)
        assert r.status_code == 404

    def test_missing_fields(self, api):
        r = requests.post(f"{api.base_url}/api/labels", json={"accession": "R1"},
                          timeout=5)
        assert r.status_code == 400
        assert "category" in r.json()["error"]

    def test_body_must_be_json(self, api):
        r = requests.post(f"{api.base_url}/api/labels", data=b"not json",
                          headers={"Content-Type": "application/json"}, timeout=5)
        assert r.status_code == 400


class TestMetricsRoutes:
    def test_404_before_any_evaluation(self, api):
        assert requests.get(f"{api.base_url}/api/metrics/latest", timeout=5).status_code == 404
        assert requests.get(f"{api.base_url}/api/matrices/latest", timeout=5).status_code == 404

    def test_snapshot_round_trip(self):
        store = seeded_store()
        store.create_run("eval-1", "eval")
        payload = {
            "reference_n": 4,
            "panel": {
                "models": {},
                "matrices": {
                    "rater_ids": ["a", "b"],
                    "kappa": [[1.0, 0.5], [0.5, 1.0]],
                    "jaccard": [[1.0, 0.6], [0.6, 1.0]],
                },
            },
            "detector": {"evaluations": {}, "comparisons": []},
        }
        store.save_metric_snapshot("eval-1", payload)
        with ReviewApiServer(store) as server:
            r = requests.get(f"{server.base_url}/api/metrics/latest", timeout=5)
            assert r.status_code == 200
            assert r.json() == payload
            r = requests.get(f"{server.base_url}/api/matrices/latest", timeout=5)
            assert r.status_code == 200
            assert r.json()["rater_ids"] == ["a", "b"]

    def test_runs_route(self):
        store = seeded_store()
        store.create_run("batch-7", "batch")
        store.finish_run("batch-7", {"panels_run": 4})
        with ReviewApiServer(store) as server:
            r = requests.get(f"{server.base_url}/api/runs/batch-7", timeout=5)
            assert r.status_code == 200
            body = r.json()
            assert body["run_id"] == "batch-7"
            assert body["summary"] == {"panels_run": 4}
            assert requests.get(
                f"{server.base_url}/api/runs/ghost", timeout=5
            ).status_code == 404


class TestReferenceSummary:
    def test_counts(self, api):
        requests.post(f"{api.base_url}/api/labels", json={
            "accession": "R1", "category": "absolute_positive", "reviewer_id": "jd",
        }, timeout=5)
        requests.post(f"{api.base_url}/api/labels", json={
            "accession": "R4", "category": "indeterminate", "reviewer_id": "jd",
        }, timeout=5)
        r = requests.get(f"{api.base_url}/api/reference/summary", timeout=5)
        body = r.json()
        assert body["labeled"] == 2
        assert body["by_category"] == {"absolute_positive": 1, "indeterminate": 1}
        assert body["reference_n"] == 1  # indeterminate stays out
        assert body["reference_positive"] == 1


class TestAuthAndMisc:
    def test_token_enforced(self):
        store = seeded_store()
        with ReviewApiServer(store, token="sesame") as server:
            url = f"{server.base_url}/api/reference/summary"
            assert requests.get(url, timeout=5).status_code == 401
            bad = requests.get(url, headers={"Authorization": "Bearer wrong"}, timeout=5)
            assert bad.status_code == 401
            good = requests.get(url, headers={"Authorization": "Bearer sesame"}, timeout=5)
            assert good.status_code == 200
            write = requests.post(f"{server.base_url}/api/labels", json={}, timeout=5)
            assert write.status_code == 401

    def test_options_preflight_is_open(self):
        with ReviewApiServer(seeded_store(), token="sesame") as server:
            r = requests.options(f"{server.base_url}/api/queue", timeout=5)
            assert r.status_code == 204
            assert r.headers["Access-Control-Allow-Origin"] == "*"

    def test_unknown_route(self, api):
        assert requests.get(f"{api.base_url}/api/nothing", timeout=5).status_code == 404
        assert requests.post(f"{api.base_url}/api/nothing", json={}, timeout=5).status_code == 404

    def test_cors_header_on_responses(self, api):
        r = requests.get(f"{api.base_url}/api/queue", timeout=5)
        assert r.headers["Access-Control-Allow-Origin"] == "*"


class TestStaticAssets:
    @pytest.fixture()
    def site(self, tmp_path):
        (tmp_path / "index.html").write_text("<!doctype html><title>review</title>")
        (tmp_path / "dist").mkdir()
        (tmp_path / "dist" / "main.js").write_text("export {};")
        return tmp_path

    def test_serves_files_and_root_index(self, site):
        with ReviewApiServer(seeded_store(), static_dir=site) as server:
            root = requests.get(f"{server.base_url}/", timeout=5)
            assert root.status_code == 200
            assert "review" in root.text
            assert root.headers["Content-Type"].startswith("text/html")
            js = requests.get(f"{server.base_url}/dist/main.js", timeout=5)
            assert js.status_code == 200
            assert "javascript" in js.headers["Content-Type"]

    def test_static_open_while_api_stays_guarded(self, site):
        with ReviewApiServer(seeded_store(), token="sesame", static_dir=site) as server:
            assert requests.get(f"{server.base_url}/", timeout=5).status_code == 200
            guarded = requests.get(f"{server.base_url}/api/reference/summary", timeout=5)
            assert guarded.status_code == 401

    def test_no_escape_above_the_static_root(self, site):
        import http.client

        with ReviewApiServer(seeded_store(), static_dir=site) as server:
            host, port = server.bound_address
            # raw connection: the client must not pre-normalize the path
            conn = http.client.HTTPConnection(host, port, timeout=5)
            try:
                conn.putrequest("GET", "/../../../etc/passwd",
                                skip_accept_encoding=True)
                conn.endheaders()
                assert conn.getresponse().status == 404
            finally:
                conn.close()
            missing = requests.get(f"{server.base_url}/nope.css", timeout=5)
            assert missing.status_code == 404

    def test_404_when_not_configured(self):
        with ReviewApiServer(seeded_store()) as server:
            assert requests.get(f"{server.base_url}/", timeout=5).status_code == 404
