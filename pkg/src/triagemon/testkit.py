"""Synthetic corpus and mock services for desk-scale verification.

Everything here is deterministic. Positional choices (which cases are
positive, which are ambiguous) come from a seeded RNG; per-case
behavior (mock verdicts, detector output, demographics) comes from
hashing (seed, accession), so it is identical across repeated queries
and across call orderings.

The mock agent server speaks the exact production chat contract and
recovers the case by looking the impression text up against the
generated corpus, so no test-only fields leak into requests. The mock
detector streams real MLLP bytes at a live listener.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from random import Random

from .adjudication import record_label
from .domain import CareSetting, DomainError, HemorrhageSubtype, LabelCategory
from .hl7 import MllpConnection, build_oru_message

BASE_EXAM_TIME = datetime(2024, 3, 1, 6, 0, 0)


def _hash_u(seed: int, key: str, salt: str) -> float:
    """Uniform [0,1) draw fully determined by (seed, key, salt)."""
    digest = hashlib.sha256(f"{seed}|{key}|{salt}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _hash_pick(seed: int, key: str, salt: str, options):
    return options[int(_hash_u(seed, key, salt) * len(options))]


@dataclass(frozen=True)
class MockAgentProfile:
    agent_id: str
    sensitivity: float
    specificity: float
    malformed_rate: float = 0.0
    failure_rate: float = 0.0
    seed: int = 0
    think_blocks: bool = False

    def __post_init__(self):
        for name in ("sensitivity", "specificity", "malformed_rate", "failure_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {v}")

    def behavior(self, accession: str, truth: bool) -> str | bool:
        """What this agent does for one case: "fail", "malformed", or
        the boolean it votes. Independent of call order by construction."""
        key = f"{self.agent_id}:{accession}"
        if _hash_u(self.seed, key, "fail") < self.failure_rate:
            return "fail"
        if _hash_u(self.seed, key, "malformed") < self.malformed_rate:
            return "malformed"
        u = _hash_u(self.seed, key, "vote")
        if truth:
            return u < self.sensitivity
        return not (u < self.specificity)

    @property
    def p_ok(self) -> float:
        return (1.0 - self.failure_rate) * (1.0 - self.malformed_rate)

    def p_positive_given_ok(self, truth: bool) -> float:
        return self.sensitivity if truth else 1.0 - self.specificity


@dataclass(frozen=True)
class SyntheticCase:
    accession: str
    ground_truth: bool
    subtype: HemorrhageSubtype | None
    impression_text: str
    ai_detector_output: bool
    setting: CareSetting
    gold_category: LabelCategory
    exam_time: datetime


_POSITIVE_TEMPLATES = (
    "Acute {phrase}.",
    "Large acute {phrase} with surrounding edema.",
    "1. Acute {phrase}. 2. No midline shift.",
    "Interval development of acute {phrase}.",
    "Small volume acute {phrase}; no associated mass effect.",
)

_SUBTYPE_PHRASES = {
    HemorrhageSubtype.SUBARACHNOID: (
        "subarachnoid hemorrhage within the basal cisterns",
        "SAH along the bilateral sylvian fissures",
    ),
    HemorrhageSubtype.INTRAPARENCHYMAL: (
        "intraparenchymal hemorrhage in the right basal ganglia",
        "intracerebral hemorrhage within the left frontal lobe",
    ),
    HemorrhageSubtype.SUBDURAL: (
        "subdural hematoma along the left convexity",
        "subdural hemorrhage over the right cerebral hemisphere",
    ),
    HemorrhageSubtype.EPIDURAL: (
        "epidural hematoma overlying the right temporal lobe",
        "extradural hemorrhage adjacent to the squamous temporal bone",
    ),
    HemorrhageSubtype.INTRAVENTRICULAR: (
        "intraventricular hemorrhage layering in the occipital horns",
        "IVH within the third and lateral ventricles",
    ),
}

# Negative pool deliberately includes the classic false-positive bait:
# chronic collections and scalp hematomas.
_NEGATIVE_TEMPLATES = (
    "No acute intracranial hemorrhage.",
    "No acute intracranial abnormality. Chronic subdural collection along the right convexity, unchanged.",
    "Scalp hematoma overlying the left parietal bone. No intracranial hemorrhage.",
    "No evidence of acute hemorrhage, mass effect, or midline shift.",
    "Age-related involutional changes. No acute findings.",
    "Chronic microvascular ischemic changes without acute intracranial hemorrhage.",
)

#: (text, gold adjudication category) for cases a reviewer should call
#: incomplete or indeterminate.
_AMBIGUOUS_TEMPLATES = (
    (
        "Study limited by motion artifact; evaluation for small hemorrhage is limited.",
        LabelCategory.INCOMPLETE,
    ),
    (
        "Punctate hyperdense focus, indeterminate; may represent minute hemorrhage or calcification.",
        LabelCategory.INDETERMINATE,
    ),
    (
        "Examination terminated early at patient request; partial views show no definite hemorrhage.",
        LabelCategory.INCOMPLETE,
    ),
    (
        "Asymmetric density along the tentorium of uncertain significance; trace subdural blood not excluded.",
        LabelCategory.INDETERMINATE,
    ),
)


def synth_corpus(
    n: int,
    prevalence: float,
    seed: int,
    ambiguous_rate: float = 0.14,
    detector_sensitivity: float = 0.90,
    detector_specificity: float = 0.98,
) -> list[SyntheticCase]:
    """Generate n cases with exactly round(n * prevalence) positives and
    round(n * ambiguous_rate) ambiguous impressions.

    Every impression text is unique (a per-case comparison date is
    appended), which the mock agent server relies on to recover case
    identity from the prompt alone.
    """
    if n < 1:
        raise DomainError("synth_corpus needs n >= 1")
    if not 0.0 < prevalence < 1.0:
        raise DomainError("prevalence must be in (0, 1)")
    if not 0.0 <= ambiguous_rate < 1.0:
        raise DomainError("ambiguous_rate must be in [0, 1)")

    rng = Random(seed)
    positive_idx = set(rng.sample(range(n), round(n * prevalence)))
    ambiguous_idx = set(rng.sample(range(n), round(n * ambiguous_rate)))

    cases = []
    for i in range(n):
        acc = f"SYN{i:06d}"
        truth = i in positive_idx
        subtype = _hash_pick(seed, acc, "subtype", list(HemorrhageSubtype)) if truth else None

        if i in ambiguous_idx:
            text, gold = _hash_pick(seed, acc, "amb", _AMBIGUOUS_TEMPLATES)
        elif truth:
            template = _hash_pick(seed, acc, "ptmpl", _POSITIVE_TEMPLATES)
            phrase = _hash_pick(seed, acc, "phrase", _SUBTYPE_PHRASES[subtype])
            text = template.format(phrase=phrase)
            gold = LabelCategory.ABSOLUTE_POSITIVE
        else:
            text = _hash_pick(seed, acc, "ntmpl", _NEGATIVE_TEMPLATES)
            gold = LabelCategory.ABSOLUTE_NEGATIVE
        comparison = BASE_EXAM_TIME - timedelta(days=30 + i)
        text = f"{text} Comparison with {comparison.date().isoformat()} examination."

        u = _hash_u(seed, acc, "detector")
        detected = u < detector_sensitivity if truth else not (u < detector_specificity)

        u_setting = _hash_u(seed, acc, "setting")
        if u_setting < 0.88:
            setting = CareSetting.EMERGENCY
        elif u_setting < 0.97:
            setting = CareSetting.INPATIENT
        else:
            setting = CareSetting.OUTPATIENT

        cases.append(
            SyntheticCase(
                accession=acc,
                ground_truth=truth,
                subtype=subtype,
                impression_text=text,
                ai_detector_output=detected,
                setting=setting,
                gold_category=gold,
                exam_time=BASE_EXAM_TIME + timedelta(minutes=3 * i),
            )
        )
    return cases


def make_report_text(case: SyntheticCase) -> str:
    """A full report whose impression extraction gives back exactly
    case.impression_text."""
    history = _hash_pick(
        0,
        case.accession,
        "hist",
        (
            "Fall from standing.",
            "Acute onset headache.",
            "Trauma activation.",
            "Altered mental status.",
            "Anticoagulated, minor head strike.",
        ),
    )
    addendum = ""
    if _hash_u(0, case.accession, "addendum") < 0.2:
        addendum = "ADDENDUM: Result communicated to the ordering provider.\n"
    return (
        f"HISTORY: {history}\n"
        "TECHNIQUE: Axial noncontrast CT of the head.\n"
        "FINDINGS: See impression.\n"
        "\n"
        f"IMPRESSION: {case.impression_text}\n"
        f"{addendum}"
    )


def write_report_files(corpus: list[SyntheticCase], directory: str | Path) -> int:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for case in corpus:
        (root / f"{case.accession}.txt").write_text(make_report_text(case), encoding="utf-8")
    return len(corpus)


# --- mock agent endpoint -----------------------------------------------------

_MALFORMED_BODIES = (
    "The findings are concerning but I cannot commit to a structured answer.",
    '{"hemorrhage": "unclear"}',
    "hemorrhage: true",
    '{"verdict": {"present": maybe}}',
)

_SUBTYPE_SPELLINGS = {
    HemorrhageSubtype.SUBARACHNOID: ("subarachnoid", "SAH", "subarachnoid hemorrhage"),
    HemorrhageSubtype.INTRAPARENCHYMAL: ("intraparenchymal", "IPH", "intracerebral"),
    HemorrhageSubtype.SUBDURAL: ("subdural", "SDH", "subdural hematoma"),
    HemorrhageSubtype.EPIDURAL: ("epidural", "EDH", "extradural"),
    HemorrhageSubtype.INTRAVENTRICULAR: ("intraventricular", "IVH",),
}


def mock_agent_content(profile: MockAgentProfile, case: SyntheticCase) -> str | None:
    """The raw content the mock returns for one case, or None for a
    transport failure."""
    behavior = profile.behavior(case.accession, case.ground_truth)
    if behavior == "fail":
        return None
    key = f"{profile.agent_id}:{case.accession}"
    if behavior == "malformed":
        return _hash_pick(profile.seed, key, "mbody", _MALFORMED_BODIES)
    answer: dict = {"hemorrhage": behavior}
    if behavior:
        subtype = case.subtype or _hash_pick(
            profile.seed, key, "fpsub", list(HemorrhageSubtype)
        )
        answer["subtype"] = _hash_pick(
            profile.seed, key, "spelling", _SUBTYPE_SPELLINGS[subtype]
        )
    content = json.dumps(answer)
    if profile.think_blocks:
        content = f"<think>Scanning the impression for acute blood products.</think>{content}"
    return content


def extract_impression_from_prompt(prompt: str) -> str | None:
    """Undo the production prompt rendering: the case impression is the
    text after the last "Report impression:" line, before "Answer:"."""
    marker = "Report impression: "
    i = prompt.rfind(marker)
    if i < 0:
        return None
    tail = prompt[i + len(marker):]
    j = tail.rfind("\nAnswer:")
    return tail[:j] if j >= 0 else tail.strip()


class MockAgentServer:
    """One HTTP server impersonating any number of agents.

    Requests are routed to a profile by the "model" field; the case is
    recovered by exact impression lookup against the corpus. Keep-alive
    is on so large panels do not exhaust ephemeral ports.
    """

    def __init__(
        self,
        profiles: list[MockAgentProfile],
        corpus: list[SyntheticCase],
        address: tuple[str, int] = ("127.0.0.1", 0),
    ):
        by_id = {p.agent_id: p for p in profiles}
        if len(by_id) != len(profiles):
            raise DomainError("duplicate agent_id among profiles")
        by_impression = {c.impression_text: c for c in corpus}
        if len(by_impression) != len(corpus):
            raise DomainError("corpus impressions must be unique for mock lookup")
        self.profiles = by_id
        self.calls = 0
        server_ref = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                server_ref.calls += 1
                profile = server_ref.profiles.get(body.get("model", ""))
                prompt = ""
                for message in body.get("messages", []):
                    if message.get("role") == "user":
                        prompt = message.get("content", "")
                impression = extract_impression_from_prompt(prompt)
                case = by_impression.get(impression) if impression else None
                if profile is None or case is None:
                    self._reply(404, b'{"error": "unknown model or case"}')
                    return
                content = mock_agent_content(profile, case)
                if content is None:
                    # transport failure: a 5xx the client will retry into
                    self._reply(503, b'{"error": "mock outage"}')
                    return
                payload = json.dumps({"message": {"content": content}}).encode()
                self._reply(200, payload)

            def _reply(self, code: int, payload: bytes):
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *a):
                pass

        self._server = ThreadingHTTPServer(address, Handler)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


# --- mock detector -----------------------------------------------------------


@dataclass
class DetectorSendReport:
    messages_sent: int = 0
    parse_bad_sent: int = 0
    framing_bad_sent: int = 0
    garbage_runs: int = 0
    acks_received: int = 0

    @property
    def well_framed(self) -> int:
        return self.messages_sent + self.parse_bad_sent


def _blank_field(msg: str, segment: str, index: int, value: str = "") -> str:
    i = msg.index(segment + "|")
    j = msg.index("\r", i)
    parts = msg[i:j].split("|")
    parts[index] = value
    return msg[:i] + "|".join(parts) + msg[j:]


def _corrupt_message(msg: str, which: int) -> str:
    """Well-framed but unparsable, cycling through the four parse
    failure modes."""
    if which == 0:
        return msg.replace("ORU^R01", "ADT^A01")
    if which == 1:
        return msg.replace("ICH^INTRACRANIAL HEMORRHAGE", "PE^PULMONARY EMBOLISM")
    if which == 2:
        return _blank_field(msg, "OBR", 3)
    return _blank_field(msg, "OBX", 5, "MAYBE")


def send_detector_results(
    corpus: list[SyntheticCase],
    address: tuple[str, int],
    seed: int = 0,
    malformed_message_rate: float = 0.0,
    malformed_frame_rate: float = 0.0,
    garbage_rate: float = 0.0,
    wait_ack: bool = True,
) -> DetectorSendReport:
    """Stream one ORU^R01 per case at a live listener over MLLP.

    Injection knobs ride on top of the clean stream: parse-level
    corruption (well-framed, quarantined downstream), framing-level
    corruption (bad terminator), and inter-frame garbage; exact counts
    come back in the report so tests can reconcile counters.
    """
    report = DetectorSendReport()
    rnd = Random(seed)
    # Garbage directly after a bad-terminator frame merges into that
    # frame's framing incident on the listener side; track the run so
    # the reported counts reconcile with the listener's counter exactly.
    in_junk_run = False
    with MllpConnection(address) as conn:
        for i, case in enumerate(corpus):
            acc = case.accession
            dob = (case.exam_time - timedelta(days=365 * (40 + i % 50))).strftime("%Y%m%d")
            msg = build_oru_message(
                acc,
                case.ai_detector_output,
                control_id=f"DET{i:06d}",
                value_style=("word", "digit", "boolean")[i % 3],
                observed_at=case.exam_time,
                sex_code="F" if _hash_u(seed, acc, "sex") < 0.5 else "M",
                dob=dob,
                patient_class={"emergency": "E", "inpatient": "I", "outpatient": "O"}[
                    case.setting.value
                ],
            )
            if garbage_rate and rnd.random() < garbage_rate:
                conn.send_raw(b"??line noise %d??" % i)
                if not in_junk_run:
                    report.garbage_runs += 1
                    in_junk_run = True
            if malformed_frame_rate and rnd.random() < malformed_frame_rate:
                # end marker followed by junk instead of CR; this opens
                # its own incident even mid-run (the start marker resets)
                conn.send_raw(b"\x0b" + msg.encode("latin-1") + b"\x1cX")
                report.framing_bad_sent += 1
                in_junk_run = True
                continue
            if malformed_message_rate and rnd.random() < malformed_message_rate:
                msg = _corrupt_message(msg, report.parse_bad_sent % 4)
                report.parse_bad_sent += 1
            else:
                report.messages_sent += 1
            ack = conn.send_message(msg, wait_ack=wait_ack)
            in_junk_run = False
            if ack is not None:
                report.acks_received += 1
    return report


# --- virtual reviewer ----------------------------------------------------------


def virtual_review(
    store,
    cases: list[SyntheticCase],
    reviewer_id: str = "virtual-reviewer",
    start_at: datetime | None = None,
) -> int:
    """Label each given case with its gold adjudication category, as a
    human reviewer would. Returns the number of labels written."""
    at = start_at or BASE_EXAM_TIME + timedelta(days=7)
    for i, case in enumerate(cases):
        record_label(
            store,
            case.accession,
            case.gold_category,
            reviewer_id,
            at=at + timedelta(minutes=i),
        )
    return len(cases)


def gold_reference(corpus: list[SyntheticCase]) -> dict[str, bool]:
    """The reference standard a perfect review of the whole corpus
    would produce: eligible cases only, by ground truth."""
    return {
        c.accession: c.ground_truth
        for c in corpus
        if c.gold_category
        in (LabelCategory.ABSOLUTE_POSITIVE, LabelCategory.ABSOLUTE_NEGATIVE)
    }


__all__ = [
    "BASE_EXAM_TIME",
    "DetectorSendReport",
    "MockAgentProfile",
    "MockAgentServer",
    "SyntheticCase",
    "extract_impression_from_prompt",
    "gold_reference",
    "make_report_text",
    "mock_agent_content",
    "send_detector_results",
    "synth_corpus",
    "virtual_review",
    "write_report_files",
]
