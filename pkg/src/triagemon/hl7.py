"""HL7 v2 result ingestion: MLLP framing, ORU^R01 parsing, TCP listener.

The detector announces each exam's boolean finding as a pipe-delimited
ORU^R01 message, MLLP-framed (0x0B start, 0x1C 0x0D terminator). This
module de-frames byte streams, maps messages onto
:class:`~triagemon.domain.AIResultEvent`, and acknowledges each frame.

Field mapping (overridable only where noted):
    MSH-9   message type, must be ORU^R01
    OBR-3   accession (filler order number, first component)
    OBX-3   observation code, matched against the configured concept code
    OBX-5   result value: POSITIVE/NEGATIVE/1/0/TRUE/FALSE, case-insensitive
    PID-7 / PID-8 / PV1-2 / OBR-7 feed exam demographics when present.

Segments other than MSH/PID/PV1/OBR/OBX ride along in the stored raw
frame and are not interpreted.
"""

from __future__ import annotations

import re
import socket
import socketserver
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from .domain import AIResultEvent, CareSetting, ExamRecord, Sex

SB = 0x0B  # start marker
EB = 0x1C  # end marker, must be followed by CR
CR = 0x0D

_SEGMENT_BREAK = re.compile(r"\r\n|\r|\n")

_VALUE_MAP = {
    "POSITIVE": True,
    "1": True,
    "TRUE": True,
    "NEGATIVE": False,
    "0": False,
    "FALSE": False,
}

_SEX_MAP = {"M": Sex.MALE, "F": Sex.FEMALE}
_SETTING_MAP = {
    "E": CareSetting.EMERGENCY,
    "I": CareSetting.INPATIENT,
    "O": CareSetting.OUTPATIENT,
}


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


class Hl7ParseError(ValueError):
    """A de-framed message that cannot become a result event.

    ``counter`` names the metric bucket the failure is accounted under;
    the frame itself is quarantined, never dropped.
    """

    counter = "parse_error"


class UnsupportedMessageType(Hl7ParseError):
    counter = "unsupported_message_type"


class MissingAccession(Hl7ParseError):
    counter = "missing_accession"


class MissingResultObx(Hl7ParseError):
    counter = "missing_result_obx"


class UnparsableResultValue(Hl7ParseError):
    counter = "unparsable_result_value"


@dataclass(frozen=True)
class Hl7Frame:
    """Exactly one de-framed message (start/end markers stripped)."""

    raw_bytes: bytes
    received_at: datetime
    peer: str = ""

    @property
    def text(self) -> str:
        return self.raw_bytes.decode("latin-1")


class MllpDecoder:
    """Incremental MLLP de-framer.

    ``feed`` accepts arbitrary chunks and yields complete frame payloads
    in order; the split points never change the output (prefix-stable),
    so one decoder per connection is all the state a listener needs.

    Bytes outside any frame, frames abandoned by a new start marker, and
    frames whose end marker is not followed by CR are discarded; each
    such contiguous stretch counts once in ``framing_errors``.
    """

    def __init__(self):
        self._state = "hunt"
        self._junk = False  # inside an already-counted discard run
        self._payload = bytearray()
        self._buf = bytearray()
        self.framing_errors = 0

    def feed(self, chunk: bytes) -> list[bytes]:
        buf = self._buf
        buf += chunk
        frames: list[bytes] = []
        while buf:
            if self._state == "hunt":
                i = buf.find(SB)
                if i < 0:
                    if not self._junk:
                        self._junk = True
                        self.framing_errors += 1
                    buf.clear()
                    break
                if i > 0 and not self._junk:
                    self.framing_errors += 1
                del buf[: i + 1]
                self._junk = False
                self._payload.clear()
                self._state = "frame"
            elif self._state == "frame":
                ie = buf.find(EB)
                isb = buf.find(SB)
                if isb != -1 and (ie == -1 or isb < ie):
                    # A new start marker means the open frame was never
                    # terminated; drop it and begin again.
                    self.framing_errors += 1
                    del buf[: isb + 1]
                    self._payload.clear()
                    continue
                if ie < 0:
                    self._payload += buf
                    buf.clear()
                    break
                self._payload += buf[:ie]
                del buf[: ie + 1]
                self._state = "end"
            else:  # "end": saw the end marker, need CR next
                if buf[0] == CR:
                    del buf[:1]
                    frames.append(bytes(self._payload))
                    self._payload.clear()
                    self._junk = False
                else:
                    self.framing_errors += 1
                    self._payload.clear()
                    self._junk = True  # following garbage is the same incident
                self._state = "hunt"
        return frames

    @property
    def pending(self) -> bytes:
        """Bytes of a partially received frame (everything after its
        start marker), empty when the stream is at a frame boundary."""
        if self._state == "hunt":
            return bytes(self._buf)
        out = bytes(self._payload)
        if self._state == "end":
            out += bytes([EB])
        return out + bytes(self._buf)


def decode_mllp(
    stream_bytes: bytes, received_at: datetime | None = None, peer: str = ""
) -> tuple[list[Hl7Frame], bytes]:
    """One-shot de-framing of a byte sequence.

    Returns the complete frames plus the trailing partial frame, if any.
    For a live connection use :class:`MllpDecoder` directly, which also
    tracks framing errors across calls.
    """
    decoder = MllpDecoder()
    ts = received_at or _utcnow()
    frames = [
        Hl7Frame(raw_bytes=b, received_at=ts, peer=peer)
        for b in decoder.feed(bytes(stream_bytes))
    ]
    return frames, decoder.pending


def encode_mllp(payload: bytes | str) -> bytes:
    if isinstance(payload, str):
        payload = payload.encode("latin-1")
    return bytes([SB]) + payload + bytes([EB, CR])


# --- message level ---------------------------------------------------------


def split_segments(text: str) -> list[list[str]]:
    """Pipe-split segments; any of CR, LF, CRLF separates segments."""
    return [seg.split("|") for seg in _SEGMENT_BREAK.split(text) if seg.strip()]


def hl7_field(parts: list[str], n: int) -> str:
    """HL7-numbered field from a pipe-split segment ('' when absent).

    MSH is special-cased: the separator itself is MSH-1, so the encoding
    characters land at MSH-2 and everything shifts one slot left.
    """
    if parts and parts[0] == "MSH":
        if n == 1:
            return "|"
        idx = n - 1
    else:
        idx = n
    return parts[idx] if 0 < idx < len(parts) else ""


def _component(value: str, i: int = 0) -> str:
    parts = value.split("^")
    return parts[i] if i < len(parts) else ""


def parse_hl7_timestamp(value: str) -> datetime | None:
    # Fixed-width dispatch; trying formats in sequence would let strptime
    # misread an 8-char date as a zero-padded longer form.
    value = value.strip()
    fmt = {8: "%Y%m%d", 12: "%Y%m%d%H%M", 14: "%Y%m%d%H%M%S"}.get(len(value))
    if fmt is None:
        return None
    try:
        return datetime.strptime(value, fmt)
    except ValueError:
        return None


def parse_result_message(frame: Hl7Frame, concept_code: str = "ICH") -> AIResultEvent:
    """Map one ORU^R01 frame onto an AIResultEvent.

    The boolean comes from the first OBX whose OBX-3 code equals
    ``concept_code``; other OBX segments are ignored. Raises a
    :class:`Hl7ParseError` subclass naming its quarantine counter when
    the frame cannot be mapped.
    """
    segments = split_segments(frame.text)
    if not segments or segments[0][0] != "MSH":
        raise UnsupportedMessageType("first segment must be MSH")
    msg_type = hl7_field(segments[0], 9)
    if (_component(msg_type, 0), _component(msg_type, 1)) != ("ORU", "R01"):
        raise UnsupportedMessageType(f"expected ORU^R01, got {msg_type!r}")

    obr = next((s for s in segments if s[0] == "OBR"), None)
    accession = _component(hl7_field(obr, 3)) if obr else ""
    if not accession:
        raise MissingAccession("OBR-3 filler order number is empty")

    value = None
    for seg in segments:
        if seg[0] == "OBX" and _component(hl7_field(seg, 3)) == concept_code:
            value = hl7_field(seg, 5)
            break
    if value is None:
        raise MissingResultObx(f"no OBX with concept code {concept_code!r}")

    try:
        hemorrhage = _VALUE_MAP[value.strip().upper()]
    except KeyError:
        raise UnparsableResultValue(f"OBX-5 value {value!r}") from None
    return AIResultEvent(
        accession=accession, hemorrhage=hemorrhage, received_at=frame.received_at
    )


def extract_exam(frame: Hl7Frame) -> ExamRecord | None:
    """Best-effort demographics from PID/PV1/OBR.

    Anything absent or malformed degrades to unknown; a bad birth date
    never blocks ingestion of a valid result. Returns None when the
    frame has no usable accession at all.
    """
    segments = split_segments(frame.text)
    obr = next((s for s in segments if s[0] == "OBR"), None)
    accession = _component(hl7_field(obr, 3)) if obr else ""
    if not accession:
        return None

    pid = next((s for s in segments if s[0] == "PID"), None)
    pv1 = next((s for s in segments if s[0] == "PV1"), None)
    sex = _SEX_MAP.get(hl7_field(pid, 8).strip().upper(), Sex.UNKNOWN) if pid else Sex.UNKNOWN
    setting = (
        _SETTING_MAP.get(_component(hl7_field(pv1, 2)).strip().upper(), CareSetting.UNKNOWN)
        if pv1
        else CareSetting.UNKNOWN
    )
    exam_time = parse_hl7_timestamp(hl7_field(obr, 7))

    age: float | None = None
    dob = parse_hl7_timestamp(hl7_field(pid, 7)) if pid else None
    if dob is not None:
        at = exam_time or frame.received_at
        years = at.year - dob.year - ((at.month, at.day) < (dob.month, dob.day))
        if 0 <= years <= 130:
            age = float(years)

    return ExamRecord(
        accession=accession,
        patient_age=age,
        patient_sex=sex,
        setting=setting,
        exam_time=exam_time,
    )


def build_oru_message(
    accession: str,
    hemorrhage: bool,
    *,
    control_id: str,
    concept_code: str = "ICH",
    value_style: str = "word",
    observed_at: datetime | None = None,
    sex_code: str = "",
    dob: str = "",
    patient_class: str = "",
    sending_app: str = "ICHDETECT",
) -> str:
    """Render a result message the parser maps back onto the same event.

    ``value_style`` picks the OBX-5 spelling: word (POSITIVE/NEGATIVE),
    digit (1/0) or boolean (TRUE/FALSE).
    """
    styles = {
        "word": ("POSITIVE", "NEGATIVE"),
        "digit": ("1", "0"),
        "boolean": ("TRUE", "FALSE"),
    }
    if value_style not in styles:
        raise ValueError(f"unknown value_style {value_style!r}")
    value = styles[value_style][0 if hemorrhage else 1]
    ts = (observed_at or _utcnow()).strftime("%Y%m%d%H%M%S")

    msh = ["MSH", "^~\\&", sending_app, "RAD", "TRIAGEMON", "RAD", ts, "",
           "ORU^R01", control_id, "P", "2.3"]
    segments = ["|".join(msh)]
    if sex_code or dob:
        pid = ["PID", "1", "", "", "", "", "", dob, sex_code]
        segments.append("|".join(pid))
    if patient_class:
        segments.append("|".join(["PV1", "1", patient_class]))
    obr = ["OBR", "1", "", f"{accession}^RAD", "CT^CT HEAD WO CONTRAST", "", "", ts]
    segments.append("|".join(obr))
    obx = ["OBX", "1", "ST", f"{concept_code}^INTRACRANIAL HEMORRHAGE", "", value]
    segments.append("|".join(obx))
    return "\r".join(segments) + "\r"


def build_ack(frame: Hl7Frame, code: str = "AA", note: str = "") -> str:
    """Application acknowledgment for one frame. The original control id
    is echoed when it can be recovered, else left empty."""
    control_id = ""
    sender, facility = "UNKNOWN", "UNKNOWN"
    segments = split_segments(frame.text)
    if segments and segments[0][0] == "MSH":
        control_id = hl7_field(segments[0], 10)
        sender = hl7_field(segments[0], 3) or sender
        facility = hl7_field(segments[0], 4) or facility
    ts = _utcnow().strftime("%Y%m%d%H%M%S")
    msh = ["MSH", "^~\\&", "TRIAGEMON", "RAD", sender, facility, ts, "",
           "ACK^R01", f"ACK{control_id}", "P", "2.3"]
    msa = ["MSA", code, control_id]
    if note:
        msa.append(note)
    return "|".join(msh) + "\r" + "|".join(msa) + "\r"


# --- transport -------------------------------------------------------------


class MllpListener:
    """Threaded MLLP listener.

    Each connection gets its own decoder; every complete frame is handed
    to ``on_frame(frame) -> bool`` (True = accepted). Acknowledgment per
    ``ack_mode``: "accept_all" always answers AA, "report_errors"
    answers AE when on_frame returns False, "none" stays silent.
    Decoder-level discards are reported through ``on_framing_errors``.
    """

    def __init__(
        self,
        address: tuple[str, int],
        on_frame,
        on_framing_errors=None,
        ack_mode: str = "accept_all",
    ):
        if ack_mode not in ("accept_all", "report_errors", "none"):
            raise ValueError(f"unknown ack_mode {ack_mode!r}")
        self.on_frame = on_frame
        self.on_framing_errors = on_framing_errors
        self.ack_mode = ack_mode
        listener = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                decoder = MllpDecoder()
                seen_errors = 0
                peer = "%s:%d" % self.client_address[:2]
                while True:
                    try:
                        chunk = self.request.recv(65536)
                    except OSError:
                        break
                    if not chunk:
                        break
                    for raw in decoder.feed(chunk):
                        frame = Hl7Frame(raw_bytes=raw, received_at=_utcnow(), peer=peer)
                        ok = listener.on_frame(frame)
                        ack = listener._ack_for(frame, ok)
                        if ack is not None:
                            try:
                                self.request.sendall(encode_mllp(ack))
                            except OSError:
                                return
                    if decoder.framing_errors > seen_errors:
                        if listener.on_framing_errors is not None:
                            listener.on_framing_errors(decoder.framing_errors - seen_errors)
                        seen_errors = decoder.framing_errors

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server(address, Handler)
        self._thread: threading.Thread | None = None

    def _ack_for(self, frame: Hl7Frame, ok: bool) -> str | None:
        if self.ack_mode == "none":
            return None
        if self.ack_mode == "report_errors" and not ok:
            return build_ack(frame, code="AE", note="quarantined")
        return build_ack(frame, code="AA")

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


class MllpConnection:
    """Client side of one MLLP session; used by the exercise tooling and
    handy for manual smoke tests."""

    def __init__(self, address: tuple[str, int], timeout: float = 10.0):
        self._sock = socket.create_connection(address, timeout=timeout)
        self._decoder = MllpDecoder()

    def send_raw(self, data: bytes):
        self._sock.sendall(data)

    def send_message(self, payload: str, wait_ack: bool = True) -> bytes | None:
        self._sock.sendall(encode_mllp(payload))
        return self.read_ack() if wait_ack else None

    def read_ack(self) -> bytes | None:
        while True:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                return None
            if not chunk:
                return None
            frames = self._decoder.feed(chunk)
            if frames:
                return frames[0]

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --- service wiring --------------------------------------------------------


class Hl7IngestService:
    """Parses frames into result events and persists both.

    Counter accounting is exact: frames_in counts every de-framed
    message plus every framing incident, and
    frames_in == events_out + quarantined + framing_errors
    holds at all times.
    """

    def __init__(self, store, concept_code: str = "ICH"):
        self.store = store
        self.concept_code = concept_code

    def handle_frame(self, frame: Hl7Frame) -> bool:
        self.store.increment_counter("frames_in")
        try:
            event = parse_result_message(frame, self.concept_code)
        except Hl7ParseError as exc:
            self.store.insert_frame(frame, status="quarantined", reason=exc.counter)
            self.store.increment_counter("quarantined")
            self.store.increment_counter(exc.counter)
            return False
        frame_id = self.store.insert_frame(frame, status="parsed")
        exam = extract_exam(frame)
        if exam is not None:
            self.store.upsert_exam(exam)
        self.store.insert_ai_result(replace(event, raw_message_id=frame_id))
        self.store.increment_counter("events_out")
        return True

    def note_framing_errors(self, count: int):
        if count > 0:
            self.store.increment_counter("frames_in", count)
            self.store.increment_counter("framing_errors", count)

    def listener(self, address: tuple[str, int], ack_mode: str = "accept_all") -> MllpListener:
        return MllpListener(
            address,
            on_frame=self.handle_frame,
            on_framing_errors=self.note_framing_errors,
            ack_mode=ack_mode,
        )
