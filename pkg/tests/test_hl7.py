import random
from datetime import datetime

import pytest

from triagemon.domain import CareSetting, Sex
from triagemon.hl7 import (
    Hl7Frame,
    Hl7IngestService,
    MissingAccession,
    MissingResultObx,
    MllpConnection,
    MllpDecoder,
    UnparsableResultValue,
    UnsupportedMessageType,
    build_ack,
    build_oru_message,
    decode_mllp,
    encode_mllp,
    extract_exam,
    hl7_field,
    parse_result_message,
    split_segments,
)

TS = datetime(2024, 3, 15, 10, 30, 0)


def frame_of(text: str) -> Hl7Frame:
    return Hl7Frame(raw_bytes=text.encode("latin-1"), received_at=TS)


def oru(accession="ACC123", hemorrhage=True, **kw) -> str:
    kw.setdefault("control_id", "MSG0001")
    return build_oru_message(accession, hemorrhage, observed_at=TS, **kw)


class FakeStore:
    def __init__(self):
        self.frames = []
        self.exams = {}
        self.events = []
        self.counters = {}

    def insert_frame(self, frame, status, reason=None):
        self.frames.append((frame, status, reason))
        return len(self.frames)

    def upsert_exam(self, exam):
        self.exams[exam.accession] = exam

    def insert_ai_result(self, event):
        self.events.append(event)

    def increment_counter(self, name, by=1):
        self.counters[name] = self.counters.get(name, 0) + by


class TestMllpFraming:
    def test_single_frame(self):
        frames, rest = decode_mllp(b"\x0bMSH|hello\x1c\x0d", received_at=TS)
        assert [f.raw_bytes for f in frames] == [b"MSH|hello"]
        assert rest == b""

    def test_two_concatenated_frames(self):
        data = encode_mllp("MSH|one") + encode_mllp("MSH|two")
        frames, rest = decode_mllp(data, received_at=TS)
        assert [f.raw_bytes for f in frames] == [b"MSH|one", b"MSH|two"]
        assert rest == b""

    def test_unterminated_frame_becomes_remainder(self):
        frames, rest = decode_mllp(b"\x0bMSH|partial", received_at=TS)
        assert frames == []
        assert rest == b"MSH|partial"

    def test_round_trip_many(self):
        payloads = [f"MSH|msg{i}".encode() for i in range(50)]
        stream = b"".join(encode_mllp(p) for p in payloads)
        frames, rest = decode_mllp(stream)
        assert [f.raw_bytes for f in frames] == payloads
        assert rest == b""

    def test_leading_garbage_counted_once(self):
        dec = MllpDecoder()
        frames = dec.feed(b"noise noise\x0bMSH|ok\x1c\x0d")
        assert frames == [b"MSH|ok"]
        assert dec.framing_errors == 1

    def test_garbage_between_frames(self):
        dec = MllpDecoder()
        frames = dec.feed(encode_mllp("A") + b"junk" + encode_mllp("B"))
        assert frames == [b"A", b"B"]
        assert dec.framing_errors == 1

    def test_malformed_terminator_discards_frame(self):
        dec = MllpDecoder()
        frames = dec.feed(b"\x0bBAD\x1cXtrailing" + encode_mllp("GOOD"))
        assert frames == [b"GOOD"]
        assert dec.framing_errors == 1

    def test_restarted_frame_discards_open_one(self):
        dec = MllpDecoder()
        frames = dec.feed(b"\x0bABANDONED\x0bKEPT\x1c\x0d")
        assert frames == [b"KEPT"]
        assert dec.framing_errors == 1

    def test_chunk_split_invariance(self):
        rnd = random.Random(20240315)
        payloads = [f"MSH|m{i}|{'x' * rnd.randint(0, 40)}".encode() for i in range(30)]
        stream = bytearray()
        for i, p in enumerate(payloads):
            if i % 7 == 3:
                stream += b"garbage%d" % i
            if i % 11 == 5:
                stream += b"\x0bdropped\x1cQ"  # malformed terminator
            stream += encode_mllp(p)
        stream = bytes(stream)

        whole = MllpDecoder()
        expected_frames = whole.feed(stream)
        expected_errors = whole.framing_errors

        for trial in range(30):
            dec = MllpDecoder()
            got = []
            i = 0
            while i < len(stream):
                j = min(len(stream), i + rnd.randint(1, 17))
                got.extend(dec.feed(stream[i:j]))
                i = j
            assert got == expected_frames, f"trial {trial}"
            assert dec.framing_errors == expected_errors, f"trial {trial}"

        byte_dec = MllpDecoder()
        got = []
        for i in range(len(stream)):
            got.extend(byte_dec.feed(stream[i : i + 1]))
        assert got == expected_frames
        assert byte_dec.framing_errors == expected_errors

    def test_split_terminator_across_chunks(self):
        dec = MllpDecoder()
        assert dec.feed(b"\x0bMSH|x\x1c") == []
        assert dec.pending == b"MSH|x\x1c"
        assert dec.feed(b"\x0d") == [b"MSH|x"]
        assert dec.pending == b""


class TestSegmentAccess:
    def test_msh_numbering_offset(self):
        parts = split_segments("MSH|^~\\&|APP|FAC|||20240101||ORU^R01|CTRL|P|2.3")[0]
        assert hl7_field(parts, 1) == "|"
        assert hl7_field(parts, 2) == "^~\\&"
        assert hl7_field(parts, 3) == "APP"
        assert hl7_field(parts, 9) == "ORU^R01"
        assert hl7_field(parts, 10) == "CTRL"

    def test_plain_segment_numbering(self):
        parts = split_segments("OBR|1||ACC9^RAD|CT")[0]
        assert hl7_field(parts, 1) == "1"
        assert hl7_field(parts, 3) == "ACC9^RAD"
        assert hl7_field(parts, 99) == ""

    def test_segment_break_variants(self):
        for sep in ("\r", "\n", "\r\n"):
            segs = split_segments(f"MSH|^~\\&|A{sep}OBR|1{sep}OBX|1")
            assert [s[0] for s in segs] == ["MSH", "OBR", "OBX"]


class TestParseResultMessage:
    def test_positive(self):
        ev = parse_result_message(frame_of(oru("ACC123", True)))
        assert ev.accession == "ACC123"
        assert ev.hemorrhage is True
        assert ev.received_at == TS

    def test_negative(self):
        ev = parse_result_message(frame_of(oru("ACC124", False)))
        assert ev.hemorrhage is False

    @pytest.mark.parametrize("style", ["word", "digit", "boolean"])
    @pytest.mark.parametrize("hemorrhage", [True, False])
    def test_value_styles(self, style, hemorrhage):
        ev = parse_result_message(frame_of(oru(hemorrhage=hemorrhage, value_style=style)))
        assert ev.hemorrhage is hemorrhage

    def test_value_case_insensitive(self):
        msg = oru("ACC1", True).replace("POSITIVE", "Positive")
        assert parse_result_message(frame_of(msg)).hemorrhage is True

    def test_wrong_message_type(self):
        msg = oru().replace("ORU^R01", "ADT^A01")
        with pytest.raises(UnsupportedMessageType):
            parse_result_message(frame_of(msg))

    def test_first_segment_not_msh(self):
        with pytest.raises(UnsupportedMessageType):
            parse_result_message(frame_of("OBR|1||ACC1\rOBX|1|ST|ICH||POSITIVE"))

    def test_missing_accession(self):
        msg = oru("ACC123").replace("ACC123^RAD", "")
        with pytest.raises(MissingAccession):
            parse_result_message(frame_of(msg))

    def test_no_obx_at_all(self):
        msg = "\r".join(s for s in oru().split("\r") if not s.startswith("OBX"))
        with pytest.raises(MissingResultObx):
            parse_result_message(frame_of(msg))

    def test_wrong_concept_code(self):
        with pytest.raises(MissingResultObx):
            parse_result_message(frame_of(oru(concept_code="PE")))

    def test_configurable_concept_code(self):
        ev = parse_result_message(frame_of(oru(concept_code="PE")), concept_code="PE")
        assert ev.hemorrhage is True

    def test_first_matching_obx_wins(self):
        msg = oru("ACC1", True) + "OBX|2|ST|ICH^DUP||NEGATIVE\r"
        assert parse_result_message(frame_of(msg)).hemorrhage is True

    def test_unparsable_value(self):
        msg = oru().replace("POSITIVE", "MAYBE")
        with pytest.raises(UnparsableResultValue):
            parse_result_message(frame_of(msg))

    def test_counter_names(self):
        assert UnsupportedMessageType.counter == "unsupported_message_type"
        assert MissingAccession.counter == "missing_accession"
        assert MissingResultObx.counter == "missing_result_obx"
        assert UnparsableResultValue.counter == "unparsable_result_value"

    def test_encode_parse_round_trip_random(self):
        rnd = random.Random(99)
        styles = ["word", "digit", "boolean"]
        for i in range(200):
            acc = f"A{rnd.randrange(10**9)}"
            hem = rnd.random() < 0.5
            msg = build_oru_message(
                acc,
                hem,
                control_id=f"C{i}",
                value_style=rnd.choice(styles),
                observed_at=TS,
                sex_code=rnd.choice(["M", "F", ""]),
                dob=rnd.choice(["19541129", ""]),
                patient_class=rnd.choice(["E", "I", "O", ""]),
            )
            ev = parse_result_message(frame_of(msg))
            assert (ev.accession, ev.hemorrhage) == (acc, hem)
            again = build_oru_message(
                ev.accession, ev.hemorrhage, control_id=f"C{i}", observed_at=TS
            )
            ev2 = parse_result_message(frame_of(again))
            assert ev2 == ev


class TestExtractExam:
    def test_full_demographics(self):
        msg = oru("ACC77", True, sex_code="F", dob="19541129", patient_class="E")
        exam = extract_exam(frame_of(msg))
        assert exam.accession == "ACC77"
        assert exam.patient_sex is Sex.FEMALE
        assert exam.setting is CareSetting.EMERGENCY
        assert exam.exam_time == TS
        # born 1954-11-29, examined 2024-03-15: 69 last birthday
        assert exam.patient_age == 69.0

    def test_defaults_when_absent(self):
        exam = extract_exam(frame_of(oru("ACC1")))
        assert exam.patient_sex is Sex.UNKNOWN
        assert exam.setting is CareSetting.UNKNOWN
        assert exam.patient_age is None

    def test_bad_dob_degrades_to_unknown_age(self):
        msg = oru("ACC1", sex_code="M", dob="not-a-date")
        exam = extract_exam(frame_of(msg))
        assert exam.patient_age is None
        assert exam.patient_sex is Sex.MALE

    def test_no_accession_returns_none(self):
        assert extract_exam(frame_of("MSH|^~\\&|X||||||ORU^R01|C|P|2.3")) is None


class TestAck:
    def test_echoes_control_id(self):
        ack = build_ack(frame_of(oru(control_id="MSG42")))
        segs = split_segments(ack)
        assert segs[1][0] == "MSA"
        assert hl7_field(segs[1], 1) == "AA"
        assert hl7_field(segs[1], 2) == "MSG42"

    def test_error_code_and_note(self):
        ack = build_ack(frame_of("garbage"), code="AE", note="quarantined")
        segs = split_segments(ack)
        assert hl7_field(segs[1], 1) == "AE"
        assert hl7_field(segs[1], 2) == ""


class TestIngestService:
    def test_good_frame_accounting(self):
        store = FakeStore()
        svc = Hl7IngestService(store)
        assert svc.handle_frame(frame_of(oru("ACC1", True))) is True
        assert store.counters == {"frames_in": 1, "events_out": 1}
        assert store.events[0].accession == "ACC1"
        assert store.events[0].raw_message_id == 1
        assert store.exams["ACC1"].accession == "ACC1"
        assert store.frames[0][1] == "parsed"

    def test_bad_frame_quarantined(self):
        store = FakeStore()
        svc = Hl7IngestService(store)
        assert svc.handle_frame(frame_of("MSH|^~\\&|X||||||ADT^A01|C|P|2.3")) is False
        assert store.frames[0][1] == "quarantined"
        assert store.frames[0][2] == "unsupported_message_type"
        assert store.counters["quarantined"] == 1
        assert store.counters["unsupported_message_type"] == 1
        assert store.events == []

    def test_counter_invariant_over_mixed_traffic(self):
        store = FakeStore()
        svc = Hl7IngestService(store)
        good = [oru(f"ACC{i}", i % 2 == 0, control_id=f"C{i}") for i in range(20)]
        bad = [oru(f"BAD{i}").replace("POSITIVE", "MAYBE") for i in range(5)]
        for msg in good + bad:
            svc.handle_frame(frame_of(msg))
        svc.note_framing_errors(3)
        c = store.counters
        assert c["frames_in"] == c["events_out"] + c["quarantined"] + c["framing_errors"]
        assert c["events_out"] == 20
        assert c["quarantined"] == 5
        assert c["framing_errors"] == 3


class TestListenerEndToEnd:
    def test_frames_acked_and_persisted(self):
        store = FakeStore()
        svc = Hl7IngestService(store)
        with svc.listener(("127.0.0.1", 0)) as listener:
            addr = listener.bound_address
            with MllpConnection(addr) as conn:
                for i in range(10):
                    ack = conn.send_message(oru(f"ACC{i}", i % 3 == 0, control_id=f"C{i}"))
                    segs = split_segments(ack.decode("latin-1"))
                    assert hl7_field(segs[1], 1) == "AA"
                    assert hl7_field(segs[1], 2) == f"C{i}"
                # inject garbage then confirm the stream recovers
                conn.send_raw(b"line noise")
                ack = conn.send_message(oru("ACC_LAST", True, control_id="CL"))
                assert ack is not None
        assert len(store.events) == 11
        c = store.counters
        assert c["framing_errors"] == 1
        assert c["frames_in"] == c["events_out"] + c.get("quarantined", 0) + c["framing_errors"]

    def test_report_errors_mode_sends_ae(self):
        store = FakeStore()
        svc = Hl7IngestService(store)
        with svc.listener(("127.0.0.1", 0), ack_mode="report_errors") as listener:
            with MllpConnection(listener.bound_address) as conn:
                ack = conn.send_message(oru().replace("ORU^R01", "ADT^A01"))
                segs = split_segments(ack.decode("latin-1"))
                assert hl7_field(segs[1], 1) == "AE"
