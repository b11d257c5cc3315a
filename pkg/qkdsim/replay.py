"""
Record-level replay of recorded protocol transcripts.

Statistics are computed from the recorded bits and outcomes alone, with no
state simulation, so transcripts that break the Born rule still replay.
Input is CSV; ``#`` lines are comments; the protocol is inferred from the
header row.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from .config import Protocol
from .e91 import BELL_PAIRS, ChshEstimate, security_decision
from .errors import ReplayError
from .metrics import DEFAULT_QBER_THRESHOLD, SessionSummary, qber, risk_classify, sifted_rate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Bb84ReplayRecord:
    round: int
    sender_bit: int
    sender_basis: str
    receiver_basis: str
    receiver_bit: int


@dataclass(frozen=True)
class E91ReplayRecord:
    round: int
    a_basis: str
    b_basis: str
    a_bit: int
    b_bit: int
    purpose: str
    eve: bool = False


@dataclass(frozen=True)
class B92ReplayRecord:
    row: int
    sender_bit: int
    sender_state: str
    eve_test: Optional[str]
    eve_click: bool
    eve_resend: Optional[str]
    eve_guessed: bool
    receiver_test: str
    receiver_click: bool
    receiver_bit: Optional[int]


ReplayRecord = Union[Bb84ReplayRecord, E91ReplayRecord, B92ReplayRecord]

SCHEMAS = {
    Protocol.BB84: ("round", "sender_bit", "sender_basis", "receiver_basis", "receiver_bit"),
    Protocol.E91: ("round", "a_basis", "b_basis", "a_bit", "b_bit", "purpose"),
    Protocol.B92: (
        "row",
        "sender_bit",
        "sender_state",
        "eve_test",
        "eve_click",
        "eve_resend",
        "receiver_test",
        "receiver_click",
        "receiver_bit",
    ),
}
OPTIONAL_COLUMNS = {Protocol.E91: ("eve",)}

RECORD_PROTOCOL = {
    Bb84ReplayRecord: Protocol.BB84,
    E91ReplayRecord: Protocol.E91,
    B92ReplayRecord: Protocol.B92,
}

BB84_BASES = {"+": "+", "x": "x", "×": "x"}
E91_SENDER_BASES = ("A1", "A2")
E91_RECEIVER_BASES = ("B1", "B3")
E91_PURPOSES = ("key", "bell", "discarded")
B92_STATES = {"h": "H", "+": "+", "v": "V", "-": "-", "−": "-"}
B92_SIGNAL_OF_BIT = {0: "H", 1: "+"}
B92_BIT_OF_TEST = {"V": 1, "-": 0}
GUESS_MARKER = "(g)"
YES = ("yes", "y", "true", "1")
NO = ("no", "n", "false", "0", "")
BLANK = ("", "-", "—")


class _Row:
    """One CSV row with field parsers that report the source line on failure."""

    def __init__(self, values: Dict[str, str], line: int):
        self.values = values
        self.line = line

    def fail(self, message: str) -> ReplayError:
        return ReplayError(message, row=self.line)

    def text(self, name: str) -> str:
        return (self.values.get(name) or "").strip()

    def integer(self, name: str) -> int:
        try:
            return int(self.text(name))
        except ValueError:
            raise self.fail(f"{name}: expected an integer, got {self.text(name)!r}") from None

    def bit(self, name: str) -> int:
        value = self.text(name)
        if value not in ("0", "1"):
            raise self.fail(f"{name}: expected 0 or 1, got {value!r}")
        return int(value)

    def optional_bit(self, name: str) -> Optional[int]:
        return None if self.text(name) in BLANK else self.bit(name)

    def flag(self, name: str) -> bool:
        value = self.text(name).lower()
        if value in YES:
            return True
        if value in NO:
            return False
        raise self.fail(f"{name}: expected yes or no, got {self.text(name)!r}")

    def label(self, name: str, allowed: Sequence[str]) -> str:
        value = self.text(name)
        if value not in allowed:
            raise self.fail(f"{name}: {value!r} is not one of {', '.join(allowed)}")
        return value

    def state(self, name: str) -> Optional[str]:
        value = self.text(name).replace(GUESS_MARKER, "").strip().strip("|>⟩").strip()
        if not value:
            return None
        try:
            return B92_STATES[value.lower()]
        except KeyError:
            raise self.fail(f"{name}: unknown state label {self.text(name)!r}") from None


def _bb84_record(row: _Row) -> Bb84ReplayRecord:
    bases = {}
    for name in ("sender_basis", "receiver_basis"):
        try:
            bases[name] = BB84_BASES[row.text(name).lower()]
        except KeyError:
            raise row.fail(f"{name}: {row.text(name)!r} is not one of +, x") from None
    return Bb84ReplayRecord(
        round=row.integer("round"),
        sender_bit=row.bit("sender_bit"),
        receiver_bit=row.bit("receiver_bit"),
        **bases,
    )


def _e91_record(row: _Row) -> E91ReplayRecord:
    purpose = row.text("purpose").lower()
    if purpose not in E91_PURPOSES:
        raise row.fail(f"purpose: {row.text('purpose')!r} is not one of key, bell, discarded")
    eve_mark = row.text("eve").lower()
    return E91ReplayRecord(
        round=row.integer("round"),
        a_basis=row.label("a_basis", E91_SENDER_BASES),
        b_basis=row.label("b_basis", E91_RECEIVER_BASES),
        a_bit=row.bit("a_bit"),
        b_bit=row.bit("b_bit"),
        purpose=purpose,
        eve=eve_mark not in NO and eve_mark not in BLANK,
    )


def _b92_record(row: _Row) -> B92ReplayRecord:
    sender_bit = row.bit("sender_bit")
    sender_state = row.state("sender_state")
    if sender_state != B92_SIGNAL_OF_BIT[sender_bit]:
        raise row.fail(f"sender_state {sender_state!r} does not encode bit {sender_bit}")
    eve_test = row.state("eve_test")
    if eve_test is not None and eve_test not in B92_BIT_OF_TEST:
        raise row.fail(f"eve_test must be V or -, got {eve_test!r}")
    receiver_test = row.state("receiver_test")
    if receiver_test not in B92_BIT_OF_TEST:
        raise row.fail(f"receiver_test must be V or -, got {receiver_test!r}")
    receiver_click = row.flag("receiver_click")
    receiver_bit = row.optional_bit("receiver_bit")
    if receiver_click != (receiver_bit is not None):
        raise row.fail("receiver_bit must be present exactly when the receiver clicked")
    if receiver_click and receiver_bit != B92_BIT_OF_TEST[receiver_test]:
        raise row.fail(f"a click on {receiver_test} means bit {B92_BIT_OF_TEST[receiver_test]}")
    return B92ReplayRecord(
        row=row.integer("row"),
        sender_bit=sender_bit,
        sender_state=sender_state,
        eve_test=eve_test,
        eve_click=row.flag("eve_click"),
        eve_resend=row.state("eve_resend"),
        eve_guessed=GUESS_MARKER in row.text("eve_resend"),
        receiver_test=receiver_test,
        receiver_click=receiver_click,
        receiver_bit=receiver_bit,
    )


PARSERS = {
    Protocol.BB84: _bb84_record,
    Protocol.E91: _e91_record,
    Protocol.B92: _b92_record,
}


def _infer_protocol(header: Sequence[str], line: int) -> Protocol:
    columns = tuple(name.strip().lower() for name in header)
    for protocol, required in SCHEMAS.items():
        allowed = set(required) | set(OPTIONAL_COLUMNS.get(protocol, ()))
        if set(required) <= set(columns) <= allowed:
            return protocol
    raise ReplayError(f"unrecognized replay header: {','.join(columns)}", row=line)


def parse_replay_csv(text: str) -> List[ReplayRecord]:
    """Parse replay CSV text into records; the first non-comment line is the header."""
    reader = csv.reader(io.StringIO(text))
    header = None
    protocol = None
    records: List[ReplayRecord] = []
    for fields in reader:
        line = reader.line_num
        if not fields or not "".join(fields).strip() or fields[0].lstrip().startswith("#"):
            continue
        if header is None:
            header = [name.strip().lower() for name in fields]
            protocol = _infer_protocol(header, line)
            continue
        if len(fields) != len(header):
            raise ReplayError(f"expected {len(header)} fields, got {len(fields)}", row=line)
        records.append(PARSERS[protocol](_Row(dict(zip(header, fields)), line)))
    if not records:
        raise ReplayError("no replay records")
    return records


def read_replay_csv(path: Union[str, Path]) -> List[ReplayRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ReplayError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ReplayError(f"{path} is not valid UTF-8") from None
    return parse_replay_csv(text)


def _replay_bb84(records: Sequence[Bb84ReplayRecord]) -> SessionSummary:
    kept = [r for r in records if r.sender_basis == r.receiver_basis]
    report = qber(sum(r.sender_bit != r.receiver_bit for r in kept), len(kept))
    return SessionSummary(
        protocol=Protocol.BB84,
        rounds=len(records),
        noise_p=None,
        eve_p=None,
        eve_mode=None,
        bell_ratio=None,
        seed=None,
        sifted_rate=sifted_rate(len(kept), len(records)),
        conclusive_rate=None,
        qber=report,
        chsh_s=None,
        risk=risk_classify(report),
        decision=None,
    )


def _replay_b92(records: Sequence[B92ReplayRecord]) -> SessionSummary:
    conclusive = [r for r in records if r.receiver_click]
    report = qber(sum(r.receiver_bit != r.sender_bit for r in conclusive), len(conclusive))
    return SessionSummary(
        protocol=Protocol.B92,
        rounds=len(records),
        noise_p=None,
        eve_p=None,
        eve_mode=None,
        bell_ratio=None,
        seed=None,
        sifted_rate=None,
        conclusive_rate=len(conclusive) / len(records),
        qber=report,
        chsh_s=None,
        risk=risk_classify(report),
        decision=None,
    )


def _replay_e91(records: Sequence[E91ReplayRecord], qber_threshold: float) -> SessionSummary:
    # correlations group rows by basis pair, whatever purpose the row was recorded with
    counts = []
    for pair in BELL_PAIRS:
        a_basis, b_basis = pair.pair_label.split(",")
        rows = [r for r in records if r.a_basis == a_basis and r.b_basis == b_basis]
        same = sum(r.a_bit == r.b_bit for r in rows)
        counts.append((same, len(rows) - same))
    chsh = ChshEstimate.from_counts(counts)

    key = [r for r in records if r.purpose == "key"]
    report = qber(sum(r.a_bit != r.b_bit for r in key), len(key))
    return SessionSummary(
        protocol=Protocol.E91,
        rounds=len(records),
        noise_p=None,
        eve_p=None,
        eve_mode=None,
        bell_ratio=None,
        seed=None,
        sifted_rate=sifted_rate(len(key), len(records)),
        conclusive_rate=None,
        qber=report,
        chsh_s=chsh.s,
        risk=risk_classify(report, chsh.s),
        decision=security_decision(chsh.s, report.fraction, qber_threshold),
    )


def replay(
    records: Sequence[ReplayRecord], qber_threshold: float = DEFAULT_QBER_THRESHOLD
) -> SessionSummary:
    if not records:
        raise ReplayError("no replay records")
    protocol = RECORD_PROTOCOL[type(records[0])]
    for index, record in enumerate(records, start=1):
        if RECORD_PROTOCOL[type(record)] is not protocol:
            raise ReplayError(f"mixed protocols: expected {protocol.value} records", row=index)
    logger.info("Replaying %d %s records", len(records), protocol.value)
    if protocol is Protocol.BB84:
        return _replay_bb84(records)
    if protocol is Protocol.B92:
        return _replay_b92(records)
    return _replay_e91(records, qber_threshold)
