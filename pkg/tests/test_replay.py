"""
Unit tests for qkdsim.replay against the recorded example transcripts in
tests/regression/.

Run with: pytest tests/test_replay.py -v
"""

from pathlib import Path

import pytest

from qkdsim.config import Protocol
from qkdsim.errors import InsufficientDataError, ReplayError
from qkdsim.metrics import RiskTier, Verdict
from qkdsim.replay import (
    B92ReplayRecord,
    Bb84ReplayRecord,
    E91ReplayRecord,
    parse_replay_csv,
    read_replay_csv,
    replay,
)

REGRESSION = Path(__file__).parent / "regression"


class TestBb84Replay:
    """The eight-transmission sifting example."""

    def test_summary(self):
        summary = replay(read_replay_csv(REGRESSION / "table1_bb84.csv"))
        assert summary.protocol is Protocol.BB84
        assert summary.rounds == 8
        assert summary.sifted_rate == 0.625
        assert summary.qber.n_error == 1
        assert summary.qber.n_total == 5
        assert summary.qber.percent == 20.0
        assert summary.risk is RiskTier.HIGHEST
        assert summary.seed is None

    def test_records(self):
        records = read_replay_csv(REGRESSION / "table1_bb84.csv")
        assert all(isinstance(r, Bb84ReplayRecord) for r in records)
        assert records[1].sender_basis == "x"

    def test_times_sign_is_diagonal(self):
        records = parse_replay_csv("round,sender_bit,sender_basis,receiver_basis,receiver_bit\n0,1,×,x,1\n")
        assert replay(records).sifted_rate == 1.0


class TestE91Replay:
    """The ten-round E91 example."""

    def test_summary(self):
        summary = replay(read_replay_csv(REGRESSION / "table2_e91.csv"))
        assert summary.protocol is Protocol.E91
        assert summary.chsh_s == pytest.approx(1.0, abs=1e-12)
        assert summary.qber.n_error == 1
        assert summary.qber.n_total == 3
        assert summary.sifted_rate == pytest.approx(0.3)
        assert summary.decision.verdict is Verdict.ABORT
        assert summary.risk is RiskTier.HIGHEST

    def test_eve_column(self):
        records = read_replay_csv(REGRESSION / "table2_e91.csv")
        assert [r.round for r in records if r.eve] == [2, 7]
        assert records[0].purpose == "key"

    def test_eve_column_optional(self):
        text = "round,a_basis,b_basis,a_bit,b_bit,purpose\n1,A1,B1,0,0,key\n"
        records = parse_replay_csv(text)
        assert isinstance(records[0], E91ReplayRecord)
        assert not records[0].eve

    def test_single_key_row_lacks_bell_data(self):
        records = parse_replay_csv("round,a_basis,b_basis,a_bit,b_bit,purpose\n1,A1,B1,0,0,key\n")
        with pytest.raises(InsufficientDataError):
            replay(records)

    def test_threshold(self):
        header = "round,a_basis,b_basis,a_bit,b_bit,purpose\n"
        rows = [
            "1,A1,B1,0,0,key",
            "2,A1,B1,0,1,key",
            "3,A1,B3,0,0,bell",
            "4,A2,B1,0,0,bell",
            "5,A2,B3,0,0,bell",
        ]
        records = parse_replay_csv(header + "\n".join(rows) + "\n")
        # E values 0, 1, 1, 1 give S = 1: abort regardless of the threshold
        assert replay(records, qber_threshold=0.9).decision.verdict is Verdict.ABORT


class TestB92Replay:
    """The intercept-resend B92 example."""

    def test_summary(self):
        summary = replay(read_replay_csv(REGRESSION / "table3_b92.csv"))
        assert summary.protocol is Protocol.B92
        assert summary.conclusive_rate == pytest.approx(0.7)
        assert summary.qber.n_error == 2
        assert summary.qber.n_total == 7
        assert summary.sifted_rate is None
        assert summary.decision is None

    def test_guess_marker(self):
        records = read_replay_csv(REGRESSION / "table3_b92.csv")
        assert all(isinstance(r, B92ReplayRecord) for r in records)
        assert records[0].eve_guessed
        assert records[0].eve_resend == "+"
        assert not records[1].eve_guessed
        assert records[1].eve_test == "-"
        assert records[1].receiver_bit is None

    def test_click_must_match_test(self):
        header = "row,sender_bit,sender_state,eve_test,eve_click,eve_resend,receiver_test,receiver_click,receiver_bit\n"
        with pytest.raises(ReplayError) as exc:
            parse_replay_csv(header + "1,0,H,,No,,V,Yes,0\n")
        assert exc.value.row == 2

    def test_state_must_encode_bit(self):
        header = "row,sender_bit,sender_state,eve_test,eve_click,eve_resend,receiver_test,receiver_click,receiver_bit\n"
        with pytest.raises(ReplayError):
            parse_replay_csv(header + "1,1,H,,No,,V,No,-\n")


class TestReplayErrors:
    """Malformed input."""

    def test_unknown_header(self):
        with pytest.raises(ReplayError):
            parse_replay_csv("a,b,c\n1,2,3\n")

    def test_bad_bit_reports_line(self):
        text = "# comment\nround,sender_bit,sender_basis,receiver_basis,receiver_bit\n0,2,+,+,1\n"
        with pytest.raises(ReplayError) as exc:
            parse_replay_csv(text)
        assert exc.value.row == 3
        assert "sender_bit" in str(exc.value)

    def test_bad_basis(self):
        with pytest.raises(ReplayError):
            parse_replay_csv("round,sender_bit,sender_basis,receiver_basis,receiver_bit\n0,1,z,+,1\n")

    def test_wrong_field_count(self):
        with pytest.raises(ReplayError):
            parse_replay_csv("round,sender_bit,sender_basis,receiver_basis,receiver_bit\n0,1,+,+\n")

    def test_header_only(self):
        with pytest.raises(ReplayError):
            parse_replay_csv("round,sender_bit,sender_basis,receiver_basis,receiver_bit\n")

    def test_empty_records(self):
        with pytest.raises(ReplayError):
            replay([])

    def test_mixed_protocols(self):
        bb84 = Bb84ReplayRecord(0, 1, "+", "+", 1)
        e91 = E91ReplayRecord(1, "A1", "B1", 0, 0, "key")
        with pytest.raises(ReplayError):
            replay([bb84, e91])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReplayError):
            read_replay_csv(tmp_path / "absent.csv")
