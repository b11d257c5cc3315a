"""
Unit tests for qkdsim.e91

Round classification, CHSH estimation, the accept/abort rule, Monte Carlo
sessions and the exact oracle.
Run with: pytest tests/test_e91.py -v
"""

import math

import numpy as np
import pytest

from qkdsim.channel import EveMode
from qkdsim.config import AllocationMode, SessionConfig
from qkdsim.errors import ConfigError, DomainError, InsufficientDataError
from qkdsim.e91 import (
    BELL_PAIRS,
    ChshEstimate,
    RoundPurpose,
    chsh_value,
    classify_round,
    correlation_estimate,
    expected_e91,
    ideal_chsh,
    run_e91,
    security_decision,
)
from qkdsim.metrics import RiskTier, Verdict
from qkdsim.qstate import TSIRELSON_BOUND, Outcome

SQRT2 = math.sqrt(2.0)
CROSSING_NOISE = (1 - 1 / SQRT2) / 2


def e91_config(**overrides) -> SessionConfig:
    values = {"protocol": "e91", "rounds": 20000, "seed": 42}
    values.update(overrides)
    return SessionConfig(**values)


class TestClassifyRound:
    """Analyzer pairs map onto key, Bell and discarded rounds."""

    @pytest.mark.parametrize(
        "a,b,expected",
        [
            (0.0, 0.0, RoundPurpose.KEY),
            (0.0, 22.5, RoundPurpose.A1B1),
            (0.0, 67.5, RoundPurpose.A1B3),
            (45.0, 22.5, RoundPurpose.A2B1),
            (45.0, 67.5, RoundPurpose.A2B3),
            (45.0, 0.0, RoundPurpose.DISCARDED),
            (180.0, 202.5, RoundPurpose.A1B1),
        ],
    )
    def test_examples(self, a, b, expected):
        assert classify_round(a, b) is expected

    @pytest.mark.parametrize("a,b", [(90.0, 0.0), (0.0, 45.0)])
    def test_unknown_angle(self, a, b):
        with pytest.raises(DomainError):
            classify_round(a, b)

    def test_pair_labels(self):
        assert [p.pair_label for p in BELL_PAIRS] == ["A1,B1", "A1,B3", "A2,B1", "A2,B3"]
        assert RoundPurpose.A2B3.is_bell
        assert not RoundPurpose.KEY.is_bell
        assert not RoundPurpose.DISCARDED.is_bell


class TestCorrelationEstimate:
    """Tests for correlation_estimate and chsh_value."""

    def test_counts(self):
        pairs = [(1, 1), (1, -1), (-1, -1)]
        assert correlation_estimate(pairs) == pytest.approx(1 / 3)

    def test_outcome_members(self):
        pairs = [(Outcome.ALIGNED, Outcome.ORTHOGONAL)] * 4
        assert correlation_estimate(pairs) == -1.0

    def test_empty_pair(self):
        with pytest.raises(InsufficientDataError) as exc:
            correlation_estimate([], pair="A1,B3")
        assert exc.value.pair == "A1,B3"

    def test_ideal_values(self):
        r = 1 / SQRT2
        assert chsh_value([r, -r, r, r]) == pytest.approx(2 * SQRT2, abs=1e-12)

    def test_missing_value(self):
        with pytest.raises(InsufficientDataError):
            chsh_value([0.7, None, 0.7, 0.7])

    def test_wrong_length(self):
        with pytest.raises(InsufficientDataError):
            chsh_value([0.7, 0.7, 0.7])

    def test_from_counts(self):
        estimate = ChshEstimate.from_counts([(3, 1), (1, 3), (3, 1), (3, 1)])
        assert estimate.e_values == (0.5, -0.5, 0.5, 0.5)
        assert estimate.s == 2.0

    def test_from_counts_empty_pair(self):
        with pytest.raises(InsufficientDataError):
            ChshEstimate.from_counts([(3, 1), (0, 0), (3, 1), (3, 1)])


class TestSecurityDecision:
    """Accept iff |S| > 2 and the QBER is within threshold."""

    def test_accept(self):
        assert security_decision(2.6, 0.02).verdict is Verdict.ACCEPT

    def test_negative_violation_accepted(self):
        assert security_decision(-2.6, 0.02).accepted

    def test_no_violation(self):
        decision = security_decision(1.9, 0.02)
        assert decision.verdict is Verdict.ABORT
        assert "Bell" in decision.reason

    def test_classical_bound_is_not_a_violation(self):
        assert not security_decision(2.0, 0.0).accepted

    def test_qber_too_high(self):
        decision = security_decision(2.6, 0.2)
        assert not decision.accepted
        assert "QBER" in decision.reason

    def test_both_reasons(self):
        assert "; " in security_decision(1.5, 0.3).reason

    def test_custom_threshold(self):
        assert security_decision(2.6, 0.2, qber_threshold=0.25).accepted

    def test_missing_bell_data(self):
        decision = security_decision(None, 0.0)
        assert decision.verdict is Verdict.ABORT
        assert decision.reason == "insufficient Bell-test data"

    @pytest.mark.parametrize("q", [-0.1, 1.5])
    def test_qber_out_of_range(self, q):
        with pytest.raises(DomainError):
            security_decision(2.6, q)


class TestRunE91:
    """Monte Carlo sessions."""

    @pytest.mark.parametrize("seed", range(10))
    def test_noiseless_channel(self, seed):
        """N=20000, r=0.5: S = 2.828 +/- 0.06, no errors, accepted."""
        session = run_e91(e91_config(bell_ratio=0.5, seed=seed))
        assert session.qber == 0.0
        assert session.s == pytest.approx(2 * SQRT2, abs=0.06)
        assert session.decision.accepted
        assert session.risk is RiskTier.LOWEST
        assert session.key_rate == pytest.approx(0.5, abs=0.02)

    @pytest.mark.parametrize("seed", range(10))
    def test_bell_attack_aborts(self, seed):
        session = run_e91(e91_config(bell_ratio=0.5, eve_p=1.0, eve_mode="bell", seed=seed))
        assert session.qber == 0.0
        assert session.s < 2.0
        assert not session.decision.accepted
        assert session.risk is RiskTier.HIGHEST

    def test_bell_attack_destroys_violation(self):
        """Averaged over seeds, N=20000, r=0.5: S = 1.414 +/- 0.06."""
        values = [
            run_e91(e91_config(bell_ratio=0.5, eve_p=1.0, eve_mode="bell", seed=seed)).s for seed in range(10)
        ]
        assert float(np.mean(values)) == pytest.approx(SQRT2, abs=0.06)

    @pytest.mark.parametrize("seed", range(10))
    def test_flip_noise(self, seed):
        """N=20000, r=0.5, noise 0.05: S = 2.545 +/- 0.06, QBER 0.05 +/- 0.013, accepted."""
        session = run_e91(e91_config(bell_ratio=0.5, noise_p=0.05, seed=seed))
        assert session.s == pytest.approx(2 * SQRT2 * 0.9, abs=0.06)
        assert session.qber == pytest.approx(0.05, abs=0.013)
        assert session.decision.accepted

    def test_key_attack_raises_qber(self):
        session = run_e91(e91_config(eve_p=1.0, eve_mode="key"))
        n = session.qber_report.n_total
        assert session.qber == pytest.approx(0.25, abs=3 * math.sqrt(0.25 * 0.75 / n))
        assert session.s > 2.0
        assert not session.decision.accepted

    @pytest.mark.parametrize(
        "noise_p,accepted", [(CROSSING_NOISE - 0.02, True), (CROSSING_NOISE + 0.02, False)]
    )
    def test_noise_crosses_classical_bound(self, noise_p, accepted):
        """Flip noise shrinks S by (1 - 2p); the decision flips within 0.02 of p* at N=20000.

        The QBER threshold is raised so only the CHSH test decides: at the
        default 0.11 the key-round QBER aborts first.
        """
        session = run_e91(e91_config(bell_ratio=0.5, noise_p=noise_p, qber_threshold=0.5))
        assert session.decision.accepted is accepted

    def test_noise_aborts_on_qber_first_at_default_threshold(self):
        session = run_e91(e91_config(bell_ratio=0.5, noise_p=CROSSING_NOISE - 0.02))
        assert session.s > 2.0
        assert not session.decision.accepted

    def test_attack_uses_canonical_analyzer_angles(self):
        """Eve's angle set is canonicalized before the attack runs."""
        wrapped = run_e91(e91_config(rounds=4000, eve_p=1.0, eve_angles=(180.0, 225.0)))
        plain = run_e91(e91_config(rounds=4000, eve_p=1.0, eve_angles=(0.0, 45.0)))
        analyzers = wrapped.eve.analyzer[wrapped.eve.intercepted]
        assert set(np.unique(analyzers)) <= {0.0, 45.0}
        np.testing.assert_array_equal(wrapped.eve.analyzer, plain.eve.analyzer)
        np.testing.assert_array_equal(wrapped.b_outcomes, plain.b_outcomes)

    def test_independent_allocation(self):
        session = run_e91(e91_config(rounds=60000, allocation_mode="independent"))
        assert session.discard_rate == pytest.approx(1 / 6, abs=0.01)
        assert session.key_rate == pytest.approx(1 / 6, abs=0.01)
        assert session.decision.accepted

    def test_no_bell_rounds_aborts(self):
        session = run_e91(e91_config(rounds=1000, bell_ratio=0.0))
        assert session.chsh is None
        assert session.s is None
        assert session.risk is RiskTier.HIGHEST
        assert session.decision.reason == "insufficient Bell-test data"

    @pytest.mark.parametrize("mode,attacked", [("key", RoundPurpose.KEY), ("bell", RoundPurpose.A1B1)])
    def test_eve_mode_selects_rounds(self, mode, attacked):
        session = run_e91(e91_config(rounds=4000, eve_p=1.0, eve_mode=mode))
        purposes = session.purposes
        intercepted = session.eve.intercepted
        assert np.all(intercepted[purposes == attacked])
        spared = RoundPurpose.A1B1 if mode == "key" else RoundPurpose.KEY
        assert not np.any(intercepted[purposes == spared])

    def test_key_rounds_use_zero_degrees(self):
        session = run_e91(e91_config(rounds=2000))
        for r in session.rounds[:200]:
            if r.purpose is RoundPurpose.KEY:
                assert r.a_angle == 0.0 and r.b_angle == 0.0
                assert r.a_outcome is r.b_outcome

    def test_deterministic(self):
        config = e91_config(rounds=5000, noise_p=0.05, eve_p=0.4)
        first, second = run_e91(config), run_e91(config)
        np.testing.assert_array_equal(first.b_outcomes, second.b_outcomes)
        assert first.chsh == second.chsh
        assert first.decision == second.decision

    def test_summary(self):
        summary = run_e91(e91_config(rounds=4000)).summary()
        assert summary.eve_mode == "both"
        assert summary.bell_ratio == 0.25
        assert summary.chsh_s is not None
        assert summary.decision is not None

    def test_other_protocol_rejected(self):
        with pytest.raises(ConfigError):
            run_e91(SessionConfig(protocol="bb84"))


class TestExpectedE91:
    """Tests for the exact oracle."""

    def test_ideal(self):
        stats = expected_e91(0.0, 0.0)
        assert stats.s == pytest.approx(2 * SQRT2, abs=1e-12)
        assert stats.qber == pytest.approx(0.0, abs=1e-12)
        assert ideal_chsh() == pytest.approx(TSIRELSON_BOUND, abs=1e-12)

    def test_bell_attack(self):
        stats = expected_e91(0.0, 1.0, EveMode.BELL)
        assert stats.s == pytest.approx(SQRT2, abs=1e-12)
        assert stats.qber == pytest.approx(0.0, abs=1e-12)

    def test_key_attack(self):
        stats = expected_e91(0.0, 1.0, EveMode.KEY)
        assert stats.s == pytest.approx(2 * SQRT2, abs=1e-12)
        assert stats.qber == pytest.approx(0.25, abs=1e-12)

    def test_both(self):
        stats = expected_e91(0.0, 1.0, EveMode.BOTH)
        assert stats.s == pytest.approx(SQRT2, abs=1e-12)
        assert stats.qber == pytest.approx(0.25, abs=1e-12)

    @pytest.mark.parametrize("noise_p", [0.0, 0.05, 0.1, 0.16, 0.25])
    def test_noise_law(self, noise_p):
        stats = expected_e91(noise_p, 0.0)
        assert stats.s == pytest.approx(2 * SQRT2 * (1 - 2 * noise_p), abs=1e-12)
        assert stats.qber == pytest.approx(noise_p, abs=1e-12)

    def test_crossing_point(self):
        assert abs(expected_e91(CROSSING_NOISE - 1e-6, 0.0).s) > 2.0
        assert abs(expected_e91(CROSSING_NOISE + 1e-6, 0.0).s) < 2.0
        assert CROSSING_NOISE == pytest.approx(0.1464, abs=1e-4)

    def test_allocation_rates(self):
        assert expected_e91(0.0, 0.0, bell_ratio=0.4).sifted_rate == pytest.approx(0.6)
        independent = expected_e91(0.0, 0.0, allocation_mode=AllocationMode.INDEPENDENT)
        assert independent.sifted_rate == pytest.approx(1 / 6)

    def test_duplicate_angles_are_equivalent(self):
        single = expected_e91(0.05, 0.5, angle_set=(0.0,))
        doubled = expected_e91(0.05, 0.5, angle_set=(0.0, 0.0))
        assert doubled.s == pytest.approx(single.s, abs=1e-12)
        assert doubled.qber == pytest.approx(single.qber, abs=1e-12)

    @pytest.mark.parametrize("noise_p,eve_p,mode", [(0.05, 0.5, EveMode.BOTH), (0.0, 0.7, EveMode.BELL)])
    def test_monte_carlo_agrees(self, noise_p, eve_p, mode):
        stats = expected_e91(noise_p, eve_p, mode)
        session = run_e91(e91_config(rounds=100000, noise_p=noise_p, eve_p=eve_p, eve_mode=mode.value, seed=3))
        assert session.s == pytest.approx(stats.s, abs=0.1)
        n = session.qber_report.n_total
        q = stats.qber
        assert abs(session.qber - q) <= 3 * math.sqrt(q * (1 - q) / n) + 1e-12

    def test_not_applicable_mode_rejected(self):
        with pytest.raises(ConfigError):
            expected_e91(0.0, 0.0, EveMode.NOT_APPLICABLE)

    def test_empty_angle_set_rejected(self):
        with pytest.raises(ConfigError):
            expected_e91(0.0, 0.5, angle_set=())
