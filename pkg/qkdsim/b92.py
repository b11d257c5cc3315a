"""
B92 sessions: two non-orthogonal signal states (bit 0 -> 0 deg, bit 1 -> 45 deg)
and a three-outcome receiver that tests either |V> (90 deg) or |-> (135 deg).

A click on |V> rules out 0 deg, so the sender must have sent bit 1; a click
on |-> rules out 45 deg, so bit 0. No click is inconclusive and the round is
dropped from the raw key.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import List, Optional

import numpy as np

from .channel import B92_SIGNALS, B92_TESTS, EveBatch, EveRecord, apply_flip_noise, event_probability, intercept_b92
from .config import Protocol, SessionConfig
from .errors import ConfigError, DomainError
from .metrics import (
    ExpectedStats,
    QberReport,
    RiskTier,
    SessionSummary,
    disclose_sample,
    risk_classify,
    sample_qber,
)
from .qstate import AngleLike, Outcome, PolarizationAngle, angles_equal, measure_aligned, outcome_probability

logger = logging.getLogger(__name__)

DRAW_COLUMNS = (
    "bit",
    "attack",
    "eve_test",
    "eve_click",
    "eve_guess",
    "noise",
    "receiver_test",
    "receiver_click",
)


class B92MeasurementResult(IntEnum):
    CONCLUSIVE_BIT0 = 0
    CONCLUSIVE_BIT1 = 1
    INCONCLUSIVE = -1

    @property
    def conclusive(self) -> bool:
        return self is not B92MeasurementResult.INCONCLUSIVE

    @property
    def bit(self) -> Optional[int]:
        return int(self) if self.conclusive else None


def _measure(states: AngleLike, tests: AngleLike, draws: AngleLike) -> np.ndarray:
    tests = np.atleast_1d(np.asarray(tests, dtype=float))
    on_vertical = angles_equal(tests, B92_TESTS[0])
    if not np.all(on_vertical | angles_equal(tests, B92_TESTS[1])):
        raise DomainError("B92 receiver test must be 90 or 135 degrees")
    click = np.atleast_1d(measure_aligned(states, tests, draws))
    return np.where(click, np.where(on_vertical, 1, 0), -1).astype(np.int8)


def b92_receiver_measure(state: float, test: float, draw: float) -> B92MeasurementResult:
    return B92MeasurementResult(int(_measure(state, test, draw)[0]))


@dataclass(frozen=True)
class B92Round:
    sender_bit: int
    encoded_state: PolarizationAngle
    eve: EveRecord
    received_state: PolarizationAngle
    receiver_test: PolarizationAngle
    result: B92MeasurementResult

    @property
    def receiver_bit(self) -> Optional[int]:
        return self.result.bit


@dataclass(eq=False)
class B92Session:
    config: SessionConfig
    sender_bits: np.ndarray
    encoded: np.ndarray
    eve: EveBatch
    received: np.ndarray
    receiver_tests: np.ndarray
    results: np.ndarray
    sample_indices: np.ndarray
    qber_report: QberReport

    @property
    def conclusive(self) -> np.ndarray:
        return self.results != B92MeasurementResult.INCONCLUSIVE

    @property
    def conclusive_rate(self) -> float:
        return float(np.count_nonzero(self.conclusive)) / len(self.results)

    @property
    def sifted_sender(self) -> np.ndarray:
        return self.sender_bits[self.conclusive]

    @property
    def sifted_receiver(self) -> np.ndarray:
        return self.results[self.conclusive]

    @property
    def qber(self) -> float:
        return self.qber_report.fraction

    @property
    def risk(self) -> RiskTier:
        return risk_classify(self.qber_report)

    @cached_property
    def rounds(self) -> List[B92Round]:
        return [
            B92Round(
                sender_bit=int(self.sender_bits[i]),
                encoded_state=PolarizationAngle(self.encoded[i]),
                eve=self.eve.record(i),
                received_state=PolarizationAngle(self.received[i]),
                receiver_test=PolarizationAngle(self.receiver_tests[i]),
                result=B92MeasurementResult(int(self.results[i])),
            )
            for i in range(len(self.results))
        ]

    def summary(self) -> SessionSummary:
        config = self.config
        return SessionSummary(
            protocol=Protocol.B92,
            rounds=config.rounds,
            noise_p=config.noise_p,
            eve_p=config.eve_p,
            eve_mode=None,
            bell_ratio=None,
            seed=config.seed,
            sifted_rate=None,
            conclusive_rate=self.conclusive_rate,
            qber=self.qber_report,
            chsh_s=None,
            risk=self.risk,
            decision=None,
        )


def run_b92(config: SessionConfig, rng: Optional[np.random.Generator] = None) -> B92Session:
    if config.protocol is not Protocol.B92:
        raise ConfigError("protocol", f"expected b92, got {config.protocol.value}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.rounds
    logger.info("B92 session: %d rounds, noise=%s, eve=%s, seed=%d", n, config.noise_p, config.eve_p, config.seed)

    bit_u, attack_u, test_u, click_u, guess_u, noise_u, rx_test_u, rx_click_u = rng.random(
        (n, len(DRAW_COLUMNS))
    ).T

    bits = (bit_u < 0.5).astype(np.int8)
    encoded = np.where(bits == 1, B92_SIGNALS[1], B92_SIGNALS[0])

    eve_spec = config.eve_spec
    eve = intercept_b92(encoded, test_u, click_u, guess_u).where(attack_u < eve_spec.intercept_probability)
    received = np.asarray(apply_flip_noise(eve.apply(encoded), config.noise_spec, noise_u))

    tests = np.where(rx_test_u < 0.5, *B92_TESTS)
    results = _measure(received, tests, rx_click_u)

    conclusive = np.flatnonzero(results != B92MeasurementResult.INCONCLUSIVE)
    sample = disclose_sample(rng, conclusive, config.sample_fraction)
    report = sample_qber(bits[sample], results[sample], "B92")

    session = B92Session(
        config=config,
        sender_bits=bits,
        encoded=encoded,
        eve=eve,
        received=received,
        receiver_tests=tests,
        results=results,
        sample_indices=sample,
        qber_report=report,
    )
    logger.info("B92 done: %d conclusive, qber=%.4f", len(conclusive), session.qber)
    return session


def _resend(test: float, outcome: Outcome, guess: float) -> float:
    if outcome is Outcome.ORTHOGONAL:
        return guess
    return B92_SIGNALS[1] if test == B92_TESTS[0] else B92_SIGNALS[0]


def expected_b92(noise_p: float, eve_p: float) -> ExpectedStats:
    """Exact conclusive rate and QBER over conclusive bits by branch enumeration."""
    for name, value in (("noise_p", noise_p), ("eve_p", eve_p)):
        if not (0.0 <= value <= 1.0):
            raise ConfigError(name, f"must lie in [0, 1], got {value}")

    conclusive = error = 0.0
    branches = itertools.product(
        (0, 1), (False, True), B92_TESTS, Outcome, B92_SIGNALS, (False, True), B92_TESTS, Outcome
    )
    for bit, attacked, eve_test, eve_outcome, guess, flipped, rx_test, rx_outcome in branches:
        state = PolarizationAngle(B92_SIGNALS[bit])
        weight = 0.25 * event_probability(eve_p, attacked) * event_probability(noise_p, flipped)
        if attacked:
            weight *= 0.5 * outcome_probability(state, eve_test, eve_outcome)
            if eve_outcome is Outcome.ORTHOGONAL:
                weight *= 0.5
            elif guess != B92_SIGNALS[0]:
                continue
            state = PolarizationAngle(_resend(eve_test, eve_outcome, guess))
        elif eve_test != B92_TESTS[0] or eve_outcome is not Outcome.ALIGNED or guess != B92_SIGNALS[0]:
            continue
        if flipped:
            state = state.orthogonal()
        if rx_outcome is not Outcome.ALIGNED:
            continue
        weight *= outcome_probability(state, rx_test, rx_outcome)
        conclusive += weight
        if (1 if rx_test == B92_TESTS[0] else 0) != bit:
            error += weight

    return ExpectedStats(qber=error / conclusive if conclusive else 0.0, conclusive_rate=conclusive)
