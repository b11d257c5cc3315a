"""
BB84 sessions: random bits and bases, four-state encoding, channel transit,
basis sifting and QBER over the disclosed sample.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import EveBatch, EveRecord, apply_flip_noise, event_probability, intercept_bb84
from .config import Protocol, SessionConfig
from .errors import ConfigError
from .metrics import (
    ExpectedStats,
    QberReport,
    RiskTier,
    SessionSummary,
    disclose_sample,
    risk_classify,
    sample_qber,
    sifted_rate,
)
from .qstate import Basis, Outcome, PolarizationAngle, canonicalize, measure_aligned, outcome_probability, signal_state

logger = logging.getLogger(__name__)

# uniform draw columns, one per role, in this order
DRAW_COLUMNS = (
    "bit",
    "basis",
    "attack",
    "eve_basis",
    "eve_measure",
    "noise",
    "receiver_basis",
    "receiver_measure",
)


@dataclass(frozen=True)
class Bb84Round:
    sender_bit: int
    sender_basis: Basis
    encoded_state: PolarizationAngle
    eve: EveRecord
    received_state: PolarizationAngle
    receiver_basis: Basis
    receiver_bit: int

    @property
    def kept(self) -> bool:
        return self.sender_basis is self.receiver_basis


def _bases(diagonal: np.ndarray) -> np.ndarray:
    return np.where(diagonal, Basis.DIAGONAL.value, Basis.RECTILINEAR.value)


@dataclass(eq=False)
class Bb84Session:
    """
    Column form of a BB84 run. Bases are stored as booleans (True = diagonal),
    states as canonical angles.
    """

    config: SessionConfig
    sender_bits: np.ndarray
    sender_diagonal: np.ndarray
    encoded: np.ndarray
    eve: EveBatch
    received: np.ndarray
    receiver_diagonal: np.ndarray
    receiver_bits: np.ndarray
    sample_indices: np.ndarray
    qber_report: QberReport

    @property
    def kept(self) -> np.ndarray:
        return self.sender_diagonal == self.receiver_diagonal

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kept)

    @property
    def sifted_sender(self) -> np.ndarray:
        return self.sender_bits[self.kept]

    @property
    def sifted_receiver(self) -> np.ndarray:
        return self.receiver_bits[self.kept]

    @property
    def qber(self) -> float:
        return self.qber_report.fraction

    @property
    def sifted_rate(self) -> float:
        return sifted_rate(len(self.kept_indices), len(self.sender_bits))

    @property
    def risk(self) -> RiskTier:
        return risk_classify(self.qber_report)

    @cached_property
    def rounds(self) -> List[Bb84Round]:
        return [self.round(i) for i in range(len(self.sender_bits))]

    def round(self, i: int) -> Bb84Round:
        return Bb84Round(
            sender_bit=int(self.sender_bits[i]),
            sender_basis=Basis.DIAGONAL if self.sender_diagonal[i] else Basis.RECTILINEAR,
            encoded_state=PolarizationAngle(self.encoded[i]),
            eve=self.eve.record(i),
            received_state=PolarizationAngle(self.received[i]),
            receiver_basis=Basis.DIAGONAL if self.receiver_diagonal[i] else Basis.RECTILINEAR,
            receiver_bit=int(self.receiver_bits[i]),
        )

    def summary(self) -> SessionSummary:
        config = self.config
        return SessionSummary(
            protocol=Protocol.BB84,
            rounds=config.rounds,
            noise_p=config.noise_p,
            eve_p=config.eve_p,
            eve_mode=None,
            bell_ratio=None,
            seed=config.seed,
            sifted_rate=self.sifted_rate,
            conclusive_rate=None,
            qber=self.qber_report,
            chsh_s=None,
            risk=self.risk,
            decision=None,
        )


def run_bb84(config: SessionConfig, rng: Optional[np.random.Generator] = None) -> Bb84Session:
    if config.protocol is not Protocol.BB84:
        raise ConfigError("protocol", f"expected bb84, got {config.protocol.value}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.rounds
    logger.info("BB84 session: %d rounds, noise=%s, eve=%s, seed=%d", n, config.noise_p, config.eve_p, config.seed)

    (
        bit_u,
        basis_u,
        attack_u,
        eve_basis_u,
        eve_measure_u,
        noise_u,
        receiver_basis_u,
        receiver_measure_u,
    ) = rng.random((n, len(DRAW_COLUMNS))).T

    bits = (bit_u < 0.5).astype(np.int8)
    sender_diagonal = basis_u >= 0.5
    encoded = np.asarray(canonicalize(_bases(sender_diagonal) + 90.0 * bits))

    eve_spec = config.eve_spec
    eve = intercept_bb84(encoded, eve_basis_u, eve_measure_u).where(attack_u < eve_spec.intercept_probability)
    received = apply_flip_noise(eve.apply(encoded), config.noise_spec, noise_u)

    receiver_diagonal = receiver_basis_u >= 0.5
    aligned = measure_aligned(received, _bases(receiver_diagonal), receiver_measure_u)
    receiver_bits = np.where(aligned, 0, 1).astype(np.int8)

    kept = np.flatnonzero(sender_diagonal == receiver_diagonal)
    sample = disclose_sample(rng, kept, config.sample_fraction)
    report = sample_qber(bits[sample], receiver_bits[sample], "BB84")

    session = Bb84Session(
        config=config,
        sender_bits=bits,
        sender_diagonal=sender_diagonal,
        encoded=encoded,
        eve=eve,
        received=np.asarray(received),
        receiver_diagonal=receiver_diagonal,
        receiver_bits=receiver_bits,
        sample_indices=sample,
        qber_report=report,
    )
    logger.info("BB84 done: %d sifted, qber=%.4f", len(kept), session.qber)
    return session


def sift_bb84(rounds: Sequence[Bb84Round]) -> Tuple[List[int], List[int], List[int]]:
    """Indices and bits of the matched-basis rounds, in original order."""
    indices = [i for i, r in enumerate(rounds) if r.kept]
    return (
        indices,
        [rounds[i].sender_bit for i in indices],
        [rounds[i].receiver_bit for i in indices],
    )


def expected_bb84(noise_p: float, eve_p: float) -> ExpectedStats:
    """Exact sifted error rate and sifted rate by enumerating every per-round branch."""
    for name, value in (("noise_p", noise_p), ("eve_p", eve_p)):
        if not (0.0 <= value <= 1.0):
            raise ConfigError(name, f"must lie in [0, 1], got {value}")

    kept = error = 0.0
    branches = itertools.product(
        (0, 1), Basis, (False, True), Basis, Outcome, (False, True), Basis, Outcome
    )
    for bit, basis, attacked, eve_basis, eve_outcome, flipped, rx_basis, rx_outcome in branches:
        state = signal_state(bit, basis)
        weight = 0.125 * event_probability(eve_p, attacked) * event_probability(noise_p, flipped)
        if attacked:
            weight *= 0.5 * outcome_probability(state, eve_basis.axis, eve_outcome)
            state = eve_basis.axis if eve_outcome is Outcome.ALIGNED else eve_basis.axis.orthogonal()
        elif eve_basis is not Basis.RECTILINEAR or eve_outcome is not Outcome.ALIGNED:
            continue
        if flipped:
            state = state.orthogonal()
        weight *= outcome_probability(state, rx_basis.axis, rx_outcome)
        if rx_basis is not basis or weight == 0.0:
            continue
        kept += weight
        if rx_outcome.bit != bit:
            error += weight

    return ExpectedStats(qber=error / kept, sifted_rate=kept)
