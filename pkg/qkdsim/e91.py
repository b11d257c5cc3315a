"""
E91 sessions over a Phi+ pair source.

The sender measures at A1 = 0 or A2 = 45 degrees, the receiver at B1 = 22.5
or B3 = 67.5 degrees for Bell tests; key rounds measure both photons at
0 degrees. CHSH is S = E(A1,B1) - E(A1,B3) + E(A2,B1) + E(A2,B3), and a
session is accepted iff |S| > 2 and the key-round QBER is within threshold.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .channel import (
    DEFAULT_EVE_ANGLES,
    EveBatch,
    EveMode,
    EveRecord,
    apply_flip_noise,
    event_probability,
    intercept_e91,
)
from .config import AllocationMode, Protocol, SessionConfig
from .errors import ConfigError, DomainError, InsufficientDataError
from .metrics import (
    DEFAULT_QBER_THRESHOLD,
    ExpectedStats,
    QberReport,
    RiskTier,
    SecurityDecision,
    SessionSummary,
    Verdict,
    disclose_sample,
    risk_classify,
    sample_qber,
)
from .qstate import (
    CLASSICAL_BOUND,
    AngleLike,
    Outcome,
    PolarizationAngle,
    angles_equal,
    canonicalize,
    correlation_phi_plus,
    measure_aligned,
    outcome_probability,
)

logger = logging.getLogger(__name__)

DRAW_COLUMNS = (
    "purpose",
    "a_choice",
    "b_choice",
    "a_outcome",
    "attack",
    "eve_choice",
    "eve_measure",
    "noise",
    "b_measure",
)

SENDER_ANGLES = {"A1": 0.0, "A2": 45.0}
RECEIVER_ANGLES = {"B1": 22.5, "B3": 67.5}
KEY_ANGLE = 0.0
INDEPENDENT_RECEIVER_ANGLES = (0.0, 22.5, 67.5)


class RoundPurpose(IntEnum):
    KEY = 0
    A1B1 = 1
    A1B3 = 2
    A2B1 = 3
    A2B3 = 4
    DISCARDED = 5

    @property
    def is_bell(self) -> bool:
        return self in BELL_PAIRS

    @property
    def pair_label(self) -> str:
        """``A1,B1`` style label of a Bell pair."""
        return f"{self.name[:2]},{self.name[2:]}"


BELL_PAIRS = (RoundPurpose.A1B1, RoundPurpose.A1B3, RoundPurpose.A2B1, RoundPurpose.A2B3)

PAIR_ANGLES = {
    pair: (SENDER_ANGLES[pair.name[:2]], RECEIVER_ANGLES[pair.name[2:]]) for pair in BELL_PAIRS
}


def classify_rounds(a_angles: AngleLike, b_angles: AngleLike) -> np.ndarray:
    a_angles = np.atleast_1d(np.asarray(a_angles, dtype=float))
    b_angles = np.atleast_1d(np.asarray(b_angles, dtype=float))
    a1 = angles_equal(a_angles, SENDER_ANGLES["A1"])
    a2 = angles_equal(a_angles, SENDER_ANGLES["A2"])
    b0 = angles_equal(b_angles, KEY_ANGLE)
    b1 = angles_equal(b_angles, RECEIVER_ANGLES["B1"])
    b3 = angles_equal(b_angles, RECEIVER_ANGLES["B3"])
    if not np.all(a1 | a2):
        raise DomainError("sender angle must be 0 or 45 degrees")
    if not np.all(b0 | b1 | b3):
        raise DomainError("receiver angle must be 0, 22.5 or 67.5 degrees")
    return np.select(
        [a1 & b0, a1 & b1, a1 & b3, a2 & b1, a2 & b3],
        [RoundPurpose.KEY, RoundPurpose.A1B1, RoundPurpose.A1B3, RoundPurpose.A2B1, RoundPurpose.A2B3],
        default=RoundPurpose.DISCARDED,
    ).astype(np.int8)


def classify_round(a_angle: float, b_angle: float) -> RoundPurpose:
    """(0,0) is a key round, the four CHSH pairs are Bell rounds, (45,0) is discarded."""
    return RoundPurpose(int(classify_rounds(a_angle, b_angle)[0]))


@dataclass(frozen=True)
class E91Round:
    purpose: RoundPurpose
    a_angle: PolarizationAngle
    b_angle: PolarizationAngle
    a_outcome: Outcome
    b_outcome: Outcome
    eve: EveRecord
    noise_flipped: bool


OutcomePair = Tuple[int, int]


def _same_diff(pairs: Iterable[Union[E91Round, OutcomePair]]) -> Tuple[int, int]:
    same = diff = 0
    for item in pairs:
        a, b = (item.a_outcome, item.b_outcome) if isinstance(item, E91Round) else item
        if int(a) == int(b):
            same += 1
        else:
            diff += 1
    return same, diff


def correlation_estimate(
    rounds: Iterable[Union[E91Round, OutcomePair]], pair: Optional[str] = None
) -> float:
    """(N_same - N_diff) / N_total over the rounds of one Bell pair."""
    same, diff = _same_diff(rounds)
    if same + diff == 0:
        raise InsufficientDataError(f"no Bell-test rounds for pair {pair or '?'}", pair=pair)
    return float(Fraction(same - diff, same + diff))


def chsh_value(estimates: Sequence[Optional[float]]) -> float:
    if len(estimates) != 4:
        raise InsufficientDataError(f"need four correlation values, got {len(estimates)}")
    for pair, value in zip(BELL_PAIRS, estimates):
        if value is None:
            raise InsufficientDataError(
                f"no correlation value for pair {pair.pair_label}", pair=pair.pair_label
            )
    e11, e13, e21, e23 = estimates
    return e11 - e13 + e21 + e23


@dataclass(frozen=True)
class ChshEstimate:
    e_values: Tuple[float, float, float, float]
    counts: Tuple[Tuple[int, int], ...]
    s: float

    @classmethod
    def from_counts(cls, counts: Sequence[Tuple[int, int]]) -> "ChshEstimate":
        """Build from (n_same, n_diff) per pair, in A1B1, A1B3, A2B1, A2B3 order."""
        ratios = []
        for pair, (same, diff) in zip(BELL_PAIRS, counts):
            if same + diff == 0:
                raise InsufficientDataError(
                    f"no Bell-test rounds for pair {pair.pair_label}", pair=pair.pair_label
                )
            ratios.append(Fraction(same - diff, same + diff))
        e11, e13, e21, e23 = ratios
        return cls(
            e_values=tuple(float(r) for r in ratios),
            counts=tuple((int(same), int(diff)) for same, diff in counts),
            s=float(e11 - e13 + e21 + e23),
        )


def security_decision(
    s: Optional[float], qber: float, qber_threshold: float = DEFAULT_QBER_THRESHOLD
) -> SecurityDecision:
    """Accept iff |S| > 2 and qber <= qber_threshold."""
    if not (0.0 <= qber <= 1.0):
        raise DomainError(f"qber must lie in [0, 1], got {qber}")
    if s is None:
        return SecurityDecision(Verdict.ABORT, "insufficient Bell-test data")
    reasons = []
    if abs(s) <= CLASSICAL_BOUND:
        reasons.append(f"no Bell violation (|S| = {abs(s):.4f} <= 2)")
    if qber > qber_threshold:
        reasons.append(f"QBER {qber:.4f} exceeds threshold {qber_threshold}")
    if reasons:
        return SecurityDecision(Verdict.ABORT, "; ".join(reasons))
    return SecurityDecision(Verdict.ACCEPT)


def _outcomes(aligned: np.ndarray) -> np.ndarray:
    return np.where(aligned, Outcome.ALIGNED, Outcome.ORTHOGONAL).astype(np.int8)


def _bits(outcomes: np.ndarray) -> np.ndarray:
    return (outcomes == Outcome.ORTHOGONAL).astype(np.int8)


@dataclass(eq=False)
class E91Session:
    config: SessionConfig
    purposes: np.ndarray
    a_angles: np.ndarray
    b_angles: np.ndarray
    a_outcomes: np.ndarray
    b_outcomes: np.ndarray
    eve: EveBatch
    noise_flipped: np.ndarray
    sample_indices: np.ndarray
    qber_report: QberReport
    chsh: Optional[ChshEstimate]
    decision: SecurityDecision

    @property
    def key_mask(self) -> np.ndarray:
        return self.purposes == RoundPurpose.KEY

    @property
    def key_rate(self) -> float:
        return float(np.count_nonzero(self.key_mask)) / len(self.purposes)

    @property
    def discard_rate(self) -> float:
        return float(np.count_nonzero(self.purposes == RoundPurpose.DISCARDED)) / len(self.purposes)

    @property
    def sifted_sender(self) -> np.ndarray:
        return _bits(self.a_outcomes[self.key_mask])

    @property
    def sifted_receiver(self) -> np.ndarray:
        return _bits(self.b_outcomes[self.key_mask])

    @property
    def qber(self) -> float:
        return self.qber_report.fraction

    @property
    def s(self) -> Optional[float]:
        return None if self.chsh is None else self.chsh.s

    @property
    def risk(self) -> RiskTier:
        if self.chsh is None:
            return RiskTier.HIGHEST
        return risk_classify(self.qber_report, self.chsh.s, self.config.chsh_mid, self.config.chsh_high)

    @cached_property
    def rounds(self) -> List[E91Round]:
        return [
            E91Round(
                purpose=RoundPurpose(int(self.purposes[i])),
                a_angle=PolarizationAngle(self.a_angles[i]),
                b_angle=PolarizationAngle(self.b_angles[i]),
                a_outcome=Outcome(int(self.a_outcomes[i])),
                b_outcome=Outcome(int(self.b_outcomes[i])),
                eve=self.eve.record(i),
                noise_flipped=bool(self.noise_flipped[i]),
            )
            for i in range(len(self.purposes))
        ]

    def summary(self) -> SessionSummary:
        config = self.config
        return SessionSummary(
            protocol=Protocol.E91,
            rounds=config.rounds,
            noise_p=config.noise_p,
            eve_p=config.eve_p,
            eve_mode=config.eve_mode.value,
            bell_ratio=config.bell_ratio,
            seed=config.seed,
            sifted_rate=self.key_rate,
            conclusive_rate=None,
            qber=self.qber_report,
            chsh_s=self.s,
            risk=self.risk,
            decision=self.decision,
        )


def _allocate(config: SessionConfig, purpose_u, a_u, b_u) -> Tuple[np.ndarray, np.ndarray]:
    a_pick = np.where(a_u < 0.5, SENDER_ANGLES["A1"], SENDER_ANGLES["A2"])
    if config.allocation_mode is AllocationMode.INDEPENDENT:
        index = np.minimum((b_u * 3).astype(int), 2)
        return a_pick, np.asarray(INDEPENDENT_RECEIVER_ANGLES)[index]
    bell = purpose_u < config.bell_ratio
    b_pick = np.where(b_u < 0.5, RECEIVER_ANGLES["B1"], RECEIVER_ANGLES["B3"])
    return np.where(bell, a_pick, KEY_ANGLE), np.where(bell, b_pick, KEY_ANGLE)


def _attack_mask(purposes: np.ndarray, mode: EveMode) -> np.ndarray:
    key = purposes == RoundPurpose.KEY
    bell = (purposes != RoundPurpose.KEY) & (purposes != RoundPurpose.DISCARDED)
    return (key & mode.attacks_key) | (bell & mode.attacks_bell)


def run_e91(config: SessionConfig, rng: Optional[np.random.Generator] = None) -> E91Session:
    if config.protocol is not Protocol.E91:
        raise ConfigError("protocol", f"expected e91, got {config.protocol.value}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.rounds
    logger.info(
        "E91 session: %d rounds, noise=%s, eve=%s (%s), bell_ratio=%s, %s allocation, seed=%d",
        n,
        config.noise_p,
        config.eve_p,
        config.eve_mode.value,
        config.bell_ratio,
        config.allocation_mode.value,
        config.seed,
    )

    (
        purpose_u,
        a_u,
        b_u,
        a_outcome_u,
        attack_u,
        eve_choice_u,
        eve_measure_u,
        noise_u,
        b_measure_u,
    ) = rng.random((n, len(DRAW_COLUMNS))).T

    a_angles, b_angles = _allocate(config, purpose_u, a_u, b_u)
    purposes = classify_rounds(a_angles, b_angles)

    a_aligned = a_outcome_u < 0.5
    flying = np.asarray(canonicalize(a_angles + 90.0 * ~a_aligned))

    eve_spec = config.eve_spec
    attacked = _attack_mask(purposes, eve_spec.mode) & (attack_u < eve_spec.intercept_probability)
    eve = intercept_e91(flying, eve_spec.angle_set, eve_choice_u, eve_measure_u).where(attacked)
    received = apply_flip_noise(eve.apply(flying), config.noise_spec, noise_u)
    b_aligned = measure_aligned(received, b_angles, b_measure_u)

    a_outcomes = _outcomes(a_aligned)
    b_outcomes = _outcomes(b_aligned)

    key = np.flatnonzero(purposes == RoundPurpose.KEY)
    sample = disclose_sample(rng, key, config.sample_fraction)
    report = sample_qber(_bits(a_outcomes[sample]), _bits(b_outcomes[sample]), "E91 key rounds")

    same = a_outcomes == b_outcomes
    counts = [
        (int(np.count_nonzero(same & (purposes == pair))), int(np.count_nonzero(~same & (purposes == pair))))
        for pair in BELL_PAIRS
    ]
    try:
        chsh = ChshEstimate.from_counts(counts)
    except InsufficientDataError as exc:
        logger.warning("E91: %s; CHSH unavailable", exc)
        chsh = None

    decision = security_decision(
        None if chsh is None else chsh.s, report.fraction, config.qber_threshold
    )
    session = E91Session(
        config=config,
        purposes=purposes,
        a_angles=a_angles,
        b_angles=b_angles,
        a_outcomes=a_outcomes,
        b_outcomes=b_outcomes,
        eve=eve,
        noise_flipped=noise_u < config.noise_p,
        sample_indices=sample,
        qber_report=report,
        chsh=chsh,
        decision=decision,
    )
    logger.info(
        "E91 done: %d key rounds, qber=%.4f, S=%s, %s",
        len(key),
        session.qber,
        "n/a" if chsh is None else f"{chsh.s:.4f}",
        decision.verdict.value,
    )
    return session


def _pair_statistics(
    a: float, b: float, attack_p: float, noise_p: float, angle_set: Sequence[float]
) -> Tuple[float, float]:
    """Exact (E, P(outcomes differ)) for one analyzer pair."""
    correlation = p_diff = 0.0
    branches = itertools.product(Outcome, (False, True), range(len(angle_set)), Outcome, (False, True), Outcome)
    for a_outcome, attacked, eve_index, eve_outcome, flipped, b_outcome in branches:
        state = PolarizationAngle(a if a_outcome is Outcome.ALIGNED else a + 90.0)
        weight = 0.5 * event_probability(attack_p, attacked) * event_probability(noise_p, flipped)
        if attacked:
            eve_angle = PolarizationAngle(angle_set[eve_index])
            weight *= outcome_probability(state, eve_angle, eve_outcome) / len(angle_set)
            state = eve_angle if eve_outcome is Outcome.ALIGNED else eve_angle.orthogonal()
        elif eve_index != 0 or eve_outcome is not Outcome.ALIGNED:
            continue
        if flipped:
            state = state.orthogonal()
        weight *= outcome_probability(state, b, b_outcome)
        correlation += weight * int(a_outcome) * int(b_outcome)
        if a_outcome is not b_outcome:
            p_diff += weight
    return correlation, p_diff


def expected_e91(
    noise_p: float,
    eve_p: float,
    mode: EveMode = EveMode.BOTH,
    angle_set: Sequence[float] = DEFAULT_EVE_ANGLES,
    bell_ratio: float = 0.25,
    allocation_mode: AllocationMode = AllocationMode.DESIGNATED,
) -> ExpectedStats:
    """
    Exact per-pair correlations, S and key-round error rate. `sifted_rate`
    holds the expected fraction of key rounds under the given allocation.
    """
    for name, value in (("noise_p", noise_p), ("eve_p", eve_p), ("bell_ratio", bell_ratio)):
        if not (0.0 <= value <= 1.0):
            raise ConfigError(name, f"must lie in [0, 1], got {value}")
    if mode is EveMode.NOT_APPLICABLE:
        raise ConfigError("eve_mode", "must be one of key, bell, both")
    if not angle_set:
        raise ConfigError("angle_set", "must contain at least one angle")

    bell_attack = eve_p if mode.attacks_bell else 0.0
    key_attack = eve_p if mode.attacks_key else 0.0
    e_values = tuple(
        _pair_statistics(*PAIR_ANGLES[pair], bell_attack, noise_p, angle_set)[0] for pair in BELL_PAIRS
    )
    _, key_error = _pair_statistics(KEY_ANGLE, KEY_ANGLE, key_attack, noise_p, angle_set)
    e11, e13, e21, e23 = e_values

    if allocation_mode is AllocationMode.INDEPENDENT:
        key_rate = 0.5 / len(INDEPENDENT_RECEIVER_ANGLES)
    else:
        key_rate = 1.0 - bell_ratio
    return ExpectedStats(
        qber=key_error,
        sifted_rate=key_rate,
        e_values=e_values,
        s=e11 - e13 + e21 + e23,
    )


def ideal_chsh() -> float:
    """S at the four CHSH pairs for a noiseless, unattacked Phi+ source."""
    e11, e13, e21, e23 = (correlation_phi_plus(*PAIR_ANGLES[pair]) for pair in BELL_PAIRS)
    return e11 - e13 + e21 + e23
