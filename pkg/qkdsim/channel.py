"""
Quantum channel: polarization-flip noise and intercept-resend eavesdroppers.

Pipeline order is fixed for every protocol: encode -> eavesdropper -> noise
-> measurement.

The `intercept_*` kernels work on whole arrays of rounds and return an
EveBatch; the per-round operations (`bb84_intercept_resend`, ...) are thin
wrappers over the same kernels returning a single EveRecord.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DomainError
from .qstate import (
    AngleLike,
    Outcome,
    PolarizationAngle,
    angles_equal,
    canonicalize,
    check_draws,
    measure_aligned,
)

DEFAULT_EVE_ANGLES: Tuple[float, ...] = (0.0, 45.0)


def _check_probability(value: float, name: str) -> float:
    if not (0.0 <= value <= 1.0):
        raise ConfigError(name, f"must lie in [0, 1], got {value}")
    return float(value)


@dataclass(frozen=True)
class NoiseSpec:
    flip_probability: float = 0.0

    def __post_init__(self):
        _check_probability(self.flip_probability, "flip_probability")


class EveMode(str, Enum):
    """Which E91 round purposes the eavesdropper attacks."""

    KEY = "key"
    BELL = "bell"
    BOTH = "both"
    NOT_APPLICABLE = "n/a"

    @property
    def attacks_key(self) -> bool:
        return self in (EveMode.KEY, EveMode.BOTH)

    @property
    def attacks_bell(self) -> bool:
        return self in (EveMode.BELL, EveMode.BOTH)


@dataclass(frozen=True)
class EveSpec:
    intercept_probability: float = 0.0
    mode: EveMode = EveMode.NOT_APPLICABLE
    angle_set: Tuple[float, ...] = DEFAULT_EVE_ANGLES

    def __post_init__(self):
        _check_probability(self.intercept_probability, "intercept_probability")
        if not self.angle_set:
            raise ConfigError("angle_set", "must contain at least one angle")
        try:
            angles = tuple(PolarizationAngle(a) for a in self.angle_set)
        except DomainError as exc:
            raise ConfigError("angle_set", str(exc)) from exc
        object.__setattr__(self, "angle_set", angles)


@dataclass(frozen=True)
class EveRecord:
    """What the eavesdropper did to one photon."""

    intercepted: bool = False
    eve_analyzer: Optional[PolarizationAngle] = None
    eve_outcome: Optional[Outcome] = None
    eve_inferred_bit: Optional[int] = None
    resent_state: Optional[PolarizationAngle] = None
    guessed: bool = False


NO_INTERCEPT = EveRecord()


@dataclass
class EveBatch:
    """
    Column form of EveRecord for a run of rounds.

    Absent values are encoded as NaN (angles), 0 (outcome) and -1 (bit).
    """

    intercepted: np.ndarray
    analyzer: np.ndarray
    outcome: np.ndarray
    inferred_bit: np.ndarray
    resent: np.ndarray
    guessed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.guessed is None:
            self.guessed = np.zeros(len(self.intercepted), dtype=bool)

    def __len__(self) -> int:
        return len(self.intercepted)

    @classmethod
    def empty(cls, n: int) -> "EveBatch":
        return cls(
            intercepted=np.zeros(n, dtype=bool),
            analyzer=np.full(n, np.nan),
            outcome=np.zeros(n, dtype=np.int8),
            inferred_bit=np.full(n, -1, dtype=np.int8),
            resent=np.full(n, np.nan),
            guessed=np.zeros(n, dtype=bool),
        )

    def where(self, mask: np.ndarray) -> "EveBatch":
        """Keep this batch's interceptions only where `mask` is set."""
        blank = EveBatch.empty(len(self))
        return EveBatch(
            intercepted=self.intercepted & mask,
            analyzer=np.where(mask, self.analyzer, blank.analyzer),
            outcome=np.where(mask, self.outcome, blank.outcome).astype(np.int8),
            inferred_bit=np.where(mask, self.inferred_bit, blank.inferred_bit).astype(np.int8),
            resent=np.where(mask, self.resent, blank.resent),
            guessed=self.guessed & mask,
        )

    def apply(self, states: np.ndarray) -> np.ndarray:
        """States leaving the eavesdropper: resent where intercepted, else untouched."""
        return np.where(self.intercepted, self.resent, states)

    def record(self, i: int) -> EveRecord:
        if not self.intercepted[i]:
            return NO_INTERCEPT
        bit = int(self.inferred_bit[i])
        return EveRecord(
            intercepted=True,
            eve_analyzer=PolarizationAngle(self.analyzer[i]),
            eve_outcome=Outcome(int(self.outcome[i])),
            eve_inferred_bit=None if bit < 0 else bit,
            resent_state=PolarizationAngle(self.resent[i]),
            guessed=bool(self.guessed[i]),
        )


def apply_flip_noise(state: AngleLike, spec: NoiseSpec, draw: AngleLike) -> AngleLike:
    """Rotate the polarization by 90 degrees with probability spec.flip_probability."""
    flipped = check_draws(draw) < spec.flip_probability
    result = canonicalize(np.asarray(state, dtype=float) + 90.0 * flipped)
    return PolarizationAngle(result) if np.ndim(result) == 0 else result


def _measured_batch(analyzer: np.ndarray, aligned: np.ndarray, inferred: np.ndarray) -> EveBatch:
    return EveBatch(
        intercepted=np.ones(len(analyzer), dtype=bool),
        analyzer=analyzer,
        outcome=np.where(aligned, Outcome.ALIGNED, Outcome.ORTHOGONAL).astype(np.int8),
        inferred_bit=inferred.astype(np.int8),
        resent=np.asarray(canonicalize(analyzer + 90.0 * ~aligned)),
    )


def intercept_bb84(states: np.ndarray, basis_draws: np.ndarray, measure_draws: np.ndarray) -> EveBatch:
    """Eve measures in the rectilinear (draw < 0.5) or diagonal basis and resends her eigenstate."""
    states = np.atleast_1d(np.asarray(states, dtype=float))
    diagonal = np.atleast_1d(check_draws(basis_draws, "basis draw")) >= 0.5
    analyzer = np.where(diagonal, 45.0, 0.0)
    aligned = np.atleast_1d(measure_aligned(states, analyzer, measure_draws))
    return _measured_batch(analyzer, aligned, np.where(aligned, 0, 1))


B92_SIGNALS = (0.0, 45.0)
B92_TESTS = (90.0, 135.0)


def _check_b92_signals(states: np.ndarray) -> None:
    valid = angles_equal(states, B92_SIGNALS[0]) | angles_equal(states, B92_SIGNALS[1])
    if not np.all(valid):
        raise DomainError("B92 signal states must be 0 or 45 degrees")


def intercept_b92(
    states: np.ndarray,
    test_draws: np.ndarray,
    click_draws: np.ndarray,
    guess_draws: np.ndarray,
) -> EveBatch:
    """
    Eve tests |V> (draw < 0.5) or |->. A click at 90 degrees means bit 1
    (resend 45), at 135 degrees bit 0 (resend 0). No click: she guesses and
    resends a uniformly random signal state.
    """
    states = np.atleast_1d(np.asarray(states, dtype=float))
    _check_b92_signals(states)
    analyzer = np.where(np.atleast_1d(check_draws(test_draws, "test draw")) < 0.5, *B92_TESTS)
    click = np.atleast_1d(measure_aligned(states, analyzer, click_draws))
    on_vertical = angles_equal(analyzer, 90.0)
    guess = np.where(np.atleast_1d(check_draws(guess_draws, "guess draw")) < 0.5, *B92_SIGNALS)
    return EveBatch(
        intercepted=np.ones(len(states), dtype=bool),
        analyzer=analyzer,
        outcome=np.where(click, Outcome.ALIGNED, Outcome.ORTHOGONAL).astype(np.int8),
        inferred_bit=np.where(click, np.where(on_vertical, 1, 0), -1).astype(np.int8),
        resent=np.where(click, np.where(on_vertical, 45.0, 0.0), guess),
        guessed=~click,
    )


def intercept_e91(
    states: np.ndarray,
    angle_set: Sequence[float],
    choice_draws: np.ndarray,
    measure_draws: np.ndarray,
) -> EveBatch:
    """Eve measures the receiver-bound photon at a uniformly chosen angle and resends."""
    if len(angle_set) == 0:
        raise ConfigError("angle_set", "must contain at least one angle")
    states = np.atleast_1d(np.asarray(states, dtype=float))
    angles = np.asarray(angle_set, dtype=float)
    choice = np.atleast_1d(check_draws(choice_draws, "choice draw"))
    index = np.minimum((choice * len(angles)).astype(int), len(angles) - 1)
    analyzer = angles[index]
    aligned = np.atleast_1d(measure_aligned(states, analyzer, measure_draws))
    return _measured_batch(analyzer, aligned, np.where(aligned, 0, 1))


def bb84_intercept_resend(
    state: float, draws: Tuple[float, float]
) -> Tuple[PolarizationAngle, EveRecord]:
    """draws = (basis draw, measurement draw)."""
    record = intercept_bb84([state], [draws[0]], [draws[1]]).record(0)
    return record.resent_state, record


def b92_intercept_resend(
    state: float, draws: Tuple[float, float, float]
) -> Tuple[PolarizationAngle, EveRecord]:
    """draws = (test draw, click draw, guess draw)."""
    record = intercept_b92([state], [draws[0]], [draws[1]], [draws[2]]).record(0)
    return record.resent_state, record


def e91_intercept(
    flying_state: float, spec: EveSpec, draws: Tuple[float, float]
) -> Tuple[PolarizationAngle, EveRecord]:
    """draws = (angle choice draw, measurement draw)."""
    if spec.mode is EveMode.NOT_APPLICABLE:
        raise ConfigError("eve_mode", "E91 interception needs a key, bell or both mode")
    record = intercept_e91([flying_state], spec.angle_set, [draws[0]], [draws[1]]).record(0)
    return record.resent_state, record


def event_probability(p: float, fired: bool) -> float:
    """Weight of a Bernoulli(p) branch in the enumeration oracles."""
    return p if fired else 1.0 - p
