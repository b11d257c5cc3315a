"""
Shared post-processing: QBER, sifted-key rate, risk tiers, accept/abort
decisions and the common SessionSummary shape.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Optional, Tuple, Union

import numpy as np

from .config import Protocol
from .errors import DomainError

logger = logging.getLogger(__name__)

LOWEST_MAX_PERCENT = 4
MID_MAX_PERCENT = 11
DEFAULT_CHSH_MID = 2.2
DEFAULT_CHSH_HIGH = 2.0
DEFAULT_QBER_THRESHOLD = 0.11


@dataclass(frozen=True)
class QberReport:
    n_error: int
    n_total: int

    @property
    def degenerate(self) -> bool:
        return self.n_total == 0

    @property
    def ratio(self) -> Fraction:
        """Exact error ratio; 0 for a degenerate (empty) sample."""
        return Fraction(0) if self.degenerate else Fraction(self.n_error, self.n_total)

    @property
    def fraction(self) -> float:
        return float(self.ratio)

    @property
    def percent(self) -> float:
        return float(100 * self.ratio)


def qber(n_error: int, n_total: int) -> QberReport:
    if n_error < 0 or n_total < 0:
        raise DomainError("counts must be non-negative")
    if n_error > n_total:
        raise DomainError(f"n_error ({n_error}) exceeds n_total ({n_total})")
    return QberReport(int(n_error), int(n_total))


def sifted_rate(kept: int, total: int) -> float:
    if total <= 0:
        raise DomainError("total must be positive")
    if not (0 <= kept <= total):
        raise DomainError(f"kept must lie in [0, {total}], got {kept}")
    return kept / total


class RiskTier(IntEnum):
    LOWEST = 0
    MID = 1
    HIGHEST = 2

    @property
    def label(self) -> str:
        return self.name.lower()


def classify_percent(
    percent: Union[float, Fraction],
    s: Optional[float] = None,
    chsh_mid: float = DEFAULT_CHSH_MID,
    chsh_high: float = DEFAULT_CHSH_HIGH,
) -> RiskTier:
    """Tier from a QBER percentage, escalated by a low CHSH value when one is given."""
    if percent <= LOWEST_MAX_PERCENT:
        tier = RiskTier.LOWEST
    elif percent <= MID_MAX_PERCENT:
        tier = RiskTier.MID
    else:
        tier = RiskTier.HIGHEST
    if s is not None:
        if s <= chsh_high:
            tier = max(tier, RiskTier.HIGHEST)
        elif s <= chsh_mid:
            tier = max(tier, RiskTier.MID)
    return RiskTier(tier)


def risk_classify(
    q: QberReport,
    s: Optional[float] = None,
    chsh_mid: float = DEFAULT_CHSH_MID,
    chsh_high: float = DEFAULT_CHSH_HIGH,
) -> RiskTier:
    return classify_percent(100 * q.ratio, s, chsh_mid, chsh_high)


class Verdict(str, Enum):
    ACCEPT = "accept"
    ABORT = "abort"


@dataclass(frozen=True)
class SecurityDecision:
    verdict: Verdict
    reason: str = ""

    def __post_init__(self):
        if self.verdict is Verdict.ABORT and not self.reason:
            raise DomainError("an abort decision needs a reason")

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


@dataclass(frozen=True)
class ExpectedStats:
    """Exact expectations from an enumeration oracle."""

    qber: float
    sifted_rate: Optional[float] = None
    conclusive_rate: Optional[float] = None
    e_values: Optional[Tuple[float, float, float, float]] = None
    s: Optional[float] = None


@dataclass(frozen=True)
class SessionSummary:
    """Aggregate results of one session, sweep cell or replay."""

    protocol: Protocol
    rounds: int
    noise_p: Optional[float]
    eve_p: Optional[float]
    eve_mode: Optional[str]
    bell_ratio: Optional[float]
    seed: Optional[int]
    sifted_rate: Optional[float]
    conclusive_rate: Optional[float]
    qber: QberReport
    chsh_s: Optional[float]
    risk: RiskTier
    decision: Optional[SecurityDecision]


def disclose_sample(rng: np.random.Generator, kept: np.ndarray, fraction: float) -> np.ndarray:
    """
    Indices of the sifted rounds disclosed for error estimation: all of them
    at fraction 1, otherwise a sorted uniform subset of ceil(fraction * n).
    """
    kept = np.asarray(kept, dtype=np.int64)
    if fraction >= 1.0 or len(kept) == 0:
        return kept
    size = max(1, math.ceil(fraction * len(kept)))
    return np.sort(rng.choice(kept, size=size, replace=False))


def sample_qber(sender: np.ndarray, receiver: np.ndarray, label: str) -> QberReport:
    """QBER over aligned bit arrays; warns when the sample is empty."""
    report = qber(int(np.count_nonzero(sender != receiver)), len(sender))
    if report.degenerate:
        logger.warning("%s: empty error-estimation sample, QBER reported as 0", label)
    return report
