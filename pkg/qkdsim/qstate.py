"""
Single-photon polarization states and the Phi+ entangled pair.

All angles are polarization angles in degrees, canonicalized into [0, 180).
Every function accepts plain floats or numpy arrays; array arguments are
evaluated elementwise so the protocol runners can process whole sessions at
once through exactly the same code as the scalar per-round operations.
"""

import math
from enum import Enum, IntEnum
from typing import Tuple, Union

import numpy as np

from .errors import DomainError

AngleLike = Union[float, np.ndarray]

ANGLE_TOLERANCE = 1e-9
CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


def _finite(values: AngleLike, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {values!r}")
    return arr


def _unwrap(arr: np.ndarray):
    """Return a python scalar for 0-d results, the array otherwise."""
    return arr.item() if arr.ndim == 0 else arr


def canonicalize(degrees: AngleLike) -> AngleLike:
    """Fold an angle into [0, 180); polarization has no direction."""
    arr = np.mod(_finite(degrees, "angle"), 180.0)
    arr = np.where(arr > 180.0 - ANGLE_TOLERANCE, 0.0, arr)
    return _unwrap(arr)


def angles_equal(a: AngleLike, b: AngleLike) -> Union[bool, np.ndarray]:
    """Compare polarization angles modulo 180 with the 1e-9 degree tolerance."""
    diff = np.mod(_finite(a, "a") - _finite(b, "b"), 180.0)
    equal = (diff < ANGLE_TOLERANCE) | (diff > 180.0 - ANGLE_TOLERANCE)
    return bool(equal) if equal.ndim == 0 else equal


class PolarizationAngle(float):
    """A photon or analyzer orientation in degrees, always in [0, 180)."""

    def __new__(cls, degrees: float):
        return super().__new__(cls, canonicalize(float(degrees)))

    @property
    def degrees(self) -> float:
        return float(self)

    def rotated(self, delta: float) -> "PolarizationAngle":
        return PolarizationAngle(float(self) + delta)

    def orthogonal(self) -> "PolarizationAngle":
        return self.rotated(90.0)

    def __repr__(self) -> str:
        return f"PolarizationAngle({float(self)!r})"


HORIZONTAL = PolarizationAngle(0.0)
DIAGONAL = PolarizationAngle(45.0)
VERTICAL = PolarizationAngle(90.0)
ANTIDIAGONAL = PolarizationAngle(135.0)


class Outcome(IntEnum):
    """Detector result; the integer value is the +1/-1 correlation sign."""

    ALIGNED = 1
    ORTHOGONAL = -1

    @property
    def bit(self) -> int:
        return 0 if self is Outcome.ALIGNED else 1


class Basis(Enum):
    """BB84 encoding bases, valued by the angle that carries bit 0."""

    RECTILINEAR = 0.0
    DIAGONAL = 45.0

    @property
    def axis(self) -> PolarizationAngle:
        return PolarizationAngle(self.value)

    @property
    def symbol(self) -> str:
        return "+" if self is Basis.RECTILINEAR else "x"


class BellState(Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


# Amplitudes over |HH>, |HV>, |VH>, |VV>.
BELL_STATE_VECTORS = {
    BellState.PHI_PLUS: np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0),
    BellState.PHI_MINUS: np.array([1.0, 0.0, 0.0, -1.0]) / math.sqrt(2.0),
    BellState.PSI_PLUS: np.array([0.0, 1.0, 1.0, 0.0]) / math.sqrt(2.0),
    BellState.PSI_MINUS: np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0),
}


def click_probability(state: AngleLike, analyzer: AngleLike) -> AngleLike:
    """
    Born-rule probability that a photon polarized at `state` passes an
    analyzer at `analyzer`: cos^2(state - analyzer).

    Exactly parallel and exactly orthogonal pairs (within the angle
    tolerance) return exactly 1 and 0.
    """
    diff = np.mod(_finite(state, "state") - _finite(analyzer, "analyzer"), 180.0)
    prob = np.cos(np.radians(diff)) ** 2
    parallel = (diff < ANGLE_TOLERANCE) | (diff > 180.0 - ANGLE_TOLERANCE)
    orthogonal = np.abs(diff - 90.0) < ANGLE_TOLERANCE
    prob = np.where(parallel, 1.0, np.where(orthogonal, 0.0, prob))
    return _unwrap(prob)


def check_draws(draws: AngleLike, name: str = "draw") -> np.ndarray:
    arr = np.asarray(draws, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"{name} must lie in [0, 1)")
    return arr


def measure_aligned(state: AngleLike, analyzer: AngleLike, draw: AngleLike) -> np.ndarray:
    """Boolean form of measure_polarization: True where the detector fires on-axis."""
    draws = check_draws(draw)
    return draws < np.asarray(click_probability(state, analyzer))


def _outcomes(aligned: np.ndarray):
    values = np.where(aligned, Outcome.ALIGNED, Outcome.ORTHOGONAL).astype(np.int8)
    return Outcome(int(values)) if values.ndim == 0 else values


def measure_polarization(state: AngleLike, analyzer: AngleLike, draw: AngleLike):
    """Sample an outcome: Aligned iff draw < click_probability(state, analyzer)."""
    return _outcomes(measure_aligned(state, analyzer, draw))


def correlation_phi_plus(a: AngleLike, b: AngleLike) -> AngleLike:
    """E(a, b) = cos 2(a - b) for Phi+ measured at polarization angles a and b."""
    diff = _finite(a, "a") - _finite(b, "b")
    return _unwrap(np.cos(np.radians(2.0 * diff)))


def phi_plus_correlation_statevector(a: float, b: float) -> float:
    """
    Correlation of Phi+ computed from the two-photon statevector:
    E = sum over outcome signs of s_a * s_b * <psi| P_a (x) P_b |psi>.
    """
    psi = BELL_STATE_VECTORS[BellState.PHI_PLUS]

    def projector(theta_deg: float, outcome: Outcome) -> np.ndarray:
        theta = math.radians(theta_deg)
        if outcome is Outcome.ALIGNED:
            vec = np.array([math.cos(theta), math.sin(theta)])
        else:
            vec = np.array([-math.sin(theta), math.cos(theta)])
        return np.outer(vec, vec)

    total = 0.0
    for out_a in Outcome:
        for out_b in Outcome:
            joint = np.kron(projector(a, out_a), projector(b, out_b))
            total += int(out_a) * int(out_b) * float(psi @ joint @ psi)
    return total


def collapse_partner(a: AngleLike, outcome) -> AngleLike:
    """Partner photon state once the first photon of Phi+ is measured at `a`."""
    orthogonal = np.asarray(outcome) == Outcome.ORTHOGONAL
    state = canonicalize(_finite(a, "a") + 90.0 * orthogonal)
    return PolarizationAngle(state) if np.ndim(state) == 0 else state


def sample_pair_phi_plus(
    a: AngleLike, b: AngleLike, draws: Tuple[AngleLike, AngleLike]
) -> Tuple[object, object]:
    """
    Sample both outcomes of a Phi+ pair measured at (a, b).

    The first photon is uniform; the partner collapses onto the first
    outcome's eigenstate and is then measured at `b`.
    """
    first_draw, second_draw = draws
    first = _outcomes(check_draws(first_draw) < 0.5)
    partner = collapse_partner(a, first)
    return first, measure_polarization(partner, b, second_draw)


def signal_state(bit: int, basis: Basis) -> PolarizationAngle:
    """BB84 encoding: (0,+) -> 0, (1,+) -> 90, (0,x) -> 45, (1,x) -> 135 degrees."""
    if bit not in (0, 1):
        raise DomainError(f"bit must be 0 or 1, got {bit!r}")
    return basis.axis.rotated(90.0 * bit)


def outcome_probability(state: float, analyzer: float, outcome: Outcome) -> float:
    """Born probability of one specific outcome; used by the enumeration oracles."""
    p = click_probability(state, analyzer)
    return p if outcome is Outcome.ALIGNED else 1.0 - p
