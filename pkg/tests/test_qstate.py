"""
Unit tests for qkdsim.qstate

Born-rule probabilities, sampling and the Phi+ pair model.
Run with: pytest tests/test_qstate.py -v
"""

import math

import numpy as np
import pytest

from qkdsim.errors import DomainError
from qkdsim.qstate import (
    BELL_STATE_VECTORS,
    TSIRELSON_BOUND,
    Basis,
    BellState,
    Outcome,
    PolarizationAngle,
    angles_equal,
    canonicalize,
    click_probability,
    collapse_partner,
    correlation_phi_plus,
    measure_polarization,
    phi_plus_correlation_statevector,
    sample_pair_phi_plus,
    signal_state,
)


class TestPolarizationAngle:
    """Tests for canonicalization into [0, 180)."""

    @pytest.mark.parametrize(
        "degrees,expected",
        [(0, 0), (180, 0), (225, 45), (-45, 135), (359.5, 179.5), (90, 90)],
    )
    def test_canonicalize(self, degrees, expected):
        assert canonicalize(degrees) == pytest.approx(expected)

    def test_half_turn_is_identity(self):
        """canonicalize(x + 180) == canonicalize(x) for arbitrary angles."""
        for phi in np.linspace(-720, 720, 97):
            assert angles_equal(canonicalize(phi + 180), canonicalize(phi))

    def test_orthogonal_and_rotated(self):
        assert PolarizationAngle(135).orthogonal() == 45.0
        assert PolarizationAngle(0).rotated(-22.5) == 157.5

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            PolarizationAngle(float("nan"))

    @pytest.mark.parametrize(
        "bit,basis,expected",
        [(0, Basis.RECTILINEAR, 0.0), (1, Basis.RECTILINEAR, 90.0), (0, Basis.DIAGONAL, 45.0), (1, Basis.DIAGONAL, 135.0)],
    )
    def test_signal_states(self, bit, basis, expected):
        """The four BB84 signals are exactly 0, 90, 45 and 135 degrees."""
        assert signal_state(bit, basis) == expected

    def test_signal_state_rejects_non_bit(self):
        with pytest.raises(DomainError):
            signal_state(2, Basis.RECTILINEAR)


class TestClickProbability:
    """Tests for the cos^2 Born rule."""

    def test_identical_angles(self):
        assert click_probability(0, 0) == 1.0

    def test_orthogonal_pair(self):
        assert click_probability(45, 135) == 0.0

    def test_twenty_two_and_a_half(self):
        assert click_probability(0, 22.5) == pytest.approx(0.8535533905932737, abs=1e-12)

    def test_symmetric(self):
        for a, b in [(0, 30), (10, 100), (45, 67.5), (170, 5)]:
            assert click_probability(a, b) == pytest.approx(click_probability(b, a), abs=1e-15)

    def test_array_input(self):
        probs = click_probability(np.array([0.0, 45.0, 90.0]), 0.0)
        np.testing.assert_allclose(probs, [1.0, 0.5, 0.0], atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            click_probability(float("inf"), 0)

    def test_sampling_matches_probability(self):
        """10^6 sampled measurements at (0, 22.5) land within 3 sigma of cos^2(22.5)."""
        draws = np.random.default_rng(11).random(1_000_000)
        aligned = np.mean(measure_polarization(0.0, 22.5, draws) == Outcome.ALIGNED)
        p = click_probability(0, 22.5)
        assert abs(aligned - p) <= 3 * math.sqrt(p * (1 - p) / 1_000_000)


class TestMeasurePolarization:
    """Tests for measure_polarization."""

    @pytest.mark.parametrize("draw", [0.0, 0.3, 0.999999])
    def test_parallel_always_aligned(self, draw):
        assert measure_polarization(0, 0, draw) is Outcome.ALIGNED

    @pytest.mark.parametrize("draw", [0.0, 0.3, 0.999999])
    def test_orthogonal_never_aligned(self, draw):
        assert measure_polarization(0, 90, draw) is Outcome.ORTHOGONAL

    def test_half_threshold(self):
        assert measure_polarization(45, 0, 0.3) is Outcome.ALIGNED
        assert measure_polarization(45, 0, 0.7) is Outcome.ORTHOGONAL

    @pytest.mark.parametrize("draw", [-0.1, 1.0, 1.5, float("nan")])
    def test_draw_out_of_range(self, draw):
        with pytest.raises(DomainError):
            measure_polarization(0, 0, draw)

    def test_outcome_bits(self):
        assert Outcome.ALIGNED.bit == 0
        assert Outcome.ORTHOGONAL.bit == 1


class TestPhiPlus:
    """Tests for the entangled pair model."""

    @pytest.mark.parametrize(
        "a,b,expected",
        [(0, 0, 1.0), (0, 90, -1.0), (0, 22.5, math.sqrt(0.5)), (0, 67.5, -math.sqrt(0.5))],
    )
    def test_correlation(self, a, b, expected):
        assert correlation_phi_plus(a, b) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("a,b", [(0, 0), (0, 22.5), (45, 67.5), (10, 133), (45, 22.5)])
    def test_statevector_agrees_with_closed_form(self, a, b):
        assert phi_plus_correlation_statevector(a, b) == pytest.approx(correlation_phi_plus(a, b), abs=1e-12)

    def test_bell_state_vectors_normalized(self):
        assert set(BELL_STATE_VECTORS) == set(BellState)
        for vector in BELL_STATE_VECTORS.values():
            assert np.dot(vector, vector) == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "a,outcome,expected",
        [(0, Outcome.ALIGNED, 0.0), (0, Outcome.ORTHOGONAL, 90.0), (135, Outcome.ORTHOGONAL, 45.0)],
    )
    def test_collapse_partner(self, a, outcome, expected):
        assert collapse_partner(a, outcome) == expected

    def test_sampled_pairs_reproduce_correlation(self):
        """Sampled outcomes at (0, 22.5) give E = cos 45 within 3 sigma."""
        n = 400_000
        rng = np.random.default_rng(5)
        first, second = sample_pair_phi_plus(0.0, 22.5, (rng.random(n), rng.random(n)))
        estimate = np.mean(first.astype(int) * second.astype(int))
        expected = correlation_phi_plus(0, 22.5)
        assert abs(estimate - expected) <= 3 * math.sqrt((1 - expected**2) / n)

    def test_scalar_pair(self):
        first, second = sample_pair_phi_plus(0.0, 0.0, (0.2, 0.9))
        assert first is Outcome.ALIGNED
        assert second is Outcome.ALIGNED

    def test_tsirelson_bound(self):
        assert TSIRELSON_BOUND == pytest.approx(2.8284271247, abs=1e-9)
