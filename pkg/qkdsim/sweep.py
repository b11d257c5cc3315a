"""
Parameter sweeps over a noise x eve lattice, by Monte Carlo or by the exact
enumeration oracles.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .b92 import B92Session, expected_b92, run_b92
from .bb84 import Bb84Session, expected_bb84, run_bb84
from .config import Protocol, SessionConfig, SweepMode, SweepSpec
from .e91 import E91Session, expected_e91, run_e91, security_decision
from .errors import DomainError
from .metrics import ExpectedStats, RiskTier, SecurityDecision, SessionSummary, classify_percent

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
MAX_AXIS_LENGTH = 1 << 32

Session = Union[Bb84Session, B92Session, E91Session]

RUNNERS = {
    Protocol.BB84: run_bb84,
    Protocol.B92: run_b92,
    Protocol.E91: run_e91,
}


def run_session(config: SessionConfig) -> Session:
    """Run one session of whichever protocol `config` names, seeded from config.seed."""
    return RUNNERS[config.protocol](config)


def derive_cell_seed(base_seed: int, row: int, col: int) -> int:
    """
    splitmix64 finalizer over base_seed ^ (row << 32 | col). The finalizer is a
    bijection on 64-bit words, so cells of one grid never share a seed.
    """
    if not (0 <= row < MAX_AXIS_LENGTH and 0 <= col < MAX_AXIS_LENGTH):
        raise DomainError(f"cell index ({row}, {col}) out of range")
    z = (base_seed ^ ((row << 32) | col)) & MASK64
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class GridCell:
    noise_p: float
    eve_p: float
    qber: float
    rate: float
    s: Optional[float]
    risk: RiskTier
    decision: Optional[SecurityDecision]

    @classmethod
    def from_summary(cls, summary: SessionSummary) -> "GridCell":
        rate = summary.conclusive_rate if summary.protocol is Protocol.B92 else summary.sifted_rate
        return cls(
            noise_p=summary.noise_p,
            eve_p=summary.eve_p,
            qber=summary.qber.fraction,
            rate=rate,
            s=summary.chsh_s,
            risk=summary.risk,
            decision=summary.decision,
        )


@dataclass(frozen=True)
class SweepGrid:
    """Cells in row-major order: noise major, eve minor."""

    spec: SweepSpec
    cells: Tuple[GridCell, ...]

    def cell(self, row: int, col: int) -> GridCell:
        return self.cells[row * len(self.spec.eve_axis) + col]

    def column(self, attribute: str) -> Tuple:
        return tuple(getattr(c, attribute) for c in self.cells)


def expected_stats(spec: SweepSpec, noise_p: float, eve_p: float) -> ExpectedStats:
    if spec.protocol is Protocol.BB84:
        return expected_bb84(noise_p, eve_p)
    if spec.protocol is Protocol.B92:
        return expected_b92(noise_p, eve_p)
    return expected_e91(
        noise_p,
        eve_p,
        spec.eve_mode,
        spec.eve_angles,
        spec.bell_ratio,
        spec.allocation_mode,
    )


def _oracle_cell(spec: SweepSpec, noise_p: float, eve_p: float) -> GridCell:
    stats = expected_stats(spec, noise_p, eve_p)
    risk = classify_percent(100 * stats.qber, stats.s, spec.chsh_mid, spec.chsh_high)
    decision = None
    if spec.protocol is Protocol.E91:
        decision = security_decision(stats.s, min(max(stats.qber, 0.0), 1.0), spec.qber_threshold)
    rate = stats.conclusive_rate if spec.protocol is Protocol.B92 else stats.sifted_rate
    return GridCell(noise_p, eve_p, stats.qber, rate, stats.s, risk, decision)


def evaluate_cell(spec: SweepSpec, row: int, col: int) -> GridCell:
    noise_p, eve_p = spec.noise_axis[row], spec.eve_axis[col]
    if spec.mode is SweepMode.ORACLE:
        return _oracle_cell(spec, noise_p, eve_p)
    seed = derive_cell_seed(spec.base_seed, row, col)
    logger.debug("cell (%d, %d): noise=%s eve=%s seed=%d", row, col, noise_p, eve_p, seed)
    return GridCell.from_summary(run_session(spec.cell_config(noise_p, eve_p, seed)).summary())


def _evaluate(args: Tuple[SweepSpec, int, int]) -> GridCell:
    return evaluate_cell(*args)


def run_sweep(spec: SweepSpec) -> SweepGrid:
    indices = list(itertools.product(range(len(spec.noise_axis)), range(len(spec.eve_axis))))
    logger.info(
        "Sweep: %s %s, %d x %d cells, workers=%d",
        spec.protocol.value,
        spec.mode.value,
        len(spec.noise_axis),
        len(spec.eve_axis),
        spec.workers,
    )
    tasks = [(spec, row, col) for row, col in indices]
    if spec.workers > 1 and spec.mode is SweepMode.MONTE_CARLO and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as executor:
            cells = tuple(executor.map(_evaluate, tasks))
    else:
        cells = tuple(_evaluate(task) for task in tasks)
    logger.info("Sweep done: %d cells", len(cells))
    return SweepGrid(spec=spec, cells=cells)
