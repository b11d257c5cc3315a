"""Deterministic, seedable simulator of the BB84, B92 and E91 QKD protocols."""

from .b92 import expected_b92, run_b92
from .bb84 import expected_bb84, run_bb84
from .config import Protocol, SessionConfig, SweepSpec
from .e91 import expected_e91, run_e91
from .errors import QkdError
from .replay import read_replay_csv, replay
from .report import emit_grid_csv, emit_summary
from .sweep import run_session, run_sweep

__all__ = [
    "Protocol",
    "QkdError",
    "SessionConfig",
    "SweepSpec",
    "emit_grid_csv",
    "emit_summary",
    "expected_b92",
    "expected_bb84",
    "expected_e91",
    "read_replay_csv",
    "replay",
    "run_b92",
    "run_bb84",
    "run_e91",
    "run_session",
    "run_sweep",
]
