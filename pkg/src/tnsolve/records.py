"""Shared trace record for the iterative solvers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TraceEntry:
    """One recorded solver update.

    stage: greedy addend number (0 for single-stage methods)
    sweep: sweep/pass number within the stage
    mode:  mode or site index that was updated
    energy: Rayleigh quotient after the update
    flops: cumulative contraction operations at record time (0 if untallied)
    note:  optional event marker (e.g. restarts)
    """

    stage: int
    sweep: int
    mode: int
    energy: float
    flops: int = 0
    note: str = ""
