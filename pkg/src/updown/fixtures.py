"""Bundled trial data used by tests, demos and the conductor's demo mode."""

from __future__ import annotations

from .designs import BoundaryPolicy, Kr, TreatmentGrid, WalkState
from .estimators import ResponseTable

# Propofol/thiopental mixture study, second stage: 32 trials of a
# 3-in-a-row design on a 10-point-percent lattice, entering at the 80%
# mixture. Responses are pain (yes) / no pain (no).
STAGE2_LEVELS = [80, 70, 70, 60, 60, 60, 70, 70, 70, 80, 80, 80, 70, 70, 70,
                 60, 60, 60, 70, 70, 60, 60, 60, 70, 70, 60, 60, 60, 70, 70,
                 70, 80]
STAGE2_RESPONSES = [True, False, True, False, False, False, False, False,
                    False, False, False, True, False, False, True, False,
                    False, False, False, True, False, False, False, False,
                    True, False, False, False, False, False, False, False]

STAGE2_GRID = TreatmentGrid.from_bounds(50.0, 100.0, 6, BoundaryPolicy.REFLECTING)
STAGE2_RULE = Kr(k=3)
STAGE2_START_INDEX = 4  # 80%


def stage2_state() -> WalkState:
    """Replay the stage-2 chain through the walk engine."""
    state = WalkState(STAGE2_GRID, STAGE2_RULE, STAGE2_START_INDEX)
    for resp in STAGE2_RESPONSES:
        state.advance(resp)
    return state


def stage2_table() -> ResponseTable:
    """The published yes/no summary (60%: 0/12, 70%: 4/11, 80%: 2/3)."""
    return ResponseTable(levels=(60.0, 70.0, 80.0), yes=(0, 4, 2), no=(12, 11, 3))
