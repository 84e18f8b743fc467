"""
Per-session smoothing of location estimates.

The displayed area changes only after the same new estimate arrives
``required_streak`` times in a row (three by default).  An estimate equal to
the current area cancels any pending candidate.  The first streak of a fresh
session sets the initial area.  ``visited`` records the areas entered during
the session so content is only played on the first visit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class TrackerConfig:
    required_streak: int = 3
    play_once_per_session: bool = True

    def __post_init__(self):
        if self.required_streak < 1:
            raise ValueError("required_streak must be at least 1")


@dataclass(frozen=True)
class TrackerState:
    current: int | None = None
    candidate: int | None = None
    streak: int = 0
    visited: frozenset[int] = field(default_factory=frozenset)


def update(state: TrackerState, estimate: int,
           config: TrackerConfig = TrackerConfig()) -> tuple[TrackerState, bool, bool]:
    """Feed one estimate; returns ``(new_state, changed, first_visit)``."""
    if estimate == state.current:
        return replace(state, candidate=None, streak=0), False, False
    streak = state.streak + 1 if estimate == state.candidate else 1
    if streak < config.required_streak:
        return replace(state, candidate=estimate, streak=streak), False, False
    first = estimate not in state.visited or not config.play_once_per_session
    new = TrackerState(current=estimate, candidate=None, streak=0,
                       visited=state.visited | {estimate})
    return new, True, first


def reset_session(state: TrackerState | None = None) -> TrackerState:
    return TrackerState()
