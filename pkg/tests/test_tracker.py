from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reference import tracker_reference
from wifiloc.tracker import TrackerConfig, TrackerState, reset_session, update

A, B, C = 1, 2, 3


def run(estimates, state=None, config=TrackerConfig()):
    state = state or TrackerState()
    out = []
    for e in estimates:
        state, changed, first = update(state, e, config)
        out.append((state.current, changed, first))
    return state, out


def all_sequences(max_len, alphabet=(A, B, C)):
    for n in range(1, max_len + 1):
        yield from product(alphabet, repeat=n)


def test_change_after_three():
    state, out = run([B, B, B], TrackerState(current=A, visited=frozenset({A})))
    assert [o[1] for o in out] == [False, False, True]
    assert state.current == B


def test_interrupted_streak_starts_over():
    state, out = run([B, B, A, B, B, B], TrackerState(current=A, visited=frozenset({A})))
    assert [o[1] for o in out] == [False] * 5 + [True]
    assert [o[0] for o in out] == [A] * 5 + [B]


def test_cold_start():
    state, out = run([C, C, C])
    assert out[-1] == (C, True, True)
    assert out[0] == (None, False, False)
    assert state.visited == {C}


def test_play_once_per_session():
    _, out = run([A, A, A, B, B, B, A, A, A])
    assert [(o[1], o[2]) for o in out if o[1]] == [(True, True), (True, True), (True, False)]
    _, out = run([A, A, A, B, B, B, A, A, A], config=TrackerConfig(play_once_per_session=False))
    assert [o[2] for o in out if o[1]] == [True, True, True]


def test_reset_session():
    state, _ = run([A, A, A, B, B])
    assert reset_session(state) == TrackerState()
    assert reset_session(reset_session(state)) == reset_session(state)
    _, out = run([A, A, A], reset_session(state))
    assert out[-1] == (A, True, True)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(required_streak=0)


@pytest.mark.parametrize("play_once", [True, False])
def test_matches_reference_exhaustively(play_once):
    config = TrackerConfig(play_once_per_session=play_once)
    count = 0
    for seq in all_sequences(8):
        _, out = run(seq, config=config)
        assert out == tracker_reference(list(seq), 3, play_once), seq
        count += 1
    assert count == sum(3 ** n for n in range(1, 9))


@pytest.mark.parametrize("required", [1, 2, 4])
def test_other_streak_lengths_match_reference(required):
    config = TrackerConfig(required_streak=required)
    for seq in all_sequences(7):
        _, out = run(seq, config=config)
        assert out == tracker_reference(list(seq), required), seq


@given(st.lists(st.integers(1, 4), max_size=60))
def test_state_invariants(seq):
    state = TrackerState()
    firsts = []
    for e in seq:
        before = state
        state, changed, first = update(state, e)
        # pure transition
        assert update(before, e) == (state, changed, first)
        assert 0 <= state.streak <= 3
        if state.streak > 0:
            assert state.candidate != state.current
        if first:
            firsts.append(state.current)
        assert changed or state.current == before.current
        if state.current is not None:
            assert state.current in state.visited
    assert len(firsts) == len(set(firsts))
