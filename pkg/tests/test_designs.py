import math

import numpy as np
import pytest

from updown.designs import (
    Bcd,
    BoundaryPolicy,
    Gud,
    Kr,
    Orientation,
    Sud,
    TreatmentGrid,
    WalkState,
    detect_reversals,
    downshift,
    history_from_csv,
    history_to_csv,
    imputed_values,
    nth_hit,
    nth_reversal,
    target_of,
    zero_state_subchain,
)

GRID = TreatmentGrid.from_bounds(0.1, 1.0, 10)


def walk(rule, start, responses, draws=None, grid=GRID):
    st = WalkState(grid, rule, start)
    draws = draws or [None] * len(responses)
    for r, d in zip(responses, draws):
        st.advance(r, draw=d)
    return st


# -- grid --------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        TreatmentGrid((1.0,))
    with pytest.raises(ValueError):
        TreatmentGrid((1.0, 0.5))
    with pytest.raises(ValueError):
        TreatmentGrid((0.0, 1.0, 3.0))
    g = TreatmentGrid.from_bounds(0.0, 1.0, 5)
    assert g.spacing == pytest.approx(0.25)
    assert g.value(6) == pytest.approx(1.25)  # virtual indices extrapolate


def test_grid_refine_contains_old_levels():
    fine = GRID.refine()
    assert fine.spacing == pytest.approx(GRID.spacing / 2)
    for v in GRID.levels:
        assert any(abs(v - w) < 1e-12 for w in fine.levels)


# -- targets -----------------------------------------------------------------


def test_targets_closed_forms():
    assert target_of(Sud()) == 0.5
    assert target_of(Bcd(gamma=0.3)) == 0.3
    for k in (1, 2, 3, 4):
        assert target_of(Kr(k=k)) == pytest.approx(1 - 0.5 ** (1 / k), abs=1e-12)
    assert target_of(Kr(k=1)) == pytest.approx(0.5)


def test_gud_target_balances_binomial_tails():
    from scipy import stats

    for (k, a, b) in [(2, 0, 1), (3, 0, 2), (4, 1, 3), (3, 1, 2)]:
        p = target_of(Gud(k=k, a=a, b=b))
        up = stats.binom.cdf(a, k, p)
        down = stats.binom.sf(b - 1, k, p)
        assert up == pytest.approx(down, abs=1e-9)


def test_above_median_targets_mirror():
    assert target_of(Kr(k=3, orientation=Orientation.ABOVE_MEDIAN)) == pytest.approx(
        0.5 ** (1 / 3)
    )


# -- transitions -------------------------------------------------------------


def test_sud_moves():
    st = walk(Sud(), 3, [True, False, False])
    assert [r.level_index for r in st.history] == [3, 2, 3]
    assert st.next_index == 4


def test_kr_counter_rule():
    st = WalkState(GRID, Kr(k=2), 5)
    st.advance(False)
    assert st.tau == 1 and st.next_index == 5
    st.advance(False)
    assert st.tau == 0 and st.next_index == 6


def test_kr_yes_resets_counter():
    st = WalkState(GRID, Kr(k=3), 5)
    st.advance(False)
    st.advance(True)  # down, counter resets
    assert st.next_index == 4 and st.tau == 0


def test_bcd_draw_contract():
    st = WalkState(GRID, Bcd(gamma=0.3), 5)
    with pytest.raises(ValueError):
        st.advance(False)  # escalation decision needs a draw
    st.advance(False, draw=0.2)  # 0.2 < 3/7 -> up
    assert st.next_index == 6
    st.advance(False, draw=0.9)  # stay
    assert st.next_index == 6
    st.advance(True)  # down needs no draw
    assert st.next_index == 5


def test_gud_cohort_boundaries():
    st = WalkState(GRID, Gud(k=3, a=0, b=2), 5)
    st.advance(False)
    st.advance(True)
    assert st.next_index == 5  # mid-cohort: no decision yet
    st.advance(True)  # cohort (0,1,1): two yes -> down
    assert st.next_index == 4
    for resp in (False, False, False):  # all-no cohort -> up
        st.advance(resp)
    assert st.next_index == 5
    st.advance(True)
    st.advance(False)
    st.advance(False)  # one yes -> stay
    assert st.next_index == 5


def test_gud_cohort_level_constant_within_cohort():
    st = WalkState(GRID, Gud(k=3, a=0, b=1), 5)
    rng = np.random.default_rng(3)
    for _ in range(30):
        st.advance(bool(rng.random() < 0.4))
    levels = [r.level_index for r in st.history]
    for c in range(0, 30, 3):
        assert len(set(levels[c : c + 3])) == 1


def test_reflecting_clamp_bottom():
    st = walk(Sud(), 1, [True, True])
    assert [r.level_index for r in st.history] == [1, 1]
    assert st.next_index == 1
    assert [r.blocked for r in st.history] == [-1, -1]


def test_layover_virtual_bookkeeping():
    grid = TreatmentGrid.from_bounds(0.1, 1.0, 10, BoundaryPolicy.LAYOVER)
    st = WalkState(grid, Kr(k=1), 10)
    st.advance(False)  # mandated up, administered top, virtual 11
    assert st.history[-1].level_index == 10
    assert st.next_virtual_index == 11
    assert st.next_index == 10
    st.advance(False)
    assert st.next_virtual_index == 12
    st.advance(True)
    st.advance(True)
    assert st.next_virtual_index == 10
    # averaging bookkeeping sees the virtual levels
    assert st.treatments(virtual=True)[1] == pytest.approx(grid.value(11))


def test_unbounded_walks_off_grid():
    grid = TreatmentGrid.from_bounds(0.1, 1.0, 3, BoundaryPolicy.UNBOUNDED)
    st = WalkState(grid, Sud(), 3)
    st.advance(False)
    assert st.next_virtual_index == 4
    assert st.next_index == 3  # administered clamps for reporting
    st.advance(False)
    assert st.next_virtual_index == 5


def test_equivalence_sud_kr1_gud101():
    rng = np.random.default_rng(11)
    responses = [bool(rng.random() < 0.5) for _ in range(60)]
    seqs = []
    for rule in (Sud(), Kr(k=1), Gud(k=1, a=0, b=1)):
        st = walk(rule, 5, responses)
        seqs.append([r.level_index for r in st.history] + [st.next_index])
    assert seqs[0] == seqs[1] == seqs[2]


def test_above_median_mirrors_below():
    rng = np.random.default_rng(21)
    responses = [bool(rng.random() < 0.5) for _ in range(50)]
    below = walk(Kr(k=2), 5, responses)
    above = walk(Kr(k=2, orientation=Orientation.ABOVE_MEDIAN), 6, [not r for r in responses])
    down_idx = [r.level_index for r in below.history]
    up_idx = [r.level_index for r in above.history]
    # mirrored responses produce the mirrored walk around the lattice center
    assert [11 - u for u in up_idx] == down_idx


def test_replay_determinism():
    rng = np.random.default_rng(5)
    responses = [bool(rng.random() < 0.4) for _ in range(80)]
    draws = [float(rng.random()) for _ in range(80)]
    st = walk(Bcd(gamma=0.25), 4, responses, draws)
    replayed = WalkState.replay(GRID, Bcd(gamma=0.25), 4, responses, draws)
    assert [r.level_index for r in replayed.history] == [r.level_index for r in st.history]
    assert replayed.next_index == st.next_index


def test_kr_counter_matches_no_streak_invariant():
    rng = np.random.default_rng(17)
    st = WalkState(GRID, Kr(k=3), 5)
    for _ in range(300):
        st.advance(bool(rng.random() < 0.3))
    streak = 0
    prev_level = None
    for rec in st.history:
        if rec.level_index != prev_level:
            streak = 0
        assert rec.tau == streak
        if rec.response or rec.blocked:
            streak = 0
        else:
            streak += 1
        prev_level = rec.level_index


# -- reversals ----------------------------------------------------------------


def test_detect_reversals_examples():
    assert detect_reversals([False, False, True, False]).positions == (3, 4)
    assert detect_reversals([True, True, True]).positions == ()
    assert detect_reversals([True, False, True, False]).positions == (2, 3, 4)
    with pytest.raises(ValueError):
        detect_reversals([])


# -- zero-state subchain -------------------------------------------------------


def test_zero_state_subchain_trace():
    # levels a,a,b,b,b,c with k=3: responses no,yes (down), no,no,no (up)
    st = walk(Kr(k=3), 5, [False, True, False, False, False, False])
    levels = [r.level_index for r in st.history]
    assert levels == [5, 5, 4, 4, 4, 5]
    assert zero_state_subchain(st) == [1, 3, 6]


def test_zero_state_k1_is_every_trial():
    st = walk(Kr(k=1), 5, [False, True, False, True])
    assert zero_state_subchain(st) == [1, 2, 3, 4]


def test_zero_state_requires_kr():
    st = walk(Sud(), 5, [False, True])
    with pytest.raises(TypeError):
        zero_state_subchain(st)


def test_zero_state_subchain_never_repeats_level():
    rng = np.random.default_rng(23)
    st = WalkState(TreatmentGrid.from_bounds(0.0, 1.0, 11, BoundaryPolicy.UNBOUNDED), Kr(k=2), 6)
    for _ in range(400):
        st.advance(bool(rng.random() < 0.35))
    sub = zero_state_subchain(st)
    values = [st.history[i - 1].virtual_index for i in sub]
    assert all(a != b for a, b in zip(values, values[1:]))


# -- downshift -----------------------------------------------------------------


def test_downshift_on_third_reversal():
    # reversals engineered at trials 4, 6, 9
    resp = [False, False, False, True, True, False, False, False, True, False]
    st = walk(Sud(), 4, resp)
    assert detect_reversals(resp).positions[:3] == (4, 6, 9)
    res = downshift(st, nth_reversal(3))
    assert res.applied and res.effective_from_trial == 10
    assert res.state.grid.spacing == pytest.approx(GRID.spacing / 2)
    old = [r.treatment for r in st.history]
    new = [res.state.grid.value(r.level_index) for r in res.state.history]
    assert new == pytest.approx(old)


def test_downshift_not_triggered_is_noop():
    st = walk(Sud(), 4, [False, False])
    res = downshift(st, nth_reversal(1))
    assert not res.applied
    assert res.state is st


def test_downshift_on_third_hit():
    # most-entered level hit for the 3rd time at trial 8 -> shift at trial 9
    resp = [True, False, True, False, True, False, True, False]
    st = walk(Sud(), 4, resp)
    res = downshift(st, nth_hit(3))
    assert res.applied
    entries = {}
    prev = None
    for r in st.history:
        if r.level_index != prev:
            entries.setdefault(r.level_index, []).append(r.trial)
        prev = r.level_index
    best = max(sorted(entries), key=lambda u: len(entries[u]))
    assert res.effective_from_trial == entries[best][2] + 1


# -- CSV round trip ------------------------------------------------------------


def test_history_csv_round_trip_bit_exact():
    rng = np.random.default_rng(31)
    responses = [bool(rng.random() < 0.4) for _ in range(40)]
    draws = [float(rng.random()) for _ in range(40)]
    st = walk(Bcd(gamma=0.2), 4, responses, draws)
    text = history_to_csv(st)
    back = history_from_csv(text, GRID, Bcd(gamma=0.2))
    assert history_to_csv(back) == text
    assert back.next_index == st.next_index


def test_history_csv_round_trip_layover():
    grid = TreatmentGrid.from_bounds(0.1, 1.0, 5, BoundaryPolicy.LAYOVER)
    st = WalkState(grid, Kr(k=2), 5)
    for r in [False, False, False, False, True, True]:
        st.advance(r)
    text = history_to_csv(st)
    back = history_from_csv(text, grid, Kr(k=2))
    assert history_to_csv(back) == text
    assert back.next_virtual_index == st.next_virtual_index


# -- imputation ----------------------------------------------------------------


def test_imputed_values_sud_top_block():
    st = walk(Sud(), 10, [False])
    vals = imputed_values(st)
    assert vals == pytest.approx([GRID.value(10), GRID.value(11)])


def test_imputed_values_kr_bottom_block():
    st = walk(Kr(k=3), 1, [True])
    vals = imputed_values(st)
    assert vals == pytest.approx([GRID.value(1)] + [GRID.value(0)] * 3)


def test_imputed_values_no_contact():
    st = walk(Sud(), 5, [True, False, True])
    assert imputed_values(st) == pytest.approx(st.treatments())


def test_log_spaced_grid():
    import math

    g = TreatmentGrid.log_spaced(0.1, 10.0, 5)
    assert g.levels[0] == pytest.approx(math.log(0.1))
    assert g.levels[-1] == pytest.approx(math.log(10.0))
    assert g.spacing == pytest.approx((math.log(10.0) - math.log(0.1)) / 4)
    with pytest.raises(ValueError):
        TreatmentGrid.log_spaced(0.0, 1.0, 4)


def test_log_ratio_spaced_grid():
    import math

    g = TreatmentGrid.log_ratio_spaced(0.1, 0.9, 9)
    logit = lambda p: math.log(p / (1 - p))  # noqa: E731
    assert g.levels[0] == pytest.approx(logit(0.1))
    assert g.levels[-1] == pytest.approx(logit(0.9))
    with pytest.raises(ValueError):
        TreatmentGrid.log_ratio_spaced(0.2, 1.0, 4)
