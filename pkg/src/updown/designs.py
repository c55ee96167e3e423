"""Up-and-down walk engines: SU&D, BCD, k-in-a-row, group U&D.

The walk is a pure deterministic state machine: randomization draws (BCD)
are injected inputs, never generated internally, so any recorded
(response, draw) stream replays to the identical level sequence.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum

from scipy import stats


class BoundaryPolicy(Enum):
    REFLECTING = "reflecting"
    LAYOVER = "layover"
    UNBOUNDED = "unbounded"


class Orientation(Enum):
    BELOW_MEDIAN = "below"
    ABOVE_MEDIAN = "above"


@dataclass(frozen=True)
class TreatmentGrid:
    """Evenly spaced treatment lattice l_1..l_m with a boundary policy."""

    levels: tuple[float, ...]
    boundary: BoundaryPolicy = BoundaryPolicy.REFLECTING

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ValueError("grid needs at least 2 levels")
        diffs = [b - a for a, b in zip(levels, levels[1:])]
        if any(d <= 0 for d in diffs):
            raise ValueError("levels must be strictly increasing")
        s = diffs[0]
        if any(abs(d - s) > 1e-9 * max(1.0, abs(s)) for d in diffs):
            raise ValueError("levels must be evenly spaced")

    @classmethod
    def from_bounds(cls, lo, hi, m, boundary=BoundaryPolicy.REFLECTING):
        s = (hi - lo) / (m - 1)
        return cls(tuple(lo + i * s for i in range(m)), boundary)

    @classmethod
    def log_spaced(cls, lo, hi, m, boundary=BoundaryPolicy.REFLECTING):
        """Even spacing on the log scale: the walk operates on log-dose.

        Levels are log(dose); exponentiate for administration. Keeping the
        lattice even on the transformed scale is what lets positive
        treatments avoid a hard boundary at zero.
        """
        import math

        if lo <= 0 or hi <= lo:
            raise ValueError("log spacing needs 0 < lo < hi")
        return cls.from_bounds(math.log(lo), math.log(hi), m, boundary)

    @classmethod
    def log_ratio_spaced(cls, lo, hi, m, boundary=BoundaryPolicy.REFLECTING):
        """Even spacing on the log-odds scale for proportion treatments."""
        import math

        if not 0 < lo < hi < 1:
            raise ValueError("log-ratio spacing needs 0 < lo < hi < 1")
        f = lambda p: math.log(p / (1.0 - p))  # noqa: E731
        return cls.from_bounds(f(lo), f(hi), m, boundary)

    @property
    def m(self):
        return len(self.levels)

    @property
    def spacing(self):
        return self.levels[1] - self.levels[0]

    def value(self, index):
        """Treatment value at a (possibly virtual) 1-based level index."""
        return self.levels[0] + (index - 1) * self.spacing

    def clamp(self, index):
        return min(max(index, 1), self.m)

    def refine(self):
        """Halved-spacing grid containing every current level."""
        s = self.spacing / 2.0
        n = 2 * self.m - 1
        return TreatmentGrid(tuple(self.levels[0] + i * s for i in range(n)), self.boundary)


# ---------------------------------------------------------------------------
# Design rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignRule:
    orientation: Orientation = Orientation.BELOW_MEDIAN

    def target(self):
        p = self._target_below()
        if self.orientation is Orientation.ABOVE_MEDIAN:
            return 1.0 - p
        return p

    @property
    def cohort(self):
        return 1

    # trials a forced visit just beyond the lattice would consume, assuming
    # F=1 above and F=0 below; used by the boundary-imputation estimator fix
    def virtual_trials_above(self):
        return 1

    def virtual_trials_below(self):
        return 1


@dataclass(frozen=True)
class Sud(DesignRule):
    """Simple (median-targeting) up-and-down: yes -> down, no -> up."""

    def _target_below(self):
        return 0.5

    def __str__(self):
        return "SU&D"


@dataclass(frozen=True)
class Bcd(DesignRule):
    """Biased-coin design: yes -> down; no -> up with probability G/(1-G)."""

    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError("BCD gamma must lie in (0, 0.5]")

    @property
    def up_coin(self):
        return self.gamma / (1.0 - self.gamma)

    def _target_below(self):
        return self.gamma

    def __str__(self):
        return f"BCD({self.gamma:g})"


@dataclass(frozen=True)
class Kr(DesignRule):
    """k-in-a-row: yes -> down immediately; k consecutive no's -> up."""

    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("KR requires k >= 1")

    def _target_below(self):
        return 1.0 - 0.5 ** (1.0 / self.k)

    def virtual_trials_below(self):
        # escaping l_0 upward takes k straight no's
        return self.k

    def __str__(self):
        return f"KR({self.k})"


@dataclass(frozen=True)
class Gud(DesignRule):
    """Group U&D with cohort size k: up if yes-count <= a, down if >= b."""

    k: int = 1
    a: int = 0
    b: int = 1

    def __post_init__(self):
        if self.k < 1 or not (0 <= self.a < self.b <= self.k):
            raise ValueError("GU&D requires k >= 1 and 0 <= a < b <= k")

    @property
    def cohort(self):
        return self.k

    def _target_below(self):
        # root of Pr(Y <= a) = Pr(Y >= b), Y ~ Bin(k, p); bisection on (0,1)
        def balance(p):
            return stats.binom.cdf(self.a, self.k, p) - stats.binom.sf(self.b - 1, self.k, p)

        lo, hi = 1e-12, 1.0 - 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if balance(mid) > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def virtual_trials_above(self):
        # a whole cohort would be administered beyond the boundary
        return self.k

    def virtual_trials_below(self):
        return self.k

    def __str__(self):
        return f"GU&D({self.k},{self.a},{self.b})"


def target_of(rule: DesignRule) -> float:
    """Target response rate p: the F value where stationary up/down balance."""
    return rule.target()


# ---------------------------------------------------------------------------
# Walk state
# ---------------------------------------------------------------------------


@dataclass
class TrialRecord:
    trial: int  # 1-based
    level_index: int  # administered, 1-based on the current grid
    treatment: float
    response: bool
    virtual_index: int  # layover bookkeeping; == level_index otherwise
    tau: int  # KR internal state at this trial (0 for other rules)
    draw: float | None = None  # BCD randomization input, if consumed
    blocked: int = 0  # direction clamped by the boundary after this trial


@dataclass
class WalkState:
    """Full sequential-experiment state; replaying history reproduces it."""

    grid: TreatmentGrid
    rule: DesignRule
    start_index: int
    history: list[TrialRecord] = field(default_factory=list)
    tau: int = 0  # KR counter for the *next* trial
    cohort_buffer: list[bool] = field(default_factory=list)
    _virtual: int = 0  # virtual index of the next trial
    _pending_blocked: int = 0

    def __post_init__(self):
        if not 1 <= self.start_index <= self.grid.m:
            raise ValueError("start level outside grid")
        if self._virtual == 0:
            self._virtual = self.start_index

    # -- inspection --------------------------------------------------------

    @property
    def n(self):
        return len(self.history)

    @property
    def next_virtual_index(self):
        return self._virtual

    @property
    def next_index(self):
        """Administered level index recommended for the next trial."""
        return self.grid.clamp(self._virtual)

    @property
    def next_treatment(self):
        return self.grid.value(self.next_index)

    def treatments(self, virtual=False):
        if virtual:
            return [self.grid.value(r.virtual_index) for r in self.history]
        return [r.treatment for r in self.history]

    def responses(self):
        return [r.response for r in self.history]

    def copy(self):
        return WalkState(
            grid=self.grid,
            rule=self.rule,
            start_index=self.start_index,
            history=[replace(r) for r in self.history],
            tau=self.tau,
            cohort_buffer=list(self.cohort_buffer),
            _virtual=self._virtual,
            _pending_blocked=self._pending_blocked,
        )

    # -- transition --------------------------------------------------------

    def advance(self, response, draw=None, forced_index=None):
        """Record one response at the recommended level and step the walk.

        ``forced_index`` is the protocol-deviation escape hatch: the response
        was observed at that administered level instead of the recommendation,
        and the walk re-derives its state from there.
        Returns the next recommended (administered) level index.
        """
        response = bool(response)
        if forced_index is not None:
            if not 1 <= forced_index <= self.grid.m:
                raise ValueError("forced level outside grid")
            self._virtual = forced_index
            self.tau = 0
            self.cohort_buffer.clear()
        admin = self.grid.clamp(self._virtual)
        virtual = self._virtual
        tau_now = self.tau

        eff = response if self.rule.orientation is Orientation.BELOW_MEDIAN else not response
        direction, consumed_draw, next_tau = self._decide(eff, draw)
        if self.rule.orientation is Orientation.ABOVE_MEDIAN:
            direction = -direction

        rec = TrialRecord(
            trial=self.n + 1,
            level_index=admin,
            treatment=self.grid.value(admin),
            response=response,
            virtual_index=virtual,
            tau=tau_now,
            draw=consumed_draw,
        )
        self.history.append(rec)

        self._apply_move(direction, rec)
        self.tau = 0 if rec.blocked or direction != 0 else next_tau
        return self.next_index

    def _decide(self, eff_response, draw):
        """Below-median transition decision: (direction, draw_used, next_tau)."""
        rule = self.rule
        if isinstance(rule, Sud):
            return (-1 if eff_response else 1), None, 0
        if isinstance(rule, Bcd):
            if eff_response:
                return -1, None, 0
            if draw is None:
                raise ValueError("BCD requires a randomization draw for an escalation decision")
            return (1 if draw < rule.up_coin else 0), float(draw), 0
        if isinstance(rule, Kr):
            if eff_response:
                return -1, None, 0
            if self.tau == rule.k - 1:
                return 1, None, 0
            return 0, None, self.tau + 1
        if isinstance(rule, Gud):
            self.cohort_buffer.append(eff_response)
            if len(self.cohort_buffer) < rule.k:
                return 0, None, 0
            yes = sum(self.cohort_buffer)
            self.cohort_buffer.clear()
            if yes <= rule.a:
                return 1, None, 0
            if yes >= rule.b:
                return -1, None, 0
            return 0, None, 0
        raise TypeError(f"unsupported rule {rule!r}")

    def _apply_move(self, direction, rec):
        target = self._virtual + direction
        if self.grid.boundary is BoundaryPolicy.UNBOUNDED:
            self._virtual = target
            return
        if self.grid.boundary is BoundaryPolicy.LAYOVER:
            # bookkeeping continues beyond the boundary; administration clamps
            self._virtual = target
            return
        # reflecting: clamp, and note the blocked mandate for imputation
        if target < 1 or target > self.grid.m:
            rec.blocked = direction
            self._virtual = self.grid.clamp(target)
        else:
            self._virtual = target

    # -- replay ------------------------------------------------------------

    @classmethod
    def replay(cls, grid, rule, start_index, responses, draws=None, forced=None):
        """Re-run a recorded (response, draw) stream; deterministic."""
        state = cls(grid=grid, rule=rule, start_index=start_index)
        draws = draws or [None] * len(responses)
        forced = forced or [None] * len(responses)
        for resp, draw, force in zip(responses, draws, forced):
            state.advance(resp, draw=draw, forced_index=force)
        return state


# ---------------------------------------------------------------------------
# Reversals, subchains, down-shift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReversalIndex:
    positions: tuple[int, ...]  # 1-based trial indices with y_i != y_{i-1}

    @property
    def count(self):
        return len(self.positions)


def detect_reversals(responses) -> ReversalIndex:
    """Trial indices i >= 2 whose response differs from the previous one."""
    responses = [bool(r) for r in responses]
    if not responses:
        raise ValueError("history is empty")
    pos = tuple(
        i + 1 for i in range(1, len(responses)) if responses[i] != responses[i - 1]
    )
    return ReversalIndex(pos)


def zero_state_subchain(state: WalkState) -> list[int]:
    """1-based indices of KR base-state trials (first trial of each sojourn)."""
    if not isinstance(state.rule, Kr):
        raise TypeError("zero-state subchain is defined for KR rules only")
    return [r.trial for r in state.history if r.tau == 0]


@dataclass(frozen=True)
class DownshiftTrigger:
    kind: str  # "reversal" or "hit"
    j: int


def nth_reversal(j):
    return DownshiftTrigger("reversal", j)


def nth_hit(j):
    return DownshiftTrigger("hit", j)


@dataclass
class DownshiftResult:
    applied: bool
    state: WalkState
    effective_from_trial: int | None = None


def downshift(state: WalkState, trigger: DownshiftTrigger) -> DownshiftResult:
    """Halve the grid spacing once the trigger has fired.

    Prior history is re-indexed onto the refined grid (old level u becomes
    2u-1), so estimators consume the combined history transparently. The
    design rule itself (including any streak length k) is held fixed across
    the shift.
    """
    at = _trigger_trial(state, trigger)
    if at is None:
        return DownshiftResult(applied=False, state=state)
    new_grid = state.grid.refine()
    new_hist = []
    for r in state.history:
        new_hist.append(
            replace(
                r,
                level_index=2 * r.level_index - 1,
                virtual_index=2 * r.virtual_index - 1,
            )
        )
    new_state = WalkState(
        grid=new_grid,
        rule=state.rule,
        start_index=2 * state.start_index - 1,
        history=new_hist,
        tau=state.tau,
        cohort_buffer=list(state.cohort_buffer),
        _virtual=2 * state._virtual - 1,
    )
    return DownshiftResult(applied=True, state=new_state, effective_from_trial=at + 1)


def _trigger_trial(state, trigger):
    if trigger.kind == "reversal":
        rev = detect_reversals(state.responses())
        if rev.count < trigger.j:
            return None
        return rev.positions[trigger.j - 1]
    if trigger.kind == "hit":
        # hits = sojourn entries; the trigger is the j-th entry to the level
        # currently entered most often (ties resolved toward the lower level)
        entries = {}
        prev = None
        for r in state.history:
            if r.level_index != prev:
                entries.setdefault(r.level_index, []).append(r.trial)
            prev = r.level_index
        if not entries:
            return None
        best = max(sorted(entries), key=lambda u: len(entries[u]))
        if len(entries[best]) < trigger.j:
            return None
        return entries[best][trigger.j - 1]
    raise ValueError(f"unknown trigger {trigger.kind!r}")


# ---------------------------------------------------------------------------
# History CSV round trip
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ["trial", "level_index", "treatment", "response", "draw", "tau", "virtual_level"]


def history_to_csv(state: WalkState) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(_CSV_COLUMNS)
    for r in state.history:
        w.writerow(
            [
                r.trial,
                r.level_index,
                repr(r.treatment),
                "yes" if r.response else "no",
                "" if r.draw is None else repr(r.draw),
                r.tau,
                r.virtual_index,
            ]
        )
    return out.getvalue()


def history_from_csv(text, grid, rule, start_index=None) -> WalkState:
    """Rebuild a WalkState by replaying a history CSV; bit-exact round trip.

    Recorded levels that disagree with the engine's recommendation (protocol
    deviations) are replayed as forced allocations.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0] != _CSV_COLUMNS:
        raise ValueError("unrecognized history CSV header")
    state = None
    for row in rows[1:]:
        level_index = int(row[1])
        if state is None:
            state = WalkState(grid, rule, start_index or level_index)
        draw = float(row[4]) if row[4] else None
        force = level_index if level_index != state.next_index else None
        state.advance(row[3] == "yes", draw=draw, forced_index=force)
    if state is None:
        if start_index is None:
            raise ValueError("empty history needs an explicit start level")
        state = WalkState(grid, rule, start_index)
    return state


# ---------------------------------------------------------------------------
# Boundary imputation (consumed by averaging estimators)
# ---------------------------------------------------------------------------


def imputed_values(state: WalkState) -> list[float]:
    """Treatment chain plus virtual boundary entries for averaging.

    Each blocked up-move appends forced_up/down_trials copies of the
    just-off-grid value; equivalent to assuming F=1 above and F=0 below
    the lattice. Reflecting-boundary histories only.
    """
    s = state.grid.spacing
    lo = state.grid.levels[0] - s
    hi = state.grid.levels[-1] + s
    out = []
    for r in state.history:
        out.append(r.treatment)
        if r.blocked > 0:
            out.extend([hi] * state.rule.virtual_trials_above())
        elif r.blocked < 0:
            out.extend([lo] * state.rule.virtual_trials_below())
    return out
