"""Seeded ensemble simulation and metric aggregation.

Each run draws its own threshold stream and (where applicable) a separate
design-randomization stream, both derived deterministically from the master
seed and the run index, so policies are comparable on identical thresholds
and every metric reproduces bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bayes import (
    CBud,
    CcdBud,
    CrmModel,
    PosteriorSummary,
    QuadConfig,
    RBud,
    bud_allocate,
    ccd_allocate,
    crm_allocate,
    posterior_summary,
)
from .designs import Bcd, DesignRule, TreatmentGrid, WalkState, target_of
from .dist import ThresholdModel
from .estimators import (
    AllFromReversal,
    AutoDetect,
    EstimateWithCI,
    GeomWeighted,
    ResponseTable,
    ReversalOnly,
    Wbar,
    averaging_estimate,
    cir_confidence,
    tabulate,
)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrmPolicy:
    model: CrmModel
    p: float
    rule: str = "closest-response"
    constrained: bool = True
    alpha: float = 0.25
    center: str = "mean"
    quad: QuadConfig = QuadConfig()


@dataclass(frozen=True)
class CcdPolicy:
    p: float
    window: tuple[float, float] | None = None  # None uses the standard lookup


@dataclass(frozen=True)
class BudPolicy:
    ud_rule: DesignRule
    hybrid: CBud | RBud | CcdBud
    model: CrmModel | None = None  # C-BUD / R-BUD need a posterior model
    p: float | None = None
    crm_rule: str = "closest-treatment"
    center: str = "median"  # posterior-median geometry per the hybrid scheme
    quad: QuadConfig = QuadConfig()

    def target(self):
        return self.p if self.p is not None else target_of(self.ud_rule)


Policy = DesignRule | CrmPolicy | CcdPolicy | BudPolicy


def policy_target(policy: Policy) -> float:
    if isinstance(policy, DesignRule):
        return target_of(policy)
    if isinstance(policy, BudPolicy):
        return policy.target()
    return policy.p


@dataclass(frozen=True)
class Scenario:
    model: ThresholdModel
    grid: TreatmentGrid
    policy: Policy
    n: int
    start_index: int
    N: int = 1
    seed: int = 0

    def true_qp(self):
        return float(self.model.quantile(policy_target(self.policy)))

    def optimal_index(self):
        F = self.model.cdf(np.asarray(self.grid.levels))
        return int(np.argmin(np.abs(F - policy_target(self.policy)))) + 1


@dataclass
class RunResult:
    treatments: list[float]
    responses: list[bool]
    level_indices: list[int]
    state: WalkState | None  # present when an up-and-down walk underlies
    final_recommendation: int


def _rng(seed, run_index, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run_index), stream]))


def _counts_to_table(grid, yes, tot):
    keep = [i for i in range(len(tot)) if tot[i] > 0]
    return ResponseTable(
        levels=tuple(grid.levels[i] for i in keep),
        yes=tuple(int(yes[i]) for i in keep),
        no=tuple(int(tot[i] - yes[i]) for i in keep),
    )


class PolicyDriver:
    """Step-wise allocation engine shared by the simulation lab and the
    trial-conduct service; one instance runs one experiment."""

    def __init__(self, grid: TreatmentGrid, policy: Policy, start_index: int,
                 design_rng=None):
        self.grid = grid
        self.policy = policy
        self.rng = design_rng if design_rng is not None else np.random.default_rng(0)
        self.alloc = start_index
        self.treatments: list[float] = []
        self.responses: list[bool] = []
        self.level_indices: list[int] = []
        self.draws: list[float | None] = []
        self.overrides: list[bool] = []  # hybrid: was the walk overridden?
        self.yes = np.zeros(grid.m)
        self.tot = np.zeros(grid.m)
        self.state: WalkState | None = None
        if isinstance(policy, DesignRule):
            self.state = WalkState(grid, policy, start_index)
        elif isinstance(policy, BudPolicy):
            self.state = WalkState(grid, policy.ud_rule, start_index)
        elif not isinstance(policy, (CrmPolicy, CcdPolicy)):
            raise TypeError(f"unknown policy {policy!r}")

    @property
    def n(self):
        return len(self.responses)

    @property
    def recommendation(self):
        return self.alloc

    def table(self) -> ResponseTable:
        return _counts_to_table(self.grid, self.yes, self.tot)

    def copy(self):
        import copy as _copy

        clone = object.__new__(PolicyDriver)
        clone.grid = self.grid
        clone.policy = self.policy
        clone.rng = _copy.deepcopy(self.rng)
        clone.alloc = self.alloc
        clone.treatments = list(self.treatments)
        clone.responses = list(self.responses)
        clone.level_indices = list(self.level_indices)
        clone.draws = list(self.draws)
        clone.overrides = list(self.overrides)
        clone.yes = self.yes.copy()
        clone.tot = self.tot.copy()
        clone.state = self.state.copy() if self.state is not None else None
        return clone

    def record(self, response, forced_index=None):
        """Apply one response at the recommendation (or a forced deviation
        level) and compute the next allocation. Returns it."""
        response = bool(response)
        if forced_index is not None:
            self.alloc = int(forced_index)
        at = self.alloc
        x = self.grid.value(at)
        self.treatments.append(x)
        self.responses.append(response)
        self.level_indices.append(at)
        self.yes[at - 1] += response
        self.tot[at - 1] += 1

        policy = self.policy
        if isinstance(policy, DesignRule):
            draw = None
            if isinstance(policy, Bcd):
                draw = float(self.rng.random())
            force = at if at != self.state.next_index else None
            self.alloc = self.state.advance(response, draw=draw, forced_index=force)
            self.draws.append(self.state.history[-1].draw)
            self.overrides.append(False)
            return self.alloc

        if isinstance(policy, CrmPolicy):
            summary = posterior_summary(policy.model, self.table(), policy.p, policy.quad)
            self.alloc = crm_allocate(
                summary, policy.rule, self.grid, current_index=at,
                constrained=policy.constrained, alpha=policy.alpha,
                center=policy.center,
            )
            self.draws.append(None)
            self.overrides.append(False)
            return self.alloc

        if isinstance(policy, CcdPolicy):
            self.alloc = ccd_allocate(self.table(), at, policy.p, self.grid, policy.window)
            self.draws.append(None)
            self.overrides.append(False)
            return self.alloc

        # hybrid
        p = policy.target()
        draw = float(self.rng.random()) if isinstance(policy.ud_rule, Bcd) else None
        force = at if at != self.state.next_index else None
        self.state.advance(response, draw=draw, forced_index=force)
        self.draws.append(self.state.history[-1].draw)
        ud_choice = self.state.next_index
        table = self.table()
        hybrid = policy.hybrid
        if self.state.n < hybrid.cutoff:
            self.alloc = ud_choice
        elif isinstance(hybrid, CcdBud):
            bayes_choice = ccd_allocate(table, at, p, self.grid)
            self.alloc = bud_allocate(self.state, ud_choice, bayes_choice, hybrid, table=table)
        else:
            cache = {}

            def summary():
                if "s" not in cache:
                    cache["s"] = posterior_summary(policy.model, table, p, policy.quad)
                return cache["s"]

            bayes_choice = crm_allocate(
                summary(), policy.crm_rule, self.grid,
                current_index=at, constrained=True, center=policy.center,
            )
            rdraw = float(self.rng.random()) if isinstance(hybrid, RBud) else None
            self.alloc = bud_allocate(
                self.state, ud_choice, bayes_choice, hybrid,
                posterior=summary, draw=rdraw,
            )
        self.overrides.append(self.alloc != ud_choice)
        return self.alloc

    def preview(self, response):
        """What the next recommendation would be for the given response;
        pure. Random branches report the escalation law instead of a level."""
        policy = self.policy
        rand = (isinstance(policy, DesignRule) and isinstance(policy, Bcd)
                and not self._effective_yes(response))
        if isinstance(policy, BudPolicy):
            rand = (isinstance(policy.ud_rule, Bcd) and not self._effective_yes(response)) or \
                   isinstance(policy.hybrid, RBud)
        if rand:
            out = {"deterministic": False, "next": None}
            if isinstance(policy, DesignRule):
                out["up_probability"] = policy.up_coin
            elif isinstance(policy.hybrid, RBud):
                nn = self.n + 1
                out["override_probability"] = nn / (nn + policy.hybrid.n0)
            return out
        clone = self.copy()
        nxt = clone.record(response)
        out = {"deterministic": True, "next": int(nxt)}
        if isinstance(policy, BudPolicy):
            out["bayes_override"] = bool(clone.overrides[-1])
        return out

    def _effective_yes(self, response):
        rule = self.policy if isinstance(self.policy, DesignRule) else \
            getattr(self.policy, "ud_rule", None)
        if rule is None:
            return bool(response)
        from .designs import Orientation

        return bool(response) if rule.orientation is Orientation.BELOW_MEDIAN else not bool(response)

    def result(self) -> RunResult:
        return RunResult(
            treatments=list(self.treatments),
            responses=list(self.responses),
            level_indices=list(self.level_indices),
            state=self.state,
            final_recommendation=self.alloc,
        )


def run_single(scenario: Scenario, run_index: int) -> RunResult:
    """One seeded run; deterministic in (scenario.seed, run_index)."""
    thresholds = scenario.model.sample_stream(
        _rng(scenario.seed, run_index, 0), scenario.n
    )
    driver = PolicyDriver(
        scenario.grid, scenario.policy, scenario.start_index,
        design_rng=_rng(scenario.seed, run_index, 1),
    )
    for i in range(scenario.n):
        x = driver.grid.value(driver.recommendation)
        driver.record(bool(thresholds[i] <= x))
    return driver.result()


# ---------------------------------------------------------------------------
# Estimator plumbing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorSpec:
    """How to turn a finished run into an EstimateWithCI."""

    name: str
    kind: object  # averaging kind, or the string "IR"/"CIR"
    ci_option: str = "poisson"
    percentiles: tuple[float, ...] = (0.05, 0.95)
    use_virtual: bool = True
    use_imputed: bool = False

    def evaluate(self, run: RunResult, scenario: Scenario) -> EstimateWithCI:
        if self.kind in ("IR", "CIR"):
            table = tabulate(zip(run.treatments, run.responses))
            s = scenario.grid.spacing
            return cir_confidence(
                table,
                policy_target(scenario.policy),
                option=self.ci_option,
                percentiles=self.percentiles,
                x_bounds=(scenario.grid.levels[0] - s, scenario.grid.levels[-1] + s),
                flavor=self.kind,
            )
        values = run.treatments
        if run.state is not None:
            if self.use_imputed:
                from .designs import imputed_values

                values = imputed_values(run.state)
            elif self.use_virtual:
                values = run.state.treatments(virtual=True)
        if self.use_imputed and run.state is not None:
            # imputation appends entries; responses no longer align, so
            # reversal-based kinds are not offered on imputed chains
            if not isinstance(self.kind, AutoDetect):
                raise ValueError("imputed chains support the auto-detect kind only")
        return averaging_estimate(values, run.responses, self.kind, self.percentiles)


def standard_estimators(percentiles=(0.05, 0.95)):
    return [
        EstimatorSpec("v1", AllFromReversal(1), percentiles=percentiles),
        EstimatorSpec("w1", ReversalOnly(1), percentiles=percentiles),
        EstimatorSpec("ad", AutoDetect(), percentiles=percentiles),
        EstimatorSpec("cir", "CIR", percentiles=percentiles),
        EstimatorSpec("ir", "IR", percentiles=percentiles),
    ]


# ---------------------------------------------------------------------------
# Ensemble metrics
# ---------------------------------------------------------------------------


@dataclass
class EstimatorMetrics:
    name: str
    estimates: np.ndarray
    failures: int
    bias: float
    sd: float
    mse: float
    coverage: dict[float, float] = field(default_factory=dict)

    @property
    def ok_count(self):
        return int(np.sum(~np.isnan(self.estimates)))


@dataclass
class EnsembleMetrics:
    scenario: Scenario
    true_qp: float
    optimal_index: int
    estimator_metrics: dict[str, EstimatorMetrics]
    phat_star: np.ndarray  # per-run allocation share of the optimal level
    phat_star_hist: np.ndarray  # 10-bin histogram masses, sum 1
    gambling_proportion: float
    gambling_correct: float
    gambling_wrong: float
    asymptotic_benchmark: float  # p(1-p) / (n f(Q_p)^2)
    normalized_mse: dict[str, float] = field(default_factory=dict)

    def eer(self, name_a, name_b):
        """Empirical efficiency ratio MSE_a / MSE_b."""
        return self.estimator_metrics[name_a].mse / self.estimator_metrics[name_b].mse


def run_ensemble(scenario: Scenario, estimators=None, gambling_at=20,
                 gambling_share=0.6) -> EnsembleMetrics:
    estimators = estimators if estimators is not None else standard_estimators()
    true_qp = scenario.true_qp()
    u_star = scenario.optimal_index()
    p = policy_target(scenario.policy)

    est_values = {e.name: np.full(scenario.N, np.nan) for e in estimators}
    est_cover = {e.name: {q: 0 for q in _nominals(e.percentiles)} for e in estimators}
    failures = {e.name: 0 for e in estimators}
    phat_star = np.zeros(scenario.N)
    gamble = np.zeros(scenario.N, dtype=bool)
    gamble_ok = np.zeros(scenario.N, dtype=bool)

    for r in range(scenario.N):
        run = run_single(scenario, r)
        idx = np.asarray(run.level_indices)
        phat_star[r] = float(np.mean(idx == u_star))
        t0 = min(gambling_at, len(idx))
        head = idx[:t0]
        counts = np.bincount(head, minlength=scenario.grid.m + 1)[1:]
        share = counts.max() / t0 if t0 else 0.0
        if share >= gambling_share:
            gamble[r] = True
            gamble_ok[r] = int(np.argmax(counts)) + 1 == u_star
        for e in estimators:
            try:
                est = e.evaluate(run, scenario)
            except (ValueError, ZeroDivisionError):
                failures[e.name] += 1
                continue
            est_values[e.name][r] = est.point
            for q in est_cover[e.name]:
                lo, hi = _interval_at(est, (1 - q) / 2)
                if lo <= true_qp <= hi:
                    est_cover[e.name][q] += 1

    metrics = {}
    norm_mse = {}
    f_qp = float(scenario.model.pdf(true_qp))
    bench = p * (1 - p) / (scenario.n * f_qp**2) if f_qp > 0 else math.inf
    for e in estimators:
        vals = est_values[e.name]
        ok = vals[~np.isnan(vals)]
        bias = float(ok.mean() - true_qp) if len(ok) else math.nan
        sd = float(ok.std(ddof=0)) if len(ok) else math.nan
        mse = float(np.mean((ok - true_qp) ** 2)) if len(ok) else math.nan
        cov = {
            q: est_cover[e.name][q] / max(len(ok), 1) for q in est_cover[e.name]
        }
        metrics[e.name] = EstimatorMetrics(
            name=e.name, estimates=vals, failures=failures[e.name],
            bias=bias, sd=sd, mse=mse, coverage=cov,
        )
        norm_mse[e.name] = mse / bench if bench not in (0.0, math.inf) else math.nan

    hist, _ = np.histogram(phat_star, bins=10, range=(0.0, 1.0))
    hist = hist / hist.sum()
    n_g = int(gamble.sum())
    return EnsembleMetrics(
        scenario=scenario,
        true_qp=true_qp,
        optimal_index=u_star,
        estimator_metrics=metrics,
        phat_star=phat_star,
        phat_star_hist=hist,
        gambling_proportion=n_g / scenario.N,
        gambling_correct=int(gamble_ok.sum()) / scenario.N,
        gambling_wrong=(n_g - int(gamble_ok.sum())) / scenario.N,
        asymptotic_benchmark=bench,
        normalized_mse=norm_mse,
    )


def _nominals(percentiles):
    # two-sided nominal levels implied by symmetric percentile pairs
    out = []
    ps = sorted(percentiles)
    for lo, hi in zip(ps, reversed(ps)):
        if lo < 0.5 < hi and abs((1 - hi) - lo) < 1e-9:
            out.append(round(hi - lo, 6))
    return out or [round(max(ps) - min(ps), 6)]


def coverage_study(scenarios, estimator: EstimatorSpec, nominal_levels=(0.90,)):
    """Per-scenario coverage of the estimator's intervals.

    ``nominal_levels`` must be derivable from the estimator's percentile
    pairs; returns {scenario_label: {nominal: coverage}}.
    """
    out = {}
    for label, scenario in scenarios.items():
        true_qp = scenario.true_qp()
        hits = {q: 0 for q in nominal_levels}
        ok = 0
        for r in range(scenario.N):
            run = run_single(scenario, r)
            try:
                est = estimator.evaluate(run, scenario)
            except (ValueError, ZeroDivisionError):
                continue
            ok += 1
            for q in nominal_levels:
                lo_p = (1 - q) / 2
                lo, hi = _interval_at(est, lo_p)
                if lo <= true_qp <= hi:
                    hits[q] += 1
        out[label] = {q: hits[q] / max(ok, 1) for q in nominal_levels}
    return out


def _interval_at(est: EstimateWithCI, lo_p):
    pairs = dict(zip(est.percentiles, est.interval))
    hi_p = 1 - lo_p
    lo = pairs.get(lo_p)
    hi = pairs.get(round(hi_p, 12))
    if lo is None or hi is None:
        lo, hi = est.two_sided()
    return lo, hi


def precision_curve(p, delta_f, n_range):
    """Pr(|F_hat - p| <= delta_f) per n: exact binomial tail sums."""
    if not (0 < p < 1 and 0 < delta_f < 1):
        raise ValueError("p and delta_f must lie in (0, 1)")
    out = {}
    for n in n_range:
        lo = math.ceil(n * (p - delta_f) - 1e-12)
        hi = math.floor(n * (p + delta_f) + 1e-12)
        lo = max(lo, 0)
        hi = min(hi, n)
        if hi < lo:
            out[n] = 0.0
        else:
            out[n] = float(stats.binom.cdf(hi, n, p) - stats.binom.cdf(lo - 1, n, p))
    return out
