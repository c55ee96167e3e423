import math

import numpy as np
import pytest
from scipy import stats

from updown.bayes import (
    CBud,
    CcdBud,
    LogisticModel,
    PowerModel,
    QuadConfig,
    RBud,
    WeibullModel,
    bud_allocate,
    ccd_allocate,
    crm_allocate,
    default_logistic_model,
    default_power_model,
    default_weibull_model,
    delta_window,
    log_likelihood,
    model_from_config,
    model_to_config,
    posterior_summary,
)
from updown.designs import Kr, TreatmentGrid, WalkState
from updown.estimators import ResponseTable

GRID = TreatmentGrid.from_bounds(0.1, 1.0, 8)
POWER = default_power_model(GRID, 0.3)


def small_table():
    return ResponseTable(
        levels=(GRID.levels[2], GRID.levels[3], GRID.levels[4]),
        yes=(0, 1, 2),
        no=(3, 4, 1),
    )


# -- models ------------------------------------------------------------------


def test_power_model_validation():
    with pytest.raises(ValueError):
        PowerModel(levels=(1.0, 2.0), skeleton=(0.5, 0.4))
    with pytest.raises(ValueError):
        PowerModel(levels=(1.0, 2.0), skeleton=(0.0, 0.4))


def test_model_curves_monotone_in_x():
    rng = np.random.default_rng(7)
    for model in (POWER, default_logistic_model(GRID, 0.3), default_weibull_model(GRID, 0.3)):
        thetas = np.column_stack(
            [rng.normal(m, s, size=40) for m, s in zip(model.prior_means, model.prior_sds)]
        )
        curves = model.curves(thetas)
        assert np.all(np.diff(curves, axis=1) > -1e-12)
        assert np.all((curves > 0) & (curves < 1))


def test_model_config_round_trip():
    for model in (POWER, default_logistic_model(GRID, 0.3), default_weibull_model(GRID, 0.3)):
        text = model_to_config(model)
        assert model_from_config(text) == model


# -- likelihood -----------------------------------------------------------------


def test_log_likelihood_empty_table_is_zero():
    empty = ResponseTable(levels=(), yes=(), no=())
    assert log_likelihood(POWER, (0.3,), empty) == 0.0


def test_log_likelihood_matches_binomial_oracle():
    table = small_table()
    z = 0.0  # exponent exp(0) = 1: the skeleton itself
    ll = log_likelihood(POWER, (z,), table)
    direct = 0.0
    sk = dict(zip(POWER.levels, POWER.skeleton))
    for lv, y, n in zip(table.levels, table.yes, table.no):
        g = sk[lv]
        direct += y * math.log(g) + n * math.log(1 - g)
    assert ll == pytest.approx(direct, abs=1e-12)


def test_log_likelihood_degenerate_is_minus_inf():
    model = LogisticModel(levels=GRID.levels, loc_mean=0.5, loc_sd=0.2,
                          log_scale_mean=math.log(0.001), log_scale_sd=0.1)
    # an extreme curve makes a level numerically certain; opposing counts
    # must yield -inf, not a crash
    table = ResponseTable(levels=(GRID.levels[0],), yes=(1,), no=(0,))
    ll = log_likelihood(model, (5.0, math.log(1e-8)), table)
    assert ll == -np.inf


# -- posterior --------------------------------------------------------------------


def test_prior_only_matches_prior_predictive():
    summary = posterior_summary(POWER, None, 0.3)
    # independent prior-predictive oracle on a fine trapezoid grid
    zs = np.linspace(-4 * 0.75, 4 * 0.75, 40001)
    w = stats.norm.pdf(zs, 0.0, 0.75)
    curves = POWER.curves(zs[:, None])
    means = np.trapezoid(curves * w[:, None], zs, axis=0) / np.trapezoid(w, zs)
    assert np.abs(np.asarray(summary.level_means) - means).max() < 1e-6


def test_posterior_quantiles_monotone():
    s = posterior_summary(POWER, small_table(), 0.3)
    assert s.qp_quantile(0.25) <= s.qp_quantile(0.5) <= s.qp_quantile(0.75)
    assert s.quad_error < 1e-4


def test_posterior_level_means_monotone_all_models():
    table = small_table()
    for model in (POWER, default_logistic_model(GRID, 0.3), default_weibull_model(GRID, 0.3)):
        s = posterior_summary(model, table, 0.3)
        assert np.all(np.diff(s.level_means) > -1e-12)
        assert all(0 < v < 1 for v in s.level_means)


def test_posterior_d1_matches_dense_grid_oracle():
    table = small_table()
    s = posterior_summary(POWER, table, 0.3)
    zs = np.linspace(-3.0, 3.0, 10**6 + 1)
    curves_at = {}
    sk = np.asarray(POWER.skeleton)
    idx = [list(POWER.levels).index(lv) for lv in table.levels]
    g = sk[idx][None, :] ** np.exp(zs)[:, None]
    yes = np.asarray(table.yes)
    no = np.asarray(table.no)
    logw = (yes * np.log(g) + no * np.log1p(-g)).sum(axis=1)
    logw += stats.norm.logpdf(zs, 0.0, 0.75)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    xs = np.concatenate([[GRID.levels[0] - GRID.spacing], GRID.levels,
                         [GRID.levels[-1] + GRID.spacing]])
    full = sk[None, :] ** np.exp(zs)[:, None]
    ys = np.concatenate([np.zeros((len(zs), 1)), full, np.ones((len(zs), 1))], axis=1)
    qps = np.array([np.interp(0.3, row, xs) for row in ys[::100]])
    wq = w[::100]
    wq = wq / wq.sum()
    oracle = float(qps @ wq)
    assert s.qp_mean == pytest.approx(oracle, abs=1e-4)


def test_posterior_2d_runs():
    model = default_logistic_model(GRID, 0.3)
    s = posterior_summary(model, small_table(), 0.3, QuadConfig(nodes_2d=65))
    assert 0 < s.qp_quantile(0.5) < 1.5
    assert s.grid_size == 65 * 65


def test_sufficiency_same_table_same_allocation():
    # two different orderings with identical tables allocate identically
    t = small_table()
    s1 = posterior_summary(POWER, t, 0.3)
    s2 = posterior_summary(POWER, t, 0.3)
    for rule in ("closest-treatment", "closest-response", "just-under", "ewoc"):
        assert crm_allocate(s1, rule, GRID) == crm_allocate(s2, rule, GRID)


# -- allocation rules -----------------------------------------------------------------


class FakeSummary:
    def __init__(self, level_means, qp_mean, quantiles, p_target=0.3):
        self.level_means = level_means
        self.qp_mean = qp_mean
        self._q = quantiles
        self.p_target = p_target

    def qp_quantile(self, beta):
        return self._q(beta)


def test_closest_response_argmin():
    grid = TreatmentGrid.from_bounds(1.0, 3.0, 3)
    s = FakeSummary((0.1, 0.28, 0.55), qp_mean=2.0, quantiles=lambda b: 2.0)
    assert crm_allocate(s, "closest-response", grid) == 2


def test_closest_treatment_and_tie_low():
    grid = TreatmentGrid.from_bounds(1.0, 3.0, 3)
    s = FakeSummary((0.1, 0.3, 0.5), qp_mean=2.5, quantiles=lambda b: 2.5)
    assert crm_allocate(s, "closest-treatment", grid) == 2  # exact tie -> lower


def test_just_under_and_ewoc():
    grid = TreatmentGrid.from_bounds(1.0, 4.0, 4)
    s = FakeSummary((0.1, 0.2, 0.4, 0.6), qp_mean=3.4,
                    quantiles=lambda b: 1.0 + 3.0 * b)
    assert crm_allocate(s, "just-under", grid) == 3
    # ewoc allocates just under the alpha quantile of the target
    assert crm_allocate(s, "ewoc", grid, alpha=0.25) == 1
    assert crm_allocate(s, "ewoc", grid, alpha=0.75) == 3


def test_constrained_clamps_to_one_step():
    grid = TreatmentGrid.from_bounds(1.0, 5.0, 5)
    s = FakeSummary((0.01, 0.05, 0.1, 0.2, 0.3), qp_mean=5.0, quantiles=lambda b: 5.0)
    assert crm_allocate(s, "closest-treatment", grid) == 5
    assert crm_allocate(s, "closest-treatment", grid, current_index=2, constrained=True) == 3


# -- CCD ---------------------------------------------------------------------------------


def test_delta_window_published_values():
    assert delta_window(0.10) == 0.09
    assert delta_window(0.18) == 0.09
    assert delta_window(0.25) == 0.09
    assert delta_window(0.30) == pytest.approx(0.10)
    assert delta_window(0.50) == pytest.approx(0.13)
    assert delta_window(0.70) == pytest.approx(0.10)  # mirrored above median


def test_ccd_window_moves():
    grid = TreatmentGrid.from_bounds(1.0, 5.0, 5)
    table = ResponseTable(levels=(3.0,), yes=(1,), no=(3,))
    # F_hat = 0.25 inside [0.2, 0.4] -> stay
    assert ccd_allocate(table, 3, 0.3, grid, window=(0.1, 0.1)) == 3
    table_hi = ResponseTable(levels=(3.0,), yes=(3,), no=(1,))
    assert ccd_allocate(table_hi, 3, 0.3, grid, window=(0.1, 0.1)) == 2
    table_lo = ResponseTable(levels=(3.0,), yes=(0,), no=(4,))
    assert ccd_allocate(table_lo, 3, 0.3, grid, window=(0.1, 0.1)) == 4


def test_ccd_unvisited_level_escalates():
    grid = TreatmentGrid.from_bounds(1.0, 5.0, 5)
    table = ResponseTable(levels=(2.0,), yes=(1,), no=(1,))
    assert ccd_allocate(table, 3, 0.3, grid) == 4
    # clamped at the top boundary
    assert ccd_allocate(table, 5, 0.3, grid) == 5


# -- hybrid rules ---------------------------------------------------------------------------


def wide_summary():
    return FakeSummary((0.1,) * 8, qp_mean=0.5, quantiles=lambda b: 0.1 + 0.8 * b)


def narrow_summary(center):
    return FakeSummary((0.1,) * 8, qp_mean=center, quantiles=lambda b: center)


def make_state(n_trials=6):
    st = WalkState(GRID, Kr(k=2), 4)
    rng = np.random.default_rng(4)
    for _ in range(n_trials):
        st.advance(bool(rng.random() < 0.3))
    return st


def test_cbud_beta_zero_is_pure_walk():
    state = make_state()
    # beta 0: interval spans the whole posterior support (plus buffers)
    pol = CBud(beta_lo=0.0, beta_hi=0.0)
    choice = bud_allocate(state, ud_choice=5, bayes_choice=3, policy=pol,
                          posterior=wide_summary())
    assert choice == 5


def test_cbud_overrides_outside_interval():
    state = make_state()
    pol = CBud(beta_lo=0.5, beta_hi=0.5)
    # degenerate interval at the posterior median 0.3 +/- s/2
    choice = bud_allocate(state, ud_choice=7, bayes_choice=3, policy=pol,
                          posterior=narrow_summary(0.3))
    assert choice == 3


def test_cbud_agreement_never_evaluates_posterior():
    state = make_state()
    calls = []

    def summary():
        calls.append(1)
        return wide_summary()

    choice = bud_allocate(state, ud_choice=4, bayes_choice=4,
                          policy=CBud(beta_lo=0.25, beta_hi=0.25), posterior=summary)
    assert choice == 4 and calls == []


def test_cbud_asymmetric_betas():
    state = make_state()
    qf = lambda b: 0.1 + 1.0 * b  # noqa: E731

    # tight upper tail: a high walk choice gets vetoed
    pol = CBud(beta_lo=0.05, beta_hi=0.45)
    s = FakeSummary((0.1,) * 8, 0.5, qf)
    hi_choice = 8  # treatment 1.0 vs upper bound q(0.55)+s/2
    assert bud_allocate(state, hi_choice, 5, pol, posterior=s) == 5
    # generous upper tail keeps the same walk choice
    pol_wide_hi = CBud(beta_lo=0.45, beta_hi=0.05)
    assert bud_allocate(state, hi_choice, 5, pol_wide_hi, posterior=s) == 8


def test_cbud_opposite_rule_b_keeps_current():
    state = make_state()
    cur = state.history[-1].level_index
    ud = cur + 1
    bayes = cur - 1
    center = GRID.value(cur)  # current level sits inside the interval
    pol_b = CBud(beta_lo=0.5, beta_hi=0.5, opposite_rule="B")
    choice = bud_allocate(state, ud, bayes, pol_b, posterior=narrow_summary(center))
    assert choice == cur
    pol_a = CBud(beta_lo=0.5, beta_hi=0.5, opposite_rule="A")
    choice_a = bud_allocate(state, ud, bayes, pol_a, posterior=narrow_summary(center))
    assert choice_a == bayes


def test_rbud_override_probability():
    state = make_state(n_trials=20)
    pol = RBud(n0=20)
    # n = 20, n0 = 20: override iff draw < 0.5
    assert bud_allocate(state, 5, 3, pol, draw=0.49) == 3
    assert bud_allocate(state, 5, 3, pol, draw=0.51) == 5
    with pytest.raises(ValueError):
        bud_allocate(state, 5, 3, pol)


def test_rbud_burn_in():
    state = make_state(n_trials=3)
    pol = RBud(n0=20, cutoff=10)
    assert bud_allocate(state, 5, 3, pol, draw=0.0) == 5


def test_ccdbud_interval_logic():
    state = make_state()
    table = ResponseTable(
        levels=(GRID.levels[2], GRID.levels[3], GRID.levels[4]),
        yes=(0, 3, 4),
        no=(8, 7, 1),
    )
    pol = CcdBud(p=0.3, beta=0.25)
    choice_in = bud_allocate(state, 4, 3, pol, table=table)
    assert choice_in in (3, 4)
    # a walk choice far outside the frequentist band is overridden
    choice_out = bud_allocate(state, 8, 4, pol, table=table)
    assert choice_out == 4


def test_cbud_requires_posterior():
    state = make_state()
    with pytest.raises(ValueError):
        bud_allocate(state, 5, 3, CBud(), posterior=None)


def test_summary_to_csv():
    from updown.bayes import summary_to_csv

    s = posterior_summary(POWER, small_table(), 0.3)
    text = summary_to_csv(s)
    lines = text.strip().splitlines()
    assert lines[0] == "level,treatment,posterior_mean"
    assert len([l for l in lines if l and not l[0].isalpha() and "," in l]) >= len(POWER.levels)
    assert f"mean,{s.qp_mean!r}" in text
    assert repr(s.qp_quantile(0.5)) in text
