"""Model-based allocation: quadrature posteriors, CRM/EWOC rules, the
nonparametric window rule (CCD), and the hybrid Bayesian/up-and-down family.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .designs import TreatmentGrid, WalkState
from .estimators import ResponseTable, cir_confidence


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------
#
# Each model exposes response curves over an extended lattice through
# curve(theta) -> per-level probabilities, plus q_p(theta) on a continuous
# treatment scale. Parameters live in a transformed space where every prior
# is an independent normal, which keeps the quadrature grids simple.


@dataclass(frozen=True)
class PowerModel:
    """One-parameter skeleton-power curve: G_u = skeleton_u ** exp(z)."""

    levels: tuple[float, ...]
    skeleton: tuple[float, ...]
    prior_mean: float = 0.0
    prior_sd: float = 0.75

    def __post_init__(self):
        sk = tuple(float(v) for v in self.skeleton)
        if len(sk) != len(self.levels):
            raise ValueError("skeleton must cover every level")
        if any(not 0.0 < v < 1.0 for v in sk) or any(b <= a for a, b in zip(sk, sk[1:])):
            raise ValueError("skeleton must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "skeleton", sk)

    @property
    def d(self):
        return 1

    @property
    def prior_means(self):
        return (self.prior_mean,)

    @property
    def prior_sds(self):
        return (self.prior_sd,)

    def curves(self, thetas):
        z = np.asarray(thetas)[:, 0]
        sk = np.asarray(self.skeleton)
        return sk[None, :] ** np.exp(z)[:, None]


@dataclass(frozen=True)
class LogisticModel:
    """Two-parameter location/scale logistic curve."""

    levels: tuple[float, ...]
    loc_mean: float
    loc_sd: float
    log_scale_mean: float
    log_scale_sd: float = 0.5

    @property
    def d(self):
        return 2

    @property
    def prior_means(self):
        return (self.loc_mean, self.log_scale_mean)

    @property
    def prior_sds(self):
        return (self.loc_sd, self.log_scale_sd)

    def curves(self, thetas):
        thetas = np.asarray(thetas)
        loc = thetas[:, 0][:, None]
        scale = np.exp(thetas[:, 1])[:, None]
        x = np.asarray(self.levels)[None, :]
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-(x - loc) / scale))


@dataclass(frozen=True)
class WeibullModel:
    """Two-parameter shape/scale Weibull curve (positive treatments)."""

    levels: tuple[float, ...]
    log_shape_mean: float
    log_shape_sd: float
    log_scale_mean: float
    log_scale_sd: float

    def __post_init__(self):
        if any(v <= 0 for v in self.levels):
            raise ValueError("Weibull curves need positive treatment values")

    @property
    def d(self):
        return 2

    @property
    def prior_means(self):
        return (self.log_shape_mean, self.log_scale_mean)

    @property
    def prior_sds(self):
        return (self.log_shape_sd, self.log_scale_sd)

    def curves(self, thetas):
        thetas = np.asarray(thetas)
        shape = np.exp(thetas[:, 0])[:, None]
        scale = np.exp(thetas[:, 1])[:, None]
        x = np.asarray(self.levels)[None, :]
        with np.errstate(over="ignore"):
            return 1.0 - np.exp(-((x / scale) ** shape))


CrmModel = PowerModel | LogisticModel | WeibullModel


def default_power_model(grid: TreatmentGrid, p, spread=2.0, prior_sd=0.75) -> PowerModel:
    """Skeleton calibrated so the prior-predictive target lands mid-lattice.

    ``spread`` controls the skeleton's slope: larger is steeper, values
    around 1 give the shallow curves that keep the chain mobile.
    """
    m = grid.m
    mid = (m - 1) / 2.0
    z = (np.arange(m) - mid) / (m / spread)
    sk = p ** np.exp(-z)  # logistic-in-log ladder through (mid, p)
    sk = np.clip(sk, 1e-4, 1 - 1e-4)
    return PowerModel(levels=grid.levels, skeleton=tuple(sk), prior_sd=prior_sd)


def default_logistic_model(grid: TreatmentGrid, p) -> LogisticModel:
    lo, hi = grid.levels[0], grid.levels[-1]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    # center the prior so the predictive curve crosses p mid-lattice
    logit = math.log(p / (1 - p))
    scale0 = half / 2.0
    return LogisticModel(
        levels=grid.levels,
        loc_mean=mid - logit * scale0,
        loc_sd=half,
        log_scale_mean=math.log(scale0),
        log_scale_sd=0.5,
    )


def default_weibull_model(grid: TreatmentGrid, p) -> WeibullModel:
    mid = 0.5 * (grid.levels[0] + grid.levels[-1])
    shape0 = 1.5
    scale0 = mid / (-math.log(1.0 - p)) ** (1.0 / shape0)
    return WeibullModel(
        levels=grid.levels,
        log_shape_mean=math.log(shape0),
        log_shape_sd=0.5,
        log_scale_mean=math.log(scale0),
        log_scale_sd=0.5,
    )


# ---------------------------------------------------------------------------
# Likelihood and posterior
# ---------------------------------------------------------------------------


def log_likelihood(model: CrmModel, theta, table: ResponseTable) -> float:
    """Binomial-form log likelihood of one parameter point (up to a constant)."""
    curves = model.curves(np.asarray([theta], dtype=float))
    return float(_loglik_matrix(model, curves, table)[0])


def _loglik_matrix(model, curves, table: ResponseTable):
    """Log likelihood of each curve row against the table; -inf where a
    degenerate probability meets an opposing count."""
    idx = []
    for lv in table.levels:
        hits = [i for i, g in enumerate(model.levels) if abs(g - lv) < 1e-9]
        if not hits:
            raise ValueError(f"table level {lv} is not a model level")
        idx.append(hits[0])
    yes = np.asarray(table.yes, dtype=float)
    no = np.asarray(table.no, dtype=float)
    g = curves[:, idx]
    # saturated curves meeting an opposing count give -inf (zero posterior
    # weight), while zero counts contribute nothing even at saturation
    with np.errstate(divide="ignore", invalid="ignore"):
        t_yes = np.where(yes[None, :] > 0, yes[None, :] * np.log(g), 0.0)
        t_no = np.where(no[None, :] > 0, no[None, :] * np.log1p(-g), 0.0)
    return (t_yes + t_no).sum(axis=1)


@dataclass(frozen=True)
class QuadConfig:
    nodes_1d: int = 513
    nodes_2d: int = 129
    span_sds: float = 4.0


@dataclass(frozen=True)
class PosteriorSummary:
    levels: tuple[float, ...]
    p_target: float
    level_means: tuple[float, ...]  # posterior mean response prob per level
    qp_mean: float
    qp_cdf_x: tuple[float, ...]  # support of the Q_p posterior CDF
    qp_cdf_p: tuple[float, ...]
    normalizer: float
    grid_size: int
    quad_error: float

    def qp_quantile(self, beta):
        """Posterior quantile of the target quantile Q_p."""
        return float(np.interp(beta, self.qp_cdf_p, self.qp_cdf_x))


def _simpson_weights(n):
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _qp_from_curves(curves, levels, p, spacing):
    """Continuous-scale target quantile of each curve row, by interpolating
    the curve through anchor points just beyond the lattice."""
    m = len(levels)
    xs = np.concatenate([[levels[0] - spacing], levels, [levels[-1] + spacing]])
    n = curves.shape[0]
    ys = np.concatenate(
        [np.zeros((n, 1)), curves, np.ones((n, 1))], axis=1
    )
    ys = np.maximum.accumulate(ys, axis=1)
    out = np.empty(n)
    for i in range(n):
        out[i] = np.interp(p, ys[i], xs)
    return out


def posterior_summary(model: CrmModel, table: ResponseTable | None, p,
                      config: QuadConfig = QuadConfig()) -> PosteriorSummary:
    """Deterministic quadrature posterior: per-level curve means, the target
    quantile's mean and its distribution function."""
    means = np.asarray(model.prior_means)
    sds = np.asarray(model.prior_sds)
    if model.d == 1:
        n = config.nodes_1d
        zs = np.linspace(means[0] - config.span_sds * sds[0],
                         means[0] + config.span_sds * sds[0], n)
        thetas = zs[:, None]
        wq = _simpson_weights(n) * (zs[1] - zs[0])
        log_prior = stats.norm.logpdf(zs, means[0], sds[0])
    elif model.d == 2:
        n = config.nodes_2d
        z1 = np.linspace(means[0] - config.span_sds * sds[0],
                         means[0] + config.span_sds * sds[0], n)
        z2 = np.linspace(means[1] - config.span_sds * sds[1],
                         means[1] + config.span_sds * sds[1], n)
        g1, g2 = np.meshgrid(z1, z2, indexing="ij")
        thetas = np.column_stack([g1.ravel(), g2.ravel()])
        w1 = _simpson_weights(n) * (z1[1] - z1[0])
        w2 = _simpson_weights(n) * (z2[1] - z2[0])
        wq = np.outer(w1, w2).ravel()
        log_prior = (stats.norm.logpdf(thetas[:, 0], means[0], sds[0])
                     + stats.norm.logpdf(thetas[:, 1], means[1], sds[1]))
    else:
        raise ValueError("quadrature supports 1- and 2-parameter models")

    curves = model.curves(thetas)
    if table is not None and table.total > 0:
        ll = _loglik_matrix(model, curves, table)
    else:
        ll = np.zeros(len(thetas))
    logw = ll + log_prior
    top = logw.max()
    if not np.isfinite(top):
        raise ValueError("likelihood is non-finite everywhere on the grid")
    dens = np.exp(logw - top)
    mass = wq * dens
    z = mass.sum()
    if z <= 0:
        raise ValueError("posterior mass vanished on the quadrature grid")

    # trapezoid cross-check as the quadrature error diagnostic
    if model.d == 1:
        trap = np.trapezoid(dens, dx=(zs[1] - zs[0]))
    else:
        dens2 = dens.reshape(n, n)
        trap = np.trapezoid(np.trapezoid(dens2, dx=(z2[1] - z2[0]), axis=1), dx=(z1[1] - z1[0]))
    quad_err = abs(trap - z) / z

    weights = mass / z
    level_means = weights @ curves
    spacing = (model.levels[-1] - model.levels[0]) / max(len(model.levels) - 1, 1)
    qps = _qp_from_curves(curves, np.asarray(model.levels), p, spacing)
    qp_mean = float(weights @ qps)

    order = np.argsort(qps, kind="stable")
    sx = qps[order]
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    return PosteriorSummary(
        levels=tuple(model.levels),
        p_target=float(p),
        level_means=tuple(float(v) for v in level_means),
        qp_mean=qp_mean,
        qp_cdf_x=tuple(sx),
        qp_cdf_p=tuple(cw),
        normalizer=float(z * math.exp(top)),
        grid_size=len(thetas),
        quad_error=float(quad_err),
    )


# ---------------------------------------------------------------------------
# Allocation rules
# ---------------------------------------------------------------------------


def crm_allocate(summary: PosteriorSummary, rule, grid: TreatmentGrid,
                 current_index=None, constrained=False, alpha=0.25,
                 center="mean") -> int:
    """Model-based allocation; returns a 1-based level index.

    rule: "closest-treatment", "closest-response", "just-under" or "ewoc".
    Ties break toward the lower level. ``center`` picks the posterior mean
    or median of the target quantile for the treatment-scale rules.
    """
    levels = np.asarray(grid.levels)
    if rule == "closest-treatment":
        qp = summary.qp_mean if center == "mean" else summary.qp_quantile(0.5)
        idx = int(np.argmin(_tie_low(np.abs(levels - qp)))) + 1
    elif rule == "closest-response":
        g = np.asarray(summary.level_means)
        idx = int(np.argmin(_tie_low(np.abs(g - summary.p_target)))) + 1
    elif rule == "just-under":
        qp = summary.qp_mean if center == "mean" else summary.qp_quantile(0.5)
        under = np.nonzero(levels <= qp)[0]
        idx = int(under[-1]) + 1 if len(under) else 1
    elif rule == "ewoc":
        qa = summary.qp_quantile(alpha)
        under = np.nonzero(levels <= qa)[0]
        idx = int(under[-1]) + 1 if len(under) else 1
    else:
        raise ValueError(f"unknown CRM rule {rule!r}")
    if constrained:
        if current_index is None:
            raise ValueError("constrained allocation needs the current level")
        idx = min(max(idx, current_index - 1), current_index + 1)
    return min(max(idx, 1), grid.m)


def _tie_low(dist):
    # argmin takes the first minimum; nudge exact ties so the lower level wins
    return dist - 1e-12 * np.arange(len(dist), 0, -1)


def delta_window(p) -> float:
    """Published window half-widths: 0.09 on [0.1, 0.25], 0.10 at 0.3,
    0.13 at 0.5, linear in between, mirrored above the median."""
    p = min(p, 1.0 - p)
    if p <= 0.25:
        return 0.09
    if p <= 0.3:
        return 0.09 + (0.10 - 0.09) * (p - 0.25) / 0.05
    if p <= 0.5:
        return 0.10 + (0.13 - 0.10) * (p - 0.3) / 0.2
    return 0.13


def ccd_allocate(table: ResponseTable, current_index: int, p, grid: TreatmentGrid,
                 window=None) -> int:
    """Window rule: stay while the local rate sits inside
    [p - d1, p + d2]; escalate below, de-escalate above; an unvisited
    current level escalates."""
    if window is None:
        d = delta_window(p)
        window = (d, d)
    d1, d2 = window
    level = grid.levels[current_index - 1]
    f_here = None
    for lv, y, nn in zip(table.levels, table.yes, table.no):
        if abs(lv - level) < 1e-9 and (y + nn) > 0:
            f_here = y / (y + nn)
            break
    if f_here is None or f_here < p - d1:
        return grid.clamp(current_index + 1)
    if f_here > p + d2:
        return grid.clamp(current_index - 1)
    return current_index


# ---------------------------------------------------------------------------
# Hybrid rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CBud:
    """Credibility-gated override: the model wins only when the up-and-down
    choice falls outside the posterior credible band for the target."""

    beta_lo: float = 0.15
    beta_hi: float = 0.15
    cutoff: int = 0  # pure up-and-down burn-in length
    opposite_rule: str = "A"  # note-5 handling when choices straddle current


@dataclass(frozen=True)
class RBud:
    """Randomized override with probability n / (n + n0)."""

    n0: int = 20
    cutoff: int = 0


@dataclass(frozen=True)
class CcdBud:
    """C-BUD geometry with a frequentist binomial interval for the target."""

    p: float = 0.3
    beta: float = 0.25
    cutoff: int = 0
    ci_option: str = "binomial"
    opposite_rule: str = "A"


def bud_allocate(state: WalkState, ud_choice: int, bayes_choice: int, policy,
                 posterior=None, table: ResponseTable | None = None,
                 draw=None) -> int:
    """Combine an up-and-down choice with a model-based one; 1-based levels.

    ``posterior`` may be a PosteriorSummary or a zero-argument callable
    returning one; the interval logic only evaluates it when the choices
    disagree.
    """
    grid = state.grid
    n = state.n
    s = grid.spacing

    if isinstance(policy, (CBud, RBud, CcdBud)) and n < policy.cutoff:
        return ud_choice
    if ud_choice == bayes_choice:
        return ud_choice

    if isinstance(policy, RBud):
        if draw is None:
            raise ValueError("R-BUD needs a randomization draw")
        return bayes_choice if draw < n / (n + policy.n0) else ud_choice

    if isinstance(policy, CBud):
        summary = _resolve(posterior)
        if summary is None:
            raise ValueError("C-BUD needs a posterior summary")
        lo = summary.qp_quantile(policy.beta_lo) - s / 2.0
        hi = summary.qp_quantile(1.0 - policy.beta_hi) + s / 2.0
    elif isinstance(policy, CcdBud):
        if table is None:
            raise ValueError("CCD-BUD needs the response table")
        est = cir_confidence(
            table, policy.p, option=policy.ci_option,
            percentiles=(policy.beta, 1.0 - policy.beta),
            x_bounds=(grid.levels[0] - s, grid.levels[-1] + s),
        )
        lo = min(est.interval) - s / 2.0
        hi = max(est.interval) + s / 2.0
    else:
        raise TypeError(f"unknown hybrid policy {policy!r}")

    ud_x = grid.value(ud_choice)
    if lo <= ud_x <= hi:
        return ud_choice
    current = state.history[-1].level_index if state.history else state.start_index
    opposite = (ud_choice - current) * (bayes_choice - current) < 0
    rule = getattr(policy, "opposite_rule", "A")
    if opposite and rule == "B":
        cur_x = grid.value(current)
        if lo <= cur_x <= hi:
            return current
    return bayes_choice


def _resolve(posterior):
    if posterior is None:
        return None
    if callable(posterior):
        return posterior()
    return posterior


def summary_to_csv(summary: PosteriorSummary, quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)) -> str:
    """Posterior summary as CSV: per-level means, then the target-quantile
    quantile table."""
    lines = ["level,treatment,posterior_mean"]
    for u, (lv, g) in enumerate(zip(summary.levels, summary.level_means), start=1):
        lines.append(f"{u},{float(lv)!r},{float(g)!r}")
    lines.append("")
    lines.append("quantile,target_quantile_value")
    lines.append(f"mean,{float(summary.qp_mean)!r}")
    for q in quantiles:
        lines.append(f"{q!r},{summary.qp_quantile(q)!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Plain-text model configuration
# ---------------------------------------------------------------------------


def model_to_config(model: CrmModel) -> str:
    cp = configparser.ConfigParser()
    sec = {"levels": " ".join(repr(v) for v in model.levels)}
    if isinstance(model, PowerModel):
        sec.update(
            kind="power",
            skeleton=" ".join(repr(v) for v in model.skeleton),
            prior_mean=repr(model.prior_mean),
            prior_sd=repr(model.prior_sd),
        )
    elif isinstance(model, LogisticModel):
        sec.update(
            kind="logistic",
            loc_mean=repr(model.loc_mean),
            loc_sd=repr(model.loc_sd),
            log_scale_mean=repr(model.log_scale_mean),
            log_scale_sd=repr(model.log_scale_sd),
        )
    else:
        sec.update(
            kind="weibull",
            log_shape_mean=repr(model.log_shape_mean),
            log_shape_sd=repr(model.log_shape_sd),
            log_scale_mean=repr(model.log_scale_mean),
            log_scale_sd=repr(model.log_scale_sd),
        )
    cp["model"] = sec
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def model_from_config(text) -> CrmModel:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    sec = cp["model"]
    levels = tuple(float(v) for v in sec["levels"].split())
    kind = sec["kind"]
    if kind == "power":
        return PowerModel(
            levels=levels,
            skeleton=tuple(float(v) for v in sec["skeleton"].split()),
            prior_mean=float(sec.get("prior_mean", "0.0")),
            prior_sd=float(sec.get("prior_sd", "0.75")),
        )
    if kind == "logistic":
        return LogisticModel(
            levels=levels,
            loc_mean=float(sec["loc_mean"]),
            loc_sd=float(sec["loc_sd"]),
            log_scale_mean=float(sec["log_scale_mean"]),
            log_scale_sd=float(sec["log_scale_sd"]),
        )
    if kind == "weibull":
        return WeibullModel(
            levels=levels,
            log_shape_mean=float(sec["log_shape_mean"]),
            log_shape_sd=float(sec["log_shape_sd"]),
            log_scale_mean=float(sec["log_scale_mean"]),
            log_scale_sd=float(sec["log_scale_sd"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")
