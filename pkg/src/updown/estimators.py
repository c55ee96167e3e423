"""Post-experiment point and interval estimation.

Averaging estimators (reversal, all-trial, auto-detect, geometric-weighted),
isotonic regression in plain and centered flavors, inverse (percentile)
estimation, and the linearized-quantile confidence-interval machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .designs import DesignRule, Kr, WalkState, detect_reversals


# ---------------------------------------------------------------------------
# Response tabulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResponseTable:
    """Per-level yes/no counts; the sufficient statistic of the experiment."""

    levels: tuple[float, ...]
    yes: tuple[int, ...]
    no: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.levels) == len(self.yes) == len(self.no)):
            raise ValueError("levels/yes/no must be parallel")
        if any(v < 0 for v in self.yes) or any(v < 0 for v in self.no):
            raise ValueError("counts must be nonnegative")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")

    @property
    def n(self):
        return tuple(y + n for y, n in zip(self.yes, self.no))

    @property
    def total(self):
        return sum(self.n)

    def f_hat(self):
        """Empirical response rates; NaN where a level has no trials."""
        return np.array(
            [y / t if (t := y + n) > 0 else math.nan for y, n in zip(self.yes, self.no)]
        )

    def occupied(self):
        """Sub-table restricted to levels with at least one trial."""
        keep = [i for i, t in enumerate(self.n) if t > 0]
        return ResponseTable(
            levels=tuple(self.levels[i] for i in keep),
            yes=tuple(self.yes[i] for i in keep),
            no=tuple(self.no[i] for i in keep),
        )


def tabulate(state_or_pairs, grid=None, keep_empty=False) -> ResponseTable:
    """Per-level yes/no counts from a walk state or (treatment, response) pairs."""
    if isinstance(state_or_pairs, WalkState):
        pairs = [(r.treatment, r.response) for r in state_or_pairs.history]
        if grid is None:
            grid = state_or_pairs.grid
    else:
        pairs = [(float(x), bool(y)) for x, y in state_or_pairs]
    if not pairs:
        raise ValueError("history is empty")
    if grid is not None:
        levels = list(grid.levels)
    else:
        levels = sorted({x for x, _ in pairs})
    idx = {x: i for i, x in enumerate(levels)}
    yes = [0] * len(levels)
    no = [0] * len(levels)
    for x, y in pairs:
        i = idx.get(x)
        if i is None:
            raise ValueError(f"treatment {x} is not on the grid")
        if y:
            yes[i] += 1
        else:
            no[i] += 1
    table = ResponseTable(levels=tuple(levels), yes=tuple(yes), no=tuple(no))
    return table if keep_empty else table.occupied()


# ---------------------------------------------------------------------------
# Isotonic regression: plain (IR) and centered (CIR)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsotonicFit:
    """A monotone fit; IR keeps every support point, CIR collapses pools."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    w: tuple[float, ...]
    flavor: str  # "IR" or "CIR"

    def forward(self, t):
        """Fitted response probability at t: linear interpolation, constant
        beyond the outermost fit points."""
        return float(np.interp(t, self.x, self.y))


def _validate_xyw(y, x, w):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (len(x) == len(y) == len(w)):
        raise ValueError("x, y, w must have equal length")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return y, x, w


def pava(y, x, w) -> IsotonicFit:
    """Weighted pool-adjacent-violators fit evaluated at every input x."""
    y, x, w = _validate_xyw(y, x, w)
    vals = y.copy()
    weights = w.copy()
    # classic block-merging sweep; strict violations only, ties are legal
    blocks = [[i, i] for i in range(len(y))]
    i = 0
    while i < len(blocks) - 1:
        a, b = blocks[i], blocks[i + 1]
        if vals[a[0]] > vals[b[0]] + 0.0:
            wa, wb = weights[a[0]], weights[b[0]]
            pooled = (vals[a[0]] * wa + vals[b[0]] * wb) / (wa + wb)
            blocks[i] = [a[0], b[1]]
            vals[a[0]] = pooled
            weights[a[0]] = wa + wb
            del blocks[i + 1]
            if i > 0:
                i -= 1
        else:
            i += 1
    out = np.empty_like(y)
    for blk in blocks:
        out[blk[0] : blk[1] + 1] = vals[blk[0]]
    return IsotonicFit(x=tuple(x), y=tuple(out), w=tuple(w), flavor="IR")


def cir(y, x, w) -> IsotonicFit:
    """Centered isotonic regression: each violating run (ties included)
    collapses to a single point at the weighted-mean (x, y) with summed
    weight, leaving a strictly increasing fit."""
    y, x, w = _validate_xyw(y, x, w)
    xs, ys, ws = list(x), list(y), list(w)
    while len(ys) > 1:
        viol = [i for i in range(len(ys) - 1) if ys[i + 1] - ys[i] <= 0]
        if not viol:
            break
        i = viol[0]
        wt = ws[i] + ws[i + 1]
        ys[i] = (ys[i] * ws[i] + ys[i + 1] * ws[i + 1]) / wt
        xs[i] = (xs[i] * ws[i] + xs[i + 1] * ws[i + 1]) / wt
        ws[i] = wt
        del ys[i + 1], xs[i + 1], ws[i + 1]
    return IsotonicFit(x=tuple(xs), y=tuple(ys), w=tuple(ws), flavor="CIR")


def fit_table(table: ResponseTable, flavor="CIR") -> IsotonicFit:
    t = table.occupied()
    f = [y / n for y, n in zip(t.yes, t.n)]
    fitter = cir if flavor.upper() == "CIR" else pava
    return fitter(f, t.levels, t.n)


def inverse_estimate(fit: IsotonicFit, target, x_bounds=(0.0, 1.0), y_bounds=(0.0, 1.0)) -> float:
    """Treatment value whose fitted response probability equals the target.

    When the target lies outside the fitted range, the interpolation is
    anchored at (x_bounds, y_bounds). An IR fit that is exactly flat at the
    target returns the flat run's weighted-mean x.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    xs = list(fit.x)
    ys = list(fit.y)
    ws = list(fit.w)
    if len(xs) == 1:
        return xs[0]

    if fit.flavor == "IR":
        # flat run exactly at target: weighted-mean x convention
        hits = [i for i, v in enumerate(ys) if v == target]
        if len(hits) > 1:
            tot = sum(ws[i] for i in hits)
            return sum(xs[i] * ws[i] for i in hits) / tot

    lo = min(x_bounds[0], xs[0])
    hi = max(x_bounds[1], xs[-1])
    if min(ys) > target:
        xs.insert(0, lo)
        ys.insert(0, y_bounds[0])
    if max(ys) < target:
        xs.append(hi)
        ys.append(y_bounds[1])
    # interpolate x against y; flat stretches resolve to their first point
    # ("ordered" tie handling)
    out = None
    for i in range(len(ys) - 1):
        y0, y1 = ys[i], ys[i + 1]
        if y0 <= target <= y1 and y1 > y0:
            out = xs[i] + (xs[i + 1] - xs[i]) * (target - y0) / (y1 - y0)
            break
        if y0 == target:
            out = xs[i]
            break
    if out is None:
        out = xs[-1] if target > ys[-1] else xs[0]
    return float(out)


# ---------------------------------------------------------------------------
# Linearized quantile functions (forward-interval widths)
# ---------------------------------------------------------------------------


def linearized_quantile(option, p, size, prob) -> float:
    """Count-scale quantile used to build CIR intervals.

    binomial: linear interpolation between exact CDF jump points, offset
    away from the center and clamped to stay conservative; poisson: the
    upper tail linearized and mirror-symmetrized about the median branch,
    re-centered at size*prob; t: a t-quantile scaled by the binomial SD.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("percentile must lie in (0, 1)")
    if size < 1:
        raise ValueError("size must be at least 1")
    if option == "t":
        # a bracket carrying a single observation still needs a finite width
        df = max(size - 1, 1)
        return float(stats.t.ppf(p, df=df) * math.sqrt(size * prob * (1.0 - prob)))
    if option == "binomial":
        return _smooth_binom(p, size, prob)
    if option == "poisson":
        return _smooth_pois(p, size, prob)
    raise ValueError(f"unknown interval option {option!r}")


def _smooth_binom(p, size, prob):
    q1 = float(stats.binom.ppf(p, size, prob))
    p1 = float(stats.binom.cdf(q1, size, prob))
    p2 = float(stats.binom.cdf(q1 - 1, size, prob))
    out = q1 - (p1 - p) / (p1 - p2)
    if p > 0.5:
        out += 2.0
        out = max(out, q1)  # conservative vs. the step quantile
    elif p < 0.5:
        out -= 1.0
        out = min(out, q1)
    return out


def _pois_linq(refp, lam):
    q1 = float(stats.poisson.ppf(refp, lam))
    p1 = float(stats.poisson.cdf(q1, lam))
    p2 = float(stats.poisson.cdf(q1 - 1, lam))
    return q1 - (p1 - refp) / (p1 - p2)


def _smooth_pois(p, size, prob):
    lam = size * prob
    med = _pois_linq(0.5, lam)
    ref = p if p > 0.5 else 1.0 - p
    val = _pois_linq(ref, lam)
    if p > 0.5:
        return val + lam - med
    return (2.0 * med - val) + lam - med


# ---------------------------------------------------------------------------
# Estimates with confidence intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    se: float
    df: float
    percentiles: tuple[float, ...]
    interval: tuple[float, ...]
    method: str
    flags: tuple[str, ...] = ()

    def two_sided(self):
        return (min(self.interval), max(self.interval))


def cir_confidence(
    table: ResponseTable,
    target,
    option="poisson",
    percentiles=(0.025, 0.975),
    x_bounds=(0.0, 1.0),
    y_bounds=(0.0, 1.0),
    flavor="CIR",
) -> EstimateWithCI:
    """Point and interval estimate of the target quantile from a response
    table, inverting linearized forward-interval widths through the local
    slope of the monotone fit."""
    t = table.occupied()
    if t.total == 0:
        raise ValueError("table has no trials")
    fit = fit_table(t, flavor=flavor)
    point = inverse_estimate(fit, target, x_bounds, y_bounds)

    xs = list(fit.x)
    ys = list(fit.y)
    ws = list(fit.w)
    lo_x = min(x_bounds[0], xs[0])
    hi_x = max(x_bounds[1], xs[-1])
    if min(ys) > target:
        xs.insert(0, lo_x)
        ys.insert(0, y_bounds[0])
        ws.insert(0, 1.0)
    if max(ys) < target:
        xs.append(hi_x)
        ys.append(y_bounds[1])
        ws.append(1.0)

    percentiles = tuple(float(p) for p in percentiles)
    flags = []
    if len(ys) == 1:
        gaps = [lo_x - hi_x if p < 0.5 else hi_x - lo_x for p in percentiles]
        flags.append("degenerate-fit")
    else:
        # bracketing pair around the target on the fitted curve
        below = [i for i, v in enumerate(ys) if v <= target]
        place = min(max(below[-1] if below else 0, 0), len(ys) - 2)
        dy = ys[place + 1] - ys[place]
        if dy <= 0:
            gaps = [lo_x - hi_x if p < 0.5 else hi_x - lo_x for p in percentiles]
            flags.append("flat-bracket")
        else:
            minn = max(int(min(ws[place], ws[place + 1])), 1)
            dx = xs[place + 1] - xs[place]
            gaps = []
            for p in percentiles:
                if option == "t":
                    width = linearized_quantile("t", p, minn, target) / minn
                else:
                    width = linearized_quantile(option, p, minn, target) / minn - target
                gaps.append(width * dx / dy)
    interval = tuple(point + g for g in gaps)
    return EstimateWithCI(
        point=point,
        se=float("nan"),
        df=1.0,
        percentiles=percentiles,
        interval=interval,
        method=f"{flavor.lower()}-{option}",
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# Averaging estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Wbar:
    """Wetherill's modified reversal average, from the r-th reversal on."""

    r: int = 1


@dataclass(frozen=True)
class ReversalOnly:
    """Plain average of treatments at reversal trials, from reversal r."""

    r: int = 1


@dataclass(frozen=True)
class AllFromReversal:
    """Average of all treatments from the r-th reversal onward."""

    r: int = 1


@dataclass(frozen=True)
class AutoDetect:
    """Drop the starting-point-biased head at the tail-mean crossing."""

    safe_fraction: float = 0.25
    before: bool = True


@dataclass(frozen=True)
class GeomWeighted:
    """Convergence-theory weights from the estimated second eigenvalue."""

    accel: float = 1.2
    rule: DesignRule | None = None  # needed to derive the rate from counts


def averaging_estimate(chain, responses, kind, percentiles=(0.025, 0.975)) -> EstimateWithCI:
    """Averaging estimator over a treatment chain.

    ``chain`` holds the treatment values to average (virtual/imputed values
    where those corrections apply); ``responses`` the parallel yes/no record
    used for reversal detection.
    """
    x = np.asarray(chain, dtype=float)
    if isinstance(kind, Wbar):
        rev = _reversal_positions(responses, kind.r, x)
        pairs = [(x[i - 1] + x[i - 2]) / 2.0 for i in rev]  # x_{R_j} and its predecessor
        return _mean_with_se(np.asarray(pairs), percentiles, f"wbar[{kind.r}]")
    if isinstance(kind, ReversalOnly):
        rev = _reversal_positions(responses, kind.r, x)
        vals = x[[i - 1 for i in rev]]
        return _mean_with_se(vals, percentiles, f"w[{kind.r}]")
    if isinstance(kind, AllFromReversal):
        rev = _reversal_positions(responses, kind.r, x)
        vals = x[rev[0] - 1 :]
        return _mean_with_se(vals, percentiles, f"v[{kind.r}]")
    if isinstance(kind, AutoDetect):
        return _admean(x, kind.safe_fraction, kind.before, percentiles)
    if isinstance(kind, GeomWeighted):
        return _geom_weighted(x, responses, kind, percentiles)
    raise TypeError(f"unknown averaging kind {kind!r}")


def _reversal_positions(responses, r, x):
    rev = detect_reversals(responses).positions
    if len(rev) < r:
        raise ValueError(f"needs at least {r} reversals, found {len(rev)}")
    if len(x) - (rev[r - 1] - 1) < 2:
        raise ValueError("fewer than 2 trials past the cutoff")
    return [i for i in rev[r - 1 :]]


def _mean_with_se(vals, percentiles, method, prev=None):
    vals = np.asarray(vals, dtype=float)
    point = float(vals.mean())
    se, df, flags = _chain_se(vals, point, prev=prev)
    interval = tuple(point + stats.t.ppf(p, df) * se for p in percentiles)
    return EstimateWithCI(
        point=point,
        se=se,
        df=df,
        percentiles=tuple(percentiles),
        interval=interval,
        method=method,
        flags=flags,
    )


def _lag_corr(v, lag):
    a, b = v[:-lag], v[lag:]
    if a.std() == 0.0 or b.std() == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _chain_se(xx, point, prev=None):
    """The two-part standard error of a chain average: autocorrelation-based
    effective sample size, and the hitting-interval estimate; the more
    conservative of the two is kept, with hitting-interval degrees of
    freedom. ``prev`` is the value just before the averaged stretch, so a
    sojourn continuing across the cutoff is not double-counted as a visit."""
    xx = np.asarray(xx, dtype=float)
    nn = len(xx)
    if nn < 2 or np.all(xx == xx[0]):
        return 0.0, 1.0, ("degenerate-chain",)
    sig2 = float(xx.var(ddof=1))

    cor1 = max(_lag_corr(xx, 1), 0.0)
    cor2 = max(_lag_corr(xx, 2), 0.0) if nn > 2 else 0.0
    corfac = max(cor1, math.sqrt(cor2))
    if corfac >= 1.0:
        corfac = 1.0 - 1e-12
    eff_n1 = max(nn * (1.0 - corfac) / (1.0 + corfac), 1.0)
    se1 = math.sqrt(sig2 / eff_n1)

    # hitting intervals at the visited level closest to the chain mean
    head = 0.0 if (prev is not None and xx[0] == prev) else 1.0
    firsts = np.concatenate([[head], np.diff(xx)])
    first_vals = xx[firsts != 0]
    flags = []
    if len(first_vals) == 0:
        return se1, 1.0, ("no-hitting-intervals",)
    unq = np.unique(first_vals)
    closest = unq[np.argmin(np.abs(unq - xx.mean()))]
    visits = int(np.sum((firsts != 0) & (xx == closest)))
    eff_n2 = visits - 1
    if eff_n2 >= 1:
        cut = ((firsts != 0) & (xx == closest)).astype(int)
        piece_id = np.cumsum(cut)
        lens = np.bincount(piece_id)
        lens = lens[lens > 0].astype(float)
        var_lens = float(lens.var(ddof=1)) if len(lens) > 1 else 0.0
        se2 = math.sqrt(
            eff_n2
            * (float(np.mean(lens**2)) * (sig2 + (point - closest) ** 2)
               + max(point, closest) ** 2 * var_lens)
            / nn**2
        )
    else:
        se2 = 0.0
        flags.append("no-hitting-intervals")
    df = max(eff_n2 - 1.0, 1.0)
    return max(se1, se2), df, tuple(flags)


def auto_detect_cutoff(x, safe_fraction=0.25, before=True):
    """1-based index where averaging starts, per the tail-mean crossing."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("auto-detect needs at least 3 trials")
    cutoff = round(safe_fraction * n) + 1
    base = np.sign(x[0] - x[1:].mean())
    a = 2
    while a < cutoff and a < n and np.sign(x[a - 1] - x[a:].mean()) != -base:
        a += 1
    if before:
        a = max(a - 1, 1)
    return a


def _admean(x, safe_fraction, before, percentiles):
    a = auto_detect_cutoff(x, safe_fraction, before)
    xx = x[a - 1 :]
    prev = x[a - 2] if a >= 2 else None
    return _mean_with_se(xx, percentiles, f"ad[{a}]", prev=prev)


def gw_weights(lam, accel, n, istar):
    """Normalized geometric ramp capped at the transition index: weights
    grow like lam^(-accel*i) and plateau from istar on."""
    cap = lam ** (-accel * istar)
    i = np.arange(1, n + 1, dtype=float)
    w = np.minimum(lam ** (-accel * i), cap)
    return w / w.sum()


def _geom_weighted(x, responses, kind: GeomWeighted, percentiles):
    from .chain import build_tpm, kr_marginal_tpm, second_eigenvalue

    rule = kind.rule
    if rule is None:
        raise ValueError("geometric weighting needs the design rule to derive a rate")
    x = np.asarray(x, dtype=float)
    n = len(x)
    levels = np.unique(x)
    if len(levels) < 2:
        return _mean_with_se(x, percentiles, "gw[flat]")
    # blend tabulated rates with a uniform pseudo-prior of weight 1 per level
    yes = np.zeros(len(levels))
    tot = np.zeros(len(levels))
    index = {v: i for i, v in enumerate(levels)}
    for xi, yi in zip(x, responses):
        i = index[float(xi)]
        tot[i] += 1
        yes[i] += bool(yi)
    prior = (np.arange(1, len(levels) + 1)) / (len(levels) + 1.0)
    f_blend = (yes + prior) / (tot + 1.0)
    f_blend = np.maximum.accumulate(f_blend)  # keep monotone
    f_blend = np.clip(f_blend, 1e-6, 1.0 - 1e-6)
    f_blend = np.minimum(f_blend + 1e-9 * np.arange(len(f_blend)), 1 - 1e-6)
    if isinstance(rule, Kr):
        tpm = kr_marginal_tpm(f_blend, rule.k, levels)
    else:
        tpm = build_tpm(rule, f_blend, levels=levels)
    lam = second_eigenvalue(tpm)
    lam = min(max(lam, 1e-9), 1.0 - 1e-9)

    # transition index: where the geometric bias bound falls under a crude
    # standard error of the raw mean
    tail_se = float(x.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    bias0 = abs(x[0] - x.mean())
    istar = 1
    while istar < n and bias0 * lam ** (kind.accel * istar) > tail_se and bias0 > 0:
        istar += 1
    w = gw_weights(lam, kind.accel, n, istar)
    point = float(np.dot(w, x))
    se, df, flags = _chain_se(x[istar - 1 :], point)
    interval = tuple(point + stats.t.ppf(p, df) * se for p in percentiles)
    return EstimateWithCI(
        point=point,
        se=se,
        df=df,
        percentiles=tuple(percentiles),
        interval=interval,
        method=f"gw[{istar}]",
        flags=flags,
    )
