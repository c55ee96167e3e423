"""Markov-chain analytics for up-and-down designs.

Closed-form stationary profiles, transition matrices, exact progression of
the treatment distribution, convergence counts, eigenvalue rates, reversal
filters, first-reversal distributions and small-spacing bias expansions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .designs import Bcd, BoundaryPolicy, DesignRule, Gud, Kr, Sud, target_of


def _check_f(F):
    F = np.asarray(F, dtype=float)
    if F.ndim != 1 or F.size < 2:
        raise ValueError("need F values at 2 or more levels")
    if np.any(F <= 0.0) or np.any(F >= 1.0):
        raise ValueError("degenerate scenario: F values must lie strictly inside (0, 1)")
    if np.any(np.diff(F) < 0):
        raise ValueError("F values must be nondecreasing")
    return F


# ---------------------------------------------------------------------------
# Stationary profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StationaryProfile:
    gamma: np.ndarray  # length m-1, gamma_u = pi_{u+1}/pi_u
    pi: np.ndarray  # length m, sums to 1
    mode_indices: tuple[int, ...]  # 1-based, one or two adjacent

    def mean_over(self, levels):
        return float(np.dot(self.pi, np.asarray(levels, dtype=float)))

    def sd_over(self, levels):
        levels = np.asarray(levels, dtype=float)
        mu = self.mean_over(levels)
        return float(math.sqrt(np.dot(self.pi, (levels - mu) ** 2)))


def _one_minus_qk(F, k):
    """1 - (1-F)^k without cancellation near F = 0."""
    return -np.expm1(k * np.log1p(-np.asarray(F, dtype=float)))


def gamma_profile(rule: DesignRule, F) -> np.ndarray:
    """Adjacent stationary frequency ratios pi_{u+1}/pi_u for the design."""
    F = _check_f(F)
    lo, hi = F[:-1], F[1:]
    if isinstance(rule, Sud):
        return (1.0 - lo) / hi
    if isinstance(rule, Bcd):
        return (1.0 - lo) / hi * rule.up_coin
    if isinstance(rule, Kr):
        k = rule.k
        return lo * (1.0 - lo) ** k / (hi * _one_minus_qk(lo, k))
    if isinstance(rule, Gud):
        if rule.a == 0 and rule.b == 1:
            return (1.0 - lo) ** rule.k / _one_minus_qk(hi, rule.k)
        up = stats.binom.cdf(rule.a, rule.k, lo)
        down = stats.binom.sf(rule.b - 1, rule.k, hi)
        return up / down
    raise TypeError(f"unsupported rule {rule!r}")


def stationary_profile(rule: DesignRule, F) -> StationaryProfile:
    gamma = gamma_profile(rule, F)
    # log-space cumulative products guard against under/overflow on long grids
    logpi = np.concatenate([[0.0], np.cumsum(np.log(gamma))])
    logpi -= logpi.max()
    pi = np.exp(logpi)
    pi /= pi.sum()
    mode = _mode_indices(pi)
    return StationaryProfile(gamma=gamma, pi=pi, mode_indices=mode)


def _mode_indices(pi, rel_tol=1e-9):
    top = pi.max()
    idx = [i + 1 for i in range(len(pi)) if pi[i] >= top * (1.0 - rel_tol)]
    if len(idx) > 2 or (len(idx) == 2 and idx[1] != idx[0] + 1):
        # numerically flat profiles (e.g. exactly-on-target SU&D) keep the
        # two adjacent leaders around the maximum
        best = int(np.argmax(pi)) + 1
        idx = [best]
    return tuple(idx)


def internal_state_profile(k: int, F) -> np.ndarray:
    """KR stationary frequencies over (level, tau) states, normalized.

    Within a level the tau frequencies form the diminishing geometric
    sequence pi_{u,tau+1} = (1-F_u) pi_{u,tau}.
    """
    F = _check_f(F)
    prof = stationary_profile(Kr(k=k), F)
    m = len(F)
    out = np.zeros((m, k))
    for u in range(m):
        q = 1.0 - F[u]
        w = q ** np.arange(k)
        out[u] = prof.pi[u] * w / w.sum()
    return out


def kr_marginal_up(F, k):
    """Stationary marginal escalation probability of a KR level."""
    F = np.asarray(F, dtype=float)
    q = 1.0 - F
    return F * q**k / _one_minus_qk(F, k)


# ---------------------------------------------------------------------------
# Transition matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionMatrix:
    P: np.ndarray
    labels: tuple  # (level,) or (level, tau) per state, 1-based levels
    level_values: np.ndarray | None = None  # treatment value of each state
    cohort: int = 1  # trials consumed per matrix step

    @property
    def dim(self):
        return self.P.shape[0]


def build_tpm(rule: DesignRule, F, boundary=BoundaryPolicy.REFLECTING, levels=None) -> TransitionMatrix:
    """Transition probability matrix of the design on the given scenario.

    Reflecting boundaries clamp blocked moves onto the boundary level (for KR
    this resets the internal counter). Layover boundaries are represented by
    padding the lattice with constant-F levels until the stationary tail mass
    is negligible. Unbounded walks have no finite matrix.
    """
    F = _check_f(F)
    m = len(F)
    if levels is None:
        levels = np.arange(1.0, m + 1.0)
    levels = np.asarray(levels, dtype=float)

    if boundary is BoundaryPolicy.UNBOUNDED:
        raise ValueError("unbounded walks have no finite transition matrix")
    if boundary is BoundaryPolicy.LAYOVER:
        pad = 60
        s = levels[1] - levels[0]
        F = np.concatenate([np.full(pad, F[0]), F, np.full(pad, F[-1])])
        levels = np.concatenate(
            [levels[0] + s * np.arange(-pad, 0), levels, levels[-1] + s * np.arange(1, pad + 1)]
        )
        m = len(F)

    if isinstance(rule, Kr):
        return _kr_tpm(rule.k, F, levels)

    if isinstance(rule, Sud):
        up, down = 1.0 - F, F
    elif isinstance(rule, Bcd):
        up, down = (1.0 - F) * rule.up_coin, F
    elif isinstance(rule, Gud):
        up = stats.binom.cdf(rule.a, rule.k, F)
        down = stats.binom.sf(rule.b - 1, rule.k, F)
    else:
        raise TypeError(f"unsupported rule {rule!r}")

    P = np.zeros((m, m))
    for u in range(m):
        p, q = up[u], down[u]
        r = max(1.0 - p - q, 0.0)  # guard the -1e-17 rounding case
        if u + 1 < m:
            P[u, u + 1] = p
        else:
            r += p
        if u - 1 >= 0:
            P[u, u - 1] = q
        else:
            r += q
        P[u, u] = r
    return TransitionMatrix(P=P, labels=tuple((u + 1,) for u in range(m)),
                            level_values=levels, cohort=rule.cohort)


def _kr_tpm(k, F, levels):
    m = len(F)
    dim = m * k

    def s(u, tau):
        return u * k + tau

    P = np.zeros((dim, dim))
    for u in range(m):
        q = F[u]  # down on yes
        p = 1.0 - F[u]
        down_state = s(u - 1, 0) if u > 0 else s(u, 0)  # reflect resets tau
        for tau in range(k):
            if tau < k - 1:
                P[s(u, tau), down_state] += q
                P[s(u, tau), s(u, tau + 1)] += p
            else:
                P[s(u, tau), down_state] += q
                up_state = s(u + 1, 0) if u + 1 < m else s(u, 0)
                P[s(u, tau), up_state] += p
    labels = tuple((u + 1, tau) for u in range(m) for tau in range(k))
    vals = np.repeat(np.asarray(levels, dtype=float), k)
    return TransitionMatrix(P=P, labels=labels, level_values=vals, cohort=1)


def kr_marginal_tpm(F, k, levels=None) -> TransitionMatrix:
    """m-by-m reversible matrix of KR marginal transition probabilities."""
    F = _check_f(F)
    m = len(F)
    if levels is None:
        levels = np.arange(1.0, m + 1.0)
    up = kr_marginal_up(F, k)
    P = np.zeros((m, m))
    for u in range(m):
        p, q = up[u], F[u]
        r = max(1.0 - p - q, 0.0)
        if u + 1 < m:
            P[u, u + 1] = p
        else:
            r += p
        if u - 1 >= 0:
            P[u, u - 1] = q
        else:
            r += q
        P[u, u] = r
    return TransitionMatrix(P=P, labels=tuple((u + 1,) for u in range(m)),
                            level_values=np.asarray(levels, dtype=float))


def stationary_vector(tpm: TransitionMatrix, tol=1e-12, max_iter=500000) -> np.ndarray:
    """Left stationary vector by power iteration on the lazy chain (P+I)/2.

    The half-identity mix shares the stationary vector but suppresses the
    near-periodic negative eigenvalue these low-self-transition walks carry.
    The stopping rule extrapolates the geometric tail (error is roughly
    diff * r / (1-r) with r the successive-difference contraction).
    """
    P = tpm.P
    v = np.full(tpm.dim, 1.0 / tpm.dim)
    prev_diff = None
    for _ in range(max_iter):
        nxt = 0.5 * (v @ P) + 0.5 * v
        diff = np.abs(nxt - v).max()
        if diff == 0.0:
            return nxt / nxt.sum()
        if prev_diff is not None and diff < prev_diff:
            r = diff / prev_diff
            if diff * r / (1.0 - r) < tol:
                return nxt / nxt.sum()
        prev_diff = diff
        v = nxt
    return v / v.sum()


def marginal_levels(tpm: TransitionMatrix, vec) -> np.ndarray:
    """Sum a state vector over internal states, yielding per-level masses."""
    levels = sorted({lab[0] for lab in tpm.labels})
    out = np.zeros(len(levels))
    for mass, lab in zip(vec, tpm.labels):
        out[lab[0] - levels[0]] += mass
    return out


# ---------------------------------------------------------------------------
# Progression and convergence
# ---------------------------------------------------------------------------


def progression(tpm: TransitionMatrix, initial, i: int) -> np.ndarray:
    """Exact treatment distribution at trial i: rho(1)^T P^(i-1)."""
    rho = np.asarray(initial, dtype=float)
    if rho.shape != (tpm.dim,):
        raise ValueError("initial vector has wrong dimension")
    if not math.isclose(rho.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("initial vector must sum to 1")
    for _ in range(i - 1):
        rho = rho @ tpm.P
    return rho


def trials_to_convergence(tpm: TransitionMatrix, initial, fraction=0.99, max_steps=100000) -> int:
    """Trials until the ensemble treatment mean converges the given fraction
    of the way from its initial value to the stationary mean.

    Cohort designs report trial counts in multiples of the cohort size.
    """
    if tpm.level_values is None:
        raise ValueError("transition matrix carries no treatment values")
    vals = tpm.level_values
    pi = stationary_vector(tpm)
    mu = float(pi @ vals)
    rho = np.asarray(initial, dtype=float)
    gap0 = abs(float(rho @ vals) - mu)
    if gap0 < 1e-14:
        raise ValueError("initial mean already equals the stationary mean")
    goal = (1.0 - fraction) * gap0
    step = 1
    while step <= max_steps:
        if abs(float(rho @ vals) - mu) <= goal:
            return step * tpm.cohort
        rho = rho @ tpm.P
        step += 1
    raise RuntimeError("no convergence within max_steps")


def second_eigenvalue(tpm: TransitionMatrix, tol=1e-13, max_iter=500000) -> float:
    """Modulus of the second-largest eigenvalue, via deflated power iteration.

    The unit eigenvalue is removed with the stationary projector; the
    remaining dominant modulus is tracked over paired steps so that a
    negative extreme eigenvalue converges too.
    """
    P = tpm.P
    pi = stationary_vector(tpm)
    if np.any(pi <= 0):
        raise ValueError("matrix looks reducible: stationary vector has zeros")
    ones = np.ones(tpm.dim)
    # act with the deflated operator A = P - 1 pi^T on row vectors: v A
    rng = np.random.default_rng(20240901)
    v = rng.standard_normal(tpm.dim)
    v -= (v @ ones) * pi  # remove the unit-eigenvalue component
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        # two deflated steps per update: the norm-growth over a step pair
        # converges even when the extreme eigenvalue is negative
        w = v @ P - (v @ ones) * pi
        w2 = w @ P - (w @ ones) * pi
        n2 = np.linalg.norm(w2)
        if n2 == 0.0:
            return 0.0
        new_lam = math.sqrt(n2)  # ||A^2 v|| with ||v|| = 1
        v = w2 / n2
        if abs(new_lam - lam) < tol:
            return new_lam
        lam = new_lam
    return lam


# ---------------------------------------------------------------------------
# Reversal analytics
# ---------------------------------------------------------------------------


def marginal_up_probability(rule: DesignRule, F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if isinstance(rule, Sud):
        return 1.0 - F
    if isinstance(rule, Bcd):
        return (1.0 - F) * rule.up_coin
    if isinstance(rule, Kr):
        return kr_marginal_up(F, rule.k)
    raise TypeError("marginal single-trial up-probability undefined for cohort designs")


def reversal_stationary(rule: DesignRule, F) -> np.ndarray:
    """Stationary frequency of reversals per level, normalized.

    The reversal frequency is the stationary frequency filtered by
    p_u + F_u - 2 p_u F_u, with p_u the marginal escalation probability.
    """
    F = _check_f(F)
    prof = stationary_profile(rule, F)
    p = marginal_up_probability(rule, F)
    filt = p + F - 2.0 * p * F
    w = prof.pi * filt
    return w / w.sum()


def reversal_filter(rule: DesignRule, F) -> np.ndarray:
    """The per-level filter factor alone (diagnostic)."""
    F = np.asarray(F, dtype=float)
    p = marginal_up_probability(rule, F)
    return p + F - 2.0 * p * F


def first_reversal_distribution(rule: DesignRule, F, start="bottom"):
    """PMF of the first response flip's level when climbing from l_1 (or
    descending from l_m), plus the residual mass of passing the far boundary.

    Returns (pmf over levels, residual).
    """
    F = _check_f(F)
    m = len(F)
    if isinstance(rule, (Sud, Kr)):
        k = rule.k if isinstance(rule, Kr) else 1
        pass_up = (1.0 - F) ** k
        pass_down = F
    elif isinstance(rule, Bcd):
        p = (1.0 - F) * rule.up_coin
        q = F
        pass_up = p / (p + q)
        pass_down = F
    elif isinstance(rule, Gud):
        if rule.a != 0 or rule.b != 1:
            raise ValueError("first-reversal distribution supports GU&D(k,0,1) only")
        pass_up = (1.0 - F) ** rule.k
        pass_down = F**rule.k
    else:
        raise TypeError(f"unsupported rule {rule!r}")

    pmf = np.zeros(m)
    alive = 1.0
    order = range(m) if start == "bottom" else range(m - 1, -1, -1)
    passing = pass_up if start == "bottom" else pass_down
    for u in order:
        pmf[u] = alive * (1.0 - passing[u])
        alive *= passing[u]
    return pmf, float(alive)


# ---------------------------------------------------------------------------
# Peakedness, mode basins, bias expansions
# ---------------------------------------------------------------------------


def peakedness_compare(rule_a: DesignRule, rule_b: DesignRule, F, target, tol=1e-9) -> str:
    """Per-level profile comparison split at the target, per the steeper-
    profile ordering. Returns "A", "B" or "mixed"."""
    if abs(target_of(rule_a) - target_of(rule_b)) > 1e-6:
        raise ValueError("peakedness comparison requires a common target")
    F = _check_f(F)
    ga = gamma_profile(rule_a, F)
    gb = gamma_profile(rule_b, F)
    below = F[:-1] <= target + tol
    above = F[:-1] >= target - tol
    a_steeper = np.all(ga[below] >= gb[below] - tol) and np.all(ga[above] <= gb[above] + tol)
    b_steeper = np.all(gb[below] >= ga[below] - tol) and np.all(gb[above] <= ga[above] + tol)
    if a_steeper and not b_steeper:
        return "A"
    if b_steeper and not a_steeper:
        return "B"
    if a_steeper and b_steeper:
        return "equal"
    return "mixed"


def mode_basin_ratio(rule: DesignRule, p=None) -> float:
    """Critical offset ratio at which the stationary mode flips to the upper
    of the two levels bracketing the target (first order in spacing)."""
    if isinstance(rule, Sud):
        return 1.0
    if p is None:
        p = target_of(rule)
    if isinstance(rule, Kr):
        return (1.0 - p) / ((2 * rule.k + 1) * p - 1.0)
    if isinstance(rule, Bcd):
        return (1.0 - p) / p
    if isinstance(rule, Gud):
        if rule.b == rule.k - rule.a:
            return 1.0  # median-symmetric cohort rules balance to first order
        raise ValueError("basin ratio implemented for median-symmetric GU&D only")
    raise TypeError(f"unsupported rule {rule!r}")


@dataclass(frozen=True)
class BiasExpansion:
    first_order: float
    second_order: float | None
    leading: float


def stationary_bias_approx(rule: DesignRule, model, grid) -> BiasExpansion:
    """Leading small-spacing terms of the stationary profile asymmetry around
    the target (the telescoping-pair expansion of the stationary-mean bias).

    SU&D and median GU&D pairs cancel to first order; the second-order term
    -2 s^2 f'(Q_p) is returned instead.
    """
    p = target_of(rule)
    qp = float(model.quantile(p))
    s = grid.spacing
    f = float(model.pdf(qp))
    fprime = float(model.dpdf(qp))
    if isinstance(rule, Sud) or (isinstance(rule, Gud) and rule.b == rule.k - rule.a):
        second = -2.0 * s * s * fprime
        return BiasExpansion(first_order=0.0, second_order=second, leading=second)
    if isinstance(rule, Bcd):
        first = (2.0 * p - 1.0) / (p * (1.0 - p)) * s * f
        return BiasExpansion(first_order=first, second_order=None, leading=first)
    if isinstance(rule, Kr):
        first = 2.0 * ((rule.k + 1) * p - 1.0) / (p * (1.0 - p)) * s * f
        return BiasExpansion(first_order=first, second_order=None, leading=first)
    if isinstance(rule, Gud):
        # non-median cohort rules inherit the SU&D-type cancellation on the
        # transformed scale; report the second-order term on that scale
        second = -2.0 * s * s * fprime
        return BiasExpansion(first_order=0.0, second_order=second, leading=second)
    raise TypeError(f"unsupported rule {rule!r}")


# ---------------------------------------------------------------------------
# Report emission (CLI `analyze`)
# ---------------------------------------------------------------------------


def analysis_report(rule: DesignRule, F, levels) -> tuple[str, str]:
    """Returns (csv_text, summary_text) with per-level stationary quantities."""
    F = _check_f(F)
    levels = np.asarray(levels, dtype=float)
    prof = stationary_profile(rule, F)
    rev = reversal_stationary(rule, F) if not isinstance(rule, Gud) else None
    lines = ["level,treatment,F,pi,gamma,reversal_freq"]
    for u in range(len(F)):
        gamma = float(prof.gamma[u]) if u < len(prof.gamma) else math.nan
        rv = float(rev[u]) if rev is not None else math.nan
        lines.append(
            f"{u + 1},{float(levels[u])!r},{float(F[u])!r},{float(prof.pi[u])!r},"
            f"{gamma!r},{rv!r}"
        )
    csv_text = "\n".join(lines) + "\n"

    mu = prof.mean_over(levels)
    sd = prof.sd_over(levels)
    mode = ", ".join(str(u) for u in prof.mode_indices)
    summary = (
        f"design: {rule}\n"
        f"target response rate: {target_of(rule):.6f}\n"
        f"stationary mean: {mu:.6f}\n"
        f"stationary sd: {sd:.6f}\n"
        f"mode level(s): {mode}\n"
    )
    return csv_text, summary
