"""Generalized Pareto tail model: density, moments, likelihood, gradients,
feasible-set projection and the variance-reduced stochastic fitting pass.

The excess distribution is parametrized by theta = (sigma, xi):

    f(x) = (1/sigma) (1 + xi x / sigma)^(-1 - 1/xi)      xi != 0
    f(x) = (1/sigma) exp(-x / sigma)                     xi == 0

with support x >= 0 (and x <= -sigma/xi for xi < 0). The fitting objective is
the mean negative log density over the sample set; its per-sample gradient is

    d/dsigma = (1/sigma) ((1 + 1/xi) / u - 1/xi)         u = 1 + xi x / sigma
    d/dxi    = (1 + 1/xi) (x/sigma) / u - ln(u) / xi^2

which matches central finite differences everywhere in the interior (the
closed form is a 0/0 limit at xi = 0 and is evaluated by central differences
for |xi| below a small switch point).

The feasible set is sigma >= SIGMA_MIN, xi <= XI_MAX and, given the largest
observed sample q, sigma + xi q >= 0. XI_MAX = 0.49 keeps both tail moments
finite because the controller consumes the second moment.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_excess_samples

SIGMA_MIN = 1e-6
XI_MAX = 0.49
XI_SWITCH = 1e-6  # below this |xi|, gradients fall back to central differences


@dataclass(frozen=True)
class GpdParams:
    sigma: float
    xi: float

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not (self.xi < 1.0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be finite and below 1, got {self.xi}")

    def as_array(self):
        return np.array([self.sigma, self.xi])


@dataclass(frozen=True)
class GradientPair:
    d_sigma: float
    d_xi: float

    def as_array(self):
        return np.array([self.d_sigma, self.d_xi])


def _support_high(theta: GpdParams) -> float:
    return math.inf if theta.xi >= 0 else -theta.sigma / theta.xi


def gpd_pdf(x: float, theta: GpdParams) -> float:
    """Density at x; raises for x outside the support."""
    if x < 0 or x > _support_high(theta):
        raise ValueError(f"x={x} outside GPD support for {theta}")
    s, xi = theta.sigma, theta.xi
    if abs(xi) < XI_SWITCH:
        return math.exp(-x / s) / s
    return (1.0 + xi * x / s) ** (-1.0 - 1.0 / xi) / s


def gpd_logpdf(x, sigma, xi):
    """Vectorized log density; assumes x inside the support."""
    x = np.asarray(x, dtype=float)
    if abs(xi) < XI_SWITCH:
        return -np.log(sigma) - x / sigma
    return -np.log(sigma) - (1.0 + 1.0 / xi) * np.log1p(xi * x / sigma)


def gpd_sf(x, theta: GpdParams):
    """Survival function P(X > x), vectorized."""
    x = np.asarray(x, dtype=float)
    s, xi = theta.sigma, theta.xi
    if abs(xi) < XI_SWITCH:
        return np.exp(-x / s)
    u = np.maximum(1.0 + xi * x / s, 0.0)
    return u ** (-1.0 / xi)


def gpd_ppf(u, theta: GpdParams):
    """Quantile function (inverse CDF), vectorized over u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    s, xi = theta.sigma, theta.xi
    if abs(xi) < XI_SWITCH:
        return -s * np.log1p(-u)
    return s / xi * ((1.0 - u) ** -xi - 1.0)


def gpd_sample(theta: GpdParams, n: int, rng) -> np.ndarray:
    """Inverse-CDF draws."""
    return gpd_ppf(rng.random(n), theta)


def gpd_moments(theta: GpdParams):
    """(mean, second moment); defined only for xi < 1/2."""
    s, xi = theta.sigma, theta.xi
    if xi >= 0.5:
        raise ValueError(f"moments undefined for xi={xi} >= 1/2")
    mean = s / (1.0 - xi)
    second = 2.0 * s * s / ((1.0 - xi) * (1.0 - 2.0 * xi))
    return mean, second


def _check_feasible(samples: np.ndarray, theta: GpdParams):
    u_min = 1.0 + theta.xi * samples.max() / theta.sigma if theta.xi < 0 else 1.0
    if u_min <= 0.0:
        raise ValueError(
            f"{theta} infeasible: 1 + xi*x/sigma <= 0 for the largest sample")


def nll(samples, theta: GpdParams) -> float:
    """Mean negative log likelihood over a sample multiset."""
    x = check_excess_samples(samples)
    _check_feasible(x, theta)
    # fsum keeps the Eq.-style partition identity exact to ~1e-15
    return -math.fsum(gpd_logpdf(x, theta.sigma, theta.xi)) / x.size


def _nll_single_raw(x, sigma, xi):
    """Exact per-sample negative log density, stable near xi=0 via log1p."""
    if xi == 0.0:
        return math.log(sigma) + x / sigma
    return math.log(sigma) + (1.0 + 1.0 / xi) * math.log1p(xi * x / sigma)


def _grad_closed_form(x, sigma, xi):
    u = 1.0 + xi * x / sigma
    d_sigma = ((1.0 + 1.0 / xi) / u - 1.0 / xi) / sigma
    d_xi = (1.0 + 1.0 / xi) * (x / sigma) / u - math.log1p(xi * x / sigma) / (xi * xi)
    return d_sigma, d_xi


def _grad_fd(x, sigma, xi):
    h = 1e-7 * max(1.0, abs(sigma))
    # the xi step must keep 1 + (xi +- h) x / sigma well inside the support
    u = 1.0 + xi * x / sigma
    hx = h if x <= 0 else min(h, 0.25 * u * sigma / x)
    d_sigma = (_nll_single_raw(x, sigma + h, xi) - _nll_single_raw(x, sigma - h, xi)) / (2 * h)
    d_xi = (_nll_single_raw(x, sigma, xi + hx) - _nll_single_raw(x, sigma, xi - hx)) / (2 * hx)
    return d_sigma, d_xi


def _grad_scalar(x, sigma, xi):
    if 1.0 + xi * x / sigma <= 0.0:
        raise ValueError(
            f"gradient singular: 1 + xi*x/sigma <= 0 at x={x}, sigma={sigma}, xi={xi}")
    if abs(xi) < XI_SWITCH:
        return _grad_fd(x, sigma, xi)
    return _grad_closed_form(x, sigma, xi)


def nll_gradient(x: float, theta: GpdParams) -> GradientPair:
    """Per-sample gradient of the negative log likelihood w.r.t. (sigma, xi)."""
    d_sigma, d_xi = _grad_scalar(x, theta.sigma, theta.xi)
    return GradientPair(d_sigma=d_sigma, d_xi=d_xi)


def nll_gradient_many(x, sigma, xi):
    """Vectorized per-sample gradients, shape (n, 2)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, 2))
    if abs(xi) >= XI_SWITCH:
        u = 1.0 + xi * x / sigma
        if np.any(u <= 0.0):
            raise ValueError("gradient singular: feasibility boundary reached")
        out[:, 0] = ((1.0 + 1.0 / xi) / u - 1.0 / xi) / sigma
        out[:, 1] = (1.0 + 1.0 / xi) * (x / sigma) / u - np.log1p(xi * x / sigma) / (xi * xi)
        return out
    h = 1e-7 * max(1.0, abs(sigma))
    x_max = float(x.max()) if x.size else 0.0
    u_min = 1.0 + xi * x_max / sigma if xi < 0 else 1.0
    hx = h if x_max <= 0 else min(h, 0.25 * u_min * sigma / x_max)

    def batch_nll(s, c):
        if c == 0.0:
            return np.log(s) + x / s
        return np.log(s) + (1.0 + 1.0 / c) * np.log1p(c * x / s)

    out[:, 0] = (batch_nll(sigma + h, xi) - batch_nll(sigma - h, xi)) / (2 * h)
    out[:, 1] = (batch_nll(sigma, xi + hx) - batch_nll(sigma, xi - hx)) / (2 * hx)
    return out


# feasible-set projection -----------------------------------------------------


def project_feasible(candidate, max_sample: float) -> GpdParams:
    """Exact Euclidean projection onto the feasible parameter set.

    The set is the convex region {sigma >= SIGMA_MIN, xi <= XI_MAX} cut by the
    halfplane sigma + xi * max_sample >= 0 when max_sample > 0. Projection by
    case analysis over the active constraints.
    """
    s, xi = float(candidate[0]), float(candidate[1])
    q = float(max_sample)
    if q < 0:
        raise ValueError("max_sample must be >= 0")

    def feasible(p, tol=1e-12):
        ps, pxi = p
        if ps < SIGMA_MIN - tol or pxi > XI_MAX + tol:
            return False
        if q > 0.0 and ps + pxi * q < -tol * (1.0 + q):
            return False
        return True

    if feasible((s, xi), tol=0.0):
        return GpdParams(sigma=s, xi=xi)

    candidates = [(SIGMA_MIN, xi), (s, XI_MAX), (SIGMA_MIN, XI_MAX)]
    if q > 0.0:
        # projection onto the halfplane boundary sigma + q*xi = 0
        t = (s + q * xi) / (1.0 + q * q)
        candidates.append((s - t, xi - t * q))
        candidates.append((SIGMA_MIN, -SIGMA_MIN / q))
        candidates.append((-q * XI_MAX, XI_MAX))

    best, best_d2 = None, math.inf
    for p in candidates:
        if not feasible(p):
            continue
        d2 = (p[0] - s) ** 2 + (p[1] - xi) ** 2
        if d2 < best_d2:
            best, best_d2 = p, d2
    ps, pxi = best
    # absorb float noise from the boundary candidates
    ps = max(ps, SIGMA_MIN)
    pxi = min(pxi, XI_MAX)
    if q > 0.0 and ps + pxi * q < 0.0:
        pxi = -ps / q
    return GpdParams(sigma=ps, xi=pxi)


def _ensure_interior(theta: GpdParams, max_sample: float, margin=1e-9) -> GpdParams:
    """Nudge xi off the support boundary so gradients at x = max_sample exist."""
    if max_sample > 0.0 and theta.sigma + theta.xi * max_sample < margin * theta.sigma:
        return replace(theta, xi=theta.sigma * (margin - 1.0) / max_sample)
    return theta


# SVRGD --------------------------------------------------------------------


@dataclass
class SvrgdState:
    """Iterate, running average of past iterates and iteration counter."""

    theta: GpdParams
    theta_avg: GpdParams
    iteration: int
    step_size: np.ndarray  # per-component (sigma, xi)

    @classmethod
    def initial(cls, theta0: GpdParams, step_size):
        step = np.asarray(step_size, dtype=float)
        if np.any(step < 0):
            raise ValueError("step_size components must be >= 0")
        return cls(theta=theta0, theta_avg=theta0, iteration=1, step_size=step)


def svrgd_step(state: SvrgdState, sample: float, anchor_gradient: GradientPair,
               max_sample: float) -> SvrgdState:
    """One variance-reduced update; theta_avg stays the mean of past iterates."""
    g_cur = _grad_scalar(sample, state.theta.sigma, state.theta.xi)
    g_avg = _grad_scalar(sample, state.theta_avg.sigma, state.theta_avg.xi)
    eta = state.step_size
    y = (state.theta.as_array()
         - eta * (np.array(g_cur) - np.array(g_avg) + anchor_gradient.as_array()))
    theta_new = project_feasible(y, max_sample)
    n = state.iteration
    avg = state.theta_avg.as_array()
    new_avg = (avg * (n - 1) + state.theta.as_array()) / n
    return SvrgdState(theta=theta_new,
                      theta_avg=GpdParams(sigma=new_avg[0], xi=new_avg[1]),
                      iteration=n + 1,
                      step_size=eta)


def svrgd_pass(samples, theta_anchor: GpdParams, grad_anchor, step, rng,
               max_sample: float, n_iterations: int = 1):
    """Sequential pass over a sample batch with round-start anchors.

    Starts from the anchor parameters, iterates over fresh random permutations
    with step ``step / len(samples)`` per component, and accumulates the
    per-step gradients at the evolving iterate. ``grad_anchor=None`` anchors
    at the batch-mean gradient of the anchor parameters (used before any
    global average exists). Returns (theta_end, grad_acc).
    """
    x = check_excess_samples(samples)
    m = x.size
    q_proj = max(max_sample, float(x.max()))
    theta_anchor = _ensure_interior(theta_anchor, q_proj)
    step = np.asarray(step, dtype=float)
    eta_s, eta_x = step[0] / m, step[1] / m
    anchor_grads = nll_gradient_many(x, theta_anchor.sigma, theta_anchor.xi)
    if grad_anchor is None:
        ga = anchor_grads.mean(axis=0)
    else:
        ga = np.asarray(grad_anchor, dtype=float)

    sigma, xi = theta_anchor.sigma, theta_anchor.xi
    acc_s = 0.0
    acc_x = 0.0
    xi_cap = XI_MAX
    for _ in range(n_iterations):
        perm = rng.permutation(m)
        for idx in perm:
            xv = x[idx]
            gs, gx = _grad_scalar(xv, sigma, xi)
            acc_s += gs
            acc_x += gx
            ds = eta_s * (gs - anchor_grads[idx, 0] + ga[0])
            dx = eta_x * (gx - anchor_grads[idx, 1] + ga[1])
            # relative trust region: a single stochastic step may not move the
            # scale by more than 2x or the shape by more than 0.1, which tames
            # the small-batch transient when the initial scale is far off
            half = 0.5 * sigma
            if ds > half:
                ds = half
            elif ds < -sigma:
                ds = -sigma
            if dx > 0.1:
                dx = 0.1
            elif dx < -0.1:
                dx = -0.1
            sigma -= ds
            xi -= dx
            # fast projection: full case analysis only when a constraint binds
            # (margin keeps the next gradient off the support boundary)
            if sigma < SIGMA_MIN or xi > xi_cap or sigma + xi * q_proj < 1e-9 * sigma:
                proj = project_feasible((sigma, xi), q_proj)
                proj = _ensure_interior(proj, q_proj)
                sigma, xi = proj.sigma, proj.xi
    return GpdParams(sigma=sigma, xi=xi), np.array([acc_s, acc_x])


def fit_gpd_svrgd(samples, *, step=(50.0, 0.005), theta0=(1.0, 0.0),
                  n_rounds=400, n_iterations=1, rng=None, seed=0):
    """Single-estimator fit: repeated anchored passes over the full set.

    Each round anchors at the current (theta, G), sweeps the whole sample set
    once per inner iteration, then refreshes G with the accumulated average
    gradient. The first round anchors at the batch-mean gradient. Returns
    (GpdParams, final mean NLL).
    """
    x = check_excess_samples(samples)
    if rng is None:
        rng = np.random.default_rng(seed)
    q = float(x.max())
    theta = _ensure_interior(project_feasible(theta0, q), q)
    grad = None
    for _ in range(n_rounds):
        theta, acc = svrgd_pass(x, theta, grad, step, rng, q, n_iterations)
        theta = _ensure_interior(theta, q)
        grad = acc / (x.size * n_iterations)
    return theta, nll(x, theta)


class GpdTailEstimator(BaseEstimator):
    """Tail-excess density estimator fitted by variance-reduced SGD.

    Parameters mirror the fitting defaults: per-component step sizes, initial
    parameters and gradient estimate, and the number of full passes.
    """

    def __init__(self, step_sigma=50.0, step_xi=0.005, sigma0=1.0, xi0=0.0,
                 n_rounds=400, n_iterations=1, random_state=0):
        self.step_sigma = step_sigma
        self.step_xi = step_xi
        self.sigma0 = sigma0
        self.xi0 = xi0
        self.n_rounds = n_rounds
        self.n_iterations = n_iterations
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_excess_samples(X)
        theta, final_nll = fit_gpd_svrgd(
            x,
            step=(self.step_sigma, self.step_xi),
            theta0=(self.sigma0, self.xi0),
            n_rounds=self.n_rounds,
            n_iterations=self.n_iterations,
            rng=np.random.default_rng(self.random_state),
        )
        self.sigma_ = theta.sigma
        self.xi_ = theta.xi
        self.nll_ = final_nll
        self.n_samples_ = x.size
        self.max_sample_ = float(x.max())
        return self

    @property
    def theta_(self):
        return GpdParams(sigma=self.sigma_, xi=self.xi_)

    def score_samples(self, X):
        """Per-sample log density under the fitted parameters."""
        x = check_excess_samples(X)
        return gpd_logpdf(x, self.sigma_, self.xi_)

    def score(self, X, y=None):
        """Mean log likelihood (negated fitting objective)."""
        return -nll(X, self.theta_)
