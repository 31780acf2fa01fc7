"""Per-slot drift-plus-penalty weights, water-filling power allocation and
drift-bound diagnostics.

Each transmitter minimizes  sum_f [ V p_f - psi ln(1 + gamma_f p_f) ]  subject
to its power budget, where psi aggregates the queue and virtual-queue state
(scaled by bandwidth/ln 2 so the log term matches the rate expression). The
optimum is the water-filling solution p_f = [psi/(V + lambda) - 1/gamma_f]^+
with lambda the budget multiplier.
"""

import math
from dataclasses import dataclass

import numpy as np

from .gpd import GpdParams, gpd_moments
from .queues import QueueState

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DppWeight:
    psi: float
    tradeoff: float  # V >= 0

    def __post_init__(self):
        if not math.isfinite(self.psi):
            raise ValueError("psi must be finite")
        if self.tradeoff < 0:
            raise ValueError("tradeoff V must be >= 0")


@dataclass
class PowerAllocation:
    per_rb_power: np.ndarray
    dual: float  # lambda >= 0

    @property
    def total(self):
        return float(self.per_rb_power.sum())


@dataclass
class DriftDiagnostics:
    bound_b: float
    const_terms: np.ndarray  # per-VUE C_v
    moment1: float  # d1 = Q0 + sigma/(1-xi)
    moment2: float  # d2 = 2 sigma^2 / ((1-xi)(1-2xi))
    realized_drift: float
    drift_bound: float
    holds: bool


def weight_core(q, vq_rel, vq_m1, vq_m2, mean, second, eps, q0):
    """The state-dependent factor of psi (and of the drift bound), unscaled."""
    ind = 1.0 if q > q0 else 0.0
    core = (1.0 + vq_rel - eps * q0) * q - eps * vq_rel
    if ind:
        excess = q - q0
        core += (q + vq_m1 - q0 - mean
                 + 2.0 * excess * (vq_m2 + excess * excess - second))
    return core


def compute_weight(state: QueueState, theta: GpdParams, eps: float, q0: float,
                   bandwidth: float, tradeoff: float = 1.0) -> DppWeight:
    """Drift-plus-penalty rate weight psi for one transmitter."""
    mean, second = gpd_moments(theta)  # raises at xi >= 1/2
    core = weight_core(state.q, state.vq_rel, state.vq_m1, state.vq_m2,
                       mean, second, eps, q0)
    return DppWeight(psi=bandwidth / LN2 * core, tradeoff=tradeoff)


def water_fill(weight: DppWeight, cinr_per_rb, p_max: float) -> PowerAllocation:
    """Budgeted water-filling for one transmitter.

    lambda is found by bisection on the monotone total-power curve, on the
    bracket [0, psi * max(gamma)] which forces an all-zero allocation at the
    top. Non-positive psi allocates nothing.
    """
    gamma = np.asarray(cinr_per_rb, dtype=float)
    if gamma.size == 0:
        return PowerAllocation(per_rb_power=np.zeros(0), dual=0.0)
    if np.any(gamma <= 0):
        raise ValueError("cinr values must be positive")
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    psi, v = weight.psi, weight.tradeoff
    if psi <= 0.0:
        return PowerAllocation(per_rb_power=np.zeros_like(gamma), dual=0.0)
    inv = 1.0 / gamma

    def alloc(lam):
        return np.maximum(psi / (v + lam) - inv, 0.0)

    if v > 0.0:
        p0 = alloc(0.0)
        if p0.sum() <= p_max:
            return PowerAllocation(per_rb_power=p0, dual=0.0)
    lo, hi = 0.0, psi * float(gamma.max())
    tol = 1e-9 * p_max
    for _ in range(100):
        lam = 0.5 * (lo + hi)
        total = alloc(lam).sum()
        if abs(total - p_max) <= tol:
            break
        if total > p_max:
            lo = lam
        else:
            hi = lam
    return PowerAllocation(per_rb_power=alloc(lam), dual=lam)


def water_fill_batch(psi, gamma, p_max, v):
    """Exact water-filling for many transmitters at once.

    ``psi`` has shape (K,), ``gamma`` (K, F). Solves each row's KKT system in
    closed form via the sorted-channel construction; rows with psi <= 0 get
    zeros. Returns powers of shape (K, F).
    """
    psi = np.asarray(psi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    k, f = gamma.shape
    powers = np.zeros_like(gamma)
    active = psi > 0.0
    if not active.any():
        return powers
    inv = 1.0 / gamma[active]
    pa = psi[active]
    if v > 0.0:
        w_unc = pa / v
        unc = np.maximum(w_unc[:, None] - inv, 0.0)
        over = unc.sum(axis=1) > p_max
        if not over.any():
            powers[active] = unc
            return powers
    else:
        w_unc = np.full(pa.shape, np.inf)
        over = np.ones(pa.shape, dtype=bool)
    # budget-bound rows: closed-form water level from the sorted channels
    s = np.sort(inv[over], axis=1)
    c = np.cumsum(s, axis=1)
    n = np.arange(1, f + 1)
    w_cand = (p_max + c) / n
    valid = w_cand > s
    n_star = np.argmax(valid * n, axis=1)  # index of the largest valid n
    w_con = w_cand[np.arange(n_star.size), n_star]
    w = w_unc.copy()
    w[over] = w_con
    powers[active] = np.maximum(w[:, None] - inv, 0.0)
    return powers


def drift_bound_diagnostics(q, vq_rel, vq_m1, vq_m2, arrivals, served,
                            theta: GpdParams, eps: float, q0: float) -> DriftDiagnostics:
    """Evaluate the one-slot drift bound on a recorded slot.

    Inputs are per-VUE arrays of the pre-slot queue state plus the slot's
    arrivals and served bits (served must not exceed backlog, which is how
    the simulator operates). Verifies realized drift <= C + (a-r)*core + B.
    """
    q = np.asarray(q, dtype=float)
    vq_rel = np.asarray(vq_rel, dtype=float)
    vq_m1 = np.asarray(vq_m1, dtype=float)
    vq_m2 = np.asarray(vq_m2, dtype=float)
    a = np.asarray(arrivals, dtype=float)
    r = np.asarray(served, dtype=float)
    if np.any(r > q + a + 1e-9):
        raise ValueError("served bits exceed backlog; the bound assumes "
                         "service is capped at q + arrivals")
    mean, second = gpd_moments(theta)
    d1 = q0 + mean
    d2 = second
    delta = a - r
    ind = (q > q0).astype(float)

    # realized one-slot drift from the actual updates
    q_next = np.maximum(0.0, q + delta)
    vq_rel_n = np.maximum(0.0, vq_rel + q_next - eps * q0)
    vq_m1_n = np.maximum(0.0, vq_m1 + (q_next - q0 - mean) * ind)
    vq_m2_n = np.maximum(0.0, vq_m2 + ind * (q_next - q0) ** 2 - second * ind)
    realized = 0.5 * ((q_next ** 2 - q ** 2) + (vq_rel_n ** 2 - vq_rel ** 2)
                      + (vq_m1_n ** 2 - vq_m1 ** 2) + (vq_m2_n ** 2 - vq_m2 ** 2))

    excess = q - q0
    # exact (a-r) coefficient from the drift expansion; this is not the
    # controller weight psi, whose queue/reliability grouping is a looser
    # reformulation that does not bound the drift
    ctrl = (2.0 * q + vq_rel - eps * q0
            + ind * (q + vq_m1 - d1 + 2.0 * excess * (vq_m2 + excess ** 2 - d2)))
    c_v = (vq_rel * (q - eps * q0) - eps * q0 * q
           + ind * ((vq_m1 - d1) * q - d1 * vq_m1))
    a1 = 0.5 * delta ** 2
    a2 = 0.5 * (q ** 2 + delta ** 2 + (eps * q0) ** 2)
    a3 = ind * 0.5 * (q ** 2 + delta ** 2 + d1 ** 2)
    a4 = ind * (0.5 * (excess ** 2 + delta ** 2 - d2) ** 2
                + 2.0 * (excess ** 2 + excess * delta) * delta ** 2
                + (excess ** 2 + delta ** 2) * vq_m2)
    b_terms = a1 + a2 + a3 + a4
    bound = c_v + delta * ctrl + b_terms

    realized_total = float(realized.sum())
    bound_total = float(bound.sum())
    tol = 1e-9 * max(1.0, abs(bound_total))
    return DriftDiagnostics(
        bound_b=float(b_terms.sum()),
        const_terms=c_v,
        moment1=d1,
        moment2=d2,
        realized_drift=realized_total,
        drift_bound=bound_total,
        holds=bool(realized_total <= bound_total + tol),
    )
