"""Distributed estimation of the tail parameters.

Three protocols share one pass/averaging core:

  * centralized ("cen"): every transmitter uploads its new excess samples,
    the aggregator runs the anchored SVRGD pass over the pooled batch and
    broadcasts the parameters back;
  * synchronous federated ("sync"): every transmitter runs the pass locally
    on its own new samples, uploads (gradient, parameters, count, max), the
    aggregator does weighted model averaging and broadcasts;
  * asynchronous federated ("async"): a transmitter fires on its own once it
    has gathered ``m0`` new samples; the aggregator merges its fresh model
    with the latest stored models of everyone else and replies to that
    transmitter only.

All passes consume the new-since-last-pass batch, start from the currently
known global parameters, use step eta / batch_size per component, and anchor
the variance correction at the round-start global (theta, G). With a single
participant the three protocols are operation-for-operation identical, which
pins the centralized/federated equivalence used by the tests.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .gpd import (GpdParams, _ensure_interior, nll, project_feasible,
                  svrgd_pass)
from .validation import check_excess_samples

PROTOCOLS = ("cen", "sync", "async")


@dataclass
class LocalModel:
    """One transmitter's uploadable model."""

    gradient: np.ndarray  # accumulated pass gradient, shape (2,)
    theta: GpdParams
    sample_count: int  # batch size of the pass that produced this model
    max_sample: float  # largest excess this transmitter has ever seen


@dataclass
class GlobalModel:
    theta: GpdParams
    gradient: np.ndarray
    total_samples: int = 0
    global_max_sample: float = 0.0


@dataclass(frozen=True)
class CommCostParams:
    """Payload sizes in bits for the three exchanged quantities."""

    s_gradient: float = 16.0
    s_params: float = 16.0
    s_queue_sample: float = 8.0

    def __post_init__(self):
        if min(self.s_gradient, self.s_params, self.s_queue_sample) <= 0:
            raise ValueError("payload sizes must be positive")

    @property
    def model_bits(self):
        return self.s_gradient + self.s_params + self.s_queue_sample


@dataclass
class Transfer:
    """A pending exchange: payload only; the link layer prices the delay."""

    vue_id: int
    direction: str  # "up" or "down"
    payload_bits: float


@dataclass
class ExchangeEvent:
    """A priced exchange over a transmitter-aggregator link."""

    vue_id: int
    direction: str
    payload_bits: float
    duration: float  # s
    slots_blocked: int
    slot: int = -1

    @classmethod
    def from_transfer(cls, transfer: Transfer, rate: float, t_slot: float, slot=-1):
        if rate <= 0:
            raise ValueError("link rate must be positive")
        duration = transfer.payload_bits / rate
        return cls(vue_id=transfer.vue_id, direction=transfer.direction,
                   payload_bits=transfer.payload_bits, duration=duration,
                   slots_blocked=int(math.ceil(duration / t_slot)), slot=slot)


def total_bits_exchanged(events) -> float:
    """Sum of payload bits over exchange events (or raw transfers)."""
    return float(sum(e.payload_bits for e in events))


def local_pass(theta_anchor: GpdParams, grad_anchor, samples, base_step, rng,
               max_sample: float, n_iterations: int = 1) -> LocalModel:
    """Anchored SVRGD sweep over one transmitter's new samples."""
    x = check_excess_samples(samples)
    theta, acc = svrgd_pass(x, theta_anchor, grad_anchor, base_step, rng,
                            max_sample, n_iterations)
    return LocalModel(gradient=acc, theta=theta, sample_count=x.size,
                      max_sample=max(max_sample, float(x.max())))


def global_average(global_model: GlobalModel, locals_) -> GlobalModel:
    """Weighted model averaging over contributed local models.

    theta <- theta_prev + sum_v w_v (theta_v - theta_prev) with w_v
    proportional to sample counts; the gradient estimate is the count-
    normalized sum of accumulated gradients. The result is re-projected
    against the largest sample seen anywhere.
    """
    locals_ = list(locals_)
    if not locals_:
        raise ValueError("global_average needs at least one local model")
    total = sum(m.sample_count for m in locals_)
    if total <= 0:
        raise ValueError("global_average needs a positive total sample count")
    prev = global_model.theta.as_array()
    theta = prev.copy()
    grad = np.zeros(2)
    q_max = global_model.global_max_sample
    for m in locals_:
        w = m.sample_count / total
        theta += w * (m.theta.as_array() - prev)
        grad += m.gradient
        q_max = max(q_max, m.max_sample)
    grad /= total
    projected = _ensure_interior(project_feasible(theta, q_max), q_max)
    return GlobalModel(theta=projected, gradient=grad, total_samples=total,
                       global_max_sample=q_max)


def _initial_global(theta0, grad0):
    return GlobalModel(theta=GpdParams(*theta0),
                       gradient=np.asarray(grad0, dtype=float))


class CenCoordinator:
    """Aggregator-side estimation over raw uploaded samples."""

    def __init__(self, step=(50.0, 0.005), theta0=(1.0, 0.0),
                 grad0=(1.0, 1000.0), n_iterations=1,
                 cost: CommCostParams = None, rng=None):
        self.step = np.asarray(step, dtype=float)
        self.n_iterations = n_iterations
        self.cost = cost or CommCostParams()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.global_model = _initial_global(theta0, grad0)
        self._max_seen = {}

    def run_round(self, new_samples):
        """One periodic round; ``new_samples`` maps vue_id -> fresh excesses.

        Every listed transmitter is charged the parameter download even when
        it contributed nothing; uploads are charged per queued sample.
        """
        transfers = []
        pooled = []
        for vid in sorted(new_samples):
            batch = np.asarray(new_samples[vid], dtype=float)
            if batch.size:
                pooled.append(batch)
                self._max_seen[vid] = max(self._max_seen.get(vid, 0.0),
                                          float(batch.max()))
                transfers.append(Transfer(vid, "up",
                                          self.cost.s_queue_sample * batch.size))
        if pooled:
            x = np.concatenate(pooled)
            g = self.global_model
            anchor = g.gradient if g.total_samples > 0 else None
            q_max = max(g.global_max_sample, float(x.max()))
            model = local_pass(g.theta, anchor, x, self.step, self.rng,
                               q_max, self.n_iterations)
            self.global_model = global_average(g, [model])
        for vid in sorted(new_samples):
            transfers.append(Transfer(vid, "down", self.cost.s_params))
        return self.global_model, transfers


class SyncCoordinator:
    """Synchronous federated rounds: local passes, then one weighted average."""

    def __init__(self, step=(50.0, 0.005), theta0=(1.0, 0.0),
                 grad0=(1.0, 1000.0), n_iterations=1,
                 cost: CommCostParams = None, rng=None):
        self.step = np.asarray(step, dtype=float)
        self.n_iterations = n_iterations
        self.cost = cost or CommCostParams()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.global_model = _initial_global(theta0, grad0)
        self._max_seen = {}

    def run_round(self, new_samples):
        transfers = []
        contributions = []
        g = self.global_model
        anchor = g.gradient if g.total_samples > 0 else None
        for vid in sorted(new_samples):
            batch = np.asarray(new_samples[vid], dtype=float)
            if batch.size:
                q_v = max(self._max_seen.get(vid, 0.0), float(batch.max()))
                self._max_seen[vid] = q_v
                model = local_pass(g.theta, anchor, batch, self.step,
                                   self.rng,
                                   max(g.global_max_sample, q_v),
                                   self.n_iterations)
                model.max_sample = q_v
                contributions.append(model)
            transfers.append(Transfer(vid, "up", self.cost.model_bits))
        if contributions:
            self.global_model = global_average(g, contributions)
        for vid in sorted(new_samples):
            transfers.append(Transfer(vid, "down", self.cost.model_bits))
        return self.global_model, transfers


class AsyncCoordinator:
    """Asynchronous federated updates on per-transmitter sample thresholds."""

    def __init__(self, step=(50.0, 0.005), theta0=(1.0, 0.0),
                 grad0=(1.0, 1000.0), n_iterations=1,
                 cost: CommCostParams = None, rng=None):
        self.step = np.asarray(step, dtype=float)
        self.n_iterations = n_iterations
        self.cost = cost or CommCostParams()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.global_model = _initial_global(theta0, grad0)
        self.stored_models = {}
        self._max_seen = {}

    def fire(self, vue_id, new_samples):
        """One transmitter's threshold-triggered update with its new batch."""
        batch = check_excess_samples(new_samples)
        g = self.global_model
        anchor = g.gradient if g.total_samples > 0 else None
        q_v = max(self._max_seen.get(vue_id, 0.0), float(batch.max()))
        self._max_seen[vue_id] = q_v
        model = local_pass(g.theta, anchor, batch, self.step, self.rng,
                           max(g.global_max_sample, q_v), self.n_iterations)
        model.max_sample = q_v
        self.stored_models[vue_id] = model
        self.global_model = global_average(g, list(self.stored_models.values()))
        transfers = [Transfer(vue_id, "up", self.cost.model_bits),
                     Transfer(vue_id, "down", self.cost.model_bits)]
        return self.global_model, transfers


def make_coordinator(protocol, **kwargs):
    protocol = protocol.lower()
    if protocol == "cen":
        return CenCoordinator(**kwargs)
    if protocol == "sync":
        return SyncCoordinator(**kwargs)
    if protocol == "async":
        return AsyncCoordinator(**kwargs)
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


def run_protocol_rounds(protocol, samples_per_vue, n_rounds, *,
                        step=(50.0, 0.005), theta0=(1.0, 0.0),
                        grad0=(1.0, 1000.0), n_iterations=1, seed=0,
                        cost: CommCostParams = None):
    """Stream fixed per-transmitter sample sets through a protocol.

    Every round each transmitter presents its full local set as the round's
    batch (the static-data analogue of repeatedly accumulating fresh
    samples). Returns (theta history per round, all transfers).
    """
    rng = np.random.default_rng(seed)
    coord = make_coordinator(protocol, step=step, theta0=theta0, grad0=grad0,
                             n_iterations=n_iterations, cost=cost, rng=rng)
    sets = {vid: check_excess_samples(s) for vid, s in samples_per_vue.items()}
    history = []
    transfers = []
    for _ in range(n_rounds):
        if protocol == "async":
            for vid in sorted(sets):
                _, t = coord.fire(vid, sets[vid])
                transfers.extend(t)
        else:
            _, t = coord.run_round(sets)
            transfers.extend(t)
        history.append(coord.global_model.theta)
    return history, transfers


class FederatedGpdEstimator(BaseEstimator):
    """Federated tail-excess fit over an IID partition of the sample set.

    ``fit`` shuffles and splits the samples across ``n_clients`` simulated
    transmitters, then runs ``n_rounds`` protocol rounds. ``protocol`` is one
    of "cen", "sync", "async".
    """

    def __init__(self, protocol="sync", n_clients=8, n_rounds=400,
                 n_iterations=2, step_sigma=50.0, step_xi=0.005,
                 sigma0=1.0, xi0=0.0, grad0_sigma=1.0, grad0_xi=1000.0,
                 random_state=0):
        self.protocol = protocol
        self.n_clients = n_clients
        self.n_rounds = n_rounds
        self.n_iterations = n_iterations
        self.step_sigma = step_sigma
        self.step_xi = step_xi
        self.sigma0 = sigma0
        self.xi0 = xi0
        self.grad0_sigma = grad0_sigma
        self.grad0_xi = grad0_xi
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_excess_samples(X, min_samples=self.n_clients)
        rng = np.random.default_rng(self.random_state)
        perm = rng.permutation(x.size)
        parts = np.array_split(x[perm], self.n_clients)
        samples = {i: p for i, p in enumerate(parts)}
        history, transfers = run_protocol_rounds(
            self.protocol, samples, self.n_rounds,
            step=(self.step_sigma, self.step_xi),
            theta0=(self.sigma0, self.xi0),
            grad0=(self.grad0_sigma, self.grad0_xi),
            n_iterations=self.n_iterations,
            seed=self.random_state + 1,
        )
        theta = history[-1]
        self.sigma_ = theta.sigma
        self.xi_ = theta.xi
        self.nll_ = nll(x, theta)
        self.bits_uploaded_ = total_bits_exchanged(
            [t for t in transfers if t.direction == "up"])
        self.bits_exchanged_ = total_bits_exchanged(transfers)
        self.n_samples_ = x.size
        return self

    @property
    def theta_(self):
        return GpdParams(sigma=self.sigma_, xi=self.xi_)

    def score(self, X, y=None):
        return -nll(X, self.theta_)
