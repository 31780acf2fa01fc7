"""Poisson traffic, queue dynamics, virtual queues and block-maxima sampling.

Each transmitter keeps an actual bit queue plus three virtual queues that
turn the time-average reliability and tail-moment constraints into queue
stability requirements:

  * ``vq_rel``  drifts by (Q(t+1) - eps*Q0) each slot,
  * ``vq_m1``   drifts by (Q(t+1) - Q0 - sigma/(1-xi)) on slots where the
                pre-update queue exceeded Q0,
  * ``vq_m2``   drifts by the squared excess minus 2*sigma^2/((1-xi)(1-2xi))
                on the same slots.

Excess-queue samples are gathered at most once per block of ``block_len``
slots: the running within-block maximum, minus Q0, if it exceeded Q0.
"""

from dataclasses import dataclass, field, replace

from .gpd import GpdParams, gpd_moments


@dataclass(frozen=True)
class TrafficSource:
    """Poisson bit arrivals with mean ``mean_rate * t_slot`` per slot."""

    mean_rate: float  # bits/s
    t_slot: float = 1e-3  # s

    def __post_init__(self):
        if self.mean_rate < 0:
            raise ValueError("mean_rate must be >= 0")
        if self.t_slot <= 0:
            raise ValueError("t_slot must be > 0")

    @property
    def mean_per_slot(self):
        return self.mean_rate * self.t_slot


def draw_arrivals(source: TrafficSource, rng) -> int:
    """Poisson-distributed arrival bits for one slot."""
    if source.mean_per_slot == 0.0:
        return 0
    return int(rng.poisson(source.mean_per_slot))


@dataclass(frozen=True)
class QueueState:
    """Actual queue (bits) and the three virtual queues."""

    q: float = 0.0
    vq_rel: float = 0.0
    vq_m1: float = 0.0
    vq_m2: float = 0.0  # bits^2

    def __post_init__(self):
        if min(self.q, self.vq_rel, self.vq_m1, self.vq_m2) < 0:
            raise ValueError("queue components must be non-negative")


def step_queue(state: QueueState, arrivals: float, served: float) -> QueueState:
    """Actual-queue update q' = [q + arrivals - served]^+."""
    if arrivals < 0 or served < 0:
        raise ValueError("arrivals and served must be >= 0")
    return replace(state, q=max(0.0, state.q + arrivals - served))


def step_virtual_queues(state: QueueState, q_next: float, q_prev: float,
                        theta: GpdParams, eps: float, q0: float) -> QueueState:
    """Virtual-queue updates; the indicator is evaluated on the pre-update queue."""
    mean, second = gpd_moments(theta)  # raises for xi >= 1/2
    ind = 1.0 if q_prev > q0 else 0.0
    vq_rel = max(0.0, state.vq_rel + q_next - eps * q0)
    vq_m1 = max(0.0, state.vq_m1 + (q_next - q0 - mean) * ind)
    vq_m2 = max(0.0, state.vq_m2 + ind * (q_next - q0) ** 2 - second * ind)
    return replace(state, vq_rel=vq_rel, vq_m1=vq_m1, vq_m2=vq_m2)


@dataclass
class ExcessSampleSet:
    """Block-maxima excesses over the threshold for one transmitter.

    At most one sample per block; a sample is the within-block maximum queue
    length minus ``threshold`` and is therefore strictly positive.
    """

    threshold: float
    block_len: int
    samples: list = field(default_factory=list)
    count: int = 0
    max_sample: float = 0.0  # 0 sentinel while empty
    _block_max: float = field(default=-1.0, repr=False)
    _slots_in_block: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")

    def update(self, q: float):
        """Feed one slot's queue observation; returns the new sample or None."""
        self._block_max = max(self._block_max, q)
        self._slots_in_block += 1
        if self._slots_in_block < self.block_len:
            return None
        block_max = self._block_max
        self._block_max = -1.0
        self._slots_in_block = 0
        if block_max > self.threshold:
            sample = block_max - self.threshold
            self.samples.append(sample)
            self.count += 1
            self.max_sample = max(self.max_sample, sample)
            return sample
        return None


def block_maxima_update(sampler: ExcessSampleSet, slot: int, q: float) -> ExcessSampleSet:
    """Functional wrapper over ExcessSampleSet.update (slot advances monotonically)."""
    sampler.update(q)
    return sampler
