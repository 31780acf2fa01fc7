"""Manhattan-grid geometry, link classification, path loss, fading and rates.

The road layout is a square torus with a 3x3 set of intersections. Each road
carries one lane per direction, offset half a lane width from the road axis.
Links are classified by lane geometry:

  * LOS   - both endpoints on the same lane (same road, same direction),
  * WLOS  - perpendicular roads with at least one endpoint within ``d0`` of
            the shared intersection,
  * NLOS  - everything else (including opposite lanes of the same road).

Power path-loss gains are ``alpha0 * ||d||2^-rho`` (LOS),
``alpha0 * ||d||1^-rho`` (WLOS) and ``alpha0' * (|dx| |dy|)^-rho`` (NLOS),
with the coefficients constrained by ``alpha0' < alpha0 * (d0/2)^rho``.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .validation import check_positive, check_probability

LOS = "LOS"
WLOS = "WLOS"
NLOS = "NLOS"

HEADINGS = ("E", "W", "N", "S")

# coordinate differences below this are clamped before exponentiation so that
# floating-point colinearity cannot produce infinite NLOS gains
MIN_DELTA_M = 0.1


@dataclass(frozen=True)
class Position:
    """A point on the grid, tagged with its lane."""

    x: float
    y: float
    lane_id: int
    heading: str


@dataclass
class VuePair:
    """A transmitter/receiver pair; the receiver trails on the same lane."""

    id: int
    tx: Position
    rx: Position
    speed: float  # m/s
    gap: float  # m


@dataclass(frozen=True)
class ChannelParams:
    alpha0: float  # linear power gain
    alpha0_prime: float  # linear power gain
    rho: float  # path loss exponent
    d0: float  # intersection proximity bound, m
    nakagami_m: float
    bandwidth_per_rb: float  # Hz
    noise_psd: float  # W/Hz

    def __post_init__(self):
        for name in ("alpha0", "alpha0_prime", "rho", "d0", "nakagami_m",
                     "bandwidth_per_rb", "noise_psd"):
            check_positive(getattr(self, name), name)
        if not self.alpha0_prime < self.alpha0 * (self.d0 / 2.0) ** self.rho:
            raise ValueError(
                "path loss coefficients must satisfy "
                "alpha0_prime < alpha0 * (d0/2)^rho")

    @property
    def noise_per_rb(self):
        """Noise power over one resource block, W."""
        return self.bandwidth_per_rb * self.noise_psd


@dataclass
class ChannelState:
    """Per-link realization: class, path loss and per-RB fading."""

    link: tuple
    los_class: str
    path_loss: float
    fading_per_rb: np.ndarray
    gain_per_rb: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gain_per_rb = self.fading_per_rb * self.path_loss


def db_to_linear(value_db):
    """dB power gain to linear."""
    return 10.0 ** (value_db / 10.0)


class GridGeometry:
    """Torus Manhattan grid with intersections at the side thirds.

    Roads 0..2 are horizontal (constant y), 3..5 vertical (constant x).
    Each road has two lanes offset +-lane_width/2 from the axis; lane ids are
    ``road * 2 + (0 for the forward heading, 1 for the reverse)``.
    """

    def __init__(self, side=250.0, n_per_side=3, lane_width=4.0):
        self.side = float(side)
        self.n_per_side = int(n_per_side)
        self.lane_width = float(lane_width)
        step = self.side / n_per_side
        # centered placement leaves boundary stubs on each road
        self.axes = np.array([(i + 0.5) * step for i in range(n_per_side)])
        self.n_roads = 2 * n_per_side
        self.n_lanes = 2 * self.n_roads

    # lane bookkeeping -----------------------------------------------------

    def lane_info(self, lane_id):
        """(axis, road_coord, heading, lateral_offset) for a lane."""
        road = lane_id // 2
        reverse = lane_id % 2
        half = self.lane_width / 2.0
        if road < self.n_per_side:  # horizontal
            coord = self.axes[road]
            heading = "W" if reverse else "E"
            offset = half if reverse else -half
            return "h", coord, heading, offset
        coord = self.axes[road - self.n_per_side]
        heading = "S" if reverse else "N"
        offset = -half if reverse else half
        return "v", coord, heading, offset

    def position_on_lane(self, lane_id, along):
        axis, coord, heading, offset = self.lane_info(lane_id)
        along = along % self.side
        if axis == "h":
            return Position(x=along, y=coord + offset, lane_id=lane_id, heading=heading)
        return Position(x=coord + offset, y=along, lane_id=lane_id, heading=heading)

    def along_coord(self, pos):
        axis, _, _, _ = self.lane_info(pos.lane_id)
        return pos.x if axis == "h" else pos.y

    def road_of(self, pos):
        """(axis, road_coord) of the road a position sits on."""
        axis, coord, _, _ = self.lane_info(pos.lane_id)
        return axis, coord

    # mobility -------------------------------------------------------------

    def advance(self, pos, dist):
        """Move along the lane heading, wrapping on the torus."""
        s = self.side
        if pos.heading == "E":
            return Position((pos.x + dist) % s, pos.y, pos.lane_id, pos.heading)
        if pos.heading == "W":
            return Position((pos.x - dist) % s, pos.y, pos.lane_id, pos.heading)
        if pos.heading == "N":
            return Position(pos.x, (pos.y + dist) % s, pos.lane_id, pos.heading)
        return Position(pos.x, (pos.y - dist) % s, pos.lane_id, pos.heading)

    def place_pair(self, pair_id, speed, gap, rng):
        lane = int(rng.integers(self.n_lanes))
        along = float(rng.uniform(0.0, self.side))
        tx = self.position_on_lane(lane, along)
        rx = self.advance(tx, -gap)
        return VuePair(id=pair_id, tx=tx, rx=rx, speed=speed, gap=gap)

    # distances ------------------------------------------------------------

    def delta(self, a, b):
        """Per-coordinate minimal torus deltas |dx|, |dy|."""
        dx = abs(a.x - b.x)
        dy = abs(a.y - b.y)
        return min(dx, self.side - dx), min(dy, self.side - dy)

    def torus_dist_1d(self, u, v):
        d = abs(u - v) % self.side
        return min(d, self.side - d)


def classify_link(tx: Position, rx: Position, d0: float, grid: GridGeometry) -> str:
    """LOS / WLOS / NLOS classification of a link."""
    ax_t, road_t = grid.road_of(tx)
    ax_r, road_r = grid.road_of(rx)
    if tx.lane_id == rx.lane_id:
        return LOS
    if ax_t != ax_r:
        # perpendicular roads always cross at a grid intersection
        ix = road_t if ax_t == "v" else road_r
        iy = road_t if ax_t == "h" else road_r
        d_tx = math.hypot(grid.torus_dist_1d(tx.x, ix), grid.torus_dist_1d(tx.y, iy))
        d_rx = math.hypot(grid.torus_dist_1d(rx.x, ix), grid.torus_dist_1d(rx.y, iy))
        if d_tx <= d0 or d_rx <= d0:
            return WLOS
    return NLOS


def path_loss(tx: Position, rx: Position, los_class: str,
              params: ChannelParams, grid: GridGeometry = None) -> float:
    """Linear path-loss power gain for a classified link."""
    if grid is not None:
        dx, dy = grid.delta(tx, rx)
    else:
        dx, dy = abs(tx.x - rx.x), abs(tx.y - rx.y)
    if los_class == LOS:
        d = math.hypot(dx, dy)
        if d <= 0.0:
            raise ValueError("degenerate LOS geometry: zero distance")
        return params.alpha0 * d ** -params.rho
    if los_class == WLOS:
        d = dx + dy
        if d <= 0.0:
            raise ValueError("degenerate WLOS geometry: zero distance")
        return params.alpha0 * d ** -params.rho
    if los_class == NLOS:
        dx = max(dx, MIN_DELTA_M)
        dy = max(dy, MIN_DELTA_M)
        return params.alpha0_prime * (dx * dy) ** -params.rho
    raise ValueError(f"unknown LOS class {los_class!r}")


def draw_fading(los_class: str, n_rbs: int, rng, nakagami_m=1.41) -> np.ndarray:
    """Per-RB unit-mean fading power gains.

    LOS uses Rayleigh amplitudes, i.e. exponential power gains; WLOS/NLOS use
    Nakagami-m amplitudes, i.e. Gamma(m, 1/m) power gains. Both normalized to
    unit mean so path loss alone carries the link budget.
    """
    if n_rbs < 1:
        raise ValueError("n_rbs must be >= 1")
    if los_class == LOS:
        return rng.exponential(1.0, size=n_rbs)
    return rng.gamma(shape=nakagami_m, scale=1.0 / nakagami_m, size=n_rbs)


def shannon_rate_per_rb(sinr: float, bandwidth: float) -> float:
    """Shannon rate of one RB in bits/s."""
    if sinr < 0:
        raise ValueError("sinr must be >= 0")
    return bandwidth * math.log2(1.0 + sinr)


def erfcinv(y: float) -> float:
    """Inverse of the complementary error function on (0, 2).

    Bisection bracket followed by Newton polish on math.erfc; absolute
    accuracy well below 1e-10 over the domain used here.
    """
    if not 0.0 < y < 2.0:
        raise ValueError("erfcinv domain is (0, 2)")
    if y == 1.0:
        return 0.0
    lo, hi = (0.0, 30.0) if y < 1.0 else (-30.0, 0.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if math.erfc(mid) > y:
            lo = mid
        else:
            hi = mid
    z = 0.5 * (lo + hi)
    sqrt_pi_half = math.sqrt(math.pi) / 2.0
    for _ in range(4):
        err = math.erfc(z) - y
        z += err * sqrt_pi_half * math.exp(min(z * z, 700.0))
    return z


@lru_cache(maxsize=64)
def _dispersion_coeff(err_prob: float) -> float:
    return erfcinv(2.0 * err_prob)


def finite_block_rate(sinr: float, block_len: float, err_prob: float,
                      bandwidth: float) -> float:
    """Achievable rate with a finite-block dispersion penalty, bits/s.

    Collapses to the Shannon rate at err_prob = 0.5 (zero penalty) and as
    block_len grows; clamped at zero from below.
    """
    if sinr < 0:
        raise ValueError("sinr must be >= 0")
    check_positive(block_len, "block_len")
    check_probability(err_prob, "err_prob", inclusive_high=False)
    if err_prob > 0.5:
        raise ValueError("err_prob must lie in (0, 0.5]")
    if sinr == 0.0:
        return 0.0
    penalty = (math.sqrt(2.0 * sinr * (sinr + 2.0)) * _dispersion_coeff(err_prob)
               / (math.sqrt(block_len) * (sinr + 1.0) * math.log(2.0)))
    return max(0.0, bandwidth * (math.log2(1.0 + sinr) - penalty))


# block length (bits) by vehicle speed (km/h); the paper-level mapping is a
# lookup, the proportionality constant is not derivable
BLOCK_LEN_BY_SPEED = {40.0: 800.0, 60.0: 534.0, 80.0: 400.0}


def block_len_for_speed(speed_kmph: float) -> float:
    try:
        return BLOCK_LEN_BY_SPEED[float(speed_kmph)]
    except KeyError:
        raise ValueError(
            f"no finite-block length known for speed {speed_kmph} km/h; "
            f"choose one of {sorted(BLOCK_LEN_BY_SPEED)}") from None
