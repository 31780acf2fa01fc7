"""Slot-driven network simulation.

Per slot: move vehicles and redraw fading; compute each transmitter's
drift-plus-penalty weight and water-filled powers (skipping transmitters
blocked by an ongoing aggregator exchange); realize rates under co-channel
interference; step actual and virtual queues; update the block-maxima
samplers; run the estimation protocol triggers; update the interference
estimates; accumulate metrics.

Resource blocks are allocated per zone (road segment); zones sharing a
graph-coloring class reuse the same RB subset, adjacent zones never do.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .federated import (AsyncCoordinator, CenCoordinator, CommCostParams,
                        ExchangeEvent, SyncCoordinator, total_bits_exchanged)
from .power import LN2, water_fill_batch

EVT_PROTOCOLS = ("CEN", "SYNC", "ASYNC")
BASELINES = ("FP", "QSO", "QSR")


@dataclass
class ZoneMap:
    """Road-segment zones, their coloring and per-color RB subsets."""

    seg_bounds: np.ndarray  # interior boundaries along a road
    n_segments: int
    zone_of_segment: np.ndarray  # segment id -> zone id (grouping)
    color_of_zone: np.ndarray
    n_colors: int
    rb_sets: list  # color -> np.ndarray of RB indices

    def segment_index(self, along):
        return np.searchsorted(self.seg_bounds, along, side="right")

    def zone_of(self, road, along):
        seg = self.segment_index(along)
        return self.zone_of_segment[road * (len(self.seg_bounds) + 1) + seg]


def build_zone_map(grid: ch.GridGeometry, n_zones=None, n_rbs=60) -> ZoneMap:
    """Segment the roads, group into zones, color, and split the RBs.

    Segments per road = n_per_side + 1 (two boundary stubs plus the interior
    pieces); segments meeting at an intersection, consecutive along a road,
    or joined across the torus seam are adjacent and must not share RBs.
    """
    n_side = grid.n_per_side
    segs_per_road = n_side + 1
    n_segments = grid.n_roads * segs_per_road
    if not n_zones:  # None or 0 selects one zone per segment
        n_zones = n_segments
    if not 1 <= n_zones <= n_segments:
        raise ValueError(f"n_zones must be in [1, {n_segments}], got {n_zones}")

    adj = [set() for _ in range(n_segments)]

    def sid(road, seg):
        return road * segs_per_road + seg

    for road in range(grid.n_roads):
        for seg in range(segs_per_road):
            nxt = sid(road, (seg + 1) % segs_per_road)
            adj[sid(road, seg)].add(nxt)
            adj[nxt].add(sid(road, seg))
    for h in range(n_side):
        for v in range(n_side):
            h_segs = [sid(h, v), sid(h, v + 1)]
            v_segs = [sid(n_side + v, h), sid(n_side + v, h + 1)]
            for a in h_segs:
                for b in v_segs:
                    adj[a].add(b)
                    adj[b].add(a)

    zone_of_segment = np.arange(n_segments) % n_zones
    zone_adj = [set() for _ in range(n_zones)]
    for s, neigh in enumerate(adj):
        for t in neigh:
            za, zb = zone_of_segment[s], zone_of_segment[t]
            if za != zb:
                zone_adj[za].add(zb)
                zone_adj[zb].add(za)

    color_of_zone = -np.ones(n_zones, dtype=int)
    for z in range(n_zones):
        used = {color_of_zone[n] for n in zone_adj[z] if color_of_zone[n] >= 0}
        c = 0
        while c in used:
            c += 1
        color_of_zone[z] = c
    n_colors = int(color_of_zone.max()) + 1
    if n_rbs < n_colors:
        raise ValueError(f"need at least {n_colors} RBs, got {n_rbs}")
    rb_sets = [np.arange(n_rbs)[c::n_colors] for c in range(n_colors)]
    return ZoneMap(seg_bounds=grid.axes.copy(), n_segments=n_segments,
                   zone_of_segment=zone_of_segment, color_of_zone=color_of_zone,
                   n_colors=n_colors, rb_sets=rb_sets)


@dataclass
class InterferenceEstimate:
    """Exponential moving average of realized interference, per VUE per RB."""

    values: np.ndarray  # (K, n_rbs), W
    beta: float

    def update(self, vue_idx, rb_idx, realized):
        cur = self.values[vue_idx[:, None], rb_idx]
        self.values[vue_idx[:, None], rb_idx] = (1 - self.beta) * cur + self.beta * realized


def update_interference_estimate(est: InterferenceEstimate, realized) -> InterferenceEstimate:
    """Whole-array EMA step (scalar-contract form of the per-slot update)."""
    est.values = (1 - est.beta) * est.values + est.beta * np.asarray(realized, dtype=float)
    return est


@dataclass
class SlotRecord:
    slot: int
    arrivals: np.ndarray
    served: np.ndarray
    power: np.ndarray  # per-VUE total W
    queue: np.ndarray  # post-update
    blocked: np.ndarray  # bool


@dataclass
class Metrics:
    protocol: str
    n_pairs: int
    seed: int
    horizon: int
    avg_power: float
    avg_queue: float
    max_queue: float
    reliability: float
    tail_mean: float
    tail_std: float
    bytes_exchanged: float  # payload bits
    n_excess_samples: int
    n_exchange_events: int
    sigma_hat: float
    xi_hat: float

    def as_row(self):
        return [self.protocol, self.n_pairs, self.seed, self.horizon,
                self.avg_power, self.avg_queue, self.max_queue,
                self.reliability, self.tail_mean, self.tail_std,
                self.bytes_exchanged, self.n_excess_samples,
                self.n_exchange_events, self.sigma_hat, self.xi_hat]

    ROW_HEADER = ["protocol", "n_pairs", "seed", "horizon", "avg_power_w",
                  "avg_queue_bits", "max_queue_bits", "reliability",
                  "tail_mean_bits", "tail_std_bits", "bits_exchanged",
                  "n_excess_samples", "n_exchange_events", "sigma_hat", "xi_hat"]


class Simulator:
    """One experiment world; deterministic given the config seed."""

    def __init__(self, config):
        from .config import ScenarioConfig  # local import to avoid a cycle
        if not isinstance(config, ScenarioConfig):
            raise TypeError("Simulator expects a ScenarioConfig")
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        self.grid = ch.GridGeometry(side=config.grid_side_m,
                                    n_per_side=config.n_intersections_side,
                                    lane_width=config.lane_width_m)
        self.params = config.channel_params()
        self.zone_map = build_zone_map(self.grid, config.n_zones, config.n_rbs)
        self.protocol = config.protocol.upper()
        self._init_pairs()
        self._init_state()
        self._init_protocol()

    # ------------------------------------------------------------------ setup

    def _init_pairs(self):
        cfg = self.cfg
        k = cfg.n_pairs
        speed = cfg.speed_kmph / 3.6
        self.pairs = [self.grid.place_pair(i, speed, cfg.pair_gap_m, self.rng)
                      for i in range(k)]
        self.lane = np.array([p.tx.lane_id for p in self.pairs])
        road = self.lane // 2
        self.road = road
        self.is_vertical = road >= self.grid.n_per_side
        self.road_coord = self.grid.axes[np.where(self.is_vertical,
                                                  road - self.grid.n_per_side, road)]
        reverse = self.lane % 2 == 1
        self.motion_sign = np.where(reverse, -1.0, 1.0)
        half = self.grid.lane_width / 2.0
        lateral = np.where(self.is_vertical,
                           np.where(reverse, -half, half),
                           np.where(reverse, half, -half))
        self.lateral = lateral
        self.tx_along = np.array([self.grid.along_coord(p.tx) for p in self.pairs])
        self.step_per_slot = speed * cfg.t_slot
        self.gap = cfg.pair_gap_m
        self.own_path_loss = self.params.alpha0 * self.gap ** -self.params.rho

    def _positions(self):
        """tx/rx cartesian coordinates from the along-lane coordinates."""
        side = self.grid.side
        tx_along = self.tx_along % side
        rx_along = (self.tx_along - self.motion_sign * self.gap) % side
        axis_coord = self.road_coord + self.lateral
        tx_x = np.where(self.is_vertical, axis_coord, tx_along)
        tx_y = np.where(self.is_vertical, tx_along, axis_coord)
        rx_x = np.where(self.is_vertical, axis_coord, rx_along)
        rx_y = np.where(self.is_vertical, rx_along, axis_coord)
        return tx_x, tx_y, rx_x, rx_y

    def _init_state(self):
        cfg = self.cfg
        k = cfg.n_pairs
        f = min(len(s) for s in self.zone_map.rb_sets)
        self.n_rb_local = f
        self._rb_sets_arr = np.stack([s[:f] for s in self.zone_map.rb_sets])
        self.qsi_scale = cfg.sample_unit_bits
        self._ar_k = np.arange(k)
        self._collect_records = True
        self.q = np.zeros(k)
        self.vq_rel = np.zeros(k)
        self.vq_m1 = np.zeros(k)
        self.vq_m2 = np.zeros(k)
        self.sigma = np.full(k, cfg.theta0_sigma * cfg.sample_unit_bits)
        self.xi = np.full(k, cfg.theta0_xi)
        self._refresh_moments()
        self.i_est = InterferenceEstimate(values=np.zeros((k, cfg.n_rbs)),
                                          beta=cfg.interference_ema_beta)
        self.blocked_until = np.zeros(k, dtype=np.int64)
        self.samples = [[] for _ in range(k)]
        self.max_sample = np.zeros(k)
        self.unprocessed = [[] for _ in range(k)]
        self.block_max = np.full(k, -1.0)
        self.pending_theta = {}
        self.events = []
        self.noise_rb = self.params.noise_per_rb
        self.colors = None
        self.groups = []
        self._geom_stale = True
        self._geom_cache = []
        self._next_geom_refresh = 0
        self._metrics_reset()
        if cfg.finite_block_enabled:
            self._fb_coeff = ch.erfcinv(2.0 * cfg.finite_block_err_prob)
            self._fb_len = (cfg.finite_block_len_bits
                            or ch.block_len_for_speed(cfg.speed_kmph))
        self.timeseries = [] if cfg.emit_timeseries else None

    def _refresh_moments(self):
        # tail moments of the current per-VUE estimates, in bits and bits^2
        self._mean = self.sigma / (1.0 - self.xi)
        self._second = (2.0 * self.sigma ** 2
                        / ((1.0 - self.xi) * (1.0 - 2.0 * self.xi)))

    def _metrics_reset(self):
        self.power_sum = 0.0
        self.queue_sum = 0.0
        self.max_queue = 0.0
        self.reliab_count = 0
        self.slots_run = 0

    def _init_protocol(self):
        cfg = self.cfg
        if self.protocol not in EVT_PROTOCOLS:
            self.coordinator = None
            return
        cost = CommCostParams(s_gradient=cfg.payload_gradient_bits,
                              s_params=cfg.payload_params_bits,
                              s_queue_sample=cfg.payload_queue_sample_bits)
        kwargs = dict(step=(cfg.step_sigma, cfg.step_xi),
                      theta0=(cfg.theta0_sigma, cfg.theta0_xi),
                      grad0=(cfg.grad0_sigma, cfg.grad0_xi),
                      n_iterations=cfg.svrgd_iterations, cost=cost, rng=self.rng)
        if self.protocol == "CEN":
            self.coordinator = CenCoordinator(**kwargs)
        elif self.protocol == "SYNC":
            self.coordinator = SyncCoordinator(**kwargs)
        else:
            self.coordinator = AsyncCoordinator(**kwargs)

    # ------------------------------------------------------------ slot pieces

    def _refresh_groups(self):
        zm = self.zone_map
        seg = zm.segment_index(self.tx_along % self.grid.side)
        segs_per_road = len(zm.seg_bounds) + 1
        zones = zm.zone_of_segment[self.road * segs_per_road + seg]
        colors = zm.color_of_zone[zones]
        if self.colors is None or not np.array_equal(colors, self.colors):
            self.colors = colors
            self.groups = [np.flatnonzero(colors == c)
                           for c in range(zm.n_colors)]
            self._rb_idx = self._rb_sets_arr[colors]
            self._geom_stale = True
        self.zones = zones

    def _refresh_geometry(self, t, tx_x, tx_y, rx_x, rx_y):
        """Recompute cached cross-link path loss on a fixed schedule.

        Vehicle displacement per slot is centimeters, so the loss matrices
        are refreshed every ``geometry_refresh_slots`` (and whenever zone
        membership changes) rather than every slot.
        """
        if not self._geom_stale and t < self._next_geom_refresh:
            return
        self._geom_cache = []
        for members in self.groups:
            if members.size < 2:
                self._geom_cache.append(None)
                continue
            pl, same_lane = self._cross_path_loss(members, tx_x, tx_y, rx_x, rx_y)
            idx = np.arange(members.size)
            pl = pl[:, :, None].copy()
            pl[idx, idx, :] = 0.0
            self._geom_cache.append((pl, same_lane[:, :, None]))
        self._geom_stale = False
        self._next_geom_refresh = t + self.cfg.geometry_refresh_slots

    def _cross_path_loss(self, members, tx_x, tx_y, rx_x, rx_y):
        """(n, n) path loss tx_j -> rx_i plus the same-lane mask."""
        side = self.grid.side
        lane = self.lane[members]
        vert = self.is_vertical[members]
        coord = self.road_coord[members]
        txx, txy = tx_x[members], tx_y[members]
        rxx, rxy = rx_x[members], rx_y[members]

        dx = np.abs(txx[:, None] - rxx[None, :])
        dx = np.minimum(dx, side - dx)
        dy = np.abs(txy[:, None] - rxy[None, :])
        dy = np.minimum(dy, side - dy)

        same_lane = lane[:, None] == lane[None, :]
        perp = vert[:, None] != vert[None, :]
        # shared intersection of the two (perpendicular) roads
        ix = np.where(vert[:, None], coord[:, None], coord[None, :])
        iy = np.where(vert[:, None], coord[None, :], coord[:, None])

        def tordist(u, v):
            d = np.abs(u - v)
            return np.minimum(d, side - d)

        d_tx = np.hypot(tordist(txx[:, None], ix), tordist(txy[:, None], iy))
        d_rx = np.hypot(tordist(rxx[None, :], ix), tordist(rxy[None, :], iy))
        wlos = perp & ((d_tx <= self.params.d0) | (d_rx <= self.params.d0))

        rho = self.params.rho
        d2 = np.maximum(np.hypot(dx, dy), ch.MIN_DELTA_M)
        d1 = np.maximum(dx + dy, ch.MIN_DELTA_M)
        pl_los = self.params.alpha0 * d2 ** -rho
        pl_wlos = self.params.alpha0 * d1 ** -rho
        pl_nlos = self.params.alpha0_prime * (
            np.maximum(dx, ch.MIN_DELTA_M) * np.maximum(dy, ch.MIN_DELTA_M)) ** -rho
        pl = np.where(same_lane, pl_los, np.where(wlos, pl_wlos, pl_nlos))
        return pl, same_lane

    def _psi(self):
        cfg = self.cfg
        if self.protocol == "QSO":
            core = self.q.copy()
        elif self.protocol == "QSR":
            core = ((1.0 + self.vq_rel - cfg.epsilon * cfg.q0_bits) * self.q
                    - cfg.epsilon * self.vq_rel)
        else:
            ind = self.q > cfg.q0_bits
            excess = self.q - cfg.q0_bits
            core = ((1.0 + self.vq_rel - cfg.epsilon * cfg.q0_bits) * self.q
                    - cfg.epsilon * self.vq_rel)
            core += np.where(
                ind,
                self.q + self.vq_m1 - cfg.q0_bits - self._mean
                + 2.0 * excess * (self.vq_m2 + excess ** 2 - self._second),
                0.0)
        return cfg.bandwidth_per_rb_hz / LN2 * core

    def _rate_bits(self, sinr):
        """Served bits per slot from per-RB SINR, Shannon or finite-block."""
        cfg = self.cfg
        if not cfg.finite_block_enabled or cfg.finite_block_err_prob == 0.5:
            per_rb = np.log2(1.0 + sinr)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                penalty = (np.sqrt(2.0 * sinr * (sinr + 2.0)) * self._fb_coeff
                           / (math.sqrt(self._fb_len) * (sinr + 1.0) * LN2))
            per_rb = np.maximum(np.log2(1.0 + sinr) - penalty, 0.0)
        rate = cfg.bandwidth_per_rb_hz * per_rb.sum(axis=1)
        return np.floor(rate * cfg.t_slot)

    # --------------------------------------------------------------- RSU link

    def _rsu_rate(self, v, tx_x, tx_y, power):
        """Shannon rate of the VUE<->aggregator link at the given power."""
        center = self.grid.axes[self.grid.n_per_side // 2]
        x, y = tx_x[v], tx_y[v]
        dx = self.grid.torus_dist_1d(x, center)
        dy = self.grid.torus_dist_1d(y, center)
        p = self.params
        if math.isclose(self.road_coord[v], center):
            d = math.hypot(dx, dy)
            pl = p.alpha0 * max(d, ch.MIN_DELTA_M) ** -p.rho
            cls = ch.LOS
        else:
            # distance along the VUE's road to its crossing with the center road
            vue_to_cross = dy if self.is_vertical[v] else dx
            if vue_to_cross <= p.d0:
                pl = p.alpha0 * (dx + dy) ** -p.rho
                cls = ch.WLOS
            else:
                pl = p.alpha0_prime * (max(dx, ch.MIN_DELTA_M)
                                       * max(dy, ch.MIN_DELTA_M)) ** -p.rho
                cls = ch.NLOS
        f = self.n_rb_local
        fading = ch.draw_fading(cls, f, self.rng, p.nakagami_m)
        snr = pl * fading * (power / f) / self.noise_rb
        return float(p.bandwidth_per_rb * np.log2(1.0 + snr).sum())

    def _schedule_transfers(self, t, transfers, tx_x, tx_y):
        """Price pending transfers and turn them into blocking exchange events."""
        if not transfers:
            return
        by_vue = {}
        for tr in transfers:
            by_vue.setdefault(tr.vue_id, []).append(tr)
        exchangers = sorted(by_vue)
        n_overlap = {}
        for v in exchangers:
            c = self.colors[v]
            n_overlap[v] = sum(1 for u in exchangers if self.colors[u] == c)
        for v in exchangers:
            start = max(t + 1, int(self.blocked_until[v]))
            for tr in by_vue[v]:
                rate = self._rsu_rate(v, tx_x, tx_y, self.cfg.exchange_power_w)
                rate /= n_overlap[v]
                ev = ExchangeEvent.from_transfer(tr, rate, self.cfg.t_slot, slot=t)
                self.events.append(ev)
                start += ev.slots_blocked
            self.blocked_until[v] = start
            g = self.coordinator.global_model
            self.pending_theta[v] = (start, g.theta.sigma * self.qsi_scale,
                                     g.theta.xi)

    def _apply_pending(self, t):
        done = [v for v, (when, _, _) in self.pending_theta.items() if t >= when]
        for v in done:
            _, s, x = self.pending_theta.pop(v)
            self.sigma[v] = s
            self.xi[v] = x
        if done:
            self._refresh_moments()

    def _protocol_step(self, t, tx_x, tx_y):
        cfg = self.cfg
        if self.protocol in ("CEN", "SYNC"):
            if (t + 1) % cfg.sync_period_slots != 0:
                return
            batches = {v: np.array(self.unprocessed[v]) / self.qsi_scale
                       for v in range(cfg.n_pairs)}
            for v in range(cfg.n_pairs):
                self.unprocessed[v] = []
            _, transfers = self.coordinator.run_round(batches)
            self._schedule_transfers(t, transfers, tx_x, tx_y)
        elif self.protocol == "ASYNC":
            for v in range(cfg.n_pairs):
                if (len(self.unprocessed[v]) >= cfg.async_sample_threshold
                        and t + 1 >= self.blocked_until[v]):
                    batch = np.array(self.unprocessed[v]) / self.qsi_scale
                    self.unprocessed[v] = []
                    _, tr = self.coordinator.fire(v, batch)
                    self._schedule_transfers(t, tr, tx_x, tx_y)

    # -------------------------------------------------------------- main loop

    def run_slot(self, t) -> SlotRecord:
        cfg = self.cfg
        k = cfg.n_pairs
        self._apply_pending(t)
        self.tx_along = self.tx_along + self.motion_sign * self.step_per_slot
        self._refresh_groups()
        tx_x, tx_y, rx_x, rx_y = self._positions()

        arrivals = self.rng.poisson(cfg.arrival_rate_bps * cfg.t_slot, k).astype(float)
        own_fading = self.rng.exponential(1.0, size=(k, self.n_rb_local))
        own_gain = own_fading * self.own_path_loss

        blocked = t < self.blocked_until
        rb_idx = self._rb_idx
        i_est = self.i_est.values[self._ar_k[:, None], rb_idx]

        if self.protocol == "FP":
            powers = np.full((k, self.n_rb_local),
                             cfg.fp_power_w / self.n_rb_local)
        else:
            psi = self._psi()
            psi[blocked] = -1.0
            gamma = own_gain / (i_est + self.noise_rb)
            powers = water_fill_batch(psi, gamma, cfg.p_max_w, cfg.tradeoff_v)
        powers[blocked] = 0.0

        self._refresh_geometry(t, tx_x, tx_y, rx_x, rx_y)
        interference = np.zeros((k, self.n_rb_local))
        f = self.n_rb_local
        for gi, members in enumerate(self.groups):
            n = members.size
            if n < 2:
                continue
            # fading is drawn unconditionally so the stream does not depend on
            # which transmitters happen to be active this slot
            expo = self.rng.exponential(1.0, size=(n, n, f))
            gam = self.rng.gamma(self.params.nakagami_m,
                                 1.0 / self.params.nakagami_m, size=(n, n, f))
            if not powers[members].any():
                continue
            pl, same_lane = self._geom_cache[gi]
            gains = np.where(same_lane, expo, gam) * pl
            interference[members] = np.einsum("jif,jf->if", gains, powers[members])

        sinr = own_gain * powers / (interference + self.noise_rb)
        rate_bits = self._rate_bits(sinr)
        rate_bits[blocked] = 0.0
        served = np.minimum(rate_bits, self.q + arrivals)

        q_prev = self.q
        q_next = q_prev + arrivals - served  # non-negative by the serve cap
        if self.protocol != "QSO":
            self.vq_rel = np.maximum(0.0, self.vq_rel + q_next - cfg.epsilon * cfg.q0_bits)
        if self.protocol in EVT_PROTOCOLS:
            ind = (q_prev > cfg.q0_bits).astype(float)
            self.vq_m1 = np.maximum(0.0, self.vq_m1
                                    + (q_next - cfg.q0_bits - self._mean) * ind)
            self.vq_m2 = np.maximum(0.0, self.vq_m2 + ind * (q_next - cfg.q0_bits) ** 2
                                    - self._second * ind)
        self.q = q_next

        self.block_max = np.maximum(self.block_max, q_next)
        if (t + 1) % cfg.block_len_slots == 0:
            over = np.flatnonzero(self.block_max > cfg.q0_bits)
            for v in over:
                s = self.block_max[v] - cfg.q0_bits
                self.samples[v].append(s)
                self.unprocessed[v].append(s)
                self.max_sample[v] = max(self.max_sample[v], s)
            self.block_max.fill(-1.0)

        if self.coordinator is not None:
            self._protocol_step(t, tx_x, tx_y)

        self.i_est.update(self._ar_k, rb_idx, interference)

        self.power_sum += powers.sum()
        self.queue_sum += q_next.sum()
        self.max_queue = max(self.max_queue, float(q_next.max()))
        self.reliab_count += int(np.count_nonzero(q_next < cfg.q0_bits))
        self.slots_run += 1
        if self.timeseries is not None:
            self.timeseries.append((t, float(q_next.mean()), float(q_next.max()),
                                    float(powers.sum()), int(blocked.sum())))
        if not self._collect_records:
            return None
        return SlotRecord(slot=t, arrivals=arrivals, served=served,
                          power=powers.sum(axis=1), queue=q_next.copy(),
                          blocked=blocked)

    def run(self) -> Metrics:
        cfg = self.cfg
        self._collect_records = False
        try:
            for t in range(cfg.horizon_slots):
                try:
                    self.run_slot(t)
                except Exception as exc:
                    raise RuntimeError(
                        f"simulation failed at slot {t}: {exc}") from exc
        finally:
            self._collect_records = True
        return self.metrics()

    def metrics(self) -> Metrics:
        cfg = self.cfg
        n = max(1, self.slots_run * cfg.n_pairs)
        all_samples = np.array([s for lst in self.samples for s in lst])
        if self.coordinator is not None:
            g = self.coordinator.global_model.theta
            sigma_hat, xi_hat = g.sigma * self.qsi_scale, g.xi
        else:
            sigma_hat = cfg.theta0_sigma * cfg.sample_unit_bits
            xi_hat = cfg.theta0_xi
        return Metrics(
            protocol=self.protocol,
            n_pairs=cfg.n_pairs,
            seed=cfg.seed,
            horizon=self.slots_run,
            avg_power=self.power_sum / n,
            avg_queue=self.queue_sum / n,
            max_queue=self.max_queue,
            reliability=self.reliab_count / n if self.slots_run else 0.0,
            tail_mean=float(all_samples.mean()) if all_samples.size else 0.0,
            tail_std=float(all_samples.std()) if all_samples.size else 0.0,
            bytes_exchanged=total_bits_exchanged(self.events),
            n_excess_samples=int(all_samples.size),
            n_exchange_events=len(self.events),
            sigma_hat=sigma_hat,
            xi_hat=xi_hat,
        )


def realize_rates(own_gain, powers, cross_gains, noise_per_rb, bandwidth,
                  t_slot, blocked=None):
    """Reference rate realization used for contract tests.

    ``own_gain`` and ``powers`` are (K, F); ``cross_gains[j, i, f]`` is the
    gain from transmitter j to receiver i (diagonal ignored). Returns the
    per-pair served-bit budget floor(rate * t_slot).
    """
    own_gain = np.asarray(own_gain, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if blocked is not None:
        powers = np.where(np.asarray(blocked)[:, None], 0.0, powers)
    g = np.asarray(cross_gains, dtype=float).copy()
    idx = np.arange(g.shape[0])
    g[idx, idx, :] = 0.0
    interference = np.einsum("jif,jf->if", g, powers)
    sinr = own_gain * powers / (interference + noise_per_rb)
    rate = bandwidth * np.log2(1.0 + sinr).sum(axis=1)
    return np.floor(rate * t_slot)
