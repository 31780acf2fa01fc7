"""Experiment configuration: flat ``key = value`` text, strict and typed.

Unknown keys are rejected; every key has a documented default so an empty
file yields the reference parameter set. ``alpha0_dbm``/``alpha0_prime_dbm``
are dB power gains (linear = 10^(x/10)); ``noise_psd_dbm_hz`` is a dBm/Hz
power density (W/Hz = 10^((x-30)/10)).
"""

import os
from dataclasses import dataclass, fields

from .channel import ChannelParams

PROTOCOL_CHOICES = ("CEN", "SYNC", "ASYNC", "FP", "QSO", "QSR")


class ConfigError(ValueError):
    """Raised for parse or validation failures; maps to CLI exit code 2."""


@dataclass
class ScenarioConfig:
    # geometry and mobility
    grid_side_m: float = 250.0
    n_intersections_side: int = 3
    lane_width_m: float = 4.0
    n_pairs: int = 4
    speed_kmph: float = 60.0
    pair_gap_m: float = 50.0
    # run control
    protocol: str = "ASYNC"
    horizon_slots: int = 10000
    seed: int = 1
    t_slot: float = 0.001
    # channel
    alpha0_dbm: float = -68.5
    alpha0_prime_dbm: float = -54.5
    rho: float = 1.61
    d0_m: float = 15.0
    nakagami_m: float = 1.41
    bandwidth_per_rb_hz: float = 180000.0
    noise_psd_dbm_hz: float = -174.0
    n_rbs: int = 60
    n_zones: int = 0  # 0 = one zone per road segment
    # traffic and reliability targets
    arrival_rate_bps: float = 500000.0
    q0_bits: float = 46290.0
    epsilon: float = 0.001
    block_len_slots: int = 10
    # estimation; excesses are fed to the fit in units of sample_unit_bits
    # (the reference step sizes and initial scale are coherent at kb scale)
    step_sigma: float = 50.0
    step_xi: float = 0.005
    theta0_sigma: float = 1.0
    theta0_xi: float = 0.0
    grad0_sigma: float = 1.0
    grad0_xi: float = 1000.0
    sample_unit_bits: float = 1000.0
    svrgd_iterations: int = 2
    sync_period_slots: int = 1000
    async_sample_threshold: int = 4
    # power control
    p_max_w: float = 10.0
    tradeoff_v: float = 1.0
    interference_ema_beta: float = 0.05
    fp_power_w: float = 1.0
    geometry_refresh_slots: int = 10
    # aggregator exchange links
    exchange_power_w: float = 1e-5
    payload_queue_sample_bits: float = 8.0
    payload_gradient_bits: float = 16.0
    payload_params_bits: float = 16.0
    # finite block length
    finite_block_enabled: bool = False
    finite_block_err_prob: float = 0.5
    finite_block_len_bits: float = 0.0  # 0 = lookup by speed
    # output
    emit_timeseries: bool = False
    out_dir: str = "out"

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            alpha0=10.0 ** (self.alpha0_dbm / 10.0),
            alpha0_prime=10.0 ** (self.alpha0_prime_dbm / 10.0),
            rho=self.rho,
            d0=self.d0_m,
            nakagami_m=self.nakagami_m,
            bandwidth_per_rb=self.bandwidth_per_rb_hz,
            noise_psd=10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0),
        )


_FIELDS = {f.name: (f.type if isinstance(f.type, str) else f.type.__name__)
           for f in fields(ScenarioConfig)}
_BOOL_TRUE = {"true", "1", "yes", "on"}
_BOOL_FALSE = {"false", "0", "no", "off"}


def _coerce(key, raw, lineno):
    ftype = _FIELDS[key]
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None


def parse_config_text(text) -> ScenarioConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, lineno)
    cfg = ScenarioConfig(**values)
    validate_config(cfg)
    return cfg


def load_config(path_or_text) -> ScenarioConfig:
    """Load from a file path, or parse directly when given inline text."""
    if os.path.exists(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    if "=" in path_or_text or path_or_text.strip() == "":
        return parse_config_text(path_or_text)
    raise ConfigError(f"config file not found: {path_or_text}")


def validate_config(cfg: ScenarioConfig):
    def positive(name):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(cfg, name)}")

    for name in ("grid_side_m", "lane_width_m", "speed_kmph", "pair_gap_m",
                 "t_slot", "rho", "d0_m", "nakagami_m", "bandwidth_per_rb_hz",
                 "q0_bits", "block_len_slots", "step_sigma", "step_xi",
                 "theta0_sigma", "p_max_w", "sync_period_slots",
                 "async_sample_threshold", "fp_power_w", "exchange_power_w",
                 "payload_queue_sample_bits", "payload_gradient_bits",
                 "payload_params_bits", "svrgd_iterations",
                 "geometry_refresh_slots", "sample_unit_bits"):
        positive(name)
    if cfg.n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {cfg.n_pairs}")
    if cfg.n_intersections_side < 1:
        raise ConfigError("n_intersections_side must be >= 1")
    if cfg.horizon_slots < 0:
        raise ConfigError("horizon_slots must be >= 0")
    if not 0.0 < cfg.epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {cfg.epsilon}")
    if cfg.protocol.upper() not in PROTOCOL_CHOICES:
        raise ConfigError(f"protocol must be one of {PROTOCOL_CHOICES}, "
                          f"got {cfg.protocol!r}")
    if cfg.arrival_rate_bps < 0:
        raise ConfigError("arrival_rate_bps must be >= 0")
    if cfg.n_rbs < 1:
        raise ConfigError("n_rbs must be >= 1")
    if cfg.n_zones < 0:
        raise ConfigError("n_zones must be >= 0 (0 selects one zone per segment)")
    if not 0.0 <= cfg.interference_ema_beta <= 1.0:
        raise ConfigError("interference_ema_beta must lie in [0, 1]")
    if cfg.theta0_xi >= 1.0:
        raise ConfigError("theta0_xi must be below 1")
    if cfg.tradeoff_v < 0:
        raise ConfigError("tradeoff_v must be >= 0")
    if not 0.0 < cfg.finite_block_err_prob <= 0.5:
        raise ConfigError("finite_block_err_prob must lie in (0, 0.5]")
    if cfg.finite_block_len_bits < 0:
        raise ConfigError("finite_block_len_bits must be >= 0")
    try:
        cfg.channel_params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = format(value, ".12g")
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
