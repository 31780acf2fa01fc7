"""Experiment execution and CSV emission.

Every run produces a RunReport: the aggregate metrics row, the excess-sample
dump, the exchange-event log and, when enabled, a per-slot time series. CSVs
are UTF-8, comma separated, header row, '.' decimal point, fixed %.12g float
formatting, so byte-identical reruns follow from seeded determinism.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig, serialize_config
from .engine import Metrics, Simulator
from .gpd import GpdParams, gpd_sf
from .validation import check_excess_samples

METRICS_HEADER = Metrics.ROW_HEADER
SAMPLES_HEADER = ["vue_id", "sample_index", "excess_bits"]
EVENTS_HEADER = ["slot", "vue_id", "direction", "payload_bits",
                 "duration_s", "slots_blocked"]
TIMESERIES_HEADER = ["slot", "mean_queue_bits", "max_queue_bits",
                     "total_power_w", "n_blocked"]


def _fmt(value):
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValueError(f"refusing to emit non-finite value {value!r}")
        return format(value, ".12g")
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


@dataclass
class RunReport:
    config: ScenarioConfig
    metrics: Metrics
    samples: list  # per-VUE lists of excesses
    events: list
    timeseries: list = field(default_factory=list)

    def sample_rows(self):
        for vid, lst in enumerate(self.samples):
            for i, s in enumerate(lst):
                yield [vid, i, float(s)]

    def event_rows(self):
        for e in self.events:
            yield [e.slot, e.vue_id, e.direction, e.payload_bits,
                   e.duration, e.slots_blocked]


def run_experiment(config: ScenarioConfig) -> RunReport:
    sim = Simulator(config)
    metrics = sim.run()
    return RunReport(config=config, metrics=metrics, samples=sim.samples,
                     events=sim.events, timeseries=sim.timeseries or [])


def write_report(report: RunReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "metrics.csv"), METRICS_HEADER,
              [report.metrics.as_row()])
    write_csv(os.path.join(out_dir, "samples.csv"), SAMPLES_HEADER,
              report.sample_rows())
    write_csv(os.path.join(out_dir, "events.csv"), EVENTS_HEADER,
              report.event_rows())
    if report.config.emit_timeseries:
        write_csv(os.path.join(out_dir, "timeseries.csv"), TIMESERIES_HEADER,
                  report.timeseries)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(report.config))
    return out_dir


def run_sweep(base_config: ScenarioConfig, k_values, out_dir=None):
    """One run per pair count; returns reports plus combined metric rows."""
    from dataclasses import replace
    reports = []
    rows = []
    for k in k_values:
        cfg = replace(base_config, n_pairs=int(k))
        report = run_experiment(cfg)
        reports.append(report)
        rows.append(report.metrics.as_row())
        if out_dir is not None:
            write_report(report, os.path.join(
                out_dir, f"{cfg.protocol.lower()}_k{k}"))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "metrics.csv"), METRICS_HEADER, rows)
    return reports


def emit_ccdf(samples, theta: GpdParams):
    """Empirical vs fitted tail table.

    Returns rows (x, empirical survival at x^-, fitted survival). With the
    samples sorted ascending, the empirical survival just below the i-th
    sample is (M - i + 1)/M, so a single sample carries probability 1.
    """
    x = np.sort(check_excess_samples(samples))
    m = x.size
    empirical = (m - np.arange(m)) / m
    fitted = gpd_sf(x, theta)
    return [(float(a), float(b), float(c))
            for a, b, c in zip(x, empirical, fitted)]


def write_ccdf(path, rows):
    write_csv(path, ["excess_bits", "empirical_sf", "fitted_sf"], rows)
