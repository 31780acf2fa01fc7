"""V2V network simulation with federated tail-distribution learning and
drift-plus-penalty transmit power control."""

from .channel import (ChannelParams, ChannelState, GridGeometry, Position,
                      VuePair, classify_link, draw_fading, erfcinv,
                      finite_block_rate, path_loss, shannon_rate_per_rb)
from .config import ConfigError, ScenarioConfig, load_config, serialize_config
from .engine import (InterferenceEstimate, Metrics, Simulator, ZoneMap,
                     build_zone_map, realize_rates)
from .federated import (AsyncCoordinator, CenCoordinator, CommCostParams,
                        ExchangeEvent, FederatedGpdEstimator, GlobalModel,
                        LocalModel, SyncCoordinator, global_average,
                        local_pass, run_protocol_rounds, total_bits_exchanged)
from .gpd import (GpdParams, GpdTailEstimator, GradientPair, SvrgdState,
                  fit_gpd_svrgd, gpd_moments, gpd_pdf, gpd_sample, gpd_sf,
                  nll, nll_gradient, project_feasible, svrgd_step)
from .power import (DppWeight, DriftDiagnostics, PowerAllocation,
                    compute_weight, drift_bound_diagnostics, water_fill,
                    water_fill_batch)
from .queues import (ExcessSampleSet, QueueState, TrafficSource,
                     block_maxima_update, draw_arrivals, step_queue,
                     step_virtual_queues)
from .report import RunReport, emit_ccdf, run_experiment, run_sweep, write_report

__version__ = "0.1.0"
