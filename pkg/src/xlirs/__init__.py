"""Anchor-assisted channel estimation for extremely large IRS arrays.

Simulates spatially non-stationary (visibility-region limited) cascaded
channels and compares a three-step anchor-aided estimator against DFT,
common-channel, and no-reduction baselines on NMSE, pilot overhead, and
effective sum-rate.
"""

__version__ = "0.1.0"

from .baselines import (SchemeId, estimate_common_channel_scheme,
                        estimate_dft_scheme, estimate_proposed_no_vr)
from .channel import (ChannelRealization, VRConfig, apply_masks_and_cascade,
                      gen_vr_masks, los_entry, realize_channel,
                      synth_full_channel)
from .estimation import (EstimationError, EstimationOutput, PilotPlan,
                         detect_vr, dft_reflection_matrix, estimate_anchor,
                         run_proposed)
from .geometry import (GeometryConfig, SystemGeometry, build_geometry,
                       distance, rayleigh_distance)
from .metrics import (MetricsRecord, design_beamforming, effective_sum_rate,
                      nmse, pilot_overhead, sinr_per_user)
from .runner import (ConfigError, ExperimentConfig, emit_results,
                     load_config, overhead_table, run_experiment)
