"""Queue-aware adaptive compression-ratio control for semantic image downlink
over a LEO feeder link: link budget, transmit queue, quality surrogate, MDP,
DQN agent, gateway control loop and experiment harness."""

from .agent import AgentConfig, QNetwork, baseline_policy, fixed_policy, train
from .env import EnvConfig, EnvState, RateControlEnv, RewardParams, rate_levels
from .gateway import run_closed_loop
from .harness import ExperimentConfig, load_config
from .linkbudget import LinkParams, build_overpass, predict_snr, slant_range, snr_at
from .metrics import EpisodeReport, compare, summarize
from .quality import QualityTable, default_table, load_table, quality_of
from .txqueue import FrameRecord, TransmitQueue, compute_sizing, symbols_per_image

__version__ = "0.1.0"
