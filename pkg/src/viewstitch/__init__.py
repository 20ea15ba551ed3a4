"""Training-free parallel stitching for camera-guided sequence diffusion,
with autoregressive and synchronization baselines, verified against
closed-form linear-Gaussian worlds."""

from .baselines import ArConfig, Memory, StochSyncConfig, ar_sample, retrieve, stochsync_sample
from .errors import (CapacityError, ConfigurationError, InputError, NumericFailure,
                     NumericGuardError, ScheduleError, ViewStitchError)
from .experiments import ExperimentGrid, Setup, build_setup, run_grid, run_sampler
from .guidance import (Conditioning, Denoiser, GuidanceConfig, WindowInput, guided_eps,
                       history_guided_eps, noised_neighbors_variant, null_variant,
                       pose_cfg_eps)
from .metrics import MetricReport, compute_report, cov_error, f2fc_proxy, hf_energy, lrc_proxy
from .schedule import (NoiseSchedule, StochasticityConfig, build_schedule, ddim_step,
                       forward_noise, predict_clean, sigma_level)
from .stitching import StitchConfig, ddim_reference_sample, project, scatter_update, stitch_sample
from .trajectories import BENCHMARK_NAMES, Pose, Trajectory, generate_trajectory
from .windows import (ChunkPlan, Window, WindowSchedule, compile_windows, cyclic_pick,
                      fov_overlap, partition, spatial_windows, temporal_windows)
from .world import (OracleDenoiser, World, conditional_moments, ground_truth_video,
                    null_oracle_eps, oracle_eps, sample_scene, sequence_covariance,
                    world_for_trajectory)

__version__ = "0.1.0"
