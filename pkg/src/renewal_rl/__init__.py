"""Renewal Monte Carlo: policy-gradient learning from regenerative cycles."""

__version__ = "0.1.0"

from .baselines import (average_reward, event_trigger_value, exact_policy_value,
                        grid_search_threshold, sarsa_lambda_run, value_iteration)
from .envs import (EventTriggerModel, InventoryModel, TabularMDP, garnet_generate,
                   inventory_optimal_threshold, inventory_value)
from .gradest import h_from_lr, h_from_sp, lr_gradient, spsa_perturb
from .mdp_core import (BaseStock, GibbsTabular, PolicyParams, Threshold, make_rng,
                       project, sample_action, score)
from .renewal import (AVERAGE, DISCOUNTED, TruncationError, collect_batch, collect_cycle,
                      cycle_stats, estimate_RT, performance, suffix_stats)
from .rmc import RmcConfig, RmcRunResult, approx_bound, rmc_run_lr, rmc_run_sp
