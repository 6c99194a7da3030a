"""Simulated-cluster variance-reduced gradient solvers.

A library plus CLI for distributed finite-sum optimization on a
simulated message-passing cluster with exact accounting of rounds,
vectors transmitted, and parallel gradient-evaluation runtime, and a
lower-bound lab that exhibits the round-complexity barrier on
chain-structured hard instances.
"""

from .allocation import (AllocationPlan, CapacityConfig, MultisetCursor, allocate,
                         build_multisets, derive_sequence, expected_extra_comm_bound,
                         local_pass_plan, random_partition)
from .cluster import (DasvrgConfig, MetricsLedger, RunResult, accel_grad_run, alpha_update,
                      batch_gradient_round, beta_from_alphas, build_cluster, dasvrg_run,
                      dasvrg_stage_count, default_dasvrg_schedule, dsvrg_run)
from .engine import (SvrgConfig, contraction_bound, ss_svrg, stages_needed,
                     svrg_single_machine, vr_grad)
from .objective import (GAMMA_CLASSIC, GAMMA_CURVATURE, DataPoint, ErmObjective,
                        FunctionFamily, LossKind, SmoothnessInfo, estimate_constants,
                        prox_component_grad, prox_full_grad)
from .streams import stream

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
