"""Simulated message-passing cluster and the distributed drivers.

Machines hold their shard plus a chunk of sampled indices; the center
orchestrates rounds.  A round is one synchronization barrier; between
barriers only the active machine (or, during a batch gradient, all
machines in parallel) computes.  The ledger counts

* rounds: batch-gradient barriers plus mid-stage handoffs,
* vectors: d-vectors moved (a broadcast counts once, uploads count one
  each, the batch round also ships h to the active machine, a handoff
  ships the iterate and the running average),
* grad_evals per machine, and parallel runtime = the between-barrier
  maximum of local gradient counts, summed over phases (n per batch
  phase, 2 per iterative step on the active machine).

Gap checkpoints are measured lazily against a precomputed optimum and
never touch the counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationPlan, MultisetCursor
from .engine import SvrgConfig, ss_svrg
from .errors import CapacityError, ContractViolation
from .objective import FunctionFamily, SmoothnessInfo

GAP_FLOOR = 1e-300  # keeps traces positive for log-scale plots


@dataclass
class Checkpoint:
    stage: int
    rounds: int
    vectors: int
    runtime: int
    gap: float


@dataclass
class MetricsLedger:
    m: int
    rounds: int = 0
    vectors: int = 0
    runtime: int = 0
    grad_evals: np.ndarray = None
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def __post_init__(self):
        if self.grad_evals is None:
            self.grad_evals = np.zeros(self.m, dtype=np.int64)

    def add_round(self, vectors: int):
        self.rounds += 1
        self.vectors += vectors

    def add_vectors(self, vectors: int):
        self.vectors += vectors

    def add_parallel_batch(self, shard_sizes: np.ndarray):
        self.grad_evals += shard_sizes
        self.runtime += int(np.max(shard_sizes))

    def add_local(self, machine: int, evals: int):
        self.grad_evals[machine] += evals
        self.runtime += evals

    def checkpoint(self, stage: int, gap: float):
        self.checkpoints.append(Checkpoint(stage, self.rounds, self.vectors, self.runtime,
                                           max(float(gap), GAP_FLOOR)))

    def rounds_to_gap(self, target: float) -> int | None:
        for c in self.checkpoints:
            if c.gap <= target:
                return c.rounds
        return None


class ClusterState:
    """Structural state: which functions live where, plus the access guard.

    The guard verifies that every index a machine touches is resident
    there (its shard for batch work, its chunk for iterative work); a
    violation raises, and `accesses_checked` lets tests confirm the
    guard actually ran.
    """

    def __init__(self, plan: AllocationPlan, capacity: int | None):
        self.plan = plan
        self.m = plan.m
        self.capacity = capacity
        if capacity is not None:
            over = np.flatnonzero(plan.resident_sizes > capacity)
            if len(over):
                j = int(over[0])
                raise CapacityError(
                    f"machine {j} holds {int(plan.resident_sizes[j])} > C={capacity}")
        self.shard_sizes = np.diff(plan.part_offsets).astype(np.int64)
        self._sorted_residents = None
        if plan.N * plan.m <= 50_000_000 and plan.m <= 4096:
            self._sorted_residents = [np.sort(plan.resident_indices(j)) for j in range(plan.m)]
        self.accesses_checked = 0

    def fresh_ledger(self) -> MetricsLedger:
        return MetricsLedger(m=self.m)

    def new_cursor(self) -> MultisetCursor:
        return MultisetCursor(self.plan)

    def check_access(self, machine: int, indices: np.ndarray):
        self.accesses_checked += len(indices)
        if self._sorted_residents is None:
            return
        res = self._sorted_residents[machine]
        pos = np.searchsorted(res, indices)
        ok = (pos < len(res)) & (res[np.minimum(pos, len(res) - 1)] == indices)
        if not np.all(ok):
            bad = int(np.asarray(indices)[~ok][0])
            raise ContractViolation(f"machine {machine} touched non-resident function {bad}")


def build_cluster(plan: AllocationPlan, capacity: int | None = None) -> ClusterState:
    return ClusterState(plan, capacity)


@dataclass
class RunResult:
    x: np.ndarray
    ledger: MetricsLedger
    trace: list[np.ndarray] | None = None


def batch_gradient_round(cluster: ClusterState, family: FunctionFamily, ledger: MetricsLedger,
                         x_ref: np.ndarray, *, y: np.ndarray | None = None, sigma: float = 0.0,
                         send_to_active: bool = True, extra_broadcast_vectors: int = 0) -> np.ndarray:
    """One barrier: broadcast x_ref, machines reduce their shard
    gradients, the center averages by 1/N (and ships h onward).

    Every machine sums over its shard only, never over its sampled
    chunk.  For small clusters the per-machine partial sums are formed
    explicitly; for large ones the center's fixed reduction order is a
    single pass over all shards, which agrees with the explicit form to
    float addition reordering (~1e-15).
    """
    plan = cluster.plan
    if cluster.m <= 64:
        total = np.zeros(family.dim)
        for j in range(cluster.m):
            shard = plan.partition(j)
            cluster.check_access(j, shard)
            total += family.shard_grad_sum(shard, x_ref)
    else:
        total = family.grad_sum_all(x_ref)
        cluster.accesses_checked += plan.N
    h = total / family.n_components
    if sigma > 0.0 and y is not None:
        h = h + sigma * (x_ref - y)
    vectors = 1 + cluster.m + (1 if send_to_active else 0) + extra_broadcast_vectors
    ledger.add_round(vectors=vectors)
    ledger.add_parallel_batch(cluster.shard_sizes)
    return h


def _gap(family: FunctionFamily, x: np.ndarray, f_star: float | None) -> float:
    if f_star is None:
        return math.nan
    return family.full_value(x) - f_star


def dsvrg_run(family: FunctionFamily, cluster: ClusterState, config: SvrgConfig,
              info: SmoothnessInfo | None = None, *, x0: np.ndarray | None = None,
              f_star: float | None = None, stop_gap: float | None = None,
              probe=None, collect_trace: bool = False,
              cursor: MultisetCursor | None = None, ledger: MetricsLedger | None = None) -> RunResult:
    """Distributed SVRG: K stages of one batch-gradient round plus one
    multi-set consuming stage, with the reference point carried by the
    center.  Stops early when the measured gap reaches `stop_gap`.
    """
    if info is not None:
        config.validate(info)
    x_tilde = np.zeros(family.dim) if x0 is None else np.array(x0, dtype=float, copy=True)
    ledger = cluster.fresh_ledger() if ledger is None else ledger
    cursor = cluster.new_cursor() if cursor is None else cursor
    trace = [x_tilde.copy()] if collect_trace else None
    gap = _gap(family, x_tilde, f_star)
    ledger.checkpoint(0, gap)
    for stage in range(config.K):
        h = batch_gradient_round(cluster, family, ledger, x_tilde)
        if probe is not None:
            probe("batch", ledger.rounds, {"x_ref": x_tilde, "h": h})
        res = ss_svrg(family, x_tilde, h, cursor, config.eta, config.T,
                      sigma=0.0, ledger=ledger, cluster=cluster, probe=probe)
        x_tilde = res.x_bar
        if collect_trace:
            trace.append(x_tilde.copy())
        gap = _gap(family, x_tilde, f_star)
        ledger.checkpoint(stage + 1, gap)
        if probe is not None:
            probe("stage", ledger.rounds, {"x_ref": x_tilde, "h": h})
        if stop_gap is not None and gap <= stop_gap:
            break
    return RunResult(x=x_tilde, ledger=ledger, trace=trace)


def alpha_update(alpha_prev: float, q: float) -> float:
    """Positive root of a^2 + (alpha_prev^2 - q) a - alpha_prev^2 = 0.

    This is the extrapolation recurrence a^2 = (1-a) alpha_prev^2 + q a;
    sqrt(q) is its fixed point.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if not 0.0 < alpha_prev <= 1.0:
        raise ValueError("alpha_prev must lie in (0, 1]")
    b = alpha_prev * alpha_prev - q
    c = alpha_prev * alpha_prev
    disc = math.sqrt(b * b + 4.0 * c)
    if b > 0.0:
        return 2.0 * c / (disc + b)  # same root, no cancellation
    return (disc - b) / 2.0


def beta_from_alphas(alpha_prev: float, alpha: float) -> float:
    """Extrapolation weight alpha_prev(1-alpha_prev)/(alpha_prev^2+alpha)."""
    denom = alpha_prev * alpha_prev + alpha
    if denom <= 0.0:
        raise ValueError("alpha_prev^2 + alpha must be positive")
    return alpha_prev * (1.0 - alpha_prev) / denom


@dataclass
class DasvrgConfig:
    eta: float
    T: int
    K: int
    P: int
    sigma: float
    practical: bool = False

    def inner(self) -> SvrgConfig:
        return SvrgConfig(eta=self.eta, T=self.T, K=self.K, sigma=self.sigma,
                          practical=self.practical)


def dasvrg_run(family: FunctionFamily, cluster: ClusterState, config: DasvrgConfig,
               info: SmoothnessInfo, *, x0: np.ndarray | None = None,
               f_star: float | None = None, stop_gap: float | None = None,
               probe=None, collect_trace: bool = False) -> RunResult:
    """Accelerated outer loop around the distributed stages.

    Each outer iteration p warm-starts at the previous solution and
    runs K stages on the shifted objective f + (sigma/2)||. - y_{p-1}||^2,
    then the center updates (alpha, beta, y) by extrapolation.  Ledger
    conventions: the y broadcast rides the outer iteration's first
    batch round (one extra vector, no extra round); shipping the outer
    solution to the center costs one round and one vector.
    """
    config.inner().validate(info)
    if config.sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    x_hat = np.zeros(family.dim) if x0 is None else np.array(x0, dtype=float, copy=True)
    q = info.mu / (info.mu + config.sigma)
    alpha = math.sqrt(q)
    y = x_hat.copy()
    ledger = cluster.fresh_ledger()
    cursor = cluster.new_cursor()
    trace = [x_hat.copy()] if collect_trace else None
    ledger.checkpoint(0, _gap(family, x_hat, f_star))
    stage_counter = 0
    for _ in range(config.P):
        x_tilde = x_hat.copy()
        for inner_stage in range(config.K):
            h = batch_gradient_round(cluster, family, ledger, x_tilde, y=y, sigma=config.sigma,
                                     extra_broadcast_vectors=1 if inner_stage == 0 else 0)
            if probe is not None:
                probe("batch", ledger.rounds, {"x_ref": x_tilde, "h": h, "y": y})
            res = ss_svrg(family, x_tilde, h, cursor, config.eta, config.T,
                          sigma=config.sigma, ledger=ledger, cluster=cluster, probe=probe)
            x_tilde = res.x_bar
            stage_counter += 1
            ledger.checkpoint(stage_counter, _gap(family, x_tilde, f_star))
        x_prev = x_hat
        x_hat = x_tilde
        ledger.add_round(vectors=1)  # outer solution shipped to the center
        alpha_next = alpha_update(alpha, q)
        beta = beta_from_alphas(alpha, alpha_next)
        y = x_hat + beta * (x_hat - x_prev)
        alpha = alpha_next
        if collect_trace:
            trace.append(x_hat.copy())
        if probe is not None:
            probe("outer", ledger.rounds, {"x_ref": x_hat, "y": y})
        gap = _gap(family, x_hat, f_star)
        if stop_gap is not None and gap <= stop_gap:
            break
    return RunResult(x=x_hat, ledger=ledger, trace=trace)


def dasvrg_stage_count(sigma: float, mu: float) -> int:
    """Inner stage count that keeps every shifted subproblem accurate
    enough for the extrapolation guarantee:

        K = ceil( log(4/(2-sqrt(q)) + 10368 sigma / (mu q (1-sqrt(q)/2)^2))
                  / log(9/8) ),  q = mu/(mu+sigma).

    Grows like log(1 + sigma/mu).
    """
    if mu <= 0.0 or sigma < 0.0:
        raise ValueError("need mu > 0 and sigma >= 0")
    q = mu / (mu + sigma)
    rq = math.sqrt(q)
    arg = 4.0 / (2.0 - rq)
    if sigma > 0.0:
        arg += 10368.0 * sigma / (mu * q * (1.0 - rq / 2.0) ** 2)
    return math.ceil(math.log(arg) / math.log(9.0 / 8.0))


def default_dasvrg_schedule(L: float, mu: float, n: int, gap0: float, epsilon: float) -> DasvrgConfig:
    """Guarantee-backed schedule: sigma = L/n, eta = 1/(16L),
    T = ceil(96 kappa_sigma), K from `dasvrg_stage_count`, and

        P = ceil((2/sqrt(q)) log(32 gap0 / (q epsilon)))

    outer iterations, which drives (32/q)(1-sqrt(q)/2)^(P+1) gap0 below
    epsilon.
    """
    if min(L, mu, gap0, epsilon) <= 0.0 or n < 1:
        raise ValueError("inputs must be positive")
    sigma = L / n
    kappa_sigma = (L + sigma) / (mu + sigma)
    q = mu / (mu + sigma)
    T = math.ceil(96.0 * kappa_sigma)
    K = dasvrg_stage_count(sigma, mu)
    P = max(1, math.ceil((2.0 / math.sqrt(q)) * math.log(32.0 * gap0 / (q * epsilon))))
    return DasvrgConfig(eta=1.0 / (16.0 * L), T=T, K=K, P=P, sigma=sigma)


def accel_grad_run(family: FunctionFamily, cluster: ClusterState, info: SmoothnessInfo, *,
                   x0: np.ndarray | None = None, f_star: float | None = None,
                   epsilon: float | None = None, max_rounds: int = 10_000,
                   probe=None) -> RunResult:
    """Distributed constant-step accelerated gradient descent.

    Every iteration is one batch-gradient round (the data only
    parallelizes the full gradient); momentum uses the strongly convex
    fixed schedule with L as a conservative smoothness constant for f.
    """
    x = np.zeros(family.dim) if x0 is None else np.array(x0, dtype=float, copy=True)
    yv = x.copy()
    kappa = info.kappa
    momentum = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    ledger = cluster.fresh_ledger()
    ledger.checkpoint(0, _gap(family, x, f_star))
    for it in range(max_rounds):
        g = batch_gradient_round(cluster, family, ledger, yv, send_to_active=False)
        x_next = yv - g / info.L
        yv = x_next + momentum * (x_next - x)
        x = x_next
        gap = _gap(family, x, f_star)
        ledger.checkpoint(it + 1, gap)
        if probe is not None:
            probe("batch", ledger.rounds, {"x_ref": x, "h": g, "y": yv})
        if epsilon is not None and gap <= epsilon:
            break
    return RunResult(x=x, ledger=ledger, trace=None)
