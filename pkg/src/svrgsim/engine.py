"""Variance-reduced gradient core.

One stage = a reference point x_ref with its batch gradient h, followed
by T sequential steps

    x_{t+1} = x_t - eta * (grad_i(x_t) - grad_i(x_ref) + h),

with i drawn uniformly; the stage output is the running average
xbar_T.  `ss_svrg` runs a stage against the cluster's sampled
multi-sets with round-robin machine handoffs; `svrg_single_machine` is
the uniform-sampling reference oracle the distributed path must match
step for step when both consume the same index stream.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .allocation import MultisetCursor
from .errors import InvalidStepError, NoConvergenceError, SampleBudgetError
from .objective import FunctionFamily, SmoothnessInfo, prox_component_grad

log = logging.getLogger(__name__)


@dataclass
class SvrgConfig:
    """Stage schedule: step length eta, T steps per stage, K stages.

    `practical=True` waives the eta < 1/(4L) check (with a logged
    warning) so the large-step presets used in practice can run; the
    contraction guarantees do not apply there.
    """

    eta: float
    T: int
    K: int
    sigma: float = 0.0
    practical: bool = False

    def validate(self, info: SmoothnessInfo) -> "SvrgConfig":
        if self.eta <= 0.0:
            raise InvalidStepError("eta must be positive")
        if self.T < 0 or self.K < 0:
            raise ValueError("T and K must be nonnegative")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        limit = 1.0 / (4.0 * (info.L + self.sigma))
        if self.eta >= limit:
            if not self.practical:
                raise InvalidStepError(
                    f"eta={self.eta:g} is not below 1/(4(L+sigma))={limit:g}; "
                    "pass practical=True to run outside the guaranteed range")
            log.warning("practical mode: eta=%g >= 1/(4(L+sigma))=%g, convergence guarantees void",
                        self.eta, limit)
        return self


@dataclass
class StageResult:
    x_bar: np.ndarray
    x_last: np.ndarray
    machine: int
    handoffs: int
    steps: int


def vr_grad(family: FunctionFamily, i: int, x: np.ndarray, x_ref: np.ndarray,
            h: np.ndarray, y: np.ndarray | None = None, sigma: float = 0.0) -> np.ndarray:
    """Reference implementation of one variance-reduced gradient.

    With (y, sigma) supplied the component gradients are those of the
    proximally shifted functions f_i + (sigma/2)||. - y||^2; the shift
    center y cancels in the difference but is kept explicit here so the
    returned value is literally the defined estimator.
    """
    if sigma > 0.0 and y is not None:
        return (prox_component_grad(family, i, x, y, sigma)
                - prox_component_grad(family, i, x_ref, y, sigma) + h)
    return family.component_grad(i, x) - family.component_grad(i, x_ref) + sigma * (x - x_ref) + h


def ss_svrg(family: FunctionFamily, x_ref: np.ndarray, h: np.ndarray,
            cursor: MultisetCursor, eta: float, T: int, *, sigma: float = 0.0,
            ledger=None, cluster=None, probe=None) -> StageResult:
    """One stage of T steps consuming the sampled multi-sets in order.

    The active machine steps until its chunk runs dry, then ships the
    current iterate and running average (two vectors, one round) to the
    next machine.  A chunk that empties exactly at stage end does not
    hand off; the next stage starts on the following machine for free
    because the center already knows the consumption schedule.

    T = 0 returns x_ref unchanged (an empty average carries no
    information, so the stage reports "no progress").
    """
    k = cursor.active_machine()
    if T == 0:
        return StageResult(x_bar=x_ref.copy(), x_last=x_ref.copy(), machine=k, handoffs=0, steps=0)
    if cursor.remaining < T:
        raise SampleBudgetError(
            f"stage needs {T} samples but only {cursor.remaining} remain; the T*K=Q contract was violated upstream")
    x = x_ref.copy()
    xbar = np.zeros_like(x_ref)
    t = 0
    handoffs = 0
    while t < T:
        avail = cursor.chunk_remaining(k)
        if avail == 0:
            k += 1
            handoffs += 1
            if k >= cursor.n_chunks:
                raise SampleBudgetError("multi-sets exhausted mid-stage")
            if ledger is not None:
                ledger.add_round(vectors=2)
                if probe is not None:
                    probe("handoff", ledger.rounds, {"x": x, "xbar": xbar, "x_ref": x_ref, "h": h})
            continue
        seg = cursor.take(min(avail, T - t))
        if cluster is not None:
            cluster.check_access(k, seg)
        x, xbar, t = family.run_segment(x, xbar, t, x_ref, h, eta, sigma, seg)
        if ledger is not None:
            ledger.add_local(k, 2 * len(seg))
    return StageResult(x_bar=xbar, x_last=x, machine=k, handoffs=handoffs, steps=T)


def svrg_single_machine(family: FunctionFamily, x0: np.ndarray, eta: float, T: int, K: int,
                        rng: np.random.Generator | None = None,
                        indices: np.ndarray | None = None,
                        sigma: float = 0.0, y: np.ndarray | None = None) -> list[np.ndarray]:
    """Single-machine reference oracle; returns the stage trace
    [x~_0, ..., x~_K].

    Sampling comes either from `rng` (uniform over the family) or from
    an explicit `indices` stream consumed T entries per stage, which is
    how the distributed runs are replayed exactly.
    """
    if rng is None and indices is None:
        raise ValueError("provide either rng or an explicit index stream")
    x_tilde = np.array(x0, dtype=float, copy=True)
    trace = [x_tilde.copy()]
    offset = 0
    for _ in range(K):
        h = family.full_grad(x_tilde)
        if sigma > 0.0 and y is not None:
            h = h + sigma * (x_tilde - y)
        if indices is not None:
            seg = np.asarray(indices[offset:offset + T])
            if len(seg) < T:
                raise SampleBudgetError("index stream shorter than T*K")
            offset += T
        else:
            seg = rng.integers(0, family.n_components, size=T)
        if T == 0:
            trace.append(x_tilde.copy())
            continue
        x = x_tilde.copy()
        xbar = np.zeros_like(x)
        _, xbar, _ = family.run_segment(x, xbar, 0, x_tilde, h, eta, sigma, seg)
        x_tilde = xbar.copy()
        trace.append(x_tilde.copy())
    return trace


def contraction_bound(eta: float, T: int, L: float, mu: float) -> float:
    """Guaranteed per-stage factor on the expected optimality gap:

        1/(mu*eta*(1-4L*eta)*T) + 4L*eta*(T+1)/((1-4L*eta)*T).

    Only valid for 0 < eta < 1/(4L); with eta = 1/(16L) and T = 96*kappa
    the value is at most 8/9.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if mu <= 0.0 or L < mu:
        raise ValueError("need 0 < mu <= L")
    if not 0.0 < eta < 1.0 / (4.0 * L):
        raise InvalidStepError(f"eta={eta:g} outside (0, 1/(4L)={1.0 / (4.0 * L):g})")
    denom = 1.0 - 4.0 * L * eta
    return 1.0 / (mu * eta * denom * T) + 4.0 * L * eta * (T + 1) / (denom * T)


def stages_needed(rate: float, gap0: float, epsilon: float) -> int:
    """Smallest K with rate**K * gap0 <= epsilon."""
    if gap0 <= 0.0 or epsilon <= 0.0:
        raise ValueError("gap0 and epsilon must be positive")
    if not rate > 0.0:
        raise ValueError("rate must be positive")
    if rate >= 1.0:
        raise NoConvergenceError(f"per-stage rate {rate:g} does not contract")
    if gap0 <= epsilon:
        return 0
    K = max(1, math.ceil(math.log(gap0 / epsilon) / math.log(1.0 / rate)))
    while rate ** K * gap0 > epsilon:
        K += 1
    while K > 0 and rate ** (K - 1) * gap0 <= epsilon:
        K -= 1
    return K
