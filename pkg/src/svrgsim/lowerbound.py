"""Chain-structured hard instances for the round-complexity barrier.

The construction lives on R^b with b = u*k.  Tridiagonal pieces M_i are
summed with stride k into matrices Sigma_1..Sigma_k, giving k
quadratics p_s whose average pbar is a coupled chain: any strict subset
of {p_s} has a block-diagonal Hessian with blocks of size at most k, so
a machine that never sees all k functions can extend the support of its
working vectors by at most k coordinates per round.  The minimizer of
pbar decays geometrically (w*_j = h^j), which turns that support cap
into a per-round lower bound on the optimality gap.

The full instance places independent copies of the chain on n
coordinate blocks of R^(n*b) and hands each component to the simulator
through the same interface as the ERM objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .allocation import AllocationPlan, local_pass_plan
from .objective import FunctionFamily


@dataclass(frozen=True)
class HardParams:
    """Chain family parameters.

    k distinct chain functions, u repeats (dimension b = u*k per
    block), condition ratio kappa_prime = kappa/n of the per-block
    average, n coordinate blocks, and `copies` duplicates of the whole
    (block, function) grid, so N = copies * k * n components.
    """

    k: int
    u: int
    kappa_prime: float
    n: int
    copies: int
    L: float = 1.0

    def __post_init__(self):
        if min(self.k, self.u, self.n, self.copies) < 1:
            raise ValueError("k, u, n, copies must all be positive")
        if self.kappa_prime < 1.0:
            raise ValueError("kappa_prime must be at least 1 (needs kappa >= n)")
        if self.L <= 0.0:
            raise ValueError("L must be positive")

    @property
    def b(self) -> int:
        return self.u * self.k

    @property
    def mu_prime(self) -> float:
        return self.L / self.kappa_prime

    @property
    def N(self) -> int:
        return self.copies * self.k * self.n

    @property
    def dim(self) -> int:
        return self.n * self.b

    @property
    def mu(self) -> float:
        """Strong convexity of the assembled mean objective."""
        return self.mu_prime / self.n

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def corner_value(params: HardParams) -> float:
    s = math.sqrt(params.kappa_prime + params.k - 1)
    r = math.sqrt(params.k)
    return (s + 3.0 * r) / (s + r)


def _m_matrix(i: int, b: int, corner: float) -> np.ndarray:
    out = np.zeros((b, b))
    if i == 0:
        out[0, 0] = 1.0
        return out
    out[i - 1, i - 1] = 1.0
    out[i - 1, i] = -1.0
    out[i, i - 1] = -1.0
    out[i, i] = corner if i == b - 1 else 1.0
    return out


def build_sigma(s: int, params: HardParams) -> np.ndarray:
    """Sigma_s = sum of M_{i k + s - 1} over i = 0..u-1 (s is 1-based)."""
    if not 1 <= s <= params.k:
        raise ValueError(f"s must lie in 1..{params.k}")
    b = params.b
    corner = corner_value(params)
    out = np.zeros((b, b))
    for i in range(params.u):
        out += _m_matrix(i * params.k + s - 1, b, corner)
    return out


def sigma_sum_closed_form(params: HardParams) -> np.ndarray:
    """Sum of all Sigma_s: symmetric tridiagonal, diagonal 2 except the
    bottom corner, off-diagonals -1."""
    b = params.b
    out = 2.0 * np.eye(b)
    idx = np.arange(b - 1)
    out[idx, idx + 1] = -1.0
    out[idx + 1, idx] = -1.0
    out[b - 1, b - 1] = corner_value(params)
    return out


def _quad_coef(params: HardParams) -> float:
    return 0.25 * (params.L - params.mu_prime)


def p_value(s: int, w: np.ndarray, params: HardParams) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (params.b,):
        raise ValueError(f"expected block vector of dimension {params.b}")
    sigma = build_sigma(s, params)
    val = _quad_coef(params) * 0.5 * float(w @ sigma @ w)
    if s == 1:
        val -= _quad_coef(params) * float(w[0])
    return val + 0.5 * params.mu_prime * float(w @ w)


def p_grad(s: int, w: np.ndarray, params: HardParams) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (params.b,):
        raise ValueError(f"expected block vector of dimension {params.b}")
    g = _quad_coef(params) * (build_sigma(s, params) @ w) + params.mu_prime * w
    if s == 1:
        g = g.copy()
        g[0] -= _quad_coef(params)
    return g


def p_hessian(s: int, params: HardParams) -> np.ndarray:
    return _quad_coef(params) * build_sigma(s, params) + params.mu_prime * np.eye(params.b)


def pbar_value(w: np.ndarray, params: HardParams) -> float:
    return sum(p_value(s, w, params) for s in range(1, params.k + 1)) / params.k


def pbar_grad(w: np.ndarray, params: HardParams) -> np.ndarray:
    g = np.zeros(params.b)
    for s in range(1, params.k + 1):
        g += p_grad(s, w, params)
    return g / params.k


def pbar_hessian(params: HardParams) -> np.ndarray:
    return (_quad_coef(params) / params.k) * sigma_sum_closed_form(params) \
        + params.mu_prime * np.eye(params.b)


def chain_decay(params: HardParams) -> float:
    """h = (sqrt(kappa'+k-1) - sqrt(k)) / (sqrt(kappa'+k-1) + sqrt(k)),
    the smaller root of h^2 - 2((kappa'-1+2k)/(kappa'-1)) h + 1 = 0."""
    s = math.sqrt(params.kappa_prime + params.k - 1)
    r = math.sqrt(params.k)
    return (s - r) / (s + r)


def pbar_minimizer(params: HardParams):
    """(h, w*) with w*_j = h^j; the geometric vector solves the chain's
    stationarity system exactly (all rows, including the corner)."""
    h = chain_decay(params)
    w_star = h ** np.arange(1, params.b + 1, dtype=float)
    return h, w_star


def pbar_minimizer_solve(params: HardParams) -> np.ndarray:
    """Minimizer by direct linear solve (independent cross-check)."""
    rhs = np.zeros(params.b)
    rhs[0] = _quad_coef(params) / params.k
    return np.linalg.solve(pbar_hessian(params), rhs)


def default_u(kappa_prime: float, k: int, tail: float = 1e-16, floor: int = 1) -> int:
    """Smallest u with h^(2b) <= tail, so end-of-chain truncation sits
    below float precision in every gap computation."""
    probe = HardParams(k=k, u=1, kappa_prime=kappa_prime, n=1, copies=1)
    h = chain_decay(probe)
    if h <= 0.0:
        return max(floor, 1)
    b_needed = math.log(tail) / (2.0 * math.log(h))
    return max(floor, math.ceil(b_needed / k))


class BlockQuadraticFamily(FunctionFamily):
    """Component i applies chain function type_id[i] (or nothing when
    type_id[i] < 0) to coordinate block block_id[i]."""

    def __init__(self, params: HardParams, block_id: np.ndarray, type_id: np.ndarray,
                 n_blocks: int | None = None):
        self.params = params
        self.block_id = np.ascontiguousarray(block_id, dtype=np.int64)
        self.type_id = np.ascontiguousarray(type_id, dtype=np.int64)
        if self.block_id.shape != self.type_id.shape:
            raise ValueError("block_id and type_id must align")
        self.n_blocks = int(n_blocks if n_blocks is not None else params.n)
        self.b = params.b
        self.n_components = len(self.block_id)
        self.dim = self.n_blocks * self.b
        self.hessians = np.stack([p_hessian(s, self.params) for s in range(1, params.k + 1)])
        self.lin = _quad_coef(params)
        # counts[j, s] = how many components apply type s to block j
        active = self.type_id >= 0
        key = self.block_id[active] * params.k + self.type_id[active]
        self.counts = np.bincount(key, minlength=self.n_blocks * params.k).reshape(
            self.n_blocks, params.k).astype(float)

    def component_value(self, i: int, x: np.ndarray) -> float:
        self._check_dim(x)
        s = int(self.type_id[i])
        if s < 0:
            return 0.0
        j = int(self.block_id[i])
        return p_value(s + 1, x[j * self.b:(j + 1) * self.b], self.params)

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_dim(x)
        g = np.zeros(self.dim)
        s = int(self.type_id[i])
        if s < 0:
            return g
        j = int(self.block_id[i])
        g[j * self.b:(j + 1) * self.b] = p_grad(s + 1, x[j * self.b:(j + 1) * self.b], self.params)
        return g

    def _type_values(self, X: np.ndarray) -> np.ndarray:
        """(k, n_blocks) array of p_s evaluated on each block of x."""
        quad = np.einsum("jb,sbc,jc->sj", X, self._sigmas(), X)
        vals = _quad_coef(self.params) * 0.5 * quad \
            + 0.5 * self.params.mu_prime * np.sum(X * X, axis=1)[None, :]
        vals[0] -= self.lin * X[:, 0]
        return vals

    def _type_grads(self, X: np.ndarray) -> np.ndarray:
        """(k, n_blocks, b) array of grad p_s on each block of x."""
        g = np.einsum("sbc,jc->sjb", self.hessians, X)
        g[0, :, 0] -= self.lin
        return g

    def _sigmas(self) -> np.ndarray:
        if not hasattr(self, "_sigma_stack"):
            self._sigma_stack = np.stack([build_sigma(s, self.params)
                                          for s in range(1, self.params.k + 1)])
        return self._sigma_stack

    def full_value(self, x: np.ndarray) -> float:
        self._check_dim(x)
        X = x.reshape(self.n_blocks, self.b)
        return float(np.sum(self.counts.T * self._type_values(X))) / self.n_components

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return self.grad_sum_all(x) / self.n_components

    def grad_sum_all(self, x: np.ndarray) -> np.ndarray:
        self._check_dim(x)
        X = x.reshape(self.n_blocks, self.b)
        g = np.einsum("js,sjb->jb", self.counts, self._type_grads(X))
        return g.reshape(self.dim)

    def shard_grad_sum(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        self._check_dim(x)
        indices = np.asarray(indices)
        active = self.type_id[indices] >= 0
        sub = indices[active]
        key = self.block_id[sub] * self.params.k + self.type_id[sub]
        counts = np.bincount(key, minlength=self.n_blocks * self.params.k).reshape(
            self.n_blocks, self.params.k).astype(float)
        X = x.reshape(self.n_blocks, self.b)
        g = np.einsum("js,sjb->jb", counts, self._type_grads(X))
        return g.reshape(self.dim)

    def run_segment(self, x, xbar, t, x_ref, h, eta, lam_sigma_extra, indices):
        from ._kernels import quad_segment

        t = quad_segment(self.hessians, self.block_id, self.type_id, self.b,
                         lam_sigma_extra, h, x, xbar, t, x_ref, eta,
                         np.ascontiguousarray(indices, dtype=np.int64))
        return x, xbar, t


def build_hard_instance(params: HardParams) -> BlockQuadraticFamily:
    """Assemble the N = copies*k*n components: `copies` duplicates of
    the full (block, chain-function) grid, laid out copy-major."""
    grid_j, grid_s = np.meshgrid(np.arange(params.n), np.arange(params.k), indexing="ij")
    block_id = np.tile(grid_j.ravel(), params.copies)
    type_id = np.tile(grid_s.ravel(), params.copies)
    return BlockQuadraticFamily(params, block_id, type_id)


def per_block_family(family: BlockQuadraticFamily, block: int) -> BlockQuadraticFamily:
    """The one-block shadow of a hard instance: components that act on
    `block` keep their chain function, every other component becomes the
    zero function.  Index space and therefore any allocation plan are
    shared with the parent."""
    type_id = np.where(family.block_id == block, family.type_id, -1)
    block_id = np.zeros_like(family.block_id)
    return BlockQuadraticFamily(family.params, block_id, type_id, n_blocks=1)


def hard_instance_optimum(family: BlockQuadraticFamily):
    """(x*, f(x*)) via the exact per-block solve."""
    w = pbar_minimizer_solve(family.params)
    x_star = np.tile(w, family.n_blocks)
    return x_star, family.full_value(x_star)


def hessian_block_sizes(matrix: np.ndarray) -> np.ndarray:
    """Connected-component sizes of the off-diagonal sparsity graph."""
    coupling = (matrix != 0.0) & ~np.eye(matrix.shape[0], dtype=bool)
    n_comp, labels = connected_components(coupling, directed=False)
    return np.bincount(labels, minlength=n_comp)


def block_structure(subset, coeffs, params: HardParams) -> int:
    """Largest Hessian block of sum_{s in subset} coeffs_s * p_s for a
    strict subset of 1..k; guaranteed at most k."""
    subset = list(subset)
    if sorted(subset) == list(range(1, params.k + 1)):
        raise ValueError("subset must be strict: the full set couples the whole chain")
    if len(subset) != len(coeffs):
        raise ValueError("coeffs must align with subset")
    H = np.zeros((params.b, params.b))
    for s, c in zip(subset, coeffs):
        H += c * p_hessian(s, params)
    return int(np.max(hessian_block_sizes(H)))


def reachable_dim(rounds: int, k: int) -> int:
    """Support-size budget after the given number of rounds: k per round."""
    return rounds * k


def confinement_gap_bound(params: HardParams, rounds: int) -> float:
    """(mu' ||w*||^2 / 4) h^(2 k rounds): no vector reachable in the
    given number of rounds can close the gap below this."""
    h, w_star = pbar_minimizer(params)
    return 0.25 * params.mu_prime * float(w_star @ w_star) * h ** (2 * reachable_dim(rounds, params.k))


def adversarial_partition(family: BlockQuadraticFamily, m: int) -> AllocationPlan:
    """Even partition in which machine j never sees chain function
    j mod k, so no machine covers the full set.  Returned as a
    local-pass plan (R_j = S_j), keeping the coverage gap in force for
    the iterative phase as well."""
    params = family.params
    N = family.n_components
    if N % m:
        raise ValueError("m must divide the component count")
    per_machine = N // m
    remaining = [list(np.flatnonzero(family.type_id == s)[::-1]) for s in range(params.k)]
    shards = []
    for j in range(m):
        banned = j % params.k
        shard = []
        while len(shard) < per_machine:
            order = sorted((s for s in range(params.k) if s != banned),
                           key=lambda s: -len(remaining[s]))
            if not remaining[order[0]]:
                raise ValueError("adversarial fill infeasible for these sizes")
            shard.append(remaining[order[0]].pop())
        shards.append(np.array(shard, dtype=np.int64))
    leftovers = sum(len(r) for r in remaining)
    if leftovers:
        raise ValueError("adversarial fill left components unassigned")
    perm = np.concatenate(shards)
    offsets = np.arange(0, N + 1, per_machine, dtype=np.int64)
    return local_pass_plan(perm, offsets)


class ConfinementProbe:
    """Round-barrier instrument: records the largest block-local index
    of any nonzero coordinate across the protocol's working vectors,
    and the best optimality gap among its solution candidates."""

    def __init__(self, family: FunctionFamily, f_star: float, b: int):
        self.family = family
        self.f_star = f_star
        self.b = b
        self.records: list[tuple[int, int, float]] = []

    def support_of(self, v: np.ndarray) -> int:
        nz = np.flatnonzero(v)
        if len(nz) == 0:
            return 0
        return int(np.max(nz % self.b)) + 1

    def __call__(self, tag: str, rounds: int, vectors: dict):
        support = max((self.support_of(v) for v in vectors.values()), default=0)
        candidates = [vectors[kk] for kk in ("x", "xbar", "x_ref", "y") if kk in vectors]
        gap = min(self.family.full_value(v) - self.f_star for v in candidates)
        self.records.append((rounds, support, gap))

    def by_round(self):
        """(rounds, max support, min gap) aggregated per round index."""
        rounds = sorted({r for r, _, _ in self.records})
        sup = [max(s for r, s, _ in self.records if r == rr) for rr in rounds]
        gap = [min(g for r, _, g in self.records if r == rr) for rr in rounds]
        return np.array(rounds), np.array(sup), np.array(gap)
