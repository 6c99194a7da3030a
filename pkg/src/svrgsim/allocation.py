"""Data allocation for the simulated cluster.

A run places the N component functions on m machines twice over:

* a random even partition S_1..S_m (one shard per machine), and
* multi-sets R_1..R_m of sampled-with-replacement indices that the
  iterative updates consume, laid out by chunking one sequence
  r_1..r_Q into pieces of size n_tilde = C - n.

The sequence reuses the partition's randomness: position l keeps the
permutation entry i_l with probability 1 - (l-1)/N and otherwise
backtracks to a uniformly chosen earlier entry.  The resulting joint
law of (r_1..r_Q) is exactly i.i.d. uniform, while the overlap with the
partition keeps the expected number of separately shipped functions
at most Q^2/N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError


@dataclass(frozen=True)
class CapacityConfig:
    """Per-machine memory: holds at most `capacity` functions; n = N/m."""

    capacity: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.capacity <= self.n:
            raise CapacityError(f"capacity C={self.capacity} must exceed the shard size n={self.n}")

    @property
    def n_tilde(self) -> int:
        return self.capacity - self.n


def even_partition_sizes(N: int, m: int) -> np.ndarray:
    """Shard sizes, larger shards first when m does not divide N."""
    if m < 1 or m > N:
        raise ValueError(f"need 1 <= m <= N, got m={m}, N={N}")
    base, extra = divmod(N, m)
    return np.array([base + 1] * extra + [base] * (m - extra), dtype=np.int64)


def random_partition(N: int, m: int, rng: np.random.Generator):
    """Uniform permutation of [N] cut into m near-even shards.

    Returns (permutation, offsets); shard j is permutation[offsets[j]:offsets[j+1]].
    """
    perm = rng.permutation(N).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(even_partition_sizes(N, m))])
    return perm, offsets


def derive_sequence(permutation: np.ndarray, Q: int, rng: np.random.Generator) -> np.ndarray:
    """Sequence r_1..r_Q distributed exactly as i.i.d. uniform over [N].

    Realization: draw u ~ U[0,1); if u*N < l-1 take the earlier entry
    i_{floor(u*N)+1}, else keep i_l.  Beyond l = N+1 the keep
    probability is zero and the rule degenerates to a fresh uniform
    pick from the permutation, so any Q >= 0 is lawful.
    """
    if Q < 0:
        raise ValueError("Q must be nonnegative")
    N = len(permutation)
    if Q == 0:
        return np.empty(0, dtype=np.int64)
    u = rng.random(Q) * N
    pos = np.arange(Q, dtype=np.int64)
    backtrack = u < pos  # u*N < l-1 with l = pos+1
    src = np.where(backtrack, u.astype(np.int64), np.minimum(pos, N - 1))
    return permutation[src]


def multiset_offsets(Q: int, n_tilde: int, m: int) -> np.ndarray:
    """Chunk boundaries of the sequence: full chunks of n_tilde, one
    remainder chunk, empty chunks after that."""
    if Q > n_tilde * m:
        raise CapacityError(f"Q={Q} exceeds the multi-set budget n_tilde*m={n_tilde * m}")
    ends = np.minimum(np.arange(1, m + 1, dtype=np.int64) * n_tilde, Q)
    return np.concatenate([[0], ends])


def build_multisets(sequence: np.ndarray, n_tilde: int, m: int) -> list[np.ndarray]:
    """Views R_1..R_m over the sequence (later machines may be empty)."""
    offs = multiset_offsets(len(sequence), n_tilde, m)
    return [sequence[offs[j]:offs[j + 1]] for j in range(m)]


def expected_extra_comm_bound(Q: int, N: int) -> float:
    """Upper bound Q^2/N on the expected separately-shipped functions."""
    if Q < 0 or N < 1:
        raise ValueError("need Q >= 0 and N >= 1")
    return Q * Q / N


@dataclass
class AllocationPlan:
    """Everything the cluster needs: partition, sequence, chunking, and
    the shipping ledger.

    extra_transfers counts positions l whose sample is not resident on
    the machine that stores chunk l (r_l != i_l and r_l not in the
    owner's shard); reuse_mismatches is the looser count of positions
    with r_l != i_l, which is the quantity the Q^2/N bound controls.
    """

    N: int
    m: int
    permutation: np.ndarray
    part_offsets: np.ndarray
    sequence: np.ndarray
    ms_offsets: np.ndarray
    n_tilde: int
    extra_transfers: int = 0
    reuse_mismatches: int = 0
    resident_sizes: np.ndarray = field(default=None, repr=False)

    @property
    def Q(self) -> int:
        return len(self.sequence)

    def partition(self, j: int) -> np.ndarray:
        return self.permutation[self.part_offsets[j]:self.part_offsets[j + 1]]

    def multiset(self, j: int) -> np.ndarray:
        return self.sequence[self.ms_offsets[j]:self.ms_offsets[j + 1]]

    def resident_indices(self, j: int) -> np.ndarray:
        return np.union1d(self.partition(j), self.multiset(j))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# allocation N={self.N} m={self.m} Q={self.Q} n_tilde={self.n_tilde}\n")
            fh.write("# per machine: sorted shard indices | multi-set indices in consumption order (0-based)\n")
            for j in range(self.m):
                s = " ".join(str(int(v)) for v in np.sort(self.partition(j)))
                r = " ".join(str(int(v)) for v in self.multiset(j))
                fh.write(f"{s} | {r}\n")


def _owner_of_position(part_offsets: np.ndarray, slot: np.ndarray) -> np.ndarray:
    """Machine whose shard covers the given permutation slots."""
    return np.searchsorted(part_offsets, slot, side="right") - 1


def count_transfers(permutation, part_offsets, sequence, ms_offsets):
    """(extra_transfers, reuse_mismatches) for a finished allocation."""
    Q = len(sequence)
    if Q == 0:
        return 0, 0
    N = len(permutation)
    pos = np.arange(Q)
    kept = sequence == permutation[np.minimum(pos, N - 1)]
    kept &= pos <= N - 1  # beyond the permutation every draw is a fresh sample
    reuse_mismatches = int(np.sum(~kept))

    inv = np.empty(N, dtype=np.int64)
    inv[permutation] = np.arange(N)
    chunk_owner = np.searchsorted(ms_offsets, pos, side="right") - 1
    shard_of_sample = _owner_of_position(part_offsets, inv[sequence])
    resident = shard_of_sample == chunk_owner
    extra = int(np.sum(~kept & ~resident))
    return extra, reuse_mismatches


def allocate(N: int, m: int, Q: int, capacity: CapacityConfig,
             partition_rng: np.random.Generator,
             sequence_rng: np.random.Generator) -> AllocationPlan:
    """Full allocation: partition, reuse-sampled sequence, chunked
    multi-sets, transfer counts, and the capacity check."""
    if capacity.capacity >= N:
        raise CapacityError(f"capacity C={capacity.capacity} must be smaller than N={N}")
    sizes = even_partition_sizes(N, m)
    if capacity.n != int(sizes[0]) and capacity.n != int(sizes[-1]):
        raise ValueError(f"capacity.n={capacity.n} is not the shard size for N={N}, m={m}")
    perm, part_offsets = random_partition(N, m, partition_rng)
    seq = derive_sequence(perm, Q, sequence_rng)
    ms_offsets = multiset_offsets(Q, capacity.n_tilde, m)
    extra, mismatches = count_transfers(perm, part_offsets, seq, ms_offsets)
    plan = AllocationPlan(N=N, m=m, permutation=perm, part_offsets=part_offsets,
                          sequence=seq, ms_offsets=ms_offsets, n_tilde=capacity.n_tilde,
                          extra_transfers=extra, reuse_mismatches=mismatches)
    plan.resident_sizes = _resident_sizes(plan)
    over = np.flatnonzero(plan.resident_sizes > capacity.capacity)
    if len(over):
        j = int(over[0])
        raise CapacityError(
            f"machine {j} would hold {int(plan.resident_sizes[j])} functions, capacity is {capacity.capacity}")
    return plan


def local_pass_plan(permutation: np.ndarray, part_offsets: np.ndarray) -> AllocationPlan:
    """Shortcut allocation with R_j = S_j (each machine replays its own
    shard).  Saves the extra shipping entirely but the consumed indices
    are no longer i.i.d. uniform, so the variance-reduced steps lose
    their unbiasedness guarantee.  Practical mode only.
    """
    m = len(part_offsets) - 1
    sizes = np.diff(part_offsets)
    if len(set(sizes.tolist())) != 1:
        raise ValueError("local-pass mode needs even shards")
    n = int(sizes[0])
    N = len(permutation)
    plan = AllocationPlan(N=N, m=m, permutation=permutation, part_offsets=part_offsets,
                          sequence=permutation, ms_offsets=part_offsets.copy(),
                          n_tilde=n, extra_transfers=0, reuse_mismatches=0)
    plan.resident_sizes = sizes.astype(np.int64)
    return plan


def _resident_sizes(plan: AllocationPlan) -> np.ndarray:
    """|S_j union R_j| per machine, vectorized over one global unique()."""
    sizes = np.diff(plan.part_offsets).astype(np.int64)
    Q = plan.Q
    if Q == 0:
        return sizes
    pos = np.arange(Q)
    chunk_owner = np.searchsorted(plan.ms_offsets, pos, side="right") - 1
    inv = np.empty(plan.N, dtype=np.int64)
    inv[plan.permutation] = np.arange(plan.N)
    in_own_shard = _owner_of_position(plan.part_offsets, inv[plan.sequence]) == chunk_owner
    outside = ~in_own_shard
    if np.any(outside):
        key = chunk_owner[outside].astype(np.int64) * plan.N + plan.sequence[outside]
        uniq = np.unique(key)
        owners, counts = np.unique(uniq // plan.N, return_counts=True)
        sizes[owners] += counts
    return sizes


class MultisetCursor:
    """Consumption state over the chunked sequence.

    Samples are consumed strictly in stored order (the sequence is
    already i.i.d., so order carries no bias), which reduces the whole
    multi-set state to a single position plus the chunk boundaries.
    """

    def __init__(self, plan: AllocationPlan):
        self.sequence = plan.sequence
        self.offsets = plan.ms_offsets
        self.pos = 0
        # chunks that actually hold samples
        self.n_chunks = int(np.searchsorted(self.offsets, plan.Q, side="left"))

    @property
    def remaining(self) -> int:
        return len(self.sequence) - self.pos

    def active_machine(self) -> int:
        """Machine holding the next unconsumed sample (0 when empty)."""
        if self.remaining == 0:
            return max(self.n_chunks - 1, 0)
        return int(np.searchsorted(self.offsets, self.pos, side="right") - 1)

    def chunk_remaining(self, j: int) -> int:
        return max(int(self.offsets[j + 1]) - self.pos, 0)

    def take(self, count: int) -> np.ndarray:
        seg = self.sequence[self.pos:self.pos + count]
        self.pos += count
        return seg
