import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from svrgsim import CapacityConfig, ErmObjective, LossKind, allocate, estimate_constants, stream
from svrgsim.datasets import synth_logistic, synth_ridge


def ridge_problem(n_points, dim, kappa, seed=0, noise=0.1):
    """(spec, info, x_star, f_star) for a kappa-exact ridge instance."""
    data, lam, x_star = synth_ridge(n_points, dim, kappa, stream(seed, "data"), noise=noise)
    spec = ErmObjective(LossKind.SQUARE, data.features, data.labels, lam)
    info = estimate_constants(spec)
    return spec, info, x_star, spec.full_value(x_star)


def logistic_spec(n_points, dim, lam, seed=0):
    data = synth_logistic(n_points, dim, stream(seed, "data"))
    return ErmObjective(LossKind.LOGISTIC, data.features, data.labels, lam)


def theory_plan(N, m, Q, n_tilde, seed):
    n = -(-N // m)  # largest shard size when m does not divide N
    cap = CapacityConfig(capacity=n + n_tilde, n=n)
    plan = allocate(N, m, Q, cap, stream(seed, "partition"), stream(seed, "sequence"))
    return plan, cap


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
