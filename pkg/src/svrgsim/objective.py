"""Finite-sum objectives: f(x) = (1/N) sum_i f_i(x).

Supported component families:

* `ErmObjective` holds N data points (a_i, b_i) with a scalar loss
  (square / logistic / smooth hinge) plus an l2 ridge term, so
  f_i(x) = phi(a_i^T x, b_i) + (lam/2)||x||^2.
* `FunctionFamily` is the minimal interface the solvers need; the
  lower-bound lab provides a second, non-ERM implementation.

All operations are pure; nothing here mutates shared state, so the
functions are safe to call from many threads at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import StrongConvexityUnavailable


class LossKind(enum.Enum):
    SQUARE = "square"
    LOGISTIC = "logistic"
    SMOOTH_HINGE = "smooth_hinge"


#: 1/gamma is the curvature bound used for the scalar loss in
#: L = max_i ||a_i||^2 / gamma + lambda.  Two named presets:
#: GAMMA_CLASSIC follows the common convention of treating the square
#: loss as if it were half-scaled (gamma = 1); GAMMA_CURVATURE uses the
#: exact second-derivative bound (square loss has phi'' = 2, so
#: gamma = 1/2).  Solvers default to GAMMA_CURVATURE because the step
#: bound eta < 1/(4L) is only guaranteed against the true curvature.
GAMMA_CLASSIC = {LossKind.SQUARE: 1.0, LossKind.LOGISTIC: 4.0, LossKind.SMOOTH_HINGE: 1.0}
GAMMA_CURVATURE = {LossKind.SQUARE: 0.5, LossKind.LOGISTIC: 4.0, LossKind.SMOOTH_HINGE: 1.0}


@dataclass(frozen=True)
class DataPoint:
    """One sample: a dense feature vector and a scalar label.

    Classification losses require labels in {-1, +1}; the square loss
    accepts any real label.
    """

    features: np.ndarray
    label: float


@dataclass(frozen=True)
class SmoothnessInfo:
    """Component smoothness L, strong convexity mu of f, and kappa = L/mu."""

    L: float
    mu: float

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ValueError("mu must be positive")
        if self.L < self.mu:
            raise ValueError("L must be at least mu")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def loss_value(loss: LossKind, z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """phi(z, b) for margin/residual z = a^T x, elementwise."""
    z = np.asarray(z, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if loss is LossKind.SQUARE:
        return (z - labels) ** 2
    if loss is LossKind.LOGISTIC:
        return np.logaddexp(0.0, -labels * z)
    t = labels * z
    return np.where(t >= 1.0, 0.0, np.where(t <= 0.0, 0.5 - t, 0.5 * (1.0 - t) ** 2))


def loss_deriv(loss: LossKind, z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d phi(z, b) / dz, elementwise."""
    z = np.asarray(z, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if loss is LossKind.SQUARE:
        return 2.0 * (z - labels)
    if loss is LossKind.LOGISTIC:
        return -labels * expit(-labels * z)
    t = labels * z
    return np.where(t >= 1.0, 0.0, np.where(t <= 0.0, -labels, -labels * (1.0 - t)))


class FunctionFamily:
    """N component functions on R^dim with mean objective f.

    Subclasses must fill `n_components`, `dim` and the per-component
    value/gradient; the vectorized entry points have generic (slow)
    fallbacks that subclasses override for speed.
    """

    n_components: int
    dim: int

    def component_value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full_value(self, x: np.ndarray) -> float:
        return sum(self.component_value(i, x) for i in range(self.n_components)) / self.n_components

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i in range(self.n_components):
            g += self.component_grad(i, x)
        return g / self.n_components

    def shard_grad_sum(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Sum (not mean) of component gradients over `indices`."""
        g = np.zeros(self.dim)
        for i in indices:
            g += self.component_grad(int(i), x)
        return g

    def grad_sum_all(self, x: np.ndarray) -> np.ndarray:
        """Sum of all N component gradients (single reduction)."""
        return self.shard_grad_sum(np.arange(self.n_components), x)

    def run_segment(self, x, xbar, t, x_ref, h, eta, lam_sigma_extra, indices):
        """Run variance-reduced steps over `indices`, in order.

        One step per index i:
            x   <- x - eta * (grad_i(x) - grad_i(x_ref)
                              + lam_sigma_extra * (x - x_ref) + h)
            xbar <- (x + t * xbar) / (t + 1)

        `lam_sigma_extra` carries any proximal coefficient sigma that is
        not already part of the component gradients.  Mutates and
        returns (x, xbar, t).
        """
        for i in indices:
            i = int(i)
            g = self.component_grad(i, x) - self.component_grad(i, x_ref)
            x -= eta * (g + lam_sigma_extra * (x - x_ref) + h)
            xbar[...] = (x + t * xbar) / (t + 1)
            t += 1
        return x, xbar, t

    def _check_dim(self, x: np.ndarray):
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of dimension {self.dim}, got shape {x.shape}")


class ErmObjective(FunctionFamily):
    """Regularized ERM family: f_i(x) = phi(a_i^T x, b_i) + (lam/2)||x||^2."""

    def __init__(self, loss: LossKind, features: np.ndarray, labels: np.ndarray, lam: float):
        features = np.ascontiguousarray(features, dtype=float)
        labels = np.ascontiguousarray(labels, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a nonempty (N, d) array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be a length-N vector")
        if lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        if loss in (LossKind.LOGISTIC, LossKind.SMOOTH_HINGE):
            if not np.all(np.abs(labels) == 1.0):
                bad = int(np.flatnonzero(np.abs(labels) != 1.0)[0])
                raise ValueError(f"{loss.value} loss needs labels in {{-1,+1}}; point {bad} has {labels[bad]}")
        self.loss = loss
        self.features = features
        self.labels = labels
        self.lam = float(lam)
        self.n_components, self.dim = features.shape

    @classmethod
    def from_points(cls, loss: LossKind, points: list[DataPoint], lam: float) -> "ErmObjective":
        feats = np.vstack([np.asarray(p.features, dtype=float) for p in points])
        labels = np.array([p.label for p in points], dtype=float)
        return cls(loss, feats, labels, lam)

    def _index_check(self, i: int):
        if not 0 <= i < self.n_components:
            raise IndexError(f"component index {i} outside [0, {self.n_components})")

    def component_value(self, i: int, x: np.ndarray) -> float:
        self._index_check(i)
        self._check_dim(x)
        z = float(self.features[i] @ x)
        return float(loss_value(self.loss, z, self.labels[i])) + 0.5 * self.lam * float(x @ x)

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        self._index_check(i)
        self._check_dim(x)
        z = float(self.features[i] @ x)
        c = float(loss_deriv(self.loss, z, self.labels[i]))
        return c * self.features[i] + self.lam * x

    def full_value(self, x: np.ndarray) -> float:
        self._check_dim(x)
        z = self.features @ x
        return float(np.mean(loss_value(self.loss, z, self.labels))) + 0.5 * self.lam * float(x @ x)

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        self._check_dim(x)
        c = loss_deriv(self.loss, self.features @ x, self.labels)
        return self.features.T @ c / self.n_components + self.lam * x

    def shard_grad_sum(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        sub = self.features[indices]
        c = loss_deriv(self.loss, sub @ x, self.labels[indices])
        return sub.T @ c + (len(indices) * self.lam) * x

    def grad_sum_all(self, x: np.ndarray) -> np.ndarray:
        c = loss_deriv(self.loss, self.features @ x, self.labels)
        return self.features.T @ c + (self.n_components * self.lam) * x

    def run_segment(self, x, xbar, t, x_ref, h, eta, lam_sigma_extra, indices):
        from ._kernels import LOSS_IDS, erm_segment

        t = erm_segment(
            self.features, self.labels, LOSS_IDS[self.loss],
            self.lam + lam_sigma_extra, h, x, xbar, t, x_ref, eta,
            np.ascontiguousarray(indices, dtype=np.int64),
        )
        return x, xbar, t

    def max_feature_sqnorm(self) -> float:
        return float(np.max(np.einsum("ij,ij->i", self.features, self.features)))


def prox_component_grad(family: FunctionFamily, i: int, x: np.ndarray,
                        y: np.ndarray, sigma: float) -> np.ndarray:
    """Gradient of f_i(x) + (sigma/2)||x - y||^2."""
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must share a dimension")
    return family.component_grad(i, x) + sigma * (x - y)


def prox_full_grad(family: FunctionFamily, x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    return family.full_grad(x) + sigma * (x - y)


def estimate_constants(spec: ErmObjective, gamma: float | None = None) -> SmoothnessInfo:
    """L = max_i ||a_i||^2 / gamma + lambda, mu = lambda.

    `gamma` defaults to the curvature-exact preset for the family's
    loss (see GAMMA_CURVATURE / GAMMA_CLASSIC).
    """
    if spec.lam <= 0.0:
        raise StrongConvexityUnavailable("lambda = 0: no strong-convexity constant available")
    if gamma is None:
        gamma = GAMMA_CURVATURE[spec.loss]
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    L = spec.max_feature_sqnorm() / gamma + spec.lam
    return SmoothnessInfo(L=L, mu=spec.lam)
