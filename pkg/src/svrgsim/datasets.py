"""Dataset ingestion and synthesis.

Text format is the usual sparse `label idx:val idx:val ...` with
1-based, strictly ascending indices; everything is densified on read
(the solvers are dense-only at this scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError
from .objective import ErmObjective, LossKind, estimate_constants


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def parse_libsvm(path) -> Dataset:
    """Parse a sparse text dataset into a dense Dataset.

    The feature dimension is the largest index seen.  Malformed lines
    raise DatasetFormatError carrying the 1-based line number.
    """
    labels = []
    rows = []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: label {parts[0]!r} is not numeric") from None
            entries = []
            prev = 0
            for tok in parts[1:]:
                if ":" not in tok:
                    raise DatasetFormatError(f"{path}:{lineno}: expected idx:val, got {tok!r}")
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DatasetFormatError(f"{path}:{lineno}: bad entry {tok!r}") from None
                if idx < 1:
                    raise DatasetFormatError(f"{path}:{lineno}: indices are 1-based, got {idx}")
                if idx <= prev:
                    raise DatasetFormatError(f"{path}:{lineno}: indices must ascend, got {idx} after {prev}")
                prev = idx
                entries.append((idx, val))
            labels.append(label)
            rows.append(entries)
            if prev > max_index:
                max_index = prev
    if not labels:
        raise DatasetFormatError(f"{path}: empty dataset")
    feats = np.zeros((len(labels), max_index))
    for r, entries in enumerate(rows):
        for idx, val in entries:
            feats[r, idx - 1] = val
    return Dataset(features=feats, labels=np.array(labels))


def write_libsvm(dataset: Dataset, path):
    """Inverse of parse_libsvm; floats use shortest round-trip form."""
    with open(path, "w") as fh:
        for i in range(dataset.n_points):
            row = dataset.features[i]
            toks = [repr(float(dataset.labels[i]))]
            for j in np.flatnonzero(row):
                toks.append(f"{j + 1}:{float(row[j])!r}")
            fh.write(" ".join(toks) + "\n")


def rescale_labels_01(dataset: Dataset) -> Dataset:
    """Affine map of the labels onto [0, 1] (regression targets)."""
    lo, hi = float(np.min(dataset.labels)), float(np.max(dataset.labels))
    if hi == lo:
        return Dataset(dataset.features, np.zeros_like(dataset.labels))
    return Dataset(dataset.features, (dataset.labels - lo) / (hi - lo))


def rff_transform(dataset: Dataset, target_dim: int, bandwidth: float,
                  rng: np.random.Generator) -> Dataset:
    """Random Fourier features for the Gaussian kernel
    exp(-||a - a'||^2 / (2 bw^2)).

    Each of target_dim/2 frequencies omega ~ N(0, bw^-2 I) contributes
    the pair (cos(omega.a), sin(omega.a)) scaled by sqrt(2/D), so
    E z(a).z(a') approximates the kernel.
    """
    if target_dim < 2 or target_dim % 2:
        raise ValueError("target_dim must be a positive even number")
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    omega = rng.normal(scale=1.0 / bandwidth, size=(target_dim // 2, dataset.dim))
    proj = dataset.features @ omega.T
    z = np.empty((dataset.n_points, target_dim))
    z[:, 0::2] = np.cos(proj)
    z[:, 1::2] = np.sin(proj)
    z *= np.sqrt(2.0 / target_dim)
    return Dataset(features=z, labels=dataset.labels.copy())


def synth_ridge(n_points: int, dim: int, kappa_target: float, rng: np.random.Generator,
                noise: float = 0.1):
    """Gaussian ridge-regression instance hitting the requested
    condition number exactly.

    Features are unit-capped Gaussians; lambda is set from the exact
    curvature bound L = 2 max||a||^2 + lambda so that L/lambda equals
    kappa_target.  Returns (dataset, lam, x_star) with x_star the exact
    solve of the regularized normal equations.
    """
    if kappa_target <= 1.0:
        raise ValueError("kappa_target must exceed 1 (kappa = 1 needs all-zero features)")
    A = rng.normal(size=(n_points, dim)) / np.sqrt(dim)
    norms = np.linalg.norm(A, axis=1)
    A /= np.maximum(norms, 1.0)[:, None]  # cap ||a|| at 1, keep spread below
    x_true = rng.normal(size=dim)
    b = A @ x_true + noise * rng.normal(size=n_points)
    max_sq = float(np.max(np.einsum("ij,ij->i", A, A)))
    lam = 2.0 * max_sq / (kappa_target - 1.0)
    x_star = ridge_optimum(A, b, lam)
    return Dataset(features=A, labels=b), lam, x_star


def ridge_optimum(A: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """argmin (1/N) sum (a_i.x - b_i)^2 + (lam/2)||x||^2 by direct solve."""
    N, d = A.shape
    H = (2.0 / N) * (A.T @ A) + lam * np.eye(d)
    rhs = (2.0 / N) * (A.T @ b)
    return np.linalg.solve(H, rhs)


def synth_logistic(n_points: int, dim: int, rng: np.random.Generator,
                   flip: float = 0.05):
    """Gaussian features with +-1 labels from a planted direction,
    a `flip` fraction of them inverted."""
    A = rng.normal(size=(n_points, dim)) / np.sqrt(dim)
    norms = np.linalg.norm(A, axis=1)
    A /= np.maximum(norms, 1.0)[:, None]
    x_true = rng.normal(size=dim) * 3.0
    labels = np.sign(A @ x_true + 1e-12)
    flips = rng.random(n_points) < flip
    labels[flips] *= -1.0
    return Dataset(features=A, labels=labels)


def exact_optimum(spec: ErmObjective, tol: float = 1e-13, max_newton: int = 60):
    """(x*, f*) for a ridge-regularized ERM objective.

    Square loss solves in closed form; the smooth classification losses
    run L-BFGS and then Newton-polish until the gradient norm is at the
    float noise floor.  Used only to anchor gap traces; never counted
    in any ledger.
    """
    if spec.lam <= 0.0:
        raise ValueError("exact optimum requires lambda > 0")
    if spec.loss is LossKind.SQUARE:
        x = ridge_optimum(spec.features, spec.labels, spec.lam)
        return x, spec.full_value(x)
    from scipy.optimize import minimize

    res = minimize(lambda x: spec.full_value(x), np.zeros(spec.dim),
                   jac=lambda x: spec.full_grad(x), method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-12})
    x = res.x
    info = estimate_constants(spec)
    for _ in range(max_newton):
        g = spec.full_grad(x)
        if np.linalg.norm(g) <= tol * max(1.0, info.L):
            break
        H = _erm_hessian(spec, x)
        x = x - np.linalg.solve(H, g)
    return x, spec.full_value(x)


def _erm_hessian(spec: ErmObjective, x: np.ndarray) -> np.ndarray:
    z = spec.features @ x
    if spec.loss is LossKind.LOGISTIC:
        from scipy.special import expit

        p = expit(spec.labels * z)
        w = p * (1.0 - p)
    elif spec.loss is LossKind.SMOOTH_HINGE:
        t = spec.labels * z
        w = ((t > 0.0) & (t < 1.0)).astype(float)
    else:
        w = np.full(spec.n_components, 2.0)
    Hw = spec.features * w[:, None]
    return spec.features.T @ Hw / spec.n_components + spec.lam * np.eye(spec.dim)
