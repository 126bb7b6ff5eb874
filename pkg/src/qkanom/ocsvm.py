"""nu one-class SVM on precomputed kernel matrices.

Solves the standard dual

    min_alpha  0.5 * alpha^T K alpha
    s.t.       0 <= alpha_i <= 1/(nu*N),   sum_i alpha_i = 1

by pairwise coordinate descent on the maximal-violating pair: grow the
feasible coordinate with the smallest gradient, shrink the one with the
largest, until the KKT gap drops below the tolerance. The offset rho is the
mean gradient over margin support vectors (0 < alpha < bound), falling back
to the midpoint of the bound-support gradients when none are interior.

Decision scores are ``K_test @ alpha - rho``; ``score >= 0`` is normal (+1),
negative is anomalous (-1).

Model file layout (little-endian): magic ``QOCS``, version u8 (=1), N u64,
nu f64, rho f64, N f64 alphas, then a provenance block identical to the
kernel cache format.
"""

import struct

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .kernel import (
    KernelKind,
    KernelMatrix,
    Provenance,
    _Reader,
    pack_provenance,
    unpack_provenance,
)

_MAGIC = b"QOCS"
_VERSION = 1


class ConvergenceError(RuntimeError):
    """Solver hit max_iter with the KKT violation still above tolerance."""

    def __init__(self, violation: float, max_iter: int):
        super().__init__(
            f"no convergence after {max_iter} iterations; "
            f"KKT violation {violation:.3e}"
        )
        self.violation = violation


class ModelFormatError(ValueError):
    """Raised when a model file is corrupt, truncated or mismatched."""


def _solve_dual(K: np.ndarray, nu: float, tol: float, max_iter: int):
    """Returns (alpha, gradient, iterations); raises ConvergenceError."""
    n = len(K)
    bound = 1.0 / (nu * n)
    alpha = np.full(n, 1.0 / n)
    gradient = K @ alpha
    tiny = 1e-12
    for iteration in range(max_iter):
        can_grow = alpha < bound
        can_shrink = alpha > 0.0
        if not can_grow.any() or not can_shrink.any():
            return alpha, gradient, iteration
        grow_candidates = np.where(can_grow, gradient, np.inf)
        shrink_candidates = np.where(can_shrink, gradient, -np.inf)
        i = int(np.argmin(grow_candidates))
        j = int(np.argmax(shrink_candidates))
        violation = gradient[j] - gradient[i]
        if violation < tol or i == j:
            return alpha, gradient, iteration
        curvature = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if curvature <= tiny:
            curvature = tiny
        step = violation / curvature
        total = alpha[i] + alpha[j]
        new_i = alpha[i] + step
        if new_i > bound:
            new_i = bound
        if new_i > total:
            new_i = total
        new_j = total - new_i
        gradient += (new_i - alpha[i]) * K[:, i] + (new_j - alpha[j]) * K[:, j]
        alpha[i], alpha[j] = new_i, new_j
    can_grow = alpha < bound
    can_shrink = alpha > 0.0
    violation = (
        gradient[can_shrink].max() - gradient[can_grow].min()
        if can_grow.any() and can_shrink.any()
        else 0.0
    )
    raise ConvergenceError(violation, max_iter)


def _offset(alpha: np.ndarray, gradient: np.ndarray, bound: float) -> float:
    interior = (alpha > 0.0) & (alpha < bound)
    if interior.any():
        return float(gradient[interior].mean())
    at_bound = gradient[alpha >= bound]
    at_zero = gradient[alpha <= 0.0]
    if len(at_bound) and len(at_zero):
        return float((at_bound.max() + at_zero.min()) / 2.0)
    if len(at_bound):
        return float(at_bound.max())
    return float(at_zero.min())


class PrecomputedOneClassSVM(BaseEstimator):
    """One-class SVM taking precomputed kernel matrices.

    Parameters
    ----------
    nu : float in (0, 1]
        Upper bound on the training outlier fraction, lower bound on the
        support-vector fraction.
    tol : float
        KKT violation threshold for convergence.
    max_iter : int
        Iteration cap; exceeding it raises ConvergenceError.
    check_psd : bool
        Verify the training kernel is positive semidefinite (to tolerance)
        before solving. Costs one eigendecomposition.

    Attributes (after fit)
    ----------------------
    alpha_ : dual coefficients, one per training point
    rho_ : decision offset
    support_ : indices with alpha > 0
    kernel_provenance_ : Provenance copied from the training KernelMatrix
    """

    def __init__(self, nu: float = 0.1, tol: float = 1e-6,
                 max_iter: int = 100_000, check_psd: bool = True):
        self.nu = nu
        self.tol = tol
        self.max_iter = max_iter
        self.check_psd = check_psd

    def fit(self, K, y=None):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        provenance = K.provenance if isinstance(K, KernelMatrix) else None
        if isinstance(K, KernelMatrix):
            if K.kind is not KernelKind.TRAIN_SYMMETRIC:
                raise ValueError("fit requires a train-symmetric kernel matrix")
            values = K.values
        else:
            values = np.asarray(K, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"training kernel must be square, got {values.shape}")
        n = values.shape[0]
        if n < 2:
            raise ValueError(f"need at least 2 training points, got {n}")
        if not np.allclose(values, values.T, atol=1e-8):
            raise ValueError("training kernel is not symmetric")
        if self.check_psd:
            eigvals = np.linalg.eigvalsh(values)
            floor = -1e-8 * max(1.0, float(eigvals[-1]))
            if eigvals[0] < floor:
                raise ValueError(
                    f"training kernel is not PSD: min eigenvalue {eigvals[0]:.3e}"
                )
        alpha, gradient, self.n_iter_ = _solve_dual(
            values, self.nu, self.tol, self.max_iter
        )
        bound = 1.0 / (self.nu * n)
        self.alpha_ = alpha
        self.rho_ = _offset(alpha, gradient, bound)
        self.support_ = np.flatnonzero(alpha > 0.0)
        self.n_samples_ = n
        self.kernel_provenance_ = provenance
        self.objective_ = float(0.5 * alpha @ values @ alpha)
        return self

    def _check_fitted(self):
        if not hasattr(self, "alpha_"):
            raise NotFittedError("PrecomputedOneClassSVM is not fitted")

    def _test_values(self, K_test) -> np.ndarray:
        self._check_fitted()
        values = K_test.values if isinstance(K_test, KernelMatrix) else (
            np.asarray(K_test, dtype=np.float64)
        )
        if values.ndim != 2 or values.shape[1] != self.n_samples_:
            raise ValueError(
                f"test kernel must have {self.n_samples_} columns, "
                f"got shape {values.shape}"
            )
        return values

    def decision_function(self, K_test) -> np.ndarray:
        """Signed scores sum_r alpha_r * K[s, r] - rho, one per test row."""
        values = self._test_values(K_test)
        return values @ self.alpha_ - self.rho_

    def predict(self, K_test) -> np.ndarray:
        """+1 (normal) where the score is >= 0, -1 (anomaly) otherwise."""
        scores = self.decision_function(K_test)
        return np.where(scores >= 0.0, 1, -1)


def save_model(model: PrecomputedOneClassSVM, path) -> None:
    """Lossless binary dump; see the module docstring for the layout."""
    model._check_fitted()
    if model.kernel_provenance_ is None:
        raise ValueError(
            "cannot serialize a model fitted without kernel provenance"
        )
    blob = _MAGIC
    blob += struct.pack("<B", _VERSION)
    blob += struct.pack("<Q", model.n_samples_)
    blob += struct.pack("<dd", model.nu, model.rho_)
    blob += np.ascontiguousarray(model.alpha_, dtype="<f8").tobytes()
    blob += pack_provenance(model.kernel_provenance_)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path) -> PrecomputedOneClassSVM:
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data, ModelFormatError)
    if reader.take(4) != _MAGIC:
        raise ModelFormatError("bad magic: not a model file")
    (version,) = struct.unpack("<B", reader.take(1))
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    (n,) = struct.unpack("<Q", reader.take(8))
    nu, rho = struct.unpack("<dd", reader.take(16))
    alpha = np.frombuffer(reader.take(8 * n), dtype="<f8").copy()
    provenance = unpack_provenance(reader, ModelFormatError)
    if reader.remaining():
        raise ModelFormatError(f"{reader.remaining()} trailing bytes")
    model = PrecomputedOneClassSVM(nu=nu)
    model.alpha_ = alpha
    model.rho_ = rho
    model.support_ = np.flatnonzero(alpha > 0.0)
    model.n_samples_ = int(n)
    model.kernel_provenance_ = provenance
    return model
