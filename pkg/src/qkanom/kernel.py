"""Gram-matrix construction, classical comparison kernels, caching, 2D projection.

Train matrices are filled on the upper triangle only and mirrored, so
symmetry is structural (exact). The fill is embarrassingly parallel over
rows: every entry is a pure function of its (row, col) pair, the sampled
fidelity kernel deriving its per-pair RNG seed from (base seed, matrix tag,
row, col), so serial and parallel fills agree bitwise.

Cache file layout (little-endian): magic ``QKRN``, version u8 (=1), kind u8,
provenance u8 + payload (shots u64 + seed u64 when sampled; gamma f64 when
RBF; absent otherwise), rows u64, cols u64, then rows*cols f64 row-major.
"""

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .feature_map import DenseAngleFeatureMap

#: Fidelity values below this are a simulator bug, not rounding.
NEGATIVE_TOLERANCE = 1e-12

_MAGIC = b"QKRN"
_VERSION = 1


class CacheFormatError(ValueError):
    """Raised when a kernel cache file is corrupt, truncated or mismatched."""


class KernelKind(str, Enum):
    TRAIN_SYMMETRIC = "train-symmetric"
    TEST_RECTANGULAR = "test-rectangular"


class ProvenanceKind(str, Enum):
    QUANTUM_EXACT = "quantum-exact"
    QUANTUM_SAMPLED = "quantum-sampled"
    CLASSICAL_LINEAR = "classical-linear"
    CLASSICAL_RBF = "classical-rbf"


#: Provenances whose values live in [0, 1] with a unit diagonal.
_UNIT_RANGE = (ProvenanceKind.QUANTUM_EXACT, ProvenanceKind.QUANTUM_SAMPLED,
               ProvenanceKind.CLASSICAL_RBF)


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    shots: int | None = None
    seed: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind is ProvenanceKind.QUANTUM_SAMPLED:
            if self.shots is None or self.seed is None:
                raise ValueError("sampled provenance requires shots and seed")
        elif self.kind is ProvenanceKind.CLASSICAL_RBF:
            if self.gamma is None:
                raise ValueError("rbf provenance requires gamma")


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    kind: KernelKind
    provenance: Provenance | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"kernel values must be 2-D, got {self.values.ndim}-D")
        if self.kind is KernelKind.TRAIN_SYMMETRIC and self.rows != self.cols:
            raise ValueError(f"train kernel must be square, got {self.values.shape}")


@dataclass(frozen=True)
class Projection2D:
    """2D coordinates of projected points with their class tags."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels lengths differ")


def pair_seed(base_seed: int, tag: int, i: int, j: int) -> int:
    """Stable per-pair RNG seed; identical across platforms and schedulings."""
    seq = np.random.SeedSequence([int(base_seed), int(tag), int(i), int(j)])
    return int(seq.generate_state(1, np.uint64)[0])


class KernelFunction:
    """A pairwise kernel; subclasses set ``provenance`` and implement ``__call__``.

    ``pair_values`` evaluates one row of a Gram matrix; ``keys`` carries the
    (matrix tag, row, col) identity of each pair, ignored by deterministic
    kernels and used by the sampled kernel for seed derivation.
    """

    provenance: Provenance | None = None

    def __call__(self, x, y) -> float:
        raise NotImplementedError

    def pair_values(self, x, Y, keys) -> np.ndarray:
        return np.fromiter((self(x, y) for y in Y), dtype=np.float64, count=len(Y))


class _CallableKernel(KernelFunction):
    def __init__(self, fn, provenance: Provenance | None = None):
        self._fn = fn
        self.provenance = provenance

    def __call__(self, x, y) -> float:
        return float(self._fn(x, y))


class FidelityKernel(KernelFunction):
    """Exact quantum fidelity kernel; caches encoded statevectors per input row."""

    provenance = Provenance(ProvenanceKind.QUANTUM_EXACT)

    def __init__(self, feature_map: DenseAngleFeatureMap):
        self.feature_map = feature_map
        self._states: dict[bytes, np.ndarray] = {}

    def _state(self, x) -> np.ndarray:
        key = np.asarray(x, dtype=np.float64).tobytes()
        cached = self._states.get(key)
        if cached is None:
            cached = self.feature_map.encode(x).state.amplitudes
            self._states[key] = cached
        return cached

    def __call__(self, x, y) -> float:
        value = abs(np.vdot(self._state(x), self._state(y))) ** 2
        return min(value, 1.0)

    def pair_values(self, x, Y, keys) -> np.ndarray:
        sx = self._state(x)
        out = np.empty(len(Y))
        for t in range(len(Y)):
            value = abs(np.vdot(sx, self._state(Y[t]))) ** 2
            out[t] = value if value < 1.0 else 1.0
        return out

    def __getstate__(self):
        # Workers rebuild their own statevector cache.
        return {"feature_map": self.feature_map}

    def __setstate__(self, state):
        self.feature_map = state["feature_map"]
        self._states = {}


class SampledFidelityKernel(KernelFunction):
    """Finite-shot fidelity kernel with per-pair seeds derived from the base seed."""

    def __init__(self, feature_map: DenseAngleFeatureMap, shots: int, seed: int):
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        self.feature_map = feature_map
        self.shots = int(shots)
        self.seed = int(seed)
        self.provenance = Provenance(
            ProvenanceKind.QUANTUM_SAMPLED, shots=self.shots, seed=self.seed
        )

    def __call__(self, x, y) -> float:
        return self.feature_map.fidelity_sampled(x, y, self.shots, self.seed)

    def pair_values(self, x, Y, keys) -> np.ndarray:
        out = np.empty(len(Y))
        for t, (tag, i, j) in enumerate(keys):
            out[t] = self.feature_map.fidelity_sampled(
                x, Y[t], self.shots, pair_seed(self.seed, tag, i, j)
            )
        return out


class LinearKernel(KernelFunction):
    provenance = Provenance(ProvenanceKind.CLASSICAL_LINEAR)

    def __call__(self, x, y) -> float:
        return float(np.dot(x, y))

    def pair_values(self, x, Y, keys) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) @ np.asarray(x, dtype=np.float64)


class RbfKernel(KernelFunction):
    def __init__(self, gamma: float):
        if not gamma > 0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        self.gamma = float(gamma)
        self.provenance = Provenance(ProvenanceKind.CLASSICAL_RBF, gamma=self.gamma)

    def __call__(self, x, y) -> float:
        diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return float(np.exp(-self.gamma * np.dot(diff, diff)))

    def pair_values(self, x, Y, keys) -> np.ndarray:
        diff = np.asarray(Y, dtype=np.float64) - np.asarray(x, dtype=np.float64)
        return np.exp(-self.gamma * (diff * diff).sum(axis=1))


def _as_kernel(kernel_fn) -> KernelFunction:
    if isinstance(kernel_fn, KernelFunction):
        return kernel_fn
    return _CallableKernel(kernel_fn)


def _as_features(X, name: str) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-D matrix, got shape {X.shape}")
    return X


_TAG_TRAIN, _TAG_TEST = 0, 1

# Per-process worker state for the parallel fill.
_WORKER: dict = {}


def _worker_init(kernel_fn, X_left, X_right, tag, upper):
    _WORKER["args"] = (kernel_fn, X_left, X_right, tag, upper)


def _row_task(i):
    return i, _fill_row(*_WORKER["args"], i)


def _fill_row(kernel_fn, X_left, X_right, tag, upper, i) -> np.ndarray:
    j0 = i if upper else 0
    Y = X_right[j0:]
    keys = [(tag, i, j0 + t) for t in range(len(Y))]
    return kernel_fn.pair_values(X_left[i], Y, keys)


def _fill_rows(kernel_fn, X_left, X_right, tag, upper, workers):
    indices = range(len(X_left))
    if workers <= 1:
        for i in indices:
            yield i, _fill_row(kernel_fn, X_left, X_right, tag, upper, i)
        return
    chunk = max(1, len(X_left) // (8 * workers))
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_worker_init,
        initargs=(kernel_fn, X_left, X_right, tag, upper),
    ) as pool:
        yield from pool.map(_row_task, indices, chunksize=chunk)


def _check_entries(K: np.ndarray, provenance: Provenance | None) -> None:
    if not np.isfinite(K).all():
        i, j = np.argwhere(~np.isfinite(K))[0]
        raise ValueError(f"non-finite kernel value {K[i, j]} at pair ({i}, {j})")
    if provenance is not None and provenance.kind in _UNIT_RANGE:
        if K.min() < -NEGATIVE_TOLERANCE:
            i, j = np.argwhere(K < -NEGATIVE_TOLERANCE)[0]
            raise ValueError(
                f"kernel value {K[i, j]} at pair ({i}, {j}) below {-NEGATIVE_TOLERANCE}"
            )
        np.clip(K, 0.0, None, out=K)


def gram_train(kernel_fn, X_train, workers: int = 1) -> KernelMatrix:
    """Symmetric train Gram matrix; upper triangle evaluated, lower mirrored."""
    X = _as_features(X_train, "X_train")
    kf = _as_kernel(kernel_fn)
    n = X.shape[0]
    K = np.zeros((n, n))
    for i, vals in _fill_rows(kf, X, X, _TAG_TRAIN, True, workers):
        K[i, i:] = vals
    lower = np.tril_indices(n, -1)
    K[lower] = K.T[lower]
    _check_entries(K, kf.provenance)
    return KernelMatrix(values=K, kind=KernelKind.TRAIN_SYMMETRIC,
                        provenance=kf.provenance)


def gram_test(kernel_fn, X_test, X_train, workers: int = 1) -> KernelMatrix:
    """Rectangular test-vs-train Gram matrix, K[s][j] = k(test_s, train_j)."""
    Xt = _as_features(X_test, "X_test")
    Xr = _as_features(X_train, "X_train")
    if Xt.shape[1] != Xr.shape[1]:
        raise ValueError(
            f"feature dimensions differ: test {Xt.shape[1]} vs train {Xr.shape[1]}"
        )
    kf = _as_kernel(kernel_fn)
    K = np.zeros((Xt.shape[0], Xr.shape[0]))
    for i, vals in _fill_rows(kf, Xt, Xr, _TAG_TEST, False, workers):
        K[i] = vals
    _check_entries(K, kf.provenance)
    return KernelMatrix(values=K, kind=KernelKind.TEST_RECTANGULAR,
                        provenance=kf.provenance)


def psd_clip(matrix: KernelMatrix) -> KernelMatrix:
    """Project a symmetric kernel matrix onto the PSD cone.

    Finite-shot fidelity estimates are unbiased per entry but the assembled
    matrix is generally indefinite; clipping negative eigenvalues restores
    the SVM dual's convexity. Exact kernels pass through unchanged.
    """
    if matrix.kind is not KernelKind.TRAIN_SYMMETRIC:
        raise ValueError("psd_clip applies to train-symmetric matrices only")
    eigvals, eigvecs = np.linalg.eigh(matrix.values)
    if eigvals[0] >= 0:
        return matrix
    repaired = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
    repaired = (repaired + repaired.T) / 2.0
    return KernelMatrix(values=repaired, kind=matrix.kind,
                        provenance=matrix.provenance)


def kernel_pca_2d(K_test, K_train, labels) -> Projection2D:
    """Project test rows onto the top-2 kernel principal components of the train Gram.

    The train matrix is double-centered, its top two eigenpairs extracted,
    and centered test rows are projected as ``K_c v_k / sqrt(lambda_k)``.
    Each eigenvector's sign is fixed so its largest-magnitude loading is
    positive, making the output deterministic.
    """
    K = K_train.values if isinstance(K_train, KernelMatrix) else np.asarray(K_train, float)
    T = K_test.values if isinstance(K_test, KernelMatrix) else np.asarray(K_test, float)
    if isinstance(K_train, KernelMatrix) and K_train.kind is not KernelKind.TRAIN_SYMMETRIC:
        raise ValueError("K_train must be a train-symmetric kernel matrix")
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"train kernel must be square, got {K.shape}")
    if T.shape[1] != K.shape[0]:
        raise ValueError(
            f"test kernel has {T.shape[1]} columns, train kernel has {K.shape[0]} rows"
        )
    labels = np.asarray(labels)
    if len(labels) != T.shape[0]:
        raise ValueError("labels length must equal the number of test rows")

    n = K.shape[0]
    if n < 2:
        raise ValueError("fewer than 2 positive eigenvalues in the centered train kernel")
    row_means = K.mean(axis=0)
    total_mean = K.mean()
    K_centered = K - row_means[None, :] - row_means[:, None] + total_mean

    eigvals, eigvecs = np.linalg.eigh(K_centered)
    top_vals = eigvals[[-1, -2]]
    top_vecs = eigvecs[:, [-1, -2]]
    positive_floor = max(abs(eigvals[-1]), 1.0) * 1e-12
    if top_vals[1] <= positive_floor:
        raise ValueError(
            "fewer than 2 positive eigenvalues in the centered train kernel"
        )
    for k in range(2):
        v = top_vecs[:, k]
        if v[np.argmax(np.abs(v))] < 0:
            top_vecs[:, k] = -v

    T_centered = T - T.mean(axis=1, keepdims=True) - row_means[None, :] + total_mean
    points = T_centered @ top_vecs / np.sqrt(top_vals)
    return Projection2D(points=points, labels=labels)


_KIND_CODES = {KernelKind.TRAIN_SYMMETRIC: 0, KernelKind.TEST_RECTANGULAR: 1}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_PROV_CODES = {
    ProvenanceKind.QUANTUM_EXACT: 0,
    ProvenanceKind.QUANTUM_SAMPLED: 1,
    ProvenanceKind.CLASSICAL_LINEAR: 2,
    ProvenanceKind.CLASSICAL_RBF: 3,
}
_PROV_FROM_CODE = {v: k for k, v in _PROV_CODES.items()}


def pack_provenance(provenance: Provenance) -> bytes:
    blob = struct.pack("<B", _PROV_CODES[provenance.kind])
    if provenance.kind is ProvenanceKind.QUANTUM_SAMPLED:
        blob += struct.pack("<QQ", provenance.shots, provenance.seed)
    elif provenance.kind is ProvenanceKind.CLASSICAL_RBF:
        blob += struct.pack("<d", provenance.gamma)
    return blob


class _Reader:
    def __init__(self, data: bytes, error_cls):
        self._data = data
        self._offset = 0
        self._error_cls = error_cls

    def take(self, count: int) -> bytes:
        if self._offset + count > len(self._data):
            raise self._error_cls("file truncated")
        chunk = self._data[self._offset:self._offset + count]
        self._offset += count
        return chunk

    def remaining(self) -> int:
        return len(self._data) - self._offset


def unpack_provenance(reader: _Reader, error_cls) -> Provenance:
    (code,) = struct.unpack("<B", reader.take(1))
    if code not in _PROV_FROM_CODE:
        raise error_cls(f"unknown provenance code {code}")
    kind = _PROV_FROM_CODE[code]
    if kind is ProvenanceKind.QUANTUM_SAMPLED:
        shots, seed = struct.unpack("<QQ", reader.take(16))
        return Provenance(kind, shots=shots, seed=seed)
    if kind is ProvenanceKind.CLASSICAL_RBF:
        (gamma,) = struct.unpack("<d", reader.take(8))
        return Provenance(kind, gamma=gamma)
    return Provenance(kind)


def save_kernel(matrix: KernelMatrix, path) -> None:
    """Lossless binary dump; see the module docstring for the layout."""
    if matrix.provenance is None:
        raise ValueError("cannot serialize a kernel matrix without provenance")
    blob = _MAGIC
    blob += struct.pack("<BB", _VERSION, _KIND_CODES[matrix.kind])
    blob += pack_provenance(matrix.provenance)
    blob += struct.pack("<QQ", matrix.rows, matrix.cols)
    blob += np.ascontiguousarray(matrix.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_kernel(path) -> KernelMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data, CacheFormatError)
    if reader.take(4) != _MAGIC:
        raise CacheFormatError("bad magic: not a kernel cache file")
    version, kind_code = struct.unpack("<BB", reader.take(2))
    if version != _VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    if kind_code not in _KIND_FROM_CODE:
        raise CacheFormatError(f"unknown kernel kind code {kind_code}")
    kind = _KIND_FROM_CODE[kind_code]
    provenance = unpack_provenance(reader, CacheFormatError)
    rows, cols = struct.unpack("<QQ", reader.take(16))
    expected = rows * cols * 8
    if expected != reader.remaining():
        raise CacheFormatError(
            f"dimension mismatch: header says {rows}x{cols} "
            f"({expected} bytes), {reader.remaining()} bytes present"
        )
    values = np.frombuffer(reader.take(expected), dtype="<f8").reshape(rows, cols)
    return KernelMatrix(values=values.copy(), kind=kind, provenance=provenance)
