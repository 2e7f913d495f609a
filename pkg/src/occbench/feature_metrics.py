"""Distribution metrics over precomputed image embeddings (FID, KID, CLIP score).

Features arrive as DOFB files: a 16-byte little-endian header
``b"DOFB" | u32 version=1 | u32 n | u32 d`` followed by ``n * d`` float32
values in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import OccbenchError
from .rng import make_rng

MAGIC = b"DOFB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

COV_EPS = 1e-6
KID_KERNEL = "polynomial(degree=3, gamma=1/d, coef0=1)"


class FeatureFormatError(OccbenchError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    data: np.ndarray  # (n, d)

    def __post_init__(self):
        x = np.asarray(self.data)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise OccbenchError(f"feature matrix must be n x d with n, d >= 1, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise OccbenchError("feature matrix has non-finite entries")
        object.__setattr__(self, "data", x)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class KidReport:
    mmd2: float
    block_std: float
    blocks: int


def write_fvec(features: FeatureSet) -> bytes:
    x = np.ascontiguousarray(features.data, dtype="<f4")
    return _HEADER.pack(MAGIC, VERSION, x.shape[0], x.shape[1]) + x.tobytes()


def read_fvec(data: bytes) -> FeatureSet:
    if len(data) < _HEADER.size:
        raise FeatureFormatError("truncated header")
    magic, version, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"unsupported version {version}")
    if n < 1 or d < 1:
        raise FeatureFormatError(f"invalid shape n={n}, d={d}")
    expected = n * d * 4
    payload = len(data) - _HEADER.size
    if payload < expected:
        raise FeatureFormatError(f"truncated payload: header declares {n}x{d} ({expected} bytes), got {payload}")
    if payload > expected:
        raise FeatureFormatError(f"payload length {payload} exceeds declared {n}x{d} ({expected} bytes)")
    x = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    if not np.all(np.isfinite(x)):
        raise FeatureFormatError("non-finite entries in payload")
    return FeatureSet(x.astype(np.float32))


def load_fvec(path) -> FeatureSet:
    return read_fvec(Path(path).read_bytes())


def save_fvec(features: FeatureSet, path) -> None:
    Path(path).write_bytes(write_fvec(features))


def gaussian_stats(features: FeatureSet) -> GaussianStats:
    x = np.asarray(features.data, dtype=np.float64)
    if x.shape[0] < 2:
        raise OccbenchError("need at least 2 rows to estimate a covariance")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianStats(mean, 0.5 * (cov + cov.T))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, negative eigenvalues clamped to 0."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OccbenchError("psd_sqrt expects a square matrix")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-6:
        raise OccbenchError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def needs_regularization(s1: np.ndarray, s2: np.ndarray, eps: float = COV_EPS) -> bool:
    return bool(min(np.linalg.eigvalsh(s1).min(), np.linalg.eigvalsh(s2).min()) < eps)


def fid(a: GaussianStats, b: GaussianStats, eps: float = COV_EPS) -> float:
    """Frechet distance between two Gaussians.

    The trace of sqrt(S_a S_b) is taken as the trace of sqrt(R S_b R) with
    R = sqrt(S_a); the two agree but the latter stays symmetric. When either
    covariance has an eigenvalue below ``eps`` both receive ``+eps * I``;
    well-conditioned inputs are used as given.
    """
    mu1, mu2 = np.asarray(a.mean, dtype=np.float64), np.asarray(b.mean, dtype=np.float64)
    s1, s2 = np.atleast_2d(a.cov).astype(np.float64), np.atleast_2d(b.cov).astype(np.float64)
    if mu1.shape != mu2.shape or s1.shape != s2.shape:
        raise OccbenchError(f"dimension mismatch: {mu1.shape[0]} vs {mu2.shape[0]}")
    if needs_regularization(s1, s2, eps):
        eye = np.eye(s1.shape[0])
        s1 = s1 + eps * eye
        s2 = s2 + eps * eye
    r1 = psd_sqrt(s1)
    cross = psd_sqrt(r1 @ s2 @ r1)
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross))
    if -1e-6 < value < 0.0:
        value = 0.0
    return value


KERNEL_CHUNK = 2048


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def _kernel_sum(x: np.ndarray, y: np.ndarray) -> float:
    # row chunks keep memory at O(chunk * n) for large feature sets
    return float(sum(_poly_kernel(x[i:i + KERNEL_CHUNK], y).sum() for i in range(0, len(x), KERNEL_CHUNK)))


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    m, n = x.shape[0], y.shape[0]
    d = x.shape[1]
    diag_x = float(((np.einsum("ij,ij->i", x, x) / d + 1.0) ** 3).sum())
    diag_y = float(((np.einsum("ij,ij->i", y, y) / d + 1.0) ** 3).sum())
    sxx = (_kernel_sum(x, x) - diag_x) / (m * (m - 1))
    syy = (_kernel_sum(y, y) - diag_y) / (n * (n - 1))
    return float(sxx + syy - 2.0 * _kernel_sum(x, y) / (m * n))


def kid(a: FeatureSet, b: FeatureSet, blocks: int = 1, seed: int = 0) -> KidReport:
    """Unbiased squared MMD under the cubic polynomial kernel.

    With ``blocks > 1`` both sets are shuffled (seeded) and split into that
    many near-equal chunks; the report carries the mean and standard
    deviation of the per-block estimates.
    """
    x = np.asarray(a.data, dtype=np.float64)
    y = np.asarray(b.data, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise OccbenchError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if blocks < 1:
        raise OccbenchError("blocks must be >= 1")
    if min(len(x), len(y)) < 2 * blocks:
        raise OccbenchError("each block needs at least 2 rows per set")
    if blocks == 1:
        return KidReport(_mmd2_unbiased(x, y), 0.0, 1)
    rng = make_rng(seed)
    xs = np.array_split(x[rng.permutation(len(x))], blocks)
    ys = np.array_split(y[rng.permutation(len(y))], blocks)
    values = np.array([_mmd2_unbiased(xb, yb) for xb, yb in zip(xs, ys)])
    return KidReport(float(values.mean()), float(values.std()), blocks)


def clip_score(a: FeatureSet, b: FeatureSet) -> float:
    """Mean cosine similarity of row-paired embeddings."""
    x = np.asarray(a.data, dtype=np.float64)
    y = np.asarray(b.data, dtype=np.float64)
    if x.shape != y.shape:
        raise OccbenchError(f"paired sets differ in shape: {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    if np.any(nx == 0) or np.any(ny == 0):
        raise OccbenchError("zero-norm embedding row")
    cos = np.einsum("ij,ij->i", x, y) / (nx * ny)
    return float(np.mean(np.clip(cos, -1.0, 1.0)))
