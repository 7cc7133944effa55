"""Sampling from N(0, J^-1), restricted sample covariances, KL oracles.

Sampling factors J once (dense Cholesky up to ``DENSE_LIMIT`` vertices,
fill-reducing sparse LDL^T above) and transforms per-row white noise, so
each sample row is an exact draw.  Row noise comes from a substream keyed
by (seed, row), which makes the draw deterministic and embarrassingly
parallel over rows.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve_triangular

from .errors import NotPositiveDefiniteError
from .graphgen import PrecisionModel

DENSE_LIMIT = 4000
_MAGIC = b"GREDSMP1"

MatrixLike = Union[np.ndarray, sparse.spmatrix, PrecisionModel]


def _as_matrix(J: MatrixLike):
    if isinstance(J, PrecisionModel):
        return J.matrix
    return J


class _Factor:
    """Holds a symmetric factorization J = M M^T and white-noise transforms."""

    def __init__(self, J):
        J = _as_matrix(J)
        self.p = J.shape[0]
        if self.p <= DENSE_LIMIT:
            dense = J.toarray() if sparse.issparse(J) else np.asarray(J, dtype=float)
            try:
                self._chol = sla.cholesky(dense, lower=True)
            except sla.LinAlgError as exc:
                raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc
            self._mode = "dense"
        else:
            Jc = sparse.csc_matrix(J)
            try:
                lu = splu(Jc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                          options=dict(SymmetricMode=True))
            except RuntimeError as exc:
                raise NotPositiveDefiniteError(f"sparse factorization failed: {exc}") from exc
            if not np.array_equal(lu.perm_r, lu.perm_c):
                raise NotPositiveDefiniteError(
                    "symmetric-mode factorization produced unequal permutations")
            diag = lu.U.diagonal()
            if np.any(diag <= 0):
                raise NotPositiveDefiniteError("matrix is not positive definite")
            self._perm = lu.perm_c
            self._sqrt_d = np.sqrt(diag)
            self._lt = sparse.csr_matrix(lu.L.T)
            self._mode = "sparse"

    def whiten_to_sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard-normal columns z (p, m) to samples of N(0, J^-1)."""
        if self._mode == "dense":
            return sla.solve_triangular(self._chol.T, z, lower=False)
        # J = Q L D L^T Q^T with Q the inverse row/col permutation, so a
        # sample is x = Q L^-T D^-1/2 z.
        y = spsolve_triangular(self._lt, z / self._sqrt_d[:, None], lower=False)
        return y[self._perm]


@dataclass
class SampleMatrix:
    """n x p matrix of i.i.d. draws with the generating seed."""

    data: np.ndarray
    seed: int
    _mean_squares: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def mean_squares(self) -> np.ndarray:
        """Per-vertex mean of squared samples; trace contributions."""
        if self._mean_squares is None:
            self._mean_squares = np.einsum("ij,ij->j", self.data, self.data) / self.n
        return self._mean_squares

    def trace_over(self, subset) -> float:
        idx = np.asarray(subset, dtype=np.int64)
        return float(self.mean_squares[idx].sum())

    def save(self, path) -> None:
        """Binary layout: magic, little-endian u64 n, u64 p, i64 seed, doubles row-major."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQq", self.n, self.p, self.seed))
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SampleMatrix":
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"not a sample-matrix file: bad magic {magic!r}")
            n, p, seed = struct.unpack("<QQq", fh.read(24))
            data = np.frombuffer(fh.read(8 * n * p), dtype="<f8").reshape(n, p).copy()
        return cls(data=data, seed=seed)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.data, delimiter=",")


@dataclass
class SampleMoments:
    """Streaming reduction of a sample to per-vertex mean squares.

    Supports the same ``trace_over`` protocol as :class:`SampleMatrix`
    while never holding more than one row batch, which is what the
    detection path needs at large p * n.
    """

    mean_squares: np.ndarray
    n: int
    seed: int

    @property
    def p(self) -> int:
        return len(self.mean_squares)

    def trace_over(self, subset) -> float:
        idx = np.asarray(subset, dtype=np.int64)
        return float(self.mean_squares[idx].sum())


def _row_noise(seed: int, start: int, count: int, p: int) -> np.ndarray:
    """White noise for rows [start, start+count), one substream per row."""
    out = np.empty((count, p))
    for r in range(count):
        out[r] = np.random.default_rng((seed, start + r)).standard_normal(p)
    return out


def sample(precision: MatrixLike, n: int, seed: int) -> SampleMatrix:
    """Draw n i.i.d. rows from N(0, J^-1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    factor = _Factor(precision)
    z = _row_noise(seed, 0, n, factor.p)
    data = factor.whiten_to_sample(z.T).T
    return SampleMatrix(data=np.ascontiguousarray(data), seed=seed)


def sample_moments(precision: MatrixLike, n: int, seed: int,
                   batch_rows: int = 512) -> SampleMoments:
    """Accumulate mean squares of n draws without materializing them.

    Produces exactly the same draws as :func:`sample` (same per-row
    substreams), reduced on the fly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    factor = _Factor(precision)
    acc = np.zeros(factor.p)
    done = 0
    while done < n:
        m = min(batch_rows, n - done)
        z = _row_noise(seed, done, m, factor.p)
        x = factor.whiten_to_sample(z.T)
        acc += np.einsum("ij,ij->i", x, x)
        done += m
    return SampleMoments(mean_squares=acc / n, n=n, seed=seed)


def restricted_trace_covariance(samples, subset) -> float:
    """Trace of the sample covariance restricted to ``subset``.

    Equals (1/n) * sum_i ||x_{A,i}||^2, computed in O(n * |A|) without
    materializing the restricted matrix.
    """
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    return samples.trace_over(idx)


def _dense_pd(J: MatrixLike, name: str) -> np.ndarray:
    M = _as_matrix(J)
    dense = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)
    try:
        sla.cholesky(dense)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
    return dense


def sym_kl(J1: MatrixLike, J2: MatrixLike) -> float:
    """Symmetrized KL divergence between N(0, J1^-1) and N(0, J2^-1).

    Evaluates (1/2) Tr{(J1 - J2)(J2^-1 - J1^-1)}, which is exact for
    centered Gaussians; always nonnegative, zero iff J1 == J2.
    """
    A = _dense_pd(J1, "J1")
    B = _dense_pd(J2, "J2")
    if A.shape != B.shape:
        raise ValueError(f"size mismatch: {A.shape} vs {B.shape}")
    diff = A - B
    return 0.5 * float(np.trace(diff @ (np.linalg.inv(B) - np.linalg.inv(A))))


def sym_kl_boundary_bound(theta_s: float, theta_t: float, d: int, theta_bar: float,
                          eta: float, delta_area: float) -> float:
    """Upper bound on the symmetrized KL of a boundary deformation.

    For two models differing by moving area ``delta_area`` between regions
    with couplings theta_s, theta_t, the divergence is at most
    (1/2) * ((theta_s - theta_t)/(1 - d*theta_bar))^2 * eta*d*delta_area/2.
    """
    if d * theta_bar >= 1.0:
        raise ValueError(f"d*theta_bar = {d * theta_bar} must be < 1")
    if delta_area < 0 or eta < 0:
        raise ValueError("eta and delta_area must be nonnegative")
    ratio = (theta_s - theta_t) / (1.0 - d * theta_bar)
    return 0.5 * ratio * ratio * eta * d * delta_area / 2.0
