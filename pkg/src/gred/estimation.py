"""Local coupling estimation from restricted sample traces.

The squared coupling inside a cell with k vertices is estimated as
(Tr(Sigma_hat_A) - k) / (d k); the exact-population counterpart q(theta)
and the tail bound on the estimate are provided as oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from .errors import EmptyCellError
from .gaussian import MatrixLike, _as_matrix, restricted_trace_covariance


@dataclass(frozen=True)
class CellEstimate:
    """Coupling estimate for one lattice cell."""

    cell: Optional[tuple]
    k: int
    theta_hat: float
    raw_theta_sq: float


def estimate_theta(samples, cell_vertices, d: int, floor: Optional[float] = None,
                   cell: Optional[tuple] = None) -> CellEstimate:
    """Estimate the coupling from the vertices inside one cell.

    ``raw_theta_sq`` may come out negative in small samples at weak
    coupling; it is clamped at zero before the square root, and at
    ``floor`` when one is supplied.
    """
    idx = np.asarray(cell_vertices, dtype=np.int64)
    if idx.size == 0:
        raise EmptyCellError("cell contains no vertices")
    if d < 1:
        raise ValueError("d must be >= 1")
    k = int(idx.size)
    raw = (restricted_trace_covariance(samples, idx) - k) / (d * k)
    theta = math.sqrt(max(raw, 0.0))
    if floor is not None:
        theta = max(theta, float(floor))
    return CellEstimate(cell=cell, k=k, theta_hat=theta, raw_theta_sq=raw)


def q_ratio_oracle(J: MatrixLike, subset, theta: float, d: int) -> float:
    """Exact population ratio q(theta) = (Tr(Sigma_A) - k) / (d k theta^2).

    Sigma_A is the covariance restricted to ``subset``, obtained from the
    full inverse of J (the Schur complement (J_A - Omega)^-1 equals that
    restriction exactly).
    """
    if theta == 0:
        raise ValueError("q(theta) is undefined at theta = 0")
    M = _as_matrix(J)
    dense = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    try:
        sigma = np.linalg.inv(dense)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix is singular") from exc
    k = idx.size
    tr = float(np.trace(sigma[np.ix_(idx, idx)]))
    return (tr - k) / (d * k * theta * theta)


def concentration_bound(n: int, k: int, d: int, theta_under: float,
                        theta_bar: float, t: float) -> float:
    """Tail bound P[|theta_hat - theta*| >= t] <= 2 exp(-(2nkd theta_under)^2 (1 - d theta_bar) t^2).

    Capped at 1.  Requires d * theta_bar < 1 and positive parameters.
    """
    if d * theta_bar >= 1.0:
        raise ValueError(f"d*theta_bar = {d * theta_bar} must be < 1")
    for name, val in (("n", n), ("k", k), ("d", d), ("theta_under", theta_under),
                      ("theta_bar", theta_bar)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    if t < 0:
        raise ValueError("t must be >= 0")
    expo = (2.0 * n * k * d * theta_under) ** 2 * (1.0 - d * theta_bar) * t * t
    return min(1.0, 2.0 * math.exp(-expo))
