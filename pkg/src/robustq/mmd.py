"""Maximum mean discrepancy between feature batches, Gaussian kernel.

The squared MMD between sample sets S (m rows) and T (n rows) uses the
biased V-statistic

    mmd2 = mean(K_SS) + mean(K_TT) - 2 * mean(K_ST)

with the Gaussian kernel k(a, b) = exp(-||a - b||^2 / (2 * sigma)).  Note the
normalisation: 2*sigma, not 2*sigma^2, matching the bandwidth convention of
the median heuristic below (sigma is half the median *squared* distance, so
the kernel at the median pair is exactly exp(-1)).

The cross term is computed as (sum K_ST + sum K_TS) / (2mn) * 2, i.e. both
cross blocks are evaluated and averaged.  They are equal mathematically, and
evaluating both makes mmd2(S, T) == mmd2(T, S) bitwise and mmd2(X, X) == 0
exactly, two invariants the rest of the package leans on.

The bandwidth is a constant with respect to differentiation: gradients flow
through the distances only.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist

from . import engine
from .engine import Tensor

BANDWIDTH_FLOOR = 1e-3


class MMDError(ValueError):
    pass


def median_bandwidth(features, floor=BANDWIDTH_FLOOR):
    """Median heuristic: half the median pairwise squared distance.

    ``features`` is one [N, F] array (typically the pooled union of the two
    sample sets).  The median runs over the N*(N-1)/2 unordered distinct
    pairs.  Result is floored at ``floor`` so a collapsed batch cannot zero
    the kernel scale.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise MMDError(f"median_bandwidth: need at least 2 rows, got shape {x.shape}")
    d2 = pdist(x, "sqeuclidean")
    return float(max(np.median(d2) / 2.0, floor))


def gaussian_kernel_matrix(tape, a, b, sigma):
    """K[i, j] = exp(-||a_i - b_j||^2 / (2 sigma)) as a recorded op chain."""
    if sigma <= 0:
        raise MMDError(f"sigma must be positive, got {sigma}")
    d2 = engine.pairwise_sq_dist(tape, a, b)
    return engine.exp(tape, engine.mul_scalar(tape, d2, -0.5 / sigma))


def mmd_squared(tape, s, t, sigma=None):
    """Biased squared MMD between feature batches ``s`` [m,F] and ``t`` [n,F].

    sigma=None applies the median heuristic over the stacked rows of both
    sets (treated as a constant under differentiation).  Returns a scalar
    Tensor; gradients flow to both inputs when they require grad.
    """
    s = s if isinstance(s, Tensor) else Tensor(s)
    t = t if isinstance(t, Tensor) else Tensor(t)
    if s.data.ndim != 2 or t.data.ndim != 2 or s.data.shape[1] != t.data.shape[1]:
        raise MMDError(
            f"mmd_squared: need [m,F] and [n,F], got {s.data.shape} and {t.data.shape}")
    m, n = s.data.shape[0], t.data.shape[0]
    if m == 0 or n == 0:
        raise MMDError("mmd_squared: empty sample set")
    if sigma is None:
        sigma = median_bandwidth(np.concatenate([s.data, t.data], axis=0))
    k_ss = gaussian_kernel_matrix(tape, s, s, sigma)
    k_tt = gaussian_kernel_matrix(tape, t, t, sigma)
    k_st = gaussian_kernel_matrix(tape, s, t, sigma)
    k_ts = gaussian_kernel_matrix(tape, t, s, sigma)
    term_s = engine.mul_scalar(tape, engine.tsum(tape, k_ss), 1.0 / (m * m))
    term_t = engine.mul_scalar(tape, engine.tsum(tape, k_tt), 1.0 / (n * n))
    cross = engine.mul_scalar(
        tape,
        engine.add(tape, engine.tsum(tape, k_st), engine.tsum(tape, k_ts)),
        -1.0 / (m * n),
    )
    return engine.add(tape, engine.add(tape, term_s, term_t), cross)


def mmd_distance(features_a, features_b, sigma=None):
    """Plain-value d = sqrt(max(mmd2, 0)) between two feature arrays."""
    v = float(mmd_squared(None, np.asarray(features_a), np.asarray(features_b), sigma).data)
    return float(np.sqrt(max(v, 0.0)))
