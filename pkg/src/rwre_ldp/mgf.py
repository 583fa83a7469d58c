"""Quenched moment generating functions of the walk endpoint.

Computes (1/n) log E^{P_omega}[exp<lambda, X_n>] three ways: exact dynamic
programming over the reachable box, exhaustive path enumeration (the oracle
for small n), and Monte Carlo with counter-based substreams.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import TooLarge
from .lattice_env import step_vectors, tilt_values

EXACT_DP = "exact_dp"
BRUTE_FORCE = "brute_force"
MONTE_CARLO = "monte_carlo"

_MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class MgfEstimate:
    """Per-step log MGF value with method provenance."""

    value: float
    n: int
    method: str
    samples: int = None
    stderr: float = None


def _cube_log_probs(env, n):
    """log p(x, e) on the cube [-n, n]^d, one array per direction.

    Entries outside a boxed environment's ball are -inf; the DP never pulls
    them into the origin value because they are unreachable in the remaining
    steps.
    """
    d = env.dimension
    side = 2 * n + 1
    coords = np.indices((side,) * d).reshape(d, -1).T - n
    idx = env.site_indices(coords)
    valid = idx >= 0
    out = np.full((2 * d, side ** d), -np.inf)
    out[:, valid] = env.log_probs[idx[valid]].T
    return out.reshape((2 * d,) + (side,) * d)


def _shift_from_direction(arr, k, d):
    """Values of arr at x + e_k, padding with -inf at the cube boundary."""
    axis = k // 2
    sign = 1 if k % 2 == 0 else -1
    shifted = np.full_like(arr, -np.inf)
    src = [slice(None)] * d
    dst = [slice(None)] * d
    if sign == 1:
        src[axis] = slice(1, None)
        dst[axis] = slice(None, -1)
    else:
        src[axis] = slice(None, -1)
        dst[axis] = slice(1, None)
    shifted[tuple(dst)] = arr[tuple(src)]
    return shifted


def _dp_log_value(env, n, log_edge_weights):
    """log (L^n 1)(0) for (L u)(x) = sum_e w(x,e) u(x+e), w given in logs."""
    d = env.dimension
    logv = np.zeros(log_edge_weights.shape[1:])
    for _ in range(n):
        terms = np.stack(
            [
                log_edge_weights[k] + _shift_from_direction(logv, k, d)
                for k in range(2 * d)
            ]
        )
        logv = logsumexp(terms, axis=0)
    center = (n,) * d
    return float(logv[center])


def exact_mgf(env, lam, n):
    """Exact (1/n) log E^{P_omega}[exp<lambda, X_n>] by log-space DP."""
    if n < 1:
        raise ValueError("n must be >= 1")
    env.require_radius(n)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tilts = tilt_values(lam)
    logw = _cube_log_probs(env, n) + tilts.reshape((-1,) + (1,) * env.dimension)
    return MgfEstimate(value=_dp_log_value(env, n, logw) / n, n=n, method=EXACT_DP)


def brute_force_mgf(env, lam, n):
    """Oracle: enumerate all (2d)^n paths and sum probability * tilt weight."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = env.dimension
    limit = 12 if d == 1 else 8
    if n > limit or (2 * d) ** n > 1 << 18:
        raise TooLarge(f"path enumeration capped at n <= {limit} in d={d}")
    env.require_radius(n)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    steps = step_vectors(d)
    tilts = tilt_values(lam)

    n_paths = (2 * d) ** n
    idx = np.arange(n_paths)
    digits = np.empty((n_paths, n), dtype=np.int64)
    for j in range(n):
        digits[:, j] = (idx // (2 * d) ** j) % (2 * d)

    pos = np.zeros((n_paths, d), dtype=np.int64)
    log_weight = np.zeros(n_paths)
    for j in range(n):
        rows = env.log_probs[env.site_indices(pos)]
        log_weight += rows[np.arange(n_paths), digits[:, j]] + tilts[digits[:, j]]
        pos = pos + steps[digits[:, j]]
    return MgfEstimate(value=float(logsumexp(log_weight)) / n, n=n,
                       method=BRUTE_FORCE)


def simulate_endpoints(env, n, samples, seed, chunk=_MC_CHUNK):
    """Endpoints of `samples` quenched walks of length n started at 0.

    Uses a Philox counter-based stream keyed by the seed; sample i always
    consumes uniforms [i*n, (i+1)*n) of the stream, so the output is
    bit-identical for any chunk size or degree of outer parallelism.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    env.require_radius(n)
    d = env.dimension
    steps = step_vectors(d)
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = np.empty((samples, d), dtype=np.int64)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        u = gen.random((m, n))
        pos = np.zeros((m, d), dtype=np.int64)
        for j in range(n):
            rows = env.probs[env.site_indices(pos)]
            cdf = np.cumsum(rows, axis=1)
            cdf[:, -1] = 1.0
            choice = (u[:, j, None] < cdf).argmax(axis=1)
            pos += steps[choice]
        out[done:done + m] = pos
        done += m
    return out


def mc_mgf(env, lam, n, samples, seed):
    """Monte Carlo estimate of the per-step log MGF.

    The standard error is propagated to the log scale by the delta method:
    std(exp w) / (mean(exp w) * sqrt(samples) * n), computed shift-invariantly.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    endpoints = simulate_endpoints(env, n, samples, seed)
    w = endpoints @ lam
    wmax = w.max()
    y = np.exp(w - wmax)
    mean = y.mean()
    value = (wmax + np.log(mean)) / n
    sd = y.std(ddof=1)
    stderr = float(sd / (mean * np.sqrt(samples)) / n)
    return MgfEstimate(value=float(value), n=n, method=MONTE_CARLO,
                       samples=samples, stderr=stderr)


def walk_endpoint_histogram(env, n, samples, seed):
    """Empirical distribution of X_n: map endpoint tuple -> frequency."""
    endpoints = simulate_endpoints(env, n, samples, seed)
    uniq, counts = np.unique(endpoints, axis=0, return_counts=True)
    return {tuple(int(c) for c in row): cnt / samples
            for row, cnt in zip(uniq, counts)}
