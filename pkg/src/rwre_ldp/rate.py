"""Rate functions by Legendre transform and empirical large-deviation checks.

Velocities outside the unit l1 ball are unreachable for a nearest-neighbor
walk, so their rate is the documented +infinity sentinel.  On the closed
unit sphere the transform's supremum is a finite limit approached along the
grid boundary; it is reported from the boundary-refined value rather than
as the sentinel.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonConvexInput
from .mgf import simulate_endpoints
from .variational import spectral_lambda, variational_lambda

RATE_INFINITY = 1e12
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_lambda_grid(lo=-6.0, hi=6.0, points=201):
    return np.linspace(lo, hi, points)


def _golden_max(fn, a, b, tol):
    """Golden-section maximization of a scalar unimodal function on [a, b]."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fn(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fn(x1)
    return max(f1, f2)


def _check_convex(grid, values, slack=1e-8):
    second = values[:-2] - 2.0 * values[1:-1] + values[2:]
    if np.any(second < -slack * np.maximum(1.0, np.abs(values[1:-1]))):
        raise NonConvexInput("sampled log-MGF values are not convex on the grid")


def legendre_transform(lambda_grid, lambda_values, x, evaluator=None, tol=1e-6):
    """sup over the tilt grid of <lambda, x> - value, with golden refinement.

    One-dimensional tilt grids only; `evaluator`, when given, supplies fresh
    values between grid points for the refinement step.  Returns the
    RATE_INFINITY sentinel when the objective is still growing at the grid
    boundary and |x| exceeds 1.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    values = np.asarray(lambda_values, dtype=float)
    x = float(np.atleast_1d(x)[0]) if np.ndim(x) else float(x)
    if grid.ndim != 1 or grid.shape != values.shape:
        raise ValueError("grid and values must be matching 1-D arrays")
    _check_convex(grid, values)

    obj = grid * x - values
    j = int(np.argmax(obj))
    at_boundary = j in (0, len(grid) - 1)
    if at_boundary and abs(x) > 1.0:
        return RATE_INFINITY
    if evaluator is None or len(grid) < 3:
        return float(obj[j])
    lo = grid[max(j - 1, 0)]
    hi = grid[min(j + 1, len(grid) - 1)]
    refined = _golden_max(lambda l: l * x - evaluator(l), lo, hi, tol)
    return float(max(refined, obj[j]))


@dataclass
class RateCurve:
    """Sampled rate function with the dual grid that produced it."""

    xs: np.ndarray
    values: np.ndarray
    censored: np.ndarray
    lambda_grid: np.ndarray
    provenance: dict

    def value_at(self, x):
        """Linear interpolation between stored finite grid values."""
        finite = ~self.censored
        return float(np.interp(x, self.xs[finite], self.values[finite]))


def rate_curve(env, x_grid, lambda_grid=None, tol=1e-6, source="spectral"):
    """Build the rate curve for a one-dimensional periodic environment.

    `source` selects the tilt evaluations: "spectral" uses the transfer
    matrix oracle, "variational" the corrector optimization (slower, same
    value up to its tolerance); the choice is recorded in the provenance.
    """
    if env.dimension != 1:
        raise DomainError("rate curves are built for d=1 environments")
    if lambda_grid is None:
        lambda_grid = default_lambda_grid()
    lambda_grid = np.asarray(lambda_grid, dtype=float)

    if source == "spectral":
        evaluator = lambda l: spectral_lambda(env, l)
    elif source == "variational":
        evaluator = lambda l: variational_lambda(env, l).value
    else:
        raise ValueError(f"unknown lambda source {source!r}")
    lam_values = np.array([evaluator(l) for l in lambda_grid])
    refine = evaluator

    xs = np.asarray(x_grid, dtype=float)
    values = np.empty_like(xs)
    censored = np.zeros(xs.shape, dtype=bool)
    for i, x in enumerate(xs):
        v = legendre_transform(lambda_grid, lam_values, x,
                               evaluator=refine, tol=tol)
        if v >= 1e9:
            censored[i] = True
        values[i] = v
    return RateCurve(
        xs=xs, values=values, censored=censored, lambda_grid=lambda_grid,
        provenance={
            "source": source,
            "env": env.content_hash(),
            "lambda_grid": [float(lambda_grid[0]), float(lambda_grid[-1]),
                            int(len(lambda_grid))],
            "tol": tol,
        },
    )


@dataclass
class LdpPoint:
    n: int
    frequency: float
    value: float
    censored: bool
    samples: int


def empirical_ldp(env, x_center, radius, n_list, samples, seed):
    """-(1/n) log of the frequency of {X_n / n in the ball}, per n.

    Zero-count entries come back censored rather than infinite.  Each n uses
    the substream keyed by (seed, n) so the runs are independent and
    individually reproducible.
    """
    center = np.atleast_1d(np.asarray(x_center, dtype=float))
    if np.abs(center).sum() + radius > 1.0 + 1e-12:
        raise DomainError("ball must sit inside the reachable unit l1 ball")
    out = []
    for n in n_list:
        sub_seed = (int(seed) * 1000003 + int(n)) % (1 << 63)
        endpoints = simulate_endpoints(env, n, samples, sub_seed)
        dist = np.linalg.norm(endpoints / n - center[None, :], axis=1)
        hits = int(np.count_nonzero(dist <= radius))
        freq = hits / samples
        if hits == 0:
            out.append(LdpPoint(n=n, frequency=0.0, value=np.nan,
                                censored=True, samples=samples))
        else:
            out.append(LdpPoint(n=n, frequency=freq,
                                value=float(-np.log(freq) / n),
                                censored=False, samples=samples))
    return out
