"""Tilted log-partition variational formula and its spectral oracle.

The quantity of interest is the inf over gradient correctors of the maximal
tilted one-step log-partition.  On a periodic cell this is a finite convex
min-max problem; its value equals the log Perron root of the tilted transfer
matrix, which serves as the independent oracle.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import CellMismatch, NoConvergence, NotNearestNeighbor
from .lattice_env import (
    step_vectors,
    tilt_values,
    torus_neighbors,
    torus_sites,
)
from .mgf import _dp_log_value, _shift_from_direction  # noqa: F401
from . import mgf as _mgf

LOOP_TOL = 1e-12


@dataclass
class Corrector:
    """Gradient corrector on a periodic cell.

    The edge function is F(x, e) = potential[x+e] - potential[x] with torus
    wrap-around, which makes the closed-loop and mean-zero conditions hold
    identically; they are still asserted numerically on construction.
    """

    cell_dims: tuple
    potential: np.ndarray

    def __post_init__(self):
        self.cell_dims = tuple(int(c) for c in self.cell_dims)
        self.potential = np.asarray(self.potential, dtype=float).ravel()
        if self.potential.size != int(np.prod(self.cell_dims)):
            raise ValueError("potential needs one value per cell site")
        self._neighbors = torus_neighbors(self.cell_dims)
        F = self.edge_values()
        # Closed loop: out-and-back over every edge, and elementary squares.
        back = F + F[self._neighbors, [k ^ 1 for k in range(F.shape[1])]]
        assert np.abs(back).max() < LOOP_TOL
        # Mean zero per direction (telescoping over the torus).
        assert np.abs(F.mean(axis=0)).max() < LOOP_TOL

    @property
    def dimension(self):
        return len(self.cell_dims)

    @classmethod
    def zeros(cls, cell_dims):
        return cls(cell_dims, np.zeros(int(np.prod(cell_dims))))

    def edge_values(self):
        """F(x, e) for every cell site and direction, shape (n, 2d)."""
        return self.potential[self._neighbors] - self.potential[:, None]

    def moment(self, alpha=1.0):
        """Cell average of |F|^(d+alpha), recorded for the class conditions."""
        F = self.edge_values()
        return float((np.abs(F) ** (self.dimension + alpha)).mean())

    def potential_at(self, coords):
        """Periodic lift of the potential to Z^d."""
        coords = np.asarray(coords, dtype=np.int64)
        reduced = coords % np.array(self.cell_dims)
        idx = np.ravel_multi_index(
            tuple(reduced[..., i] for i in range(self.dimension)), self.cell_dims
        )
        return self.potential[idx]

    def edge_value(self, x, direction):
        """F(x, e) for a lattice point x and direction index."""
        x = np.asarray(x, dtype=np.int64)
        step = step_vectors(self.dimension)[direction]
        return float(self.potential_at(x + step) - self.potential_at(x))


@dataclass
class LambdaResult:
    lam: np.ndarray
    value: float
    argmin_potential: Corrector
    spectral_value: float
    iterations: int
    tol: float
    gap: float = field(init=False)

    def __post_init__(self):
        self.gap = self.value - self.spectral_value
        assert self.gap >= -self.tol

    def to_dict(self):
        return {
            "lambda": [float(v) for v in np.atleast_1d(self.lam)],
            "value": self.value,
            "spectral_value": self.spectral_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "tol": self.tol,
            "potential": [float(v) for v in self.argmin_potential.potential],
        }


def _check_cell(env, corrector):
    if env.kind != "periodic":
        raise CellMismatch("a periodic environment is required here")
    if tuple(env.cell_dims) != tuple(corrector.cell_dims):
        raise CellMismatch(
            f"corrector cell {corrector.cell_dims} != environment cell {env.cell_dims}"
        )


def site_log_partitions(env, lam, corrector):
    """log sum_e p(x,e) exp(<lambda,e> + F(x,e)) for every cell site."""
    _check_cell(env, corrector)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tilts = tilt_values(lam)
    F = corrector.edge_values()
    return logsumexp(env.log_probs + tilts[None, :] + F, axis=1)


def k_objective(env, lam, corrector):
    """Max over cell sites of the tilted one-step log-partition."""
    return float(site_log_partitions(env, lam, corrector).max())


def tilted_matrix(env, lam):
    """Transfer matrix on the torus: A[x, x+e] += p(x,e) exp<lambda,e>."""
    if env.kind != "periodic":
        raise CellMismatch("tilted transfer matrix needs a periodic environment")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    weights = env.probs * np.exp(tilt_values(lam))[None, :]
    n = env.n_sites
    nb = torus_neighbors(env.cell_dims)
    A = np.zeros((n, n))
    for k in range(weights.shape[1]):
        np.add.at(A, (np.arange(n), nb[:, k]), weights[:, k])
    return A


def spectral_lambda(env, lam, tol=1e-10, max_iters=100000):
    """log spectral radius of the tilted transfer matrix.

    Power iteration on the positive cone; a diagonal shift keeps periodic
    (bipartite-cycle) cells from oscillating.  Convergence is certified by
    the Collatz-Wielandt bracket min(Au/u) <= rho <= max(Au/u); the returned
    value is the log of the geometric mean of the bracket.
    """
    A = tilted_matrix(env, lam)
    n = A.shape[0]
    if n == 1:
        return float(np.log(A[0, 0]))
    shift = A.sum(axis=1).max()
    u = np.full(n, 1.0 / np.sqrt(n))
    for it in range(max_iters):
        Au = A @ u
        ratios = Au / u
        rmax, rmin = ratios.max(), ratios.min()
        if rmax - rmin < tol:
            return float(0.5 * (np.log(rmax) + np.log(rmin)))
        u = Au + shift * u
        u /= np.linalg.norm(u)
    raise NoConvergence("power iteration did not close the bracket",
                        iterations=max_iters)


def _objective_pieces(env, tilts, phi, neighbors):
    """Site log-partitions m(x) and per-site softmax weights over directions."""
    F = phi[neighbors] - phi[:, None]
    scores = env.log_probs + tilts[None, :] + F
    m = logsumexp(scores, axis=1)
    w = np.exp(scores - m[:, None])
    return m, w


def _site_gradients(w, neighbors, n):
    """d m(x) / d phi as a dense (n_sites, n_sites) matrix."""
    grad = np.zeros((n, n))
    rows = np.repeat(np.arange(n), w.shape[1])
    np.add.at(grad, (rows, neighbors.ravel()), w.ravel())
    grad[np.arange(n), np.arange(n)] -= w.sum(axis=1)
    return grad


def variational_lambda(env, lam, tol=1e-8, max_iters=100000):
    """Minimize the max site log-partition over gauge-fixed potentials.

    Two stages: soft-max temperature continuation (smooth, solved by L-BFGS)
    followed by Polyak-step subgradient polishing on the exact max, with the
    spectral oracle value as the known target.  The potential is gauge-fixed
    to phi[0] = 0; adding a constant does not change the objective.
    """
    if env.kind != "periodic":
        raise CellMismatch("the variational formula is computed on periodic cells")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    sp = spectral_lambda(env, lam, tol=1e-12)
    n = env.n_sites
    tilts = tilt_values(lam)

    if n == 1:
        corr = Corrector.zeros(env.cell_dims)
        return LambdaResult(lam, k_objective(env, lam, corr), corr, sp, 0, tol)

    neighbors = torus_neighbors(env.cell_dims)
    iterations = 0

    def full_phi(theta):
        return np.concatenate(([0.0], theta))

    def smoothed(theta, temp):
        nonlocal iterations
        iterations += 1
        m, w = _objective_pieces(env, tilts, full_phi(theta), neighbors)
        mmax = m.max()
        z = np.exp((m - mmax) / temp)
        val = mmax + temp * np.log(z.sum())
        site_w = z / z.sum()
        grad = _site_gradients(w, neighbors, n)
        return val, (site_w @ grad)[1:]

    theta = np.zeros(n - 1)
    temp = 1.0
    while temp > 1e-7:
        res = minimize(smoothed, theta, args=(temp,), jac=True,
                       method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        theta = res.x
        temp /= 4.0

    # Polyak polishing on the exact (nonsmooth) max.
    def exact_value(theta):
        m, w = _objective_pieces(env, tilts, full_phi(theta), neighbors)
        return m, w

    best_theta = theta.copy()
    m, _ = exact_value(theta)
    best_val = float(m.max())
    k = 0
    while best_val - sp > 0.1 * tol and iterations < max_iters:
        m, w = exact_value(theta)
        f = float(m.max())
        if f < best_val:
            best_val, best_theta = f, theta.copy()
        active = m >= f - max(1e-13, 1e-12 * abs(f))
        grad = _site_gradients(w, neighbors, n)
        g = grad[active].mean(axis=0)[1:]
        gg = g @ g
        if gg < 1e-30:
            break
        step = max(f - sp, 1e-16) / gg
        theta = theta - step * g
        iterations += 1
        k += 1

    m, _ = exact_value(best_theta)
    best_val = float(m.max())
    if best_val - sp > tol:
        raise NoConvergence(
            f"variational value {best_val} did not reach oracle {sp} within {tol}",
            iterations=iterations,
        )
    corr = Corrector(env.cell_dims, full_phi(best_theta))
    return LambdaResult(lam, best_val, corr, sp, iterations, tol)


@dataclass
class SupermartingaleReport:
    n: int
    k_value: float
    exact_value: float
    mc_value: float = None
    mc_stderr: float = None
    tol: float = 1e-10

    @property
    def bound_satisfied(self):
        return self.exact_value <= 1.0 + self.tol


def _k_general(env, tilts, corrector):
    """Max log-partition over all of the environment's sites (any kind)."""
    sites = env.sites()
    d = env.dimension
    steps = step_vectors(d)
    F = np.stack(
        [
            corrector.potential_at(sites + steps[k]) - corrector.potential_at(sites)
            for k in range(2 * d)
        ],
        axis=1,
    )
    return float(logsumexp(env.log_probs + tilts[None, :] + F, axis=1).max())


def supermartingale_check(env, lam, corrector, n, samples=0, seed=0, tol=1e-10):
    """Evaluate E[S_n] for S_n = exp{<lambda,X_n> + sum F - n K} and check <= 1.

    The exact value comes from a log-space DP over the reachable box; an
    optional Monte Carlo estimate uses the same walks as the MGF estimator.
    """
    env.require_radius(n)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tilts = tilt_values(lam)
    if env.kind == "periodic" and tuple(env.cell_dims) == tuple(corrector.cell_dims):
        K = k_objective(env, lam, corrector)
    else:
        K = _k_general(env, tilts, corrector)

    d = env.dimension
    side = 2 * n + 1
    coords = np.indices((side,) * d).reshape(d, -1).T - n
    steps = step_vectors(d)
    logw = _mgf._cube_log_probs(env, n)
    for k in range(2 * d):
        F_k = corrector.potential_at(coords + steps[k]) - corrector.potential_at(coords)
        logw[k] += (tilts[k] + F_k).reshape((side,) * d)
    log_total = _dp_log_value(env, n, logw)
    exact = float(np.exp(log_total - n * K))

    mc_value = mc_stderr = None
    if samples:
        endpoints_ws = _walk_log_weights(env, lam, corrector, n, samples, seed)
        shifted = endpoints_ws - n * K
        y = np.exp(shifted)
        mc_value = float(y.mean())
        mc_stderr = float(y.std(ddof=1) / np.sqrt(samples))
    return SupermartingaleReport(n=n, k_value=K, exact_value=exact,
                                 mc_value=mc_value, mc_stderr=mc_stderr, tol=tol)


def _walk_log_weights(env, lam, corrector, n, samples, seed):
    """<lambda, X_n> + sum_j F(X_{j-1}, X_j) per simulated walk."""
    d = env.dimension
    steps = step_vectors(d)
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = np.empty(samples)
    done = 0
    while done < samples:
        m = min(1 << 15, samples - done)
        u = gen.random((m, n))
        pos = np.zeros((m, d), dtype=np.int64)
        w = np.zeros(m)
        for j in range(n):
            rows = env.probs[env.site_indices(pos)]
            cdf = np.cumsum(rows, axis=1)
            cdf[:, -1] = 1.0
            choice = (u[:, j, None] < cdf).argmax(axis=1)
            nxt = pos + steps[choice]
            w += corrector.potential_at(nxt) - corrector.potential_at(pos)
            pos = nxt
        w += pos @ np.atleast_1d(np.asarray(lam, dtype=float))
        out[done:done + m] = w
        done += m
    return out


def sum_along_walk(corrector, path):
    """Sum of F along a nearest-neighbor path from the origin.

    Telescopes to potential(end) - potential(start); asserted.
    """
    path = np.asarray(path, dtype=np.int64)
    if path.ndim == 1:
        path = path[:, None]
    diffs = np.diff(path, axis=0)
    if np.any(np.abs(diffs).sum(axis=1) != 1):
        raise NotNearestNeighbor("path contains a non-unit step")
    total = float(
        np.sum(corrector.potential_at(path[1:]) - corrector.potential_at(path[:-1]))
    )
    expected = float(corrector.potential_at(path[-1]) - corrector.potential_at(path[0]))
    assert abs(total - expected) < 1e-10 * max(1.0, abs(expected))
    return total
