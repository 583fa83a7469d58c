"""Entropy lower bound: drift reward minus relative entropy rate.

The bound is a supremum over tilted transition kernels q paired with their
invariant densities.  On a periodic cell this is a finite smooth ascent in
logit coordinates for q, with the density re-solved at every step.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import CellMismatch, InvariantViolation, NoConvergence, NotInvariant
from .lattice_env import (
    _validate_rows,
    step_vectors,
    tilt_values,
    torus_neighbors,
)

INVARIANCE_TOL = 1e-8


@dataclass
class KernelDensityPair:
    """Candidate kernel q on the cell plus a density w.r.t. cell-uniform measure."""

    q: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        self.q = _validate_rows(self.q, self.q.shape[1] // 2)
        if np.any(self.phi < 0):
            raise InvariantViolation("density must be nonnegative")
        if abs(self.phi.mean() - 1.0) > 1e-12:
            raise InvariantViolation("density must have cell average 1")


@dataclass
class GammaResult:
    lam: np.ndarray
    value: float
    argmax: KernelDensityPair
    invariance_residual: float

    def to_dict(self):
        return {
            "lambda": [float(v) for v in np.atleast_1d(self.lam)],
            "value": self.value,
            "invariance_residual": self.invariance_residual,
            "q": [[float(v) for v in row] for row in self.argmax.q],
            "phi": [float(v) for v in self.argmax.phi],
        }


def _require_periodic(env):
    if env.kind != "periodic":
        raise CellMismatch("entropy bound operations need a periodic environment")


def kernel_matrix(cell_dims, q):
    """Row-stochastic torus matrix Q[x, x+e] += q(x, e)."""
    n = q.shape[0]
    nb = torus_neighbors(cell_dims)
    Q = np.zeros((n, n))
    for k in range(q.shape[1]):
        np.add.at(Q, (np.arange(n), nb[:, k]), q[:, k])
    return Q


def invariance_residual(cell_dims, q, phi):
    """Max over sites of |phi(x) - sum_{y+e=x} q(y,e) phi(y)| on the torus."""
    Q = kernel_matrix(cell_dims, np.asarray(q, dtype=float))
    phi = np.asarray(phi, dtype=float).ravel()
    return float(np.abs(phi - phi @ Q).max())


def invariant_density(cell_dims, q, tol=1e-10, max_iters=100000):
    """Left Perron vector of q on the torus, normalized to cell average 1.

    Power iteration on the lazy chain (Q + I)/2, which is aperiodic for any
    positive q, so the iteration cannot oscillate on even cells.
    """
    q = np.asarray(q, dtype=float)
    Q = kernel_matrix(cell_dims, q)
    n = Q.shape[0]
    mu = np.full(n, 1.0 / n)
    M = 0.5 * (Q + np.eye(n))
    for _ in range(max_iters):
        nxt = mu @ M
        nxt /= nxt.sum()
        if np.abs(nxt - nxt @ Q).max() < tol / n:
            phi = nxt * n
            assert invariance_residual(cell_dims, q, phi) < tol
            return phi
        mu = nxt
    raise NoConvergence("stationary density iteration stalled",
                        iterations=max_iters)


def gamma_objective(env, lam, pair, tol=INVARIANCE_TOL):
    """Cell average of phi(x) sum_e q(x,e) [<lambda,e> - log(q/p)].

    Raises NotInvariant when phi is not invariant for q: outside the
    invariant set the inner inf over test functions is -infinity.
    """
    _require_periodic(env)
    residual = invariance_residual(env.cell_dims, pair.q, pair.phi)
    if residual > tol:
        raise NotInvariant(residual)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tilts = tilt_values(lam)
    inner = pair.q * (tilts[None, :] - np.log(pair.q) + env.log_probs)
    return float((pair.phi * inner.sum(axis=1)).mean())


def _value_and_gradient(env, tilts, theta, neighbors):
    """Objective value and gradient in logits via the adjoint (Poisson) equation.

    With mu the stationary distribution of q and v the relative value
    function of the per-site reward c(x), the derivative w.r.t. q(x,e) is
    mu(x) [<lambda,e> - log(q/p) - 1 + v(x+e)].
    """
    n, two_d = theta.shape
    logits = theta - theta.max(axis=1, keepdims=True)
    q = np.exp(logits)
    q /= q.sum(axis=1, keepdims=True)
    Q = kernel_matrix(env.cell_dims, q)

    # Stationary distribution (direct solve; cells are small).
    A = np.vstack([Q.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu = np.linalg.lstsq(A, b, rcond=None)[0]
    mu = np.clip(mu, 1e-300, None)
    mu /= mu.sum()

    r = tilts[None, :] - np.log(q) + env.log_probs
    c = (q * r).sum(axis=1)
    value = float(mu @ c)

    # Poisson equation (I - Q) v = c - value, consistent since mu (c - value) = 0.
    v = np.linalg.lstsq(np.eye(n) - Q, c - value, rcond=None)[0]
    a = (r - 1.0) + v[neighbors]
    dq = mu[:, None] * a
    grad = q * (dq - (q * dq).sum(axis=1, keepdims=True))
    return value, grad, q, mu


def gamma_lower(env, lam, tol=INVARIANCE_TOL, restarts=8, seed=0, max_iters=2000):
    """Maximize the entropy-bound objective over kernels q.

    The density is always the invariant one for the current q (implicit
    function treatment); ascent runs in logit coordinates with an analytic
    adjoint gradient.  Multi-start with seeded restarts; ties resolved by
    the lowest restart index.
    """
    _require_periodic(env)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tilts = tilt_values(lam)
    n = env.n_sites
    two_d = 2 * env.dimension
    neighbors = torus_neighbors(env.cell_dims)

    def negobj(flat):
        theta = flat.reshape(n, two_d)
        value, grad, _, _ = _value_and_gradient(env, tilts, theta, neighbors)
        return -value, -grad.ravel()

    inits = [env.log_probs + tilts[None, :]]
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    for _ in range(max(0, restarts - 1)):
        inits.append(inits[0] + 0.5 * rng.standard_normal((n, two_d)))

    best = None
    for i, theta0 in enumerate(inits):
        res = minimize(negobj, theta0.ravel(), jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iters, "ftol": 1e-16,
                                "gtol": 1e-12})
        value = -res.fun
        if best is None or value > best[0] + 1e-15:
            best = (value, res.x.reshape(n, two_d))
    if best is None:
        raise NoConvergence("no restart produced a value", iterations=restarts)

    _, _, q, _ = _value_and_gradient(env, tilts, best[1], neighbors)
    phi = invariant_density(env.cell_dims, q, tol=min(tol, 1e-10))
    pair = KernelDensityPair(q=q, phi=phi)
    residual = invariance_residual(env.cell_dims, q, phi)
    value = gamma_objective(env, lam, pair, tol=tol)
    return GammaResult(lam=lam, value=value, argmax=pair,
                       invariance_residual=residual)


def softmax_kernel(lam, nu):
    """Optimal kernel row q*(e) proportional to exp(<lambda,e> + nu(e))."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    nu = np.asarray(nu, dtype=float)
    scores = tilt_values(lam) + nu
    scores = scores - scores.max()
    q = np.exp(scores)
    return q / q.sum()


def softmax_objective(lam, nu, q):
    """sum_e q(e) [<lambda,e> - log q(e) + nu(e)], the row-wise objective."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    nu = np.asarray(nu, dtype=float)
    return float((q * (tilt_values(lam) - np.log(q) + nu)).sum())


def softmax_optimum_value(lam, nu):
    """Closed-form optimum: log sum_e exp(<lambda,e> + nu(e))."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    nu = np.asarray(nu, dtype=float)
    scores = tilt_values(lam) + nu
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def lln_velocity(env):
    """Law-of-large-numbers mean velocity of X_n / n, a d-vector."""
    _require_periodic(env)
    phi = invariant_density(env.cell_dims, env.probs)
    steps = step_vectors(env.dimension).astype(float)
    drift = env.probs @ steps
    return (phi[:, None] * drift).mean(axis=0)
