"""Corrector variational formula against the spectral oracle."""

import numpy as np
import pytest

from rwre_ldp.errors import CellMismatch, NotNearestNeighbor
from rwre_ldp.lattice_env import make_periodic
from rwre_ldp.mgf import exact_mgf
from rwre_ldp.variational import (
    Corrector,
    k_objective,
    spectral_lambda,
    sum_along_walk,
    supermartingale_check,
    variational_lambda,
)

SRW = make_periodic(1, [1], [[0.5, 0.5]])
ENV_P2 = make_periodic(1, [2], [[0.8, 0.2], [0.3, 0.7]])


def random_periodic(rng, d):
    if d == 1:
        L = int(rng.integers(1, 9))
        return make_periodic(1, [L], rng.dirichlet([1, 1], size=L))
    dims = rng.integers(1, 5, size=2)
    n = int(np.prod(dims))
    return make_periodic(2, dims, rng.dirichlet(np.ones(4), size=n))


def test_k_objective_zero_potential():
    z = Corrector((2,), np.zeros(2))
    assert abs(k_objective(ENV_P2, 0.0, z)) < 1e-14
    expect = max(np.log(0.8 * np.e + 0.2 / np.e),
                 np.log(0.3 * np.e + 0.7 / np.e))
    assert abs(k_objective(ENV_P2, 1.0, z) - expect) < 1e-14


def test_k_objective_homogeneous():
    z = Corrector((1,), np.zeros(1))
    for lam in (0.5, 1.0, 2.0):
        assert abs(k_objective(SRW, lam, z) - np.log(np.cosh(lam))) < 1e-14


def test_k_objective_cell_mismatch():
    with pytest.raises(CellMismatch):
        k_objective(ENV_P2, 1.0, Corrector((3,), np.zeros(3)))


def test_spectral_zero_tilt():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(5)))
    for _ in range(5):
        assert abs(spectral_lambda(random_periodic(rng, 1), 0.0)) < 1e-10


def test_spectral_homogeneous():
    for lam in (0.5, 1.0, 2.0):
        assert abs(spectral_lambda(SRW, lam) - np.log(np.cosh(lam))) < 1e-12


def test_spectral_env_p2_closed_form():
    # 2-cycle: rho^2 = product of the two tilted row sums
    expect = 0.5 * np.log((0.8 * np.e + 0.2 / np.e)
                          * (0.3 * np.e + 0.7 / np.e))
    got = spectral_lambda(ENV_P2, 1.0)
    assert abs(got - expect) < 1e-10
    # direct 2x2 eigenvalue confirmation
    A = np.array([[0.0, 0.8 * np.e + 0.2 / np.e],
                  [0.3 * np.e + 0.7 / np.e, 0.0]])
    rho = max(abs(np.linalg.eigvals(A)))
    assert abs(got - np.log(rho)) < 1e-10


def test_variational_homogeneous():
    res = variational_lambda(SRW, 1.3)
    assert abs(res.value - np.log(np.cosh(1.3))) < 1e-8
    assert np.abs(res.argmin_potential.potential).max() < 1e-12


def test_variational_zero_tilt():
    res = variational_lambda(ENV_P2, 0.0)
    assert abs(res.value) < 1e-8


def test_variational_env_p2_optimal_potential():
    res = variational_lambda(ENV_P2, 1.0)
    assert abs(res.gap) <= 1e-8
    # the Perron eigenvector equalizes the two sites:
    # phi(1) - phi(0) = 0.5 log[(0.3e + 0.7/e) / (0.8e + 0.2/e)]
    expect = 0.5 * np.log((0.3 * np.e + 0.7 / np.e)
                          / (0.8 * np.e + 0.2 / np.e))
    phi = res.argmin_potential.potential
    assert abs((phi[1] - phi[0]) - expect) < 1e-6


def test_oracle_agreement_randomized():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(21)))
    lam_grid = [-3.0, -1.0, 0.5, 3.0]
    for i in range(12):
        env = random_periodic(rng, 1)
        lam = lam_grid[i % len(lam_grid)]
        sp = spectral_lambda(env, lam)
        var = variational_lambda(env, lam)
        assert abs(var.value - sp) <= 1e-6
    for i in range(8):
        env = random_periodic(rng, 2)
        lam = rng.uniform(-3, 3, size=2)
        sp = spectral_lambda(env, lam)
        var = variational_lambda(env, lam)
        assert abs(var.value - sp) <= 1e-6


def test_every_corrector_upper_bounds_spectral():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(31)))
    for _ in range(20):
        env = random_periodic(rng, 1)
        lam = float(rng.uniform(-2, 2))
        sp = spectral_lambda(env, lam)
        phi = rng.normal(size=env.n_sites)
        assert k_objective(env, lam, Corrector(env.cell_dims, phi)) \
            >= sp - 1e-10


def test_gauge_invariance():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(41)))
    phi = rng.normal(size=2)
    a = k_objective(ENV_P2, 1.0, Corrector((2,), phi))
    b = k_objective(ENV_P2, 1.0, Corrector((2,), phi + 3.7))
    assert abs(a - b) < 1e-12


def test_finite_n_gap_shrinks():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(51)))
    for _ in range(10):
        L = int(rng.integers(3, 7))
        env = make_periodic(1, [L], rng.dirichlet([1, 1], size=L))
        lam = float(rng.uniform(-2, 2))
        sp = spectral_lambda(env, lam)
        g32 = abs(exact_mgf(env, lam, 32).value - sp)
        g256 = abs(exact_mgf(env, lam, 256).value - sp)
        assert g256 < max(g32, 1e-12)


def test_convexity_of_lambda():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(61)))
    env = random_periodic(rng, 1)
    for _ in range(5):
        l1, l2 = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0.1, 0.9)
        v1 = spectral_lambda(env, l1)
        v2 = spectral_lambda(env, l2)
        vm = spectral_lambda(env, t * l1 + (1 - t) * l2)
        assert vm <= t * v1 + (1 - t) * v2 + 1e-10


def test_supermartingale_one_step_and_homogeneous():
    z = Corrector((1,), np.zeros(1))
    rep = supermartingale_check(SRW, 0.8, z, 1)
    assert rep.exact_value <= 1.0 + 1e-12
    for n in (5, 20):
        rep = supermartingale_check(SRW, 0.8, z, n)
        assert abs(rep.exact_value - 1.0) < 1e-12


def test_supermartingale_optimal_corrector():
    res = variational_lambda(ENV_P2, 1.0)
    rep = supermartingale_check(ENV_P2, 1.0, res.argmin_potential, 10)
    assert rep.exact_value <= 1.0 + 1e-10


def test_supermartingale_random_triples():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(71)))
    for _ in range(10):
        env = random_periodic(rng, 1)
        lam = float(rng.uniform(-2, 2))
        phi = rng.normal(scale=0.5, size=env.n_sites)
        rep = supermartingale_check(env, lam, Corrector(env.cell_dims, phi),
                                    int(rng.integers(2, 21)))
        assert rep.exact_value <= 1.0 + 1e-10


def test_supermartingale_mc_agrees():
    res = variational_lambda(ENV_P2, 0.7)
    rep = supermartingale_check(ENV_P2, 0.7, res.argmin_potential, 10,
                                samples=40000, seed=3)
    assert abs(rep.mc_value - rep.exact_value) < 4 * max(rep.mc_stderr, 1e-12)


def test_sum_along_walk_telescopes():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(81)))
    c = Corrector((2,), rng.normal(size=2))
    # closed path sums to zero
    closed = np.array([[0], [1], [2], [1], [0]])
    assert abs(sum_along_walk(c, closed)) < 1e-12
    # 0 -> 1 -> 2 equals the periodic potential difference
    path = np.array([[0], [1], [2]])
    expect = c.potential_at(np.array([[2]]))[0] - c.potential_at(
        np.array([[0]]))[0]
    assert abs(sum_along_walk(c, path) - expect) < 1e-12
    # random 50-step path
    steps = rng.choice([-1, 1], size=50)
    pts = np.concatenate([[0], np.cumsum(steps)])[:, None]
    expect = c.potential_at(pts[-1:])[0] - c.potential_at(pts[:1])[0]
    assert abs(sum_along_walk(c, pts) - expect) < 1e-12


def test_sum_along_walk_rejects_jumps():
    c = Corrector((2,), np.zeros(2))
    with pytest.raises(NotNearestNeighbor):
        sum_along_walk(c, np.array([[0], [2]]))
