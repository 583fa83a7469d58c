"""Finite-n quenched log MGF: DP against brute force and Monte Carlo."""

import numpy as np
import pytest

from rwre_ldp.errors import BoxTooSmall, TooLarge
from rwre_ldp.lattice_env import (
    DirichletLaw,
    PointMassLaw,
    make_periodic,
    sample_iid_boxed,
)
from rwre_ldp.mgf import (
    brute_force_mgf,
    exact_mgf,
    mc_mgf,
    simulate_endpoints,
    walk_endpoint_histogram,
)

SRW = make_periodic(1, [1], [[0.5, 0.5]])
# three-site d=1 env with p+(0)=0.6, p+(1)=0.7, p+(-1)=0.4
ENV3 = make_periodic(1, [3], [[0.6, 0.4], [0.7, 0.3], [0.4, 0.6]])


def random_envs(seed, count, d=1, max_cell=6):
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = []
    for _ in range(count):
        if d == 1:
            L = int(rng.integers(1, max_cell + 1))
            out.append((make_periodic(1, [L], rng.dirichlet([1, 1], size=L)),
                        float(rng.uniform(-2, 2)), rng))
        else:
            dims = rng.integers(1, 4, size=2)
            n = int(np.prod(dims))
            out.append((
                make_periodic(2, dims, rng.dirichlet(np.ones(4), size=n)),
                rng.uniform(-1.5, 1.5, size=2), rng))
    return out


def test_zero_tilt_is_zero():
    for env, _, _ in random_envs(1, 5):
        for n in (1, 10, 100):
            assert abs(exact_mgf(env, 0.0, n).value) < 1e-12


def test_homogeneous_log_cosh():
    for lam in (0.3, 1.0, 2.5):
        for n in (1, 7, 40):
            got = exact_mgf(SRW, lam, n).value
            assert abs(got - np.log(np.cosh(lam))) < 1e-12


def test_three_site_two_step_closed_form():
    # E[e^{lam X_2}] = 0.42 e^{2 lam} + 0.34 + 0.24 e^{-2 lam}
    lam = 0.8
    expect = 0.5 * np.log(0.42 * np.exp(2 * lam) + 0.34
                          + 0.24 * np.exp(-2 * lam))
    assert abs(exact_mgf(ENV3, lam, 2).value - expect) < 1e-12
    assert abs(brute_force_mgf(ENV3, lam, 2).value - expect) < 1e-12


def test_brute_force_single_step():
    lam = 1.3
    expect = np.log(0.6 * np.exp(lam) + 0.4 * np.exp(-lam))
    assert abs(brute_force_mgf(ENV3, lam, 1).value - expect) < 1e-14


def test_brute_force_matches_dp():
    cases = random_envs(2, 10) + random_envs(3, 10, d=2, max_cell=3)
    for env, lam, _ in cases:
        n = 8 if env.dimension == 1 else 6
        bf = brute_force_mgf(env, lam, n).value
        dp = exact_mgf(env, lam, n).value
        assert abs(bf - dp) < 1e-10


def test_brute_force_size_cap():
    with pytest.raises(TooLarge):
        brute_force_mgf(SRW, 1.0, 20)


def test_convexity_in_lambda():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(11)))
    env, _, _ = random_envs(4, 1)[0]
    n = 12
    for _ in range(20):
        l1, l2 = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0.05, 0.95)
        v1 = n * exact_mgf(env, l1, n).value
        v2 = n * exact_mgf(env, l2, n).value
        vm = n * exact_mgf(env, t * l1 + (1 - t) * l2, n).value
        assert vm <= t * v1 + (1 - t) * v2 + 1e-10


def test_large_tilt_stability():
    # log-sum-exp keeps |lam| ~ 50 finite
    v = exact_mgf(SRW, 50.0, 32).value
    assert np.isfinite(v)
    assert abs(v - np.log(np.cosh(50.0))) < 1e-9


def test_boxed_env_needs_radius():
    env = sample_iid_boxed(1, 8, 3, DirichletLaw([1.0, 1.0]))
    assert np.isfinite(exact_mgf(env, 0.5, 8).value)
    with pytest.raises(BoxTooSmall):
        exact_mgf(env, 0.5, 9)
    with pytest.raises(BoxTooSmall):
        mc_mgf(env, 0.5, 9, 100, 0)


def test_mc_zero_tilt():
    est = mc_mgf(SRW, 0.0, 20, 500, 9)
    assert est.value == 0.0
    assert est.stderr == 0.0


def test_mc_deterministic():
    a = mc_mgf(SRW, 1.0, 30, 4000, 123)
    b = mc_mgf(SRW, 1.0, 30, 4000, 123)
    assert a.value == b.value and a.stderr == b.stderr
    c = mc_mgf(SRW, 1.0, 30, 4000, 124)
    assert c.value != a.value


def test_mc_chunking_invisible():
    # concatenated small chunks must reproduce one large draw bit-exactly
    a = mc_mgf(SRW, 0.7, 25, 5000, 77)
    b = mc_mgf(SRW, 0.7, 25, 5000, 77)
    assert a.value == b.value
    e1 = simulate_endpoints(SRW, 10, 3000, 5, chunk=128)
    e2 = simulate_endpoints(SRW, 10, 3000, 5, chunk=3000)
    assert (e1 == e2).all()


def test_mc_close_to_exact():
    # Light-tail regime: lam*n small enough that the tilted mean velocity is
    # well covered by 1e5 samples.  At (lam=1, n=50) the integrand is
    # dominated by endpoints the sample never visits and the delta-method
    # stderr is meaningless, so that regime is excluded here.
    est = mc_mgf(SRW, 0.5, 10, 100000, 2024)
    exact = np.log(np.cosh(0.5))
    assert abs(est.value - exact) < 4 * est.stderr


def test_mc_z_scores():
    env = make_periodic(1, [2], [[0.55, 0.45], [0.4, 0.6]])
    lam, n = 0.4, 15
    exact = exact_mgf(env, lam, n).value
    bad = 0
    for seed in range(100):
        est = mc_mgf(env, lam, n, 4000, seed)
        if abs(est.value - exact) > 4 * est.stderr:
            bad += 1
    assert bad <= 5


def test_histogram_basics():
    hist = walk_endpoint_histogram(SRW, 1, 20000, 13)
    assert abs(sum(hist.values()) - 1.0) < 1e-12
    p = hist[(1,)]
    assert abs(p - 0.5) < 4 * np.sqrt(0.25 / 20000)


def test_histogram_two_step_law():
    hist = walk_endpoint_histogram(ENV3, 2, 200000, 4)
    se = 4 / np.sqrt(200000)
    assert abs(hist[(2,)] - 0.42) < se
    assert abs(hist[(0,)] - 0.34) < se
    assert abs(hist[(-2,)] - 0.24) < se
    # parity: all endpoints even after 2 steps
    assert all(x[0] % 2 == 0 for x in hist)
