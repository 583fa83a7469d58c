"""Environment construction, validation, persistence, and sampling."""

import json

import numpy as np
import pytest

from rwre_ldp.errors import InvariantViolation, ParseError
from rwre_ldp.lattice_env import (
    DirichletLaw,
    Environment,
    PointMassLaw,
    ball_sites,
    load_env,
    make_periodic,
    moment_norm,
    opposite_direction,
    sample_iid_boxed,
    save_env,
    step_vectors,
    torus_neighbors,
)

SRW = [[0.5, 0.5]]
ENV_P2_ROWS = [[0.8, 0.2], [0.3, 0.7]]


def test_step_vectors_order_and_negation():
    steps = step_vectors(2)
    assert steps.tolist() == [[1, 0], [-1, 0], [0, 1], [0, -1]]
    for k in range(4):
        assert (steps[opposite_direction(k)] == -steps[k]).all()
        assert opposite_direction(opposite_direction(k)) == k


def test_make_periodic_echoes_rows():
    env = make_periodic(1, [2], ENV_P2_ROWS)
    assert env.probs.shape == (2, 2)
    assert np.allclose(env.probs, ENV_P2_ROWS)
    # row sums hold exactly after construction
    assert np.abs(env.probs.sum(axis=1) - 1.0).max() < 1e-12


def test_homogeneous_single_site_cell():
    env = make_periodic(1, [1], SRW)
    # p(x, e) = p(x mod 1, e): every site shares the one row
    for x in (-3, 0, 7):
        assert env.site_indices(np.array([[x]]))[0] == 0


def test_bad_row_sum_rejected():
    with pytest.raises(InvariantViolation):
        make_periodic(1, [1], [[0.6, 0.5]])


def test_nonpositive_entry_rejected():
    with pytest.raises(InvariantViolation):
        make_periodic(1, [1], [[1.0, 0.0]])
    with pytest.raises(InvariantViolation):
        make_periodic(1, [2], [[0.5, 0.5], [-0.2, 1.2]])


def test_row_sum_renormalized_within_tolerance():
    row = np.array([0.5, 0.5]) * (1.0 + 5e-13)
    env = make_periodic(1, [1], [row])
    assert abs(env.probs.sum() - 1.0) < 1e-15


def test_periodic_translation_invariance():
    env = make_periodic(2, [2, 3], np.full((6, 4), 0.25))
    coords = np.array([[1, 2], [1 + 2, 2], [1, 2 + 3], [1 - 4, 2 - 6]])
    idx = env.site_indices(coords)
    assert idx[0] == idx[1] == idx[2] == idx[3]


def test_torus_neighbors_roundtrip():
    nb = torus_neighbors((2, 3))
    n = 6
    assert nb.shape == (n, 4)
    # stepping forward then backward returns to the start
    for k in range(0, 4, 2):
        assert (nb[nb[:, k], k + 1] == np.arange(n)).all()


def test_ball_sites_count():
    # |x|_1 <= r in d=2 has 2r^2 + 2r + 1 points
    for r in (1, 3, 5):
        assert ball_sites(2, r).shape[0] == 2 * r * r + 2 * r + 1
    assert ball_sites(1, 4).shape[0] == 9


def test_boxed_sampling_deterministic():
    law = DirichletLaw([1.0, 1.0])
    a = sample_iid_boxed(1, 10, 42, law)
    b = sample_iid_boxed(1, 10, 42, law)
    assert (a.probs == b.probs).all()
    c = sample_iid_boxed(1, 10, 43, law)
    assert np.abs(a.probs - c.probs).max() > 0


def test_point_mass_law_gives_homogeneous_box():
    env = sample_iid_boxed(1, 5, 0, PointMassLaw([0.5, 0.5]))
    assert np.allclose(env.probs, 0.5)
    assert env.kind == "boxed"


def test_moment_norm_values():
    env = make_periodic(1, [1], SRW)
    assert abs(moment_norm(env, 2) - np.log(2) ** 2) < 1e-15
    # ENV_P2 beta=1: larger of the two directional averages
    env2 = make_periodic(1, [2], ENV_P2_ROWS)
    plus = (abs(np.log(0.8)) + abs(np.log(0.3))) / 2
    minus = (abs(np.log(0.2)) + abs(np.log(0.7))) / 2
    assert abs(moment_norm(env2, 1) - max(plus, minus)) < 1e-15
    assert moment_norm(env2, 0) == 1.0


def test_save_load_roundtrip(tmp_path):
    env = make_periodic(1, [2], ENV_P2_ROWS)
    path = tmp_path / "env.json"
    save_env(env, path)
    again = load_env(path)
    assert (again.probs == env.probs).all()
    assert again == env
    assert again.content_hash() == env.content_hash()


def test_load_negative_probability_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "dimension": 1, "kind": "periodic", "cell_dims": [1],
        "probs": [[-0.2, 1.2]],
    }))
    with pytest.raises(InvariantViolation):
        load_env(path)


def test_load_unknown_kind_rejected(tmp_path):
    path = tmp_path / "weird.json"
    path.write_text(json.dumps({
        "dimension": 1, "kind": "aperiodic", "probs": [[0.5, 0.5]],
    }))
    with pytest.raises(ParseError):
        load_env(path)


def test_load_garbage_rejected(tmp_path):
    path = tmp_path / "garbage.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_env(path)


def test_random_environments_row_sums():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(7)))
    for _ in range(20):
        L = int(rng.integers(1, 9))
        env = make_periodic(1, [L], rng.dirichlet([1.0, 1.0], size=L))
        assert np.abs(env.probs.sum(axis=1) - 1.0).max() < 1e-12
        assert np.isfinite(moment_norm(env, 1 + env.alpha))


def test_boxed_site_lookup():
    env = sample_iid_boxed(2, 3, 1, DirichletLaw(np.ones(4)))
    inside = env.site_indices(np.array([[1, 1]]))[0]
    assert inside >= 0
    outside = env.site_indices(np.array([[3, 3]]))[0]
    assert outside == -1
