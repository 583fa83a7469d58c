"""Lattice environments: transition probability fields on Z^d.

An environment assigns to each lattice site a probability row over the 2d
signed unit directions, ordered (+e1, -e1, +e2, -e2, ...).  Two concrete
kinds are supported: a periodic cell extended over all of Z^d by torus
translation, and a single i.i.d. draw on a finite l1 ball.
"""

import hashlib
import json

import numpy as np

from .errors import (
    BoxTooSmall,
    InvariantViolation,
    NonPositiveEntry,
    ParseError,
    RowSumError,
)

ROW_SUM_TOL = 1e-12


def step_vectors(d):
    """Signed unit vectors in the fixed direction order, shape (2d, d).

    Index 2k is +e_{k+1}, index 2k+1 is -e_{k+1}.
    """
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(d):
        steps[2 * k, k] = 1
        steps[2 * k + 1, k] = -1
    return steps


def opposite_direction(index):
    """Index of the negated direction (2k <-> 2k+1)."""
    return index ^ 1


def tilt_values(lam):
    """<lambda, e> for every direction, shape (2d,)."""
    lam = np.asarray(lam, dtype=float)
    return np.stack([lam, -lam], axis=1).reshape(-1)


def _validate_rows(probs, d):
    probs = np.array(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] != 2 * d:
        raise InvariantViolation(
            f"probability table must have 2d={2 * d} columns, got shape {probs.shape}"
        )
    if np.any(probs <= 0.0):
        raise NonPositiveEntry("transition probabilities must be strictly positive")
    sums = probs.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumError(f"row {i} sums to {sums[i]!r}, off by more than {ROW_SUM_TOL}")
    # Renormalize rows that are inside the tolerance so downstream identities
    # (row sums exactly 1 in floating point) hold as tightly as possible.
    return probs / sums[:, None]


def torus_sites(cell_dims):
    """All cell sites in lexicographic order, most significant coordinate first."""
    grids = np.indices(tuple(cell_dims)).reshape(len(cell_dims), -1).T
    return np.ascontiguousarray(grids)


def torus_neighbors(cell_dims):
    """Site index of x+e on the torus for every site and direction, shape (n, 2d)."""
    cell_dims = tuple(cell_dims)
    d = len(cell_dims)
    sites = torus_sites(cell_dims)
    steps = step_vectors(d)
    shifted = (sites[:, None, :] + steps[None, :, :]) % np.array(cell_dims)
    return np.ravel_multi_index(
        tuple(shifted[..., i] for i in range(d)), cell_dims
    ).astype(np.int64)


def ball_sites(d, radius):
    """Sites of the l1 ball |x|_1 <= radius in lexicographic order."""
    side = 2 * radius + 1
    cube = np.indices((side,) * d).reshape(d, -1).T - radius
    keep = np.abs(cube).sum(axis=1) <= radius
    return np.ascontiguousarray(cube[keep])


class Environment:
    """Immutable transition probability field.

    Attributes
    ----------
    dimension : int
    kind : "periodic" or "boxed"
    cell_dims : tuple of int (periodic only)
    radius, seed : int (boxed only)
    probs : ndarray (n_sites, 2d), one row per site in enumeration order
    alpha : float, moment exponent margin
    """

    def __init__(self, dimension, kind, probs, cell_dims=None, radius=None,
                 seed=None, alpha=1.0):
        if dimension < 1:
            raise InvariantViolation("dimension must be positive")
        if alpha <= 0:
            raise InvariantViolation("alpha must be positive")
        self.dimension = int(dimension)
        self.kind = kind
        self.alpha = float(alpha)
        self.probs = _validate_rows(probs, self.dimension)
        self.probs.setflags(write=False)
        self.log_probs = np.log(self.probs)
        self.log_probs.setflags(write=False)

        if kind == "periodic":
            cell_dims = tuple(int(c) for c in cell_dims)
            if len(cell_dims) != self.dimension or any(c < 1 for c in cell_dims):
                raise InvariantViolation(f"bad cell dims {cell_dims}")
            if self.probs.shape[0] != int(np.prod(cell_dims)):
                raise InvariantViolation(
                    "periodic table needs one row per cell site"
                )
            self.cell_dims = cell_dims
            self.radius = None
            self.seed = None
        elif kind == "boxed":
            self.radius = int(radius)
            if self.radius < 1:
                raise InvariantViolation("radius must be positive")
            self.seed = None if seed is None else int(seed)
            self.cell_dims = None
            self._sites = ball_sites(self.dimension, self.radius)
            if self.probs.shape[0] != self._sites.shape[0]:
                raise InvariantViolation("boxed table needs one row per ball site")
            # Dense cube lookup: coords + radius raveled -> row index, -1 outside.
            side = 2 * self.radius + 1
            lut = np.full(side ** self.dimension, -1, dtype=np.int64)
            flat = np.ravel_multi_index(
                tuple((self._sites + self.radius)[:, i] for i in range(self.dimension)),
                (side,) * self.dimension,
            )
            lut[flat] = np.arange(self._sites.shape[0])
            self._lut = lut
        else:
            raise InvariantViolation(f"unknown environment kind {kind!r}")

    @property
    def n_sites(self):
        return self.probs.shape[0]

    def sites(self):
        """Enumerated sites, shape (n_sites, d), in the documented order."""
        if self.kind == "periodic":
            return torus_sites(self.cell_dims)
        return self._sites.copy()

    def site_indices(self, coords):
        """Row indices for lattice points, shape (..., d) -> (...,).

        Periodic environments reduce mod the cell; boxed environments return
        -1 for points outside the ball.
        """
        coords = np.asarray(coords, dtype=np.int64)
        if self.kind == "periodic":
            reduced = coords % np.array(self.cell_dims)
            return np.ravel_multi_index(
                tuple(reduced[..., i] for i in range(self.dimension)), self.cell_dims
            ).astype(np.int64)
        side = 2 * self.radius + 1
        shifted = coords + self.radius
        inside = np.all((shifted >= 0) & (shifted < side), axis=-1)
        flat = np.zeros(coords.shape[:-1], dtype=np.int64)
        if np.any(inside):
            flat_in = np.ravel_multi_index(
                tuple(shifted[inside][..., i] for i in range(self.dimension)),
                (side,) * self.dimension,
            )
            flat[inside] = self._lut[flat_in]
        flat[~inside] = -1
        return flat

    def rows(self, coords):
        """Probability rows at lattice points; raises BoxTooSmall off the ball."""
        idx = self.site_indices(coords)
        if np.any(idx < 0):
            raise BoxTooSmall("lattice point outside the boxed environment")
        return self.probs[idx]

    def covers_radius(self, n):
        return self.kind == "periodic" or self.radius >= n

    def require_radius(self, n):
        if not self.covers_radius(n):
            raise BoxTooSmall(
                f"boxed environment radius {self.radius} < required {n}"
            )

    def to_dict(self):
        out = {
            "dimension": self.dimension,
            "kind": self.kind,
            "alpha": self.alpha,
            "probs": [[float(v) for v in row] for row in self.probs],
        }
        if self.kind == "periodic":
            out["cell_dims"] = list(self.cell_dims)
        else:
            out["radius"] = self.radius
            if self.seed is not None:
                out["seed"] = self.seed
        return out

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.kind == other.kind
            and self.cell_dims == other.cell_dims
            and self.radius == other.radius
            and self.probs.shape == other.probs.shape
            and np.array_equal(self.probs, other.probs)
        )


def make_periodic(d, cell_dims, probs, alpha=1.0):
    """Periodic environment: p(x, e) = p(x mod cell_dims, e)."""
    return Environment(d, "periodic", probs, cell_dims=cell_dims, alpha=alpha)


class PointMassLaw:
    """Degenerate law: every site receives the same row."""

    def __init__(self, row):
        self.row = _validate_rows(np.asarray(row, dtype=float)[None, :],
                                  len(row) // 2)[0]

    def sample(self, rng, count):
        return np.tile(self.row, (count, 1))


class DirichletLaw:
    """Independent Dirichlet rows on the 2d-simplex."""

    def __init__(self, alphas):
        self.alphas = np.asarray(alphas, dtype=float)
        if np.any(self.alphas <= 0):
            raise InvariantViolation("Dirichlet parameters must be positive")

    def sample(self, rng, count):
        return rng.dirichlet(self.alphas, size=count)


class FiniteSupportLaw:
    """Finitely supported law: pick one of the given rows per site."""

    def __init__(self, rows, weights=None):
        rows = np.asarray(rows, dtype=float)
        self.rows = _validate_rows(rows, rows.shape[1] // 2)
        if weights is None:
            weights = np.full(len(rows), 1.0 / len(rows))
        self.weights = np.asarray(weights, dtype=float)
        self.weights = self.weights / self.weights.sum()

    def sample(self, rng, count):
        picks = rng.choice(len(self.rows), size=count, p=self.weights)
        return self.rows[picks]


def sample_iid_boxed(d, radius, seed, law, alpha=1.0):
    """One quenched i.i.d. draw on the l1 ball of the given radius.

    Deterministic function of (seed, radius, law): rows are drawn with a
    counter-based generator, one row per site in enumeration order.
    """
    n = ball_sites(d, radius).shape[0]
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    rows = law.sample(rng, n)
    return Environment(d, "boxed", rows, radius=radius, seed=seed, alpha=alpha)


def moment_norm(env, beta):
    """max_e of the site average of |log p(x, e)|^beta."""
    if beta < 0:
        raise InvariantViolation("beta must be nonnegative")
    vals = np.abs(env.log_probs) ** beta
    return float(vals.mean(axis=0).max())


def save_env(env, path):
    with open(path, "w") as fh:
        json.dump(env.to_dict(), fh, indent=1)
        fh.write("\n")


def load_env(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    return env_from_dict(data, where=str(path))


def env_from_dict(data, where="<dict>"):
    if not isinstance(data, dict):
        raise ParseError(f"{where}: expected a JSON object")
    for field in ("dimension", "kind", "probs"):
        if field not in data:
            raise ParseError(f"{where}: missing field {field!r}")
    kind = data["kind"]
    if kind == "periodic":
        if "cell_dims" not in data:
            raise ParseError(f"{where}: periodic environment needs 'cell_dims'")
        return Environment(
            data["dimension"], "periodic", data["probs"],
            cell_dims=data["cell_dims"], alpha=data.get("alpha", 1.0),
        )
    if kind == "boxed":
        if "radius" not in data:
            raise ParseError(f"{where}: boxed environment needs 'radius'")
        return Environment(
            data["dimension"], "boxed", data["probs"],
            radius=data["radius"], seed=data.get("seed"),
            alpha=data.get("alpha", 1.0),
        )
    raise ParseError(f"{where}: unknown kind tag {kind!r}")
