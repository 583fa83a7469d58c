"""Path sums, multilinear interpolation, and sublinearity diagnostics.

A corrector's edge function integrates to a lattice function f (path sums
from the origin); f extends to real arguments by multilinear interpolation
over unit cubes, and the scaled family f_hat(n s)/n measures how fast the
sup of |f| over growing balls dies relative to n.
"""

import numpy as np

from .errors import (
    ClassKError,
    EdgeUndefined,
    NotNearestNeighbor,
    OutOfBox,
)
from .lattice_env import step_vectors, torus_neighbors

MEAN_ZERO_TOL = 1e-9
LOOP_TOL = 1e-10


class PeriodicEdgeField:
    """Edge function F(x, e) given per cell site and direction, torus-wrapped.

    Construction validates the corrector class conditions: cell mean zero in
    every direction, antisymmetry under edge reversal, and consistency of
    all loop sums (which yields the periodic potential used for fast path
    sums).  The moment condition is automatic on a finite cell and only
    recorded.
    """

    def __init__(self, cell_dims, values):
        self.cell_dims = tuple(int(c) for c in cell_dims)
        self.d = len(self.cell_dims)
        self.values = np.asarray(values, dtype=float)
        n = int(np.prod(self.cell_dims))
        if self.values.shape != (n, 2 * self.d):
            raise ClassKError(
                f"edge values must have shape ({n}, {2 * self.d})"
            )
        self._neighbors = torus_neighbors(self.cell_dims)

        opp = np.arange(2 * self.d) ^ 1
        back = self.values + self.values[self._neighbors, opp[None, :]]
        if np.abs(back).max() > LOOP_TOL:
            raise ClassKError("edge reversal antisymmetry fails (closed loop)")
        means = self.values.mean(axis=0)
        if np.abs(means).max() > MEAN_ZERO_TOL:
            k = int(np.argmax(np.abs(means)))
            raise ClassKError(
                f"mean-zero fails in direction {k}: mean {means[k]:.3e}"
            )
        self.potential = self._integrate_potential()
        self.moment = float(np.abs(self.values).max())

    def _integrate_potential(self):
        """Integrate F to a periodic potential and verify loop consistency."""
        n = int(np.prod(self.cell_dims))
        psi = np.full(n, np.nan)
        psi[0] = 0.0
        frontier = [0]
        while frontier:
            new = []
            for x in frontier:
                for k in range(2 * self.d):
                    y = self._neighbors[x, k]
                    val = psi[x] + self.values[x, k]
                    if np.isnan(psi[y]):
                        psi[y] = val
                        new.append(y)
                    elif abs(psi[y] - val) > LOOP_TOL:
                        raise ClassKError(
                            "loop sums are inconsistent: F is not a gradient"
                        )
            frontier = new
        # Wrap loops: crossing a full period in any direction must telescope
        # to zero, otherwise the lift acquires a linear (non-sublinear) part.
        for k in range(2 * self.d):
            nb = self._neighbors[:, k]
            resid = psi[nb] - psi - self.values[:, k]
            if np.abs(resid).max() > LOOP_TOL:
                raise ClassKError("period-wrapping loop sum is nonzero")
        return psi

    @classmethod
    def from_corrector(cls, corrector):
        return cls(corrector.cell_dims, corrector.edge_values())

    @classmethod
    def from_direction_constants(cls, d, constants):
        """Constant edge field F(x, e) = c_e on a one-site cell.

        The gradient of a linear potential <c, x> has this form; it fails
        the mean-zero condition whenever c != 0.
        """
        return cls((1,) * d, np.asarray(constants, dtype=float)[None, :])


class PathSumField:
    """Lattice function f(z): sum of the edge field along any 0 -> z path."""

    def __init__(self, edge_field):
        if not isinstance(edge_field, PeriodicEdgeField):
            edge_field = PeriodicEdgeField.from_corrector(edge_field)
        self.field = edge_field
        self.d = edge_field.d
        self.radius = np.inf

    @classmethod
    def from_corrector(cls, corrector):
        return cls(PeriodicEdgeField.from_corrector(corrector))

    def potential_at(self, coords):
        coords = np.asarray(coords, dtype=np.int64)
        reduced = coords % np.array(self.field.cell_dims)
        idx = np.ravel_multi_index(
            tuple(reduced[..., i] for i in range(self.d)), self.field.cell_dims
        )
        return self.field.potential[idx]

    def f(self, z):
        """f(z) via the periodic potential lift (telescoped path sum)."""
        z = np.asarray(z, dtype=np.int64)
        origin = np.zeros(self.d, dtype=np.int64)
        return self.potential_at(z) - self.potential_at(origin)

    def f_many(self, coords):
        origin = np.zeros(self.d, dtype=np.int64)
        return self.potential_at(coords) - float(self.potential_at(origin))

    def bound(self):
        """2 * sup |potential|, an a priori bound on |f|."""
        pot = self.field.potential
        return 2.0 * float(np.abs(pot).max())


class BoxedEdgeField:
    """Edge field known only on the l1 ball of a given radius.

    No periodic structure is assumed, so f(z) is the sum of the stored
    edge values along the canonical axis-by-axis path; edges the path needs
    but the table lacks raise EdgeUndefined, and targets outside the ball
    raise OutOfBox.
    """

    def __init__(self, d, radius, edges):
        self.d = d
        self.radius = float(radius)
        self.edges = dict(edges)  # (site tuple, direction index) -> value

    @classmethod
    def from_periodic(cls, field, radius):
        """Restriction of a periodic field's edges to the l1 ball."""
        from .lattice_env import ball_sites

        steps = step_vectors(field.d)
        edges = {}
        for site in ball_sites(field.d, int(radius)):
            reduced = site % np.array(field.cell_dims)
            idx = np.ravel_multi_index(tuple(reduced), field.cell_dims)
            for k in range(2 * field.d):
                if np.abs(site + steps[k]).sum() <= radius:
                    edges[(tuple(site), k)] = field.values[idx, k]
        return cls(field.d, radius, edges)

    def f(self, z):
        z = np.asarray(z, dtype=np.int64)
        if np.abs(z).sum() > self.radius:
            raise OutOfBox(f"point {tuple(z)} outside radius {self.radius}")
        steps = step_vectors(self.d)
        total = 0.0
        here = np.zeros(self.d, dtype=np.int64)
        for point in canonical_path(z)[1:]:
            delta = point - here
            k = int(np.argmax(np.all(steps == delta, axis=1)))
            key = (tuple(here), k)
            if key not in self.edges:
                raise EdgeUndefined(f"no edge stored at {key}")
            total += self.edges[key]
            here = point
        return total

    def f_many(self, coords):
        return np.array([self.f(c) for c in np.asarray(coords)])


def canonical_path(z):
    """Axis-by-axis staircase from 0 to z: all e1 steps, then e2, ..."""
    z = np.asarray(z, dtype=np.int64)
    points = [np.zeros(len(z), dtype=np.int64)]
    for axis in range(len(z)):
        step = np.sign(z[axis])
        for _ in range(abs(int(z[axis]))):
            nxt = points[-1].copy()
            nxt[axis] += step
            points.append(nxt)
    return np.array(points)


def path_sum(field, z, path=None):
    """Sum of the edge field along a nearest-neighbor path from 0 to z.

    With no explicit path the canonical axis-by-axis staircase is used.
    Class membership makes the value path independent; this is what the
    path-independence property tests exercise.
    """
    if isinstance(field, PathSumField):
        edge = field.field
    elif isinstance(field, PeriodicEdgeField):
        edge = field
    else:
        edge = PeriodicEdgeField.from_corrector(field)
    z = np.asarray(z, dtype=np.int64)
    if path is None:
        path = canonical_path(z)
    path = np.asarray(path, dtype=np.int64)
    if path.ndim == 1:
        path = path[:, None]
    if not np.array_equal(path[0], np.zeros(edge.d, dtype=np.int64)):
        raise NotNearestNeighbor("path must start at the origin")
    if not np.array_equal(path[-1], z):
        raise NotNearestNeighbor("path must end at the requested point")
    diffs = np.diff(path, axis=0)
    if len(diffs) and np.any(np.abs(diffs).sum(axis=1) != 1):
        raise NotNearestNeighbor("path contains a non-unit step")
    total = 0.0
    steps = step_vectors(edge.d)
    for start, delta in zip(path[:-1], diffs):
        k = int(np.argmax(np.all(steps == delta, axis=1)))
        x_red = np.asarray(start, dtype=np.int64) % np.array(edge.cell_dims)
        idx = np.ravel_multi_index(tuple(x_red), edge.cell_dims)
        total += edge.values[idx, k]
    return float(total)


def interpolation_weights(t):
    """Multilinear corner weights a_t(eta, t) over the cube containing t.

    Cube assignment is floor based; integer coordinates attach to the cube
    on their positive side.  Weights are nonnegative and sum to one.
    """
    t = np.asarray(t, dtype=float)
    d = t.size
    base = np.floor(t).astype(np.int64)
    frac = t - base
    corners = np.indices((2,) * d).reshape(d, -1).T
    w = np.prod(np.where(corners == 1, frac, 1.0 - frac), axis=1)
    assert np.all(w >= -1e-15)
    assert abs(w.sum() - 1.0) < 1e-12
    return base, corners, np.clip(w, 0.0, None)


def interpolate(field, t):
    """f_hat(t): multilinear interpolation of the path-sum field."""
    t = np.asarray(t, dtype=float)
    if np.abs(t).sum() > field.radius:
        raise OutOfBox(f"point {t} outside the field's available ball")
    base, corners, w = interpolation_weights(t)
    values = field.f_many(base[None, :] + corners)
    return float(w @ values)


def g_n(field, n, s):
    """Scaled interpolant f_hat(n s) / n."""
    s = np.asarray(s, dtype=float)
    return interpolate(field, n * s) / n


def sublinearity_profile(field, n_list, sample_count=0, seed=0):
    """sup over |z|_1 <= n of |f(z)| / n, per n.

    Exact scan while the ball is small enough to enumerate; above that the
    sup is sampled with `sample_count` seeded lattice points per radius and
    flagged as sampled in the output.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = []
    for n in n_list:
        exact = (2 * n + 1) ** field.d <= 200_000
        if exact:
            from .lattice_env import ball_sites

            pts = ball_sites(field.d, n)
        else:
            if sample_count < 1:
                raise ValueError("sample_count needed for sampled radii")
            cube = rng.integers(-n, n + 1, size=(4 * sample_count, field.d))
            keep = np.abs(cube).sum(axis=1) <= n
            pts = cube[keep][:sample_count]
        sup = float(np.abs(field.f_many(pts)).max())
        out.append({"n": int(n), "value": sup / n, "exact": exact,
                    "samples": 0 if exact else int(len(pts))})
    return out
