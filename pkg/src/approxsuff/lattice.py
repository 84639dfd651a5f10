"""Cubic quantization grids ``(t / sqrt(n)) Z^d`` intersected with the family domain.

Two coordinate systems are supported:

``moment``
    the grid lives in moment coordinates ``z`` (cell probabilities);
``statistic``
    the grid lives in mean-statistic coordinates ``eta = E_z[Y]``, which is
    an affine image of ``z``.  For the Bernoulli family ``eta = 2 z - 1``,
    so the grid is twice as fine in ``z`` and anchored at ``z = 1/2``.

Points are always reported in moment coordinates, listed in
lexicographic order of their grid coordinates.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

COORDS = ("moment", "statistic")
METRICS = ("euclid", "fisher")

_CHUNK = 4096


class LatticeError(ValueError):
    """The grid has no point inside the domain."""


class Lattice:
    """Finite set of grid points with nearest-point maps.

    Parameters
    ----------
    family : Family
    n, t : sample size and span; the grid spacing is ``t / sqrt(n)``.
    coords : {"moment", "statistic"}
    index : (M, d) integer grid coordinates of the retained points, or None
        to enumerate every grid point inside the domain.
    """

    def __init__(self, family, n: int, t: float, coords: str = "moment", index=None):
        if not t > 0 or n < 1:
            raise ValueError(f"need t > 0 and n >= 1, got t={t}, n={n}")
        if coords not in COORDS:
            raise ValueError(f"coords must be one of {COORDS}, got {coords!r}")
        self.family = family
        self.n = int(n)
        self.t = float(t)
        self.coords = coords
        self.spacing = self.t / math.sqrt(self.n)
        self._A, self._c = _affine(family, coords)
        self._Ainv = np.linalg.inv(self._A)
        if index is None:
            index = self._enumerate()
        index = np.asarray(index, dtype=np.int64).reshape(-1, family.d)
        if len(index) == 0:
            raise LatticeError(
                f"no grid point of spacing {self.spacing:.4g} lies in the domain "
                f"(n={n}, t={t}, eps_bd={family.eps_bd})"
            )
        order = np.lexsort(index.T[::-1])
        self.index = index[order]
        self.index.flags.writeable = False
        self.points = self.from_grid(self.index * self.spacing)
        self.points.flags.writeable = False

    # -- construction ----------------------------------------------------

    def _enumerate(self) -> np.ndarray:
        f = self.family
        vertices = _domain_vertices(f)
        g = self.to_grid(vertices) / self.spacing
        lo = np.floor(g.min(axis=0) - 1e-9).astype(int)
        hi = np.ceil(g.max(axis=0) + 1e-9).astype(int)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        if f.d == 1:
            cand = axes[0][:, None]
        else:
            cand = np.array(list(itertools.product(*axes)), dtype=np.int64)
        z = self.from_grid(cand * self.spacing)
        return cand[f.in_domain(z, tol=1e-12)]

    def subset(self, keep) -> "Lattice":
        """Lattice restricted to the points selected by ``keep`` (mask or indices)."""
        return Lattice(self.family, self.n, self.t, self.coords, self.index[keep])

    # -- coordinates -------------------------------------------------------

    def to_grid(self, z) -> np.ndarray:
        z = self.family.as_points(z)
        return z @ self._A.T + self._c

    def from_grid(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        return (g - self._c) @ self._Ainv.T

    # -- basic facts ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return (
            f"Lattice(n={self.n}, t={self.t}, coords={self.coords!r}, "
            f"size={len(self)}, spacing={self.spacing:.4g})"
        )

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def code_length(self) -> float:
        """``ln |points|`` in nats."""
        return math.log(len(self.points))

    # -- nearest-point maps ----------------------------------------------

    def locate(self, z, metric: str = "euclid", J=None) -> np.ndarray:
        """Index of the nearest point for each query.

        ``euclid`` measures distance in grid coordinates.  ``fisher`` uses
        the quadratic form ``(z' - z)^T J (z' - z)`` in moment coordinates,
        with ``J`` evaluated at the query unless given.  Ties go to the
        lexicographically smallest point.
        """
        if metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
        z = self.family.as_points(z)
        flat = z.reshape(-1, self.family.d)
        if metric == "euclid" or self.family.d == 1:
            # scalar weights cannot change a one-dimensional argmin
            out = self._locate_euclid(flat)
        else:
            if J is None:
                J = self.family.fisher(flat)
            J = np.broadcast_to(np.asarray(J, dtype=float), flat.shape + (self.family.d,))
            out = self._locate_quadratic(flat, J.reshape(-1, self.family.d, self.family.d))
        return out.reshape(z.shape[:-1])

    def nearest_euclid(self, z) -> np.ndarray:
        return self.points[self.locate(z, "euclid")]

    def nearest_fisher(self, z, J=None) -> np.ndarray:
        return self.points[self.locate(z, "fisher", J)]

    def nearest(self, z, metric: str = "euclid", J=None) -> np.ndarray:
        return self.points[self.locate(z, metric, J)]

    def _locate_euclid(self, z: np.ndarray) -> np.ndarray:
        g = self.to_grid(z)
        if self.family.d == 1:
            grid = self.index[:, 0] * self.spacing
            x = g[:, 0]
            if len(grid) == 1:
                return np.zeros(len(x), dtype=np.int64)
            right = np.clip(np.searchsorted(grid, x), 1, len(grid) - 1)
            left = right - 1
            dl = np.abs(x - grid[left])
            dr = np.abs(grid[right] - x)
            return np.where(dr < dl - 1e-9 * self.spacing, right, left)
        I = np.broadcast_to(np.eye(self.family.d), (len(z), self.family.d, self.family.d))
        return self._locate_quadratic(g, I, grid_coords=True)

    def _locate_quadratic(self, z: np.ndarray, J: np.ndarray, grid_coords: bool = False) -> np.ndarray:
        pts = self.index * self.spacing if grid_coords else self.points
        out = np.empty(len(z), dtype=np.int64)
        for s in range(0, len(z), _CHUNK):
            zq, Jq = z[s : s + _CHUNK], J[s : s + _CHUNK]
            diff = pts[None, :, :] - zq[:, None, :]
            q = np.einsum("bmi,bij,bmj->bm", diff, Jq, diff)
            best = q.min(axis=1, keepdims=True)
            # first index within rounding of the minimum = lexicographic tie-break
            tie = q <= best + 1e-12 * np.maximum(best, self.spacing**2)
            out[s : s + _CHUNK] = np.argmax(tie, axis=1)
        return out

    def voronoi_breaks(self) -> list[np.ndarray]:
        """Per-axis cell boundaries in moment coordinates (exact for one dimension)."""
        out = []
        for i in range(self.family.d):
            u = np.unique(self.points[:, i])
            out.append(0.5 * (u[1:] + u[:-1]))
        return out

    # -- cells of the type space --------------------------------------------

    def cell_assignment(self, typespace, metric: str = "euclid") -> np.ndarray:
        """Lattice index of the (clamped) MLE of every type."""
        zhat = self.family.mle(typespace.types)
        return self.locate(zhat, metric)

    def cell_types(self, point, typespace, metric: str = "euclid") -> np.ndarray:
        """Types whose MLE maps to ``point``; rows of ``typespace.types``."""
        point = self.family.as_points(point).reshape(-1)
        j = int(self.locate(point[None, :], "euclid")[0])
        if not np.allclose(self.points[j], point, atol=1e-12):
            raise ValueError(f"{point} is not a lattice point")
        return typespace.types[self.cell_assignment(typespace, metric) == j]


def _affine(family, coords: str):
    d = family.d
    if coords == "moment":
        return np.eye(d), np.zeros(d)
    # eta = Y^T p with p = e_0 + B z
    Y = family.statistics()
    B = np.vstack([-np.ones((1, d)), np.eye(d)])
    e0 = np.zeros(family.k)
    e0[0] = 1.0
    return Y.T @ B, Y.T @ e0


def _domain_vertices(family) -> np.ndarray:
    """Vertices of the domain simplex ``{p_i >= eps}`` in moment coordinates."""
    k, eps = family.k, family.eps_bd
    top = 1.0 - (k - 1) * eps
    P = np.full((k, k), eps)
    np.fill_diagonal(P, top)
    return P[:, 1:]


def build_lattice(family, n: int, t: float, coords: str = "moment") -> Lattice:
    return Lattice(family, n, t, coords)
