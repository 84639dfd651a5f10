"""Gauss-Legendre rules and priors on the parameter box."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Quadrature did not reach the requested accuracy."""


@lru_cache(maxsize=32)
def _legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


def composite_rule(a: float, b: float, nodes: int = 64, breaks=()) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``[a, b]``.

    Each panel between consecutive breakpoints gets ``nodes`` points, so
    piecewise-smooth integrands with kinks at the breakpoints integrate at
    the full Gauss-Legendre order.
    """
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    edges = np.unique(np.concatenate([[a, b], [x for x in breaks if a < x < b]]))
    x, w = _legendre(nodes)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def tensor_rule(rules) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of one-dimensional rules ``[(x_1, w_1), ...]``."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, wts


def arcsine_rule(a: float, b: float, nodes: int = 64, panels: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Rule on ``[a, b]`` graded towards both endpoints.

    Substitutes ``z = a + (b - a) sin^2(theta)``, which removes the
    inverse-square-root endpoint behaviour of Jeffreys-type integrands and
    of binomial entropies near 0 and 1.  All nodes are strictly interior.
    """
    th, wt = composite_rule(0.0, 0.5 * np.pi, nodes, np.linspace(0, 0.5 * np.pi, panels + 1)[1:-1])
    s, c = np.sin(th), np.cos(th)
    return a + (b - a) * s**2, wt * (b - a) * 2.0 * s * c


@dataclass
class Prior:
    """Prior ``mu`` on a box of moment coordinates.

    Parameters
    ----------
    family : Family
    kind : {"uniform", "jeffreys"}
    support : sequence of (lo, hi) per coordinate, or a single pair reused
        for every coordinate.  Defaults to ``[0.1, 0.9]`` for one
        dimension and ``[0.1, 0.9 / d]^d`` otherwise, which stays inside
        the simplex.  The box must lie in the closed probability simplex;
        codes additionally need it inside the family domain.
    nodes : Gauss-Legendre nodes per panel and dimension.
    graded : use the endpoint-graded rule (:func:`arcsine_rule`), for
        supports that touch the boundary of the simplex.
    """

    family: object
    kind: str = "uniform"
    support: tuple | None = None
    nodes: int = 64
    graded: bool = False
    _norm: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        if self.kind not in ("uniform", "jeffreys"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        d = self.family.d
        if self.support is None:
            hi = 0.9 if d == 1 else 0.9 / d
            self.support = tuple((0.1, hi) for _ in range(d))
        else:
            sup = np.asarray(self.support, dtype=float)
            if sup.shape == (2,):
                sup = np.tile(sup, (d, 1))
            if sup.shape != (d, 2) or np.any(sup[:, 1] <= sup[:, 0]):
                raise ValueError(f"bad prior support {self.support!r} for d={d}")
            self.support = tuple((float(lo), float(hi)) for lo, hi in sup)
        corners = np.array(np.meshgrid(*self.support, indexing="ij")).reshape(d, -1).T
        p = self.family.probs(corners)
        if np.any(p < -1e-15):
            raise ValueError(f"prior support {self.support} leaves the probability simplex")
        if self.kind == "uniform":
            self._norm = self.box_volume
        else:
            _, w = self._raw_rule(self.nodes)
            self._norm = float(np.sum(w))

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def box_volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.support]))

    def _unnormalized(self, z) -> np.ndarray:
        z = self.family.as_points(z)
        if self.kind == "uniform":
            return np.ones(z.shape[:-1])
        return np.exp(0.5 * self.family.log_det_fisher(z))

    def density(self, z) -> np.ndarray:
        """Normalised density with respect to Lebesgue measure on the box."""
        return self._unnormalized(z) / self._norm

    def lebesgue_rule(self, nodes: int | None = None, breaks=None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights integrating against Lebesgue measure on the box."""
        nodes = nodes or self.nodes
        if self.graded:
            panels = [max(8, len(b) + 1) if b is not None else 8 for b in (breaks or [None] * self.d)]
            rules = [arcsine_rule(lo, hi, nodes, m) for (lo, hi), m in zip(self.support, panels)]
        else:
            breaks = breaks or [()] * self.d
            rules = [composite_rule(lo, hi, nodes, br) for (lo, hi), br in zip(self.support, breaks)]
        return tensor_rule(rules)

    def _raw_rule(self, nodes, breaks=None):
        pts, wts = self.lebesgue_rule(nodes, breaks)
        return pts, wts * self._unnormalized(pts)

    def rule(self, nodes: int | None = None, breaks=None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``(N, d)`` and weights ``(N,)`` with ``sum(w f(z)) ~ int f dmu``.

        ``breaks`` is an optional per-dimension list of panel boundaries;
        for graded rules only the number of panels is used.
        """
        pts, wts = self._raw_rule(nodes or self.nodes, breaks)
        return pts, wts / self._norm

    def check_normalization(self, tol: float = 1e-8) -> float:
        """Total mass at ``nodes`` and at twice as many; raises if either is off by > tol."""
        masses = [float(np.sum(self.rule(m)[1])) for m in (self.nodes, 2 * self.nodes)]
        err = max(abs(m - 1.0) for m in masses)
        if err > tol:
            raise QuadratureError(f"prior mass {masses} deviates from 1 by {err:.3g}")
        return err
