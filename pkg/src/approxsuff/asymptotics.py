"""Limit objects and converse machinery, evaluated at finite n.

* quantized standard normal densities and their distance to the normal;
* the asymptotic expansion of the Bayes mixture redundancy (mutual
  information between parameter and sample) with its Jeffreys terms;
* the exact three-term decomposition of mixture relative entropy;
* local asymptotic normality of the MLE, measured by Kolmogorov distance;
* a packing argument certifying lower bounds on the variational error of
  any code with few codewords, and Lloyd-optimal point codebooks.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, ndtr
from scipy.stats import binom

from .codec import Code, FixedDistributionCode, PointCodebook, kl_boundaries
from .quadrature import composite_rule
from .typespace import ExchDist, enumerate_types, kl_exch, kl_log

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class AccuracyError(RuntimeError):
    """A numerical identity or normalisation failed its tolerance."""


class AbsoluteContinuityError(ValueError):
    """A relative entropy in an identity is infinite."""


# -- quantized Gaussian ----------------------------------------------------------


class QuantGaussian:
    """Standard normal density made piecewise constant on a shifted grid.

    On every cell ``(alpha + j t, alpha + (j + 1) t]`` the density equals
    ``phi(alpha + (j + 1/2) t)`` up to a global normalising constant.
    Integrals against the normal are done cell by cell in closed form over
    ``|u| <= cutoff``; the remaining cells are summed separately and
    reported as ``tail``.
    """

    def __init__(self, t: float, alpha: float, cutoff: float = 12.0):
        if not t > 0:
            raise ValueError(f"span must be positive, got {t}")
        if not -1e-15 <= alpha <= t + 1e-15:
            raise ValueError(f"offset must lie in [0, t] = [0, {t}], got {alpha}")
        self.t = float(t)
        self.alpha = float(alpha)
        self.cutoff = float(cutoff)
        far = 40.0  # phi underflows beyond this
        j = np.arange(math.floor((-far - alpha) / t) - 1, math.ceil((far - alpha) / t) + 1)
        self.lo = alpha + j * t
        self.hi = self.lo + t
        mid = self.lo + 0.5 * t
        logv = -0.5 * mid**2 - LOG_SQRT_2PI
        self.log_norm = float(logsumexp(logv) + math.log(t))
        self.log_values = logv - self.log_norm
        self.values = np.exp(self.log_values)
        mass = math.fsum(self.values * t)
        if abs(mass - 1.0) > 1e-9:
            raise AccuracyError(f"quantized density integrates to {mass}")
        self.core = (self.hi > -self.cutoff) & (self.lo < self.cutoff)

    def density(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        j = np.ceil((u - self.alpha) / self.t).astype(int) - 1
        idx = j - int(round((self.lo[0] - self.alpha) / self.t))
        ok = (idx >= 0) & (idx < len(self.values))
        return np.where(ok, self.values[np.clip(idx, 0, len(self.values) - 1)], 0.0)

    def _kl_cells(self) -> np.ndarray:
        lo, hi, lv, v = self.lo, self.hi, self.log_values, self.values
        # int v (log v + u^2/2 + log sqrt(2 pi)) du over (lo, hi]
        return v * ((hi - lo) * (lv + LOG_SQRT_2PI) + (hi**3 - lo**3) / 6.0)

    def _l1_cells(self) -> np.ndarray:
        lo, hi, v = self.lo, self.hi, self.values
        # phi > v exactly on |u| < r
        arg = -2.0 * (self.log_values + LOG_SQRT_2PI)
        r = np.sqrt(np.maximum(arg, 0.0))
        cuts = np.stack([lo, np.clip(-r, lo, hi), np.clip(r, lo, hi), hi], axis=1)
        a, b = cuts[:, :-1], cuts[:, 1:]
        gauss = _normal_mass(a, b)
        flat = v[:, None] * (b - a)
        sign = np.array([1.0, -1.0, 1.0])  # v above phi outside (-r, r)
        return np.sum(sign * (flat - gauss), axis=1)

    def kl(self) -> float:
        """``D(phi_{t, alpha} || phi)`` in nats."""
        cells = self._kl_cells()
        self.kl_tail = math.fsum(cells[~self.core])
        return max(math.fsum(cells[self.core]) + self.kl_tail, 0.0)

    def l1(self) -> float:
        """``||phi_{t, alpha} - phi||_1`` (no factor one half)."""
        cells = self._l1_cells()
        self.l1_tail = math.fsum(cells[~self.core])
        return math.fsum(cells[self.core]) + self.l1_tail


def _normal_mass(a, b):
    """``Phi(b) - Phi(a)`` without cancellation in the upper tail."""
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def quant_gaussian_kl(t: float, alpha: float) -> float:
    return QuantGaussian(t, alpha).kl()


def quant_gaussian_l1(t: float, alpha: float) -> float:
    return QuantGaussian(t, alpha).l1()


def sup_over_alpha(t: float, metric: str = "kl", grid: int = 64) -> tuple[float, float]:
    """``(sup_alpha value, maximising alpha)`` for ``metric`` in {"kl", "l1"}.

    A uniform grid on ``[0, t]`` is refined by bounded Brent search in the
    bracket around the best grid point.
    """
    if metric not in ("kl", "l1"):
        raise ValueError(f"metric must be 'kl' or 'l1', got {metric!r}")
    fn = quant_gaussian_kl if metric == "kl" else quant_gaussian_l1
    alphas = np.linspace(0.0, t, grid)
    vals = np.array([fn(t, a) for a in alphas])
    i = int(np.argmax(vals))
    best, arg = float(vals[i]), float(alphas[i])
    lo, hi = alphas[max(i - 1, 0)], alphas[min(i + 1, grid - 1)]
    if hi > lo:
        res = minimize_scalar(lambda a: -fn(t, a), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * t})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


# -- Bayes mixture redundancy --------------------------------------------------


@dataclass
class CBTerms:
    """Exact mutual information against its asymptotic expansion (nats).

    ``rhs = rhs_main + d_mu_nu - d_mu_jeffreys + log_cj`` with
    ``rhs_main = (d/2) ln(n / (2 pi e))``.
    """

    n: int
    lhs_mi: float
    rhs_main: float
    d_mu_nu: float
    d_mu_jeffreys: float
    log_cj: float
    discrepancy: float
    quadrature_nodes: int

    @property
    def rhs(self) -> float:
        return self.rhs_main + self.d_mu_nu - self.d_mu_jeffreys + self.log_cj

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _panel_breaks(prior, n: int):
    panels = max(4, math.ceil(math.sqrt(n) / 2))
    return [np.linspace(lo, hi, panels + 1)[1:-1] for lo, hi in prior.support]


def clarke_barron(family, prior, n: int, nu=None, nodes: int | None = None,
                  typespace=None) -> CBTerms:
    """Compare ``int D(P_z^n || M_nu) mu(dz)`` with its Jeffreys expansion.

    ``M_nu`` is the Bayes mixture of ``P_z^n`` under ``nu`` (default
    ``nu = mu``, in which case the left side is ``I(Z; X^n)``).  The
    mixture and the outer average are both computed by quadrature with
    about ``sqrt(n) / 2`` panels per axis; type probabilities are exact.
    """
    nu = nu or prior
    ts = typespace or enumerate_types(n, family.k)
    nodes = nodes or prior.nodes
    z, w = prior.rule(nodes, _panel_breaks(prior, n))
    zn, wn = nu.rule(nodes, _panel_breaks(nu, n))
    log_p = ts.log_product(np.log(family.probs(z)))
    log_pn = log_p if nu is prior else ts.log_product(np.log(family.probs(zn)))
    log_m = logsumexp(log_pn + np.log(wn)[:, None], axis=0)
    lhs = math.fsum(w * kl_log(log_p, log_m[None, :]))

    zl, wl = prior.lebesgue_rule(nodes, _panel_breaks(prior, n))
    sqrt_det = np.exp(0.5 * family.log_det_fisher(zl))
    cj = math.fsum(wl * sqrt_det)
    dens = prior.density(zl)
    mu_w = wl * dens
    d_mu_j = math.fsum(mu_w * (np.log(dens) + math.log(cj) - np.log(sqrt_det)))
    d_mu_nu = 0.0 if nu is prior else math.fsum(mu_w * (np.log(dens) - np.log(nu.density(zl))))
    main = 0.5 * family.d * math.log(n / (2.0 * math.pi * math.e))
    rhs = main + d_mu_nu - d_mu_j + math.log(cj)
    return CBTerms(n=n, lhs_mi=lhs, rhs_main=main, d_mu_nu=d_mu_nu, d_mu_jeffreys=d_mu_j,
                   log_cj=math.log(cj), discrepancy=lhs - rhs, quadrature_nodes=len(z))


# -- exact decompositions ----------------------------------------------------------


def _mixture(weights, components) -> ExchDist:
    with np.errstate(divide="ignore"):
        logs = np.log(np.asarray(weights, dtype=float))[:, None] + np.stack(
            [c.log_weights for c in components])
    return ExchDist(components[0].typespace, logsumexp(logs, axis=0), check=False)


def pythagorean_residual(weights, components, Q: ExchDist) -> float:
    """``sum p_i D(P_i||Q) - D(sum p_i P_i||Q) - sum p_i D(P_i||sum p_j P_j)``.

    Zero up to rounding for every mixture; an infinite term raises
    :class:`AbsoluteContinuityError`.
    """
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(components):
        raise ValueError("one weight per component is required")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")
    mix = _mixture(weights, components)
    to_q = [kl_exch(P, Q) for P in components]
    to_mix = [kl_exch(P, mix) for P in components]
    whole = kl_exch(mix, Q)
    if any(math.isinf(x) for x in to_q + [whole]):
        raise AbsoluteContinuityError("a component is not absolutely continuous w.r.t. Q")
    live = weights > 0
    a = math.fsum(p * x for p, x, ok in zip(weights, to_q, live) if ok)
    c = math.fsum(p * x for p, x, ok in zip(weights, to_mix, live) if ok)
    return a - whole - c


@dataclass
class ConverseTerms:
    z: tuple
    mixture_error: float
    component_error: float
    cond_mi: float
    log_size: float

    @property
    def residual(self) -> float:
        return self.mixture_error - (self.component_error - self.cond_mi)


def converse_decomposition(code: Code, z, tol: float = 1e-9) -> ConverseTerms:
    """Split the error of a code at ``z`` into component error and conditional MI.

    ``D(sum_y w_y phi_y || P_z^n) = sum_y w_y D(phi_y || P_z^n) - I``, where
    ``w`` is the codeword distribution at ``z`` and ``I`` is the mutual
    information between codeword and decoded sample given ``z``; ``I``
    never exceeds ``ln M``.
    """
    w = code.output_distribution(z)
    zz = code.family.check(z).reshape(1, -1)
    log_p = code.typespace.log_product(code.family.log_pmf(zz))[0]
    live = np.flatnonzero(w > 0)
    wl = w[live] / w[live].sum()
    D = code.decoder_log[live]
    mix = logsumexp(np.log(wl)[:, None] + D, axis=0)
    mixture_error = float(kl_log(mix, log_p))
    component = math.fsum(wl * kl_log(D, log_p[None, :]))
    cond_mi = math.fsum(wl * kl_log(D, mix[None, :]))
    out = ConverseTerms(tuple(float(x) for x in zz[0]), mixture_error, component,
                        cond_mi, code.code_length)
    scale = max(1.0, abs(component))
    if abs(out.residual) > tol * scale:
        raise AccuracyError(f"decomposition residual {out.residual:.3g} at z={out.z}")
    if cond_mi > out.log_size + 1e-12:
        raise AccuracyError(f"conditional MI {cond_mi} exceeds ln M = {out.log_size}")
    return out


# -- local asymptotic normality ----------------------------------------------------


def _kolmogorov(atoms: np.ndarray, probs: np.ndarray) -> float:
    order = np.argsort(atoms, kind="stable")
    u, p = atoms[order], probs[order]
    uniq, start = np.unique(u, return_index=True)
    mass = np.add.reduceat(p, start)
    F = np.cumsum(mass)
    F_left = F - mass
    Phi = ndtr(uniq)
    return float(min(1.0, max(np.max(np.abs(F - Phi)), np.max(np.abs(F_left - Phi)))))


def lan_residual(family, z, n: int, typespace=None) -> float:
    """Kolmogorov distance between the standardised MLE and the standard normal.

    The MLE (clamped to the domain) is standardised as
    ``sqrt(n) J_z^{1/2} (zhat - z)``; for ``d > 1`` the largest distance
    over the coordinates of that vector is returned.
    """
    z = family.check(z).reshape(-1)
    ts = typespace or enumerate_types(n, family.k)
    P = np.exp(ts.log_product(family.log_pmf(z)))
    zhat = family.mle(ts.types)
    vals, vecs = np.linalg.eigh(family.fisher(z))
    root = (vecs * np.sqrt(vals)) @ vecs.T
    u = math.sqrt(n) * (zhat - z) @ root.T
    return max(_kolmogorov(u[:, i], P) for i in range(family.d))


# -- packing witness ---------------------------------------------------------------


@dataclass
class WitnessReport:
    """Packing certificate for codes with ``M`` codewords.

    If every ``P_{z_i}^n(D_i) >= 1 - alpha / 20`` the variational error of
    every code of that size is at least ``2 - alpha``.
    """

    M: int
    n: int
    alpha: float
    support: tuple
    points: list
    half_width: float
    probs: list
    threshold: float
    feasible: bool
    certified: bool
    bound: float | None
    reason: str = ""

    @property
    def min_prob(self) -> float:
        return min(self.probs) if self.probs else 0.0

    def to_json(self) -> str:
        d = asdict(self)
        d["min_prob"] = self.min_prob
        return json.dumps(d, sort_keys=True)


def packing_witness(family, support, M: int, n: int, alpha: float) -> WitnessReport:
    """Build ``ceil(5 M / alpha)`` separated points and their decision sets.

    Points are equally spaced over ``support`` (endpoints included) along
    the first coordinate, the others held at the support centre.  ``D_i``
    is the set of samples whose first empirical frequency lies within
    ``(lambda / 3) (5 M / alpha)^{-1}`` of ``z_i``, where ``lambda`` is the support length;
    its probability is an exact binomial sum.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    sup = np.asarray(support, dtype=float).reshape(-1, 2)
    lo, hi = sup[0]
    lam = hi - lo
    K = math.ceil(5 * M / alpha)
    first = np.array([0.5 * (lo + hi)]) if K == 1 else np.linspace(lo, hi, K)
    hw = lam * alpha / (15.0 * M)
    rest = [0.5 * (a + b) for a, b in sup[1:]]
    points = [[float(x)] + rest for x in first]
    family.check(np.array(points))
    threshold = 1.0 - alpha / 20.0

    c_lo = np.ceil(n * (first - hw) - 1e-9)
    c_hi = np.floor(n * (first + hw) + 1e-9)
    reason = ""
    if np.any(c_hi[:-1] >= c_lo[1:]):
        reason = "decision sets overlap"
    elif np.any(c_hi < c_lo) or np.any(c_hi < 0) or np.any(c_lo > n):
        reason = "a decision set contains no type"
    probs = []
    if not reason:
        probs = [float(binom.cdf(b, n, x) - binom.cdf(a - 1, n, x))
                 for a, b, x in zip(c_lo, c_hi, first)]
    feasible = not reason
    certified = feasible and min(probs) >= threshold
    return WitnessReport(
        M=M, n=n, alpha=float(alpha), support=tuple(map(tuple, sup.tolist())), points=points,
        half_width=hw, probs=probs, threshold=threshold, feasible=feasible,
        certified=certified, bound=(2.0 - alpha) if certified else None, reason=reason,
    )


def best_certified_bound(family, support, M: int, n: int, alphas=None) -> WitnessReport:
    """Witness with the smallest certifiable ``alpha`` on a grid (largest bound)."""
    alphas = np.linspace(0.05, 1.95, 39) if alphas is None else np.sort(np.asarray(alphas))
    last = None
    for a in alphas:
        last = packing_witness(family, support, M, n, float(a))
        if last.certified:
            return last
    return last


# -- optimal point codebooks ----------------------------------------------------


def _lloyd_init(family, prior, M: int) -> np.ndarray:
    (lo, hi), = prior.support
    x, w = composite_rule(lo, hi, 64, np.linspace(lo, hi, 33)[1:-1])
    dens = (family.fisher(x[:, None])[:, 0, 0] * prior.density(x[:, None])) ** (1.0 / 3.0)
    cdf = np.cumsum(w * dens)
    cdf /= cdf[-1]
    return np.interp((np.arange(M) + 0.5) / M, cdf, x)


def best_point_codebook(family, prior, M: int, iters: int = 500, tol: float = 1e-13) -> np.ndarray:
    """Lloyd iteration for ``min int min_y kl(y, z) mu(dz)`` over ``M`` points.

    The same codebook minimises ``int D(P_y^n || P_z^n) mu(dz)`` for every
    ``n``.  The cell update ``y_i ∝ exp(E[log p_i(z) | cell])`` is the exact
    minimiser of the cell distortion.  One-dimensional families only.
    """
    if family.d != 1:
        raise NotImplementedError("Lloyd codebooks are implemented for one-dimensional families")
    (lo, hi), = prior.support
    y = _lloyd_init(family, prior, M)
    for _ in range(iters):
        edges = np.concatenate([[lo], kl_boundaries(family, y) if M > 1 else [], [hi]])
        new = np.empty(M)
        for i in range(M):
            x, w = composite_rule(edges[i], edges[i + 1], 64)
            w = w * prior.density(x[:, None])
            ell = np.log(family.probs(x[:, None]))
            g = np.exp((w @ ell) / w.sum())
            new[i] = g[1] / g.sum()
        done = np.max(np.abs(new - y)) < tol
        y = new
        if done:
            break
    return y


def bayes_mixture(family, prior, typespace, nodes: int | None = None) -> ExchDist:
    """``int P_z^n mu(dz)`` on type space."""
    z, w = prior.rule(nodes, _panel_breaks(prior, typespace.n))
    log_p = typespace.log_product(np.log(family.probs(z)))
    return ExchDist(typespace, logsumexp(log_p + np.log(w)[:, None], axis=0), check=False)


@dataclass
class SizeOneSearch:
    best_value: float
    best_label: str
    values: dict = field(default_factory=dict)


def size_one_codes(family, prior, typespace, grid: int = 41):
    """Candidate size-one codes: point decoders on a grid and the Bayes mixture."""
    (lo, hi), = prior.support
    codes = {f"point@{y:.4f}": PointCodebook(family, typespace, [y])
             for y in np.linspace(lo, hi, grid)}
    codes["bayes_mixture"] = FixedDistributionCode(family, bayes_mixture(family, prior, typespace))
    return codes
