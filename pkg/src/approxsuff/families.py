"""k-nomial exponential families in moment coordinates.

A point ``z`` of the parameter space holds the probabilities of symbols
``1 .. k-1``; symbol ``0`` carries the remainder ``1 - sum(z)``.  All
logarithms are natural.

The exponential-family view uses the statistics

    Y_i(x) = +1 if x == i, -1 if x == i + 1 (mod k), 0 otherwise,

for ``i = 1 .. k-1``; ``natural`` and ``moment`` convert between the
natural parameters of that representation and moment coordinates, and
``mean_statistic`` returns ``E_z[Y]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


class DomainError(ValueError):
    """Parameter lies outside the family domain."""


class SingularityError(ValueError):
    """Fisher information is unbounded (a cell probability is zero)."""


@dataclass(frozen=True)
class Family:
    """Multinomial family on ``k`` symbols with domain margin ``eps_bd``.

    The domain is ``{z : z_i >= eps_bd, 1 - sum(z) >= eps_bd}``: every cell
    probability is at least ``eps_bd``.
    """

    k: int = 2
    eps_bd: float = 0.02

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"alphabet size must be an integer >= 2, got {self.k}")
        if not 0.0 < self.eps_bd < 1.0 / self.k:
            raise ValueError(
                f"eps_bd must lie in (0, 1/k) = (0, {1.0 / self.k:.4g}), got {self.eps_bd}"
            )

    @classmethod
    def from_config(cls, section) -> "Family":
        """Build from a mapping with keys ``k`` and ``eps_bd``."""
        return cls(k=int(section.get("k", 2)), eps_bd=float(section.get("eps_bd", 0.02)))

    @property
    def d(self) -> int:
        return self.k - 1

    @property
    def volume(self) -> float:
        # simplex {p_i >= eps} has side (1 - k eps) in moment coordinates
        side = 1.0 - self.k * self.eps_bd
        return side**self.d / float(np.prod(np.arange(1, self.d + 1)))

    # -- domain handling ------------------------------------------------

    def as_points(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z[None]
        if z.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got shape {z.shape}")
        return z

    def in_domain(self, z, tol: float = 1e-12) -> np.ndarray:
        p = self.probs(z)
        return np.all(p >= self.eps_bd - tol, axis=-1)

    def check(self, z, tol: float = 1e-12) -> np.ndarray:
        z = self.as_points(z)
        if not np.all(self.in_domain(z, tol)):
            raise DomainError(
                f"parameter outside domain (every probability >= {self.eps_bd}): {z}"
            )
        return z

    def clamp(self, z) -> np.ndarray:
        """Project moment coordinates into the domain.

        Coordinates are clipped to ``[eps, 1 - eps]``; if the remainder
        probability then falls below ``eps`` the excess over ``eps`` of the
        other coordinates is shrunk proportionally.  Interior points are
        left untouched.
        """
        eps = self.eps_bd
        z = np.clip(self.as_points(z), eps, 1.0 - eps)
        total = z.sum(axis=-1, keepdims=True)
        over = total > 1.0 - eps
        if np.any(over):
            excess = z - eps
            room = 1.0 - eps - self.d * eps
            scale = room / np.maximum(excess.sum(axis=-1, keepdims=True), 1e-300)
            z = np.where(over, eps + excess * scale, z)
        return z

    # -- distributions ---------------------------------------------------

    def probs(self, z) -> np.ndarray:
        """Cell probabilities ``(p_0, ..., p_{k-1})`` without a domain check."""
        z = self.as_points(z)
        p0 = 1.0 - z.sum(axis=-1, keepdims=True)
        return np.concatenate([p0, z], axis=-1)

    def pmf(self, z) -> np.ndarray:
        return self.probs(self.check(z))

    def log_pmf(self, z) -> np.ndarray:
        return np.log(self.pmf(z))

    def kl(self, z, z2) -> np.ndarray | float:
        """Single-letter relative entropy ``D(P_z || P_z2)`` in nats."""
        p = self.pmf(z)
        q = self.pmf(z2)
        out = np.sum(p * (np.log(p) - np.log(q)), axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def fisher(self, z) -> np.ndarray:
        """Fisher information in moment coordinates.

        ``J = diag(1 / p_1 .. 1 / p_d) + (1 / p_0) 11^T``; for the Bernoulli
        case this is ``1 / (z (1 - z))``.
        """
        p = self.probs(z)
        if np.any(p <= 0.0):
            raise SingularityError(f"Fisher information is singular at {z}")
        d = self.d
        inv0 = 1.0 / p[..., :1, None]
        J = np.broadcast_to(inv0, p.shape[:-1] + (d, d)).copy()
        idx = np.arange(d)
        J[..., idx, idx] += 1.0 / p[..., 1:]
        return J

    def log_det_fisher(self, z) -> np.ndarray:
        # det J = 1 / prod(p) for the multinomial family
        p = self.probs(z)
        if np.any(p <= 0.0):
            raise SingularityError(f"Fisher information is singular at {z}")
        return -np.sum(np.log(p), axis=-1)

    def mle(self, counts) -> np.ndarray:
        """Clamped maximum-likelihood estimate from type counts ``(c_0, ..., c_{k-1})``."""
        counts = np.asarray(counts)
        if counts.shape[-1] != self.k:
            raise ValueError(f"counts need {self.k} entries, got shape {counts.shape}")
        n = counts.sum(axis=-1, keepdims=True)
        return self.clamp(counts[..., 1:] / n)

    def euclid_kl_residual(self, z, z2):
        """``kl(z, z2)`` minus its quadratic Fisher approximation at ``z``."""
        z = self.check(z)
        z2 = self.check(z2)
        diff = z - z2
        J = self.fisher(z)
        quad = 0.5 * np.einsum("...i,...ij,...j->...", diff, J, diff)
        out = self.kl(z, z2) - quad
        return float(out) if np.ndim(out) == 0 else out

    # -- exponential-family coordinates ---------------------------------

    def statistics(self) -> np.ndarray:
        """Matrix ``Y[x, i]`` of sufficient statistics, shape ``(k, d)``."""
        Y = np.zeros((self.k, self.d))
        for i in range(1, self.k):
            Y[i, i - 1] += 1.0
            Y[(i + 1) % self.k, i - 1] -= 1.0
        return Y

    def mean_statistic(self, z) -> np.ndarray:
        return self.probs(z) @ self.statistics()

    def natural(self, z) -> np.ndarray:
        """Natural parameters ``theta`` with ``P(x) ∝ exp(theta . Y(x))``."""
        logp = np.log(self.probs(z))
        # log p_x = theta_x - theta_{x-1} - A with theta_0 = theta_k = 0
        centred = logp[..., 1:] - logp.mean(axis=-1, keepdims=True)
        return np.cumsum(centred, axis=-1)

    def log_partition(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return logsumexp(theta @ self.statistics().T, axis=-1)

    def moment(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        scores = theta @ self.statistics().T
        logp = scores - logsumexp(scores, axis=-1, keepdims=True)
        return np.exp(logp[..., 1:])
