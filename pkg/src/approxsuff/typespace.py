"""Exact computations on the space of n-types.

An exchangeable distribution on X^n is uniform inside every type class, so
it is determined by the probability it gives to each type.  Relative
entropy and variational distance between two such distributions equal the
corresponding quantities between their type marginals: the class-size
factors cancel inside the logarithm and inside the absolute value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

DEFAULT_MAX_TYPES = 2_000_000


class TypeSpaceTooLarge(ValueError):
    """Exact enumeration would exceed the configured threshold."""


def num_types(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def log_multinomial(counts: np.ndarray) -> np.ndarray:
    """Log multinomial coefficients ``log(n! / prod c_i!)`` per row."""
    counts = np.asarray(counts)
    n = counts.sum(axis=-1)
    return gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=-1)


def _compositions(n: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    if k == 2:
        c0 = np.arange(n + 1, dtype=np.int64)
        return np.stack([c0, n - c0], axis=1)
    blocks = []
    for c0 in range(n + 1):
        rest = _compositions(n - c0, k - 1)
        blocks.append(np.hstack([np.full((len(rest), 1), c0, dtype=np.int64), rest]))
    return np.vstack(blocks)


class TypeSpace:
    """All compositions of ``n`` into ``k`` nonnegative parts, in lexicographic order."""

    def __init__(self, n: int, k: int, types: np.ndarray, log_sizes: np.ndarray):
        self.n = n
        self.k = k
        self.types = types
        self.log_sizes = log_sizes
        self.types.flags.writeable = False
        self.log_sizes.flags.writeable = False
        self._index = None

    def __len__(self) -> int:
        return len(self.types)

    def __repr__(self) -> str:
        return f"TypeSpace(n={self.n}, k={self.k}, size={len(self)})"

    def index(self, counts) -> int:
        counts = tuple(int(c) for c in counts)
        if len(counts) != self.k or sum(counts) != self.n or min(counts) < 0:
            raise ValueError(f"{counts} is not an {self.n}-type on {self.k} symbols")
        if self.k == 2:
            return counts[0]
        if self._index is None:
            self._index = {tuple(row): i for i, row in enumerate(self.types.tolist())}
        return self._index[counts]

    def log_product(self, log_p: np.ndarray) -> np.ndarray:
        """Log type probabilities of the i.i.d. law with single-letter log-pmf ``log_p``.

        ``log_p`` may carry leading batch axes: shape ``(..., k)``.
        """
        log_p = np.asarray(log_p, dtype=float)
        # counts @ log_p, with 0 * log 0 := 0
        safe = np.where(np.isneginf(log_p), 0.0, log_p)
        out = safe @ self.types.T + self.log_sizes
        if np.any(np.isneginf(log_p)):
            zero = np.isneginf(log_p)[..., None, :] & (self.types > 0)
            out = np.where(zero.any(axis=-1), -np.inf, out)
        return out


def enumerate_types(n: int, k: int, max_types: int = DEFAULT_MAX_TYPES) -> TypeSpace:
    """Enumerate the n-types on ``k`` symbols.

    Raises
    ------
    TypeSpaceTooLarge
        If ``C(n+k-1, k-1)`` exceeds ``max_types``; use the Monte Carlo
        estimators (``mc_divergences``) instead.
    """
    if n < 1 or k < 2:
        raise ValueError(f"need n >= 1 and k >= 2, got n={n}, k={k}")
    size = num_types(n, k)
    if size > max_types:
        raise TypeSpaceTooLarge(
            f"{size} types for n={n}, k={k} exceeds the exactness threshold "
            f"{max_types}; switch to Monte Carlo mode"
        )
    types = _compositions(n, k)
    return TypeSpace(n, k, types, np.asarray(log_multinomial(types), dtype=float))


class ExchDist:
    """Exchangeable distribution on X^n, stored as log-probabilities per type."""

    def __init__(self, typespace: TypeSpace, log_weights, *, check: bool = True):
        log_weights = np.asarray(log_weights, dtype=float)
        if log_weights.shape != (len(typespace),):
            raise ValueError(
                f"expected {len(typespace)} log-weights, got shape {log_weights.shape}"
            )
        if check:
            total = logsumexp(log_weights)
            if not abs(total) <= 1e-10:
                raise ValueError(f"weights sum to exp({total}) instead of 1")
        self.typespace = typespace
        self.log_weights = log_weights

    @classmethod
    def from_weights(cls, typespace: TypeSpace, weights, **kw) -> "ExchDist":
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(typespace, np.log(weights), **kw)

    @classmethod
    def point_mass(cls, typespace: TypeSpace, counts) -> "ExchDist":
        w = np.zeros(len(typespace))
        w[typespace.index(counts)] = 1.0
        return cls.from_weights(typespace, w)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def sequence_prob(self, sequence) -> float:
        """Probability of one sequence ``x^n`` (symbols in ``0..k-1``)."""
        counts = np.bincount(np.asarray(sequence), minlength=self.typespace.k)
        i = self.typespace.index(counts)
        return float(np.exp(self.log_weights[i] - self.typespace.log_sizes[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["type_index", "weight"])
            for i, w in enumerate(self.weights):
                writer.writerow([i, repr(float(w))])

    def __repr__(self) -> str:
        return f"ExchDist(n={self.typespace.n}, k={self.typespace.k})"


def product_type_dist(family, z, typespace: TypeSpace) -> ExchDist:
    """Type marginal of ``P_z^n``."""
    if typespace.k != family.k:
        raise ValueError("family and type space disagree on the alphabet size")
    log_p = family.log_pmf(z)
    return ExchDist(typespace, typespace.log_product(log_p), check=False)


def mixture(weights, components) -> ExchDist:
    weights = np.asarray(weights, dtype=float)
    ts = components[0].typespace
    with np.errstate(divide="ignore"):
        logs = np.log(weights)[:, None] + np.stack([c.log_weights for c in components])
    return ExchDist(ts, logsumexp(logs, axis=0), check=False)


def _same_space(Q: ExchDist, P: ExchDist) -> None:
    if Q.typespace is not P.typespace and (
        Q.typespace.n != P.typespace.n or Q.typespace.k != P.typespace.k
    ):
        raise ValueError("distributions live on different type spaces")


def kl_log(log_q: np.ndarray, log_p: np.ndarray) -> np.ndarray:
    """Relative entropy from log-weights along the last axis.

    ``0 log 0 = 0``; positive mass where the reference is zero gives ``inf``.
    """
    q = np.exp(log_q)
    support = q > 0
    bad = support & np.isneginf(log_p)
    with np.errstate(invalid="ignore"):
        terms = np.where(support, q * (log_q - log_p), 0.0)
    out = terms.sum(axis=-1)
    return np.where(bad.any(axis=-1), np.inf, out)


def kl_exch(Q: ExchDist, P: ExchDist) -> float:
    """``D(Q || P)`` in nats; ``inf`` signals a violation of absolute continuity."""
    _same_space(Q, P)
    q = Q.weights
    support = q > 0
    if np.any(np.isneginf(P.log_weights[support])):
        return math.inf
    terms = q[support] * (Q.log_weights[support] - P.log_weights[support])
    return math.fsum(terms)


def l1_exch(Q: ExchDist, P: ExchDist) -> float:
    _same_space(Q, P)
    return math.fsum(np.abs(Q.weights - P.weights))


# -- Monte Carlo fallback ----------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    kl: float
    kl_se: float
    l1: float
    l1_se: float
    samples: int


def mc_divergences(
    sample_p: Callable[[np.random.Generator, int], np.ndarray],
    log_p: Callable[[np.ndarray], np.ndarray],
    log_q: Callable[[np.ndarray], np.ndarray],
    samples: int,
    rng: np.random.Generator,
) -> MCEstimate:
    """Estimate ``D(Q || P)`` and ``||Q - P||_1`` from types drawn under ``P``.

    ``sample_p(rng, m)`` returns an ``(m, k)`` array of type counts; the two
    log-probability callables map count arrays to log type probabilities.
    Uses ``D = E_P[r log r]`` and ``L1 = E_P|r - 1|`` with ``r = Q / P``.
    """
    counts = sample_p(rng, samples)
    r = np.exp(log_q(counts) - log_p(counts))
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_terms = np.where(r > 0, r * np.log(r), 0.0)
    l1_terms = np.abs(r - 1.0)
    root = math.sqrt(samples)
    return MCEstimate(
        kl=float(kl_terms.mean()),
        kl_se=float(kl_terms.std(ddof=1) / root),
        l1=float(l1_terms.mean()),
        l1_se=float(l1_terms.std(ddof=1) / root),
        samples=samples,
    )


def multinomial_sampler(n: int, probs: np.ndarray):
    probs = np.asarray(probs, dtype=float)

    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        return rng.multinomial(n, probs, size=m)

    return sample


def multinomial_log_prob(probs: np.ndarray):
    log_p = np.log(np.asarray(probs, dtype=float))

    def log_prob(counts: np.ndarray) -> np.ndarray:
        return log_multinomial(counts) + counts @ log_p

    return log_prob
