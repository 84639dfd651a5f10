"""Compression codes for the parameter of an i.i.d. family and their exact errors.

A code consists of an encoder and a decoder.  The decoder maps each of the
``M`` codewords to an exchangeable distribution on ``X^n`` (stored as a row
of log type probabilities).  A *blind* encoder sees the sample, i.e. its
type; a *visible* encoder sees the parameter ``z`` itself.

The reconstruction of ``P_z^n`` is the law of the decoder output when the
sample is drawn from ``P_z^n`` and encoded first.  Errors are averages of
``D(recon || P_z^n)`` or ``||recon - P_z^n||_1`` over a prior, evaluated on
type space and integrated by Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .lattice import Lattice
from .quadrature import QuadratureError
from .typespace import (
    DEFAULT_MAX_TYPES,
    ExchDist,
    TypeSpace,
    TypeSpaceTooLarge,
    enumerate_types,
    kl_log,
)

MODES = ("blind", "visible")
ENCODERS = ("mdl_fisher", "quantize_euclid")
DECODERS = ("point", "cell_mixture")
CRITERIA = ("relative_entropy", "variational")

CSV_COLUMNS = [
    "n", "k", "t", "mode", "encoder", "decoder", "criterion", "error_nats_or_l1",
    "code_length_nats", "quadrature_nodes", "exact_or_mc", "seed",
]

_NODE_CHUNK = 256


class UnreachablePointError(ValueError):
    """A cell-mixture decoder was asked for a codeword with an empty cell."""


@dataclass(frozen=True)
class CodeSpec:
    """One lattice code: mode, encoder, decoder and span.

    ``lattice_coords`` picks the grid coordinates (``moment`` or
    ``statistic``, see :mod:`approxsuff.lattice`).
    """

    mode: str
    encoder: str
    decoder: str
    t: float
    lattice_coords: str = "moment"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.decoder not in DECODERS:
            raise ValueError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if not self.t > 0:
            raise ValueError(f"span must be positive, got {self.t}")

    @property
    def metric(self) -> str:
        return "fisher" if self.encoder == "mdl_fisher" else "euclid"

    @property
    def label(self) -> str:
        return f"{self.mode}/{self.encoder}/{self.decoder}"


class Code:
    """Encoder plus decoder table on a fixed type space.

    Subclasses provide ``decoder_log`` (shape ``(M, N)``) and either
    ``blind_assignment`` (blind codes) or ``visible_kernel``.
    """

    mode = "visible"
    family = None
    typespace: TypeSpace = None
    decoder_log: np.ndarray = None
    spec: CodeSpec | None = None

    @property
    def n(self) -> int:
        return self.typespace.n

    @property
    def size(self) -> int:
        return len(self.decoder_log)

    @property
    def code_length(self) -> float:
        return math.log(self.size)

    def decode(self, j: int) -> ExchDist:
        return ExchDist(self.typespace, self.decoder_log[j], check=False)

    def visible_kernel(self, z: np.ndarray) -> np.ndarray:
        """Codeword probabilities ``(B, M)`` given parameters ``(B, d)``."""
        raise NotImplementedError

    def visible_index(self, z: np.ndarray) -> np.ndarray | None:
        """Codeword index per parameter if the visible encoder is deterministic."""
        return None

    def breaks(self) -> list | None:
        """Per-axis points where the pointwise error may have kinks."""
        return None

    def _recon_log(self, z: np.ndarray, log_p: np.ndarray) -> np.ndarray:
        """Log type probabilities of the reconstruction for a batch of parameters."""
        if self.mode == "blind":
            W = np.zeros((len(z), self.size))
            P = np.exp(log_p)
            np.add.at(W.T, self.blind_assignment, P.T)
            with np.errstate(divide="ignore"):
                return np.log(W @ np.exp(self.decoder_log))
        idx = self.visible_index(z)
        if idx is not None:
            return self.decoder_log[idx]
        K = self.visible_kernel(z)
        with np.errstate(divide="ignore"):
            return logsumexp(np.log(K)[:, :, None] + self.decoder_log[None, :, :], axis=1)

    def reconstruct(self, z) -> ExchDist:
        z = self.family.check(z).reshape(1, -1)
        log_p = self.typespace.log_product(self.family.log_pmf(z))
        return ExchDist(self.typespace, self._recon_log(z, log_p)[0], check=False)

    def output_distribution(self, z) -> np.ndarray:
        """Probability of each codeword when the parameter is ``z``."""
        z = self.family.check(z).reshape(1, -1)
        if self.mode == "blind":
            P = np.exp(self.typespace.log_product(self.family.log_pmf(z)))[0]
            return np.bincount(self.blind_assignment, weights=P, minlength=self.size)
        return self.visible_kernel(z)[0]


class LatticeCode(Code):
    """A code built from a :class:`CodeSpec` on the grid of span ``t``."""

    def __init__(self, spec: CodeSpec, family, typespace: TypeSpace, lattice: Lattice | None = None):
        if typespace.k != family.k:
            raise ValueError("family and type space disagree on the alphabet size")
        self.spec = spec
        self.mode = spec.mode
        self.family = family
        self.typespace = typespace
        lattice = lattice or Lattice(family, typespace.n, spec.t, spec.lattice_coords)
        assign = lattice.cell_assignment(typespace, spec.metric)
        self.full_lattice_size = len(lattice)
        if spec.decoder == "cell_mixture":
            # unreachable codewords are dropped
            used = np.unique(assign)
            if len(used) < len(lattice):
                lattice = lattice.subset(used)
                assign = np.searchsorted(used, assign)
        self.lattice = lattice
        self.blind_assignment = assign
        self.points = lattice.points
        self._decoder_log = None

    @property
    def decoder_log(self) -> np.ndarray:
        if self._decoder_log is None:
            if self.spec.decoder == "point":
                self._decoder_log = self.typespace.log_product(self.family.log_pmf(self.points))
            else:
                M, N = len(self.points), len(self.typespace)
                counts = np.bincount(self.blind_assignment, minlength=M)
                out = np.full((M, N), -np.inf)
                out[self.blind_assignment, np.arange(N)] = -np.log(counts[self.blind_assignment])
                self._decoder_log = out
        return self._decoder_log

    # -- encoders --------------------------------------------------------

    def encode_blind(self, counts) -> np.ndarray:
        """Grid point chosen for a sample of the given type."""
        return self.points[self.blind_assignment[self.typespace.index(counts)]]

    def encode_visible(self, z) -> np.ndarray:
        return self.points[self.lattice.locate(self.family.check(z), self.spec.metric)]

    def visible_index(self, z):
        return self.lattice.locate(z, self.spec.metric)

    def visible_kernel(self, z):
        K = np.zeros((len(z), self.size))
        K[np.arange(len(z)), self.visible_index(z)] = 1.0
        return K

    # -- decoders --------------------------------------------------------

    def _point_index(self, point) -> int:
        point = self.family.as_points(point).reshape(-1)
        j = int(self.lattice.locate(point[None, :], "euclid")[0])
        if not np.allclose(self.points[j], point, atol=1e-12):
            raise ValueError(f"{point} is not a codeword")
        return j

    def decode_point(self, point) -> ExchDist:
        j = self._point_index(point)
        log_p = self.typespace.log_product(self.family.log_pmf(self.points[j]))
        return ExchDist(self.typespace, log_p, check=False)

    def decode_cell_mixture(self, point) -> ExchDist:
        point = self.family.as_points(point).reshape(-1)
        lat = Lattice(self.family, self.n, self.spec.t, self.spec.lattice_coords)
        j = int(lat.locate(point[None, :], "euclid")[0])
        if not np.allclose(lat.points[j], point, atol=1e-12):
            raise ValueError(f"{point} is not a lattice point")
        members = lat.cell_assignment(self.typespace, self.spec.metric) == j
        if not members.any():
            raise UnreachablePointError(f"no type is encoded to {point}")
        w = members / members.sum()
        return ExchDist.from_weights(self.typespace, w, check=False)

    def breaks(self):
        if self.lattice.coords == "moment" or self.family.d == 1:
            return self.lattice.voronoi_breaks()
        return None

    def __repr__(self) -> str:
        return f"LatticeCode({self.spec.label}, n={self.n}, t={self.spec.t}, M={self.size})"


class VisibleEmbedding(Code):
    """A blind code run as a visible code with a stochastic encoder.

    The visible encoder draws the codeword with the probability the blind
    encoder would output it under ``P_z^n``, so both codes produce the same
    reconstruction.
    """

    def __init__(self, code: Code):
        if code.mode != "blind":
            raise ValueError("only blind codes can be embedded")
        self.inner = code
        self.family = code.family
        self.typespace = code.typespace
        self.decoder_log = code.decoder_log
        self.spec = code.spec

    def visible_kernel(self, z):
        P = np.exp(self.typespace.log_product(self.family.log_pmf(z)))
        K = np.zeros((len(z), self.size))
        np.add.at(K.T, self.inner.blind_assignment, P.T)
        return K

    def breaks(self):
        return self.inner.breaks()


class PointCodebook(Code):
    """Visible code on arbitrary points with the product decoder.

    The encoder sends ``z`` to the codeword ``y`` minimising ``kl(y, z)``,
    which minimises ``D(P_y^n || P_z^n) = n kl(y, z)`` for every ``n``.
    """

    def __init__(self, family, typespace: TypeSpace, points):
        self.family = family
        self.typespace = typespace
        pts = family.check(np.asarray(points, dtype=float).reshape(-1, family.d))
        self.points = pts[np.lexsort(pts.T[::-1])]
        self.decoder_log = typespace.log_product(family.log_pmf(self.points))

    def visible_index(self, z):
        logy = np.log(self.family.probs(self.points))
        y = np.exp(logy)
        logz = np.log(self.family.probs(z))
        cost = np.sum(y * logy, axis=-1)[None, :] - logz @ y.T
        return np.argmin(cost, axis=1)

    def visible_kernel(self, z):
        K = np.zeros((len(z), self.size))
        K[np.arange(len(z)), self.visible_index(z)] = 1.0
        return K

    def breaks(self):
        if self.family.d != 1 or self.size < 2:
            return None
        return [kl_boundaries(self.family, self.points[:, 0])]


class FixedDistributionCode(Code):
    """Size-one code whose decoder always outputs the same distribution."""

    def __init__(self, family, dist: ExchDist):
        self.family = family
        self.typespace = dist.typespace
        self.decoder_log = dist.log_weights[None, :]

    def visible_index(self, z):
        return np.zeros(len(z), dtype=np.int64)


def kl_boundaries(family, ys: np.ndarray) -> np.ndarray:
    """Points ``z`` where ``kl(y_j, z) = kl(y_{j+1}, z)`` for sorted scalar codewords."""
    out = []
    for a, b in zip(ys[:-1], ys[1:]):
        g = lambda z: family.kl(a, z) - family.kl(b, z)
        out.append(brentq(g, a, b, xtol=1e-14))
    return np.array(out)


def build_code(spec: CodeSpec, family, n: int, typespace: TypeSpace | None = None,
               max_types: int = DEFAULT_MAX_TYPES) -> LatticeCode:
    typespace = typespace or enumerate_types(n, family.k, max_types)
    if typespace.n != n:
        raise ValueError(f"type space is for n={typespace.n}, code asked for n={n}")
    return LatticeCode(spec, family, typespace)


# -- error evaluation ----------------------------------------------------------


@dataclass
class ErrorReport:
    """Average error of one code under one criterion."""

    criterion: str
    value: float
    code_length_nats: float
    n: int
    k: int
    t: float | None
    mode: str
    encoder: str
    decoder: str
    quadrature_nodes: int
    exact_or_mc: str = "exact"
    seed: int | None = None
    nodes: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    pointwise: np.ndarray = field(default=None, repr=False)
    std_error: float = 0.0

    def row(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "t": "" if self.t is None else repr(float(self.t)),
            "mode": self.mode,
            "encoder": self.encoder,
            "decoder": self.decoder,
            "criterion": self.criterion,
            "error_nats_or_l1": repr(float(self.value)),
            "code_length_nats": repr(float(self.code_length_nats)),
            "quadrature_nodes": self.quadrature_nodes,
            "exact_or_mc": self.exact_or_mc,
            "seed": "" if self.seed is None else self.seed,
        }


def write_reports(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(r.row())


def pointwise_error(code: Code, z: np.ndarray, criterion: str) -> np.ndarray:
    """``F(recon(z), P_z^n)`` for every row of ``z``."""
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    z = code.family.check(z)
    out = np.empty(len(z))
    for s in range(0, len(z), _NODE_CHUNK):
        zc = z[s : s + _NODE_CHUNK]
        log_p = code.typespace.log_product(code.family.log_pmf(zc))
        log_r = code._recon_log(zc, log_p)
        if criterion == "relative_entropy":
            out[s : s + _NODE_CHUNK] = kl_log(log_r, log_p)
        else:
            out[s : s + _NODE_CHUNK] = np.abs(np.exp(log_r) - np.exp(log_p)).sum(axis=-1)
    return out


def _describe(code: Code):
    spec = code.spec
    if spec is not None and isinstance(code, (LatticeCode, VisibleEmbedding)):
        mode = "visible" if isinstance(code, VisibleEmbedding) else spec.mode
        return spec.t, mode, spec.encoder, spec.decoder
    if isinstance(code, PointCodebook):
        return None, "visible", "kl_nearest", "point"
    return None, code.mode, "constant", "fixed"


def error(code: Code, prior, criterion: str, nodes: int | None = None,
          check_convergence: bool = False, rtol: float = 1e-6) -> ErrorReport:
    """Average error ``int F(recon(z), P_z^n) mu(dz)`` by composite Gauss-Legendre.

    Panels are split at the code's cell boundaries so that the integrand
    is smooth on each panel.  With ``check_convergence`` the integral is
    recomputed with twice the nodes and a :class:`QuadratureError` is
    raised if the relative change exceeds ``rtol``.
    """
    nodes = nodes or prior.nodes
    breaks = code.breaks()
    z, w = prior.rule(nodes, breaks)
    vals = pointwise_error(code, z, criterion)
    value = math.fsum(w * vals)
    if check_convergence:
        z2, w2 = prior.rule(2 * nodes, breaks)
        value2 = math.fsum(w2 * pointwise_error(code, z2, criterion))
        scale = max(abs(value2), 1e-300)
        if abs(value2 - value) > rtol * scale and abs(value2 - value) > 1e-14:
            raise QuadratureError(
                f"error integral changed from {value!r} to {value2!r} when doubling nodes"
            )
    t, mode, enc, dec = _describe(code)
    return ErrorReport(
        criterion=criterion,
        value=value,
        code_length_nats=code.code_length,
        n=code.n,
        k=code.family.k,
        t=t,
        mode=mode,
        encoder=enc,
        decoder=dec,
        quadrature_nodes=len(z),
        nodes=z,
        weights=w,
        pointwise=vals,
    )


def error_visible_point_mc(family, lattice: Lattice, prior, criterion: str, samples: int,
                           seed: int, metric: str = "euclid", nodes: int | None = None) -> ErrorReport:
    """Visible point-code error for type spaces too large to enumerate.

    Relative entropy is exact (``n kl(y, z)`` by additivity); variational
    distance is estimated at each node from ``samples`` types drawn from
    ``P_z^n`` with a fixed seed, and the standard error is reported.
    """
    n = lattice.n
    z, w = prior.rule(nodes or prior.nodes, lattice.voronoi_breaks() if family.d == 1 else None)
    y = lattice.nearest(z, metric)
    if criterion == "relative_entropy":
        vals = n * family.kl(y, z)
        se = 0.0
        kind = "exact"
    else:
        rng = np.random.default_rng(seed)
        vals = np.empty(len(z))
        var = np.empty(len(z))
        log_y, log_z = np.log(family.probs(y)), np.log(family.probs(z))
        for i in range(len(z)):
            c = rng.multinomial(n, np.exp(log_z[i]), size=samples)
            r = np.exp(c @ (log_y[i] - log_z[i]))
            terms = np.abs(r - 1.0)
            vals[i] = terms.mean()
            var[i] = terms.var(ddof=1) / samples
        se = float(math.sqrt(np.sum(w**2 * var)))
        kind = "mc"
    return ErrorReport(
        criterion=criterion,
        value=math.fsum(w * vals),
        code_length_nats=lattice.code_length,
        n=n,
        k=family.k,
        t=lattice.t,
        mode="visible",
        encoder="mdl_fisher" if metric == "fisher" else "quantize_euclid",
        decoder="point",
        quadrature_nodes=len(z),
        exact_or_mc=kind,
        seed=seed if kind == "mc" else None,
        nodes=z,
        weights=w,
        pointwise=vals,
        std_error=se,
    )


def evaluate(spec: CodeSpec, family, n: int, prior, criterion: str, *,
             max_types: int = DEFAULT_MAX_TYPES, mc_samples: int = 4000, seed: int = 0,
             nodes: int | None = None) -> ErrorReport:
    """Build and evaluate a lattice code, falling back to Monte Carlo when allowed."""
    try:
        ts = enumerate_types(n, family.k, max_types)
    except TypeSpaceTooLarge:
        if spec.mode == "visible" and spec.decoder == "point":
            lat = Lattice(family, n, spec.t, spec.lattice_coords)
            return error_visible_point_mc(family, lat, prior, criterion, mc_samples, seed,
                                          spec.metric, nodes)
        raise
    report = error(LatticeCode(spec, family, ts), prior, criterion, nodes)
    report.seed = seed
    return report


__all__ = [
    "CodeSpec", "Code", "LatticeCode", "VisibleEmbedding", "PointCodebook",
    "FixedDistributionCode", "ErrorReport", "build_code", "error", "evaluate",
    "pointwise_error", "write_reports", "kl_boundaries", "error_visible_point_mc",
    "UnreachablePointError",
]
