"""Brute-force consistency checks shared by the CLI self-test and the test suite.

The oracles here work on individual sequences ``x^n`` and never use the
multinomial coefficients stored in a type space, so a corrupted
coefficient table shows up as a mismatch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import pythagorean_residual
from .codec import CodeSpec, LatticeCode
from .families import Family
from .lattice import LatticeError
from .typespace import enumerate_types, kl_exch, l1_exch, product_type_dist


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def sequence_table(n: int, k: int, typespace):
    """All ``k^n`` sequences, their type index and brute-force class sizes."""
    seqs = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64)
    counts = np.stack([np.sum(seqs == s, axis=1) for s in range(k)], axis=1)
    idx = np.array([typespace.index(c) for c in counts])
    class_size = np.bincount(idx, minlength=len(typespace))
    return seqs, idx, class_size


def sequence_product(probs: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    return np.prod(probs[seqs], axis=1)


def sequence_reconstruction(code: LatticeCode, z, seqs, idx, class_size) -> np.ndarray:
    """Reconstruction of ``P_z^n`` on sequences, built from the code's definition."""
    fam = code.family
    spec = code.spec
    p_z = sequence_product(fam.pmf(z).reshape(-1), seqs)

    def decoded(j):
        if spec.decoder == "point":
            return sequence_product(fam.pmf(code.points[j]).reshape(-1), seqs)
        in_cell = code.blind_assignment[idx] == j
        cell = np.unique(idx[in_cell])
        out = np.zeros(len(seqs))
        out[in_cell] = 1.0 / (len(cell) * class_size[idx[in_cell]])
        return out

    if spec.mode == "visible":
        j = int(code.visible_index(fam.check(z).reshape(1, -1))[0])
        return decoded(j), p_z
    enc = code.blind_assignment[idx]
    out = np.zeros(len(seqs))
    for j in np.unique(enc):
        out += p_z[enc == j].sum() * decoded(j)
    return out, p_z


def seq_kl(q: np.ndarray, p: np.ndarray) -> float:
    m = q > 0
    if np.any(p[m] == 0):
        return math.inf
    return math.fsum(q[m] * np.log(q[m] / p[m]))


def seq_l1(q: np.ndarray, p: np.ndarray) -> float:
    return math.fsum(np.abs(q - p))


SPECS = [
    CodeSpec("blind", "mdl_fisher", "point", 0.5),
    CodeSpec("blind", "quantize_euclid", "cell_mixture", 0.5),
    CodeSpec("blind", "quantize_euclid", "cell_mixture", 0.5, "statistic"),
    CodeSpec("visible", "quantize_euclid", "point", 0.5),
    CodeSpec("visible", "mdl_fisher", "cell_mixture", 1.0),
    CodeSpec("blind", "quantize_euclid", "point", 1.0, "statistic"),
]


def oracle_pairs(max_n: int = 4, ks=(2, 3), rng=None, per_code: int = 3):
    """Yield ``(label, Q_typespace, P_typespace, q_seq, p_seq)`` for code-induced pairs."""
    rng = rng or np.random.default_rng(0)
    for k in ks:
        fam = Family(k)
        for n in range(1, max_n + 1):
            ts = enumerate_types(n, k)
            seqs, idx, sizes = sequence_table(n, k, ts)
            for spec in SPECS:
                try:
                    code = LatticeCode(spec, fam, ts)
                except LatticeError:
                    continue
                for _ in range(per_code):
                    z = rng.dirichlet(np.ones(k))[1:] * 0.8 + 0.2 / k
                    Q = code.reconstruct(z)
                    P = product_type_dist(fam, z, ts)
                    q, p = sequence_reconstruction(code, z, seqs, idx, sizes)
                    yield f"k={k} n={n} {spec.label}/{spec.lattice_coords}", Q, P, q, p


def check_type_space_oracle(tol: float = 1e-12, max_n: int = 4) -> CheckResult:
    worst, where, count = 0.0, "", 0
    for label, Q, P, q, p in oracle_pairs(max_n):
        count += 1
        for name, a, b in (("kl", kl_exch(Q, P), seq_kl(q, p)), ("l1", l1_exch(Q, P), seq_l1(q, p))):
            err = abs(a - b)
            if not err <= worst:
                worst, where = err, f"{label} {name}"
    return CheckResult("type_space_vs_sequences", worst <= tol,
                       f"{count} pairs, max deviation {worst:.3g} ({where or 'none'})")


def check_class_sizes(max_n: int = 12) -> CheckResult:
    bad = []
    for k in (2, 3):
        for n in range(1, max_n + 1):
            ts = enumerate_types(n, k)
            total = float(np.logaddexp.reduce(ts.log_sizes))
            if abs(total - n * math.log(k)) > 1e-9:
                bad.append(f"n={n},k={k}")
    return CheckResult("class_sizes_sum_to_k_pow_n", not bad, ", ".join(bad) or "all n <= 12")


def check_additivity(rng=None, tol: float = 1e-10) -> CheckResult:
    rng = rng or np.random.default_rng(1)
    worst = 0.0
    for k in (2, 3):
        fam = Family(k)
        for n in (1, 2, 4, 8):
            ts = enumerate_types(n, k)
            for _ in range(5):
                z, z2 = (rng.dirichlet(np.ones(k))[1:] * 0.8 + 0.2 / k for _ in range(2))
                got = kl_exch(product_type_dist(fam, z, ts), product_type_dist(fam, z2, ts))
                worst = max(worst, abs(got - n * fam.kl(z, z2)))
    return CheckResult("kl_additivity", worst <= tol, f"max deviation {worst:.3g}")


def check_pythagorean(rng=None, instances: int = 100, tol: float = 1e-10) -> CheckResult:
    rng = rng or np.random.default_rng(2)
    fam = Family(2)
    worst = 0.0
    for n in (4, 8, 16):
        ts = enumerate_types(n, 2)
        for _ in range(instances):
            m = int(rng.integers(1, 6))
            comps = [product_type_dist(fam, z, ts) for z in rng.uniform(0.05, 0.95, m)]
            Q = product_type_dist(fam, rng.uniform(0.05, 0.95), ts)
            w = rng.dirichlet(np.ones(m))
            worst = max(worst, abs(pythagorean_residual(w, comps, Q)))
    return CheckResult("pythagorean_identity", worst <= tol, f"max residual {worst:.3g}")


def check_pinsker(max_n: int = 4) -> CheckResult:
    worst = math.inf
    for _, Q, P, _, _ in oracle_pairs(max_n):
        d, l1 = kl_exch(Q, P), l1_exch(Q, P)
        worst = min(worst, d - 0.5 * l1 * l1)
    return CheckResult("pinsker", worst >= -1e-12, f"min D - L1^2/2 = {worst:.3g}")


def run_all() -> list[CheckResult]:
    return [
        check_class_sizes(),
        check_type_space_oracle(),
        check_additivity(),
        check_pythagorean(),
        check_pinsker(),
    ]


__all__ = ["CheckResult", "run_all", "sequence_table", "sequence_reconstruction",
           "oracle_pairs", "seq_kl", "seq_l1"]
