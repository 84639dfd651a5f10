import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import betainc, betaln, gammaln
from scipy.stats import norm

from approxsuff import CodeSpec, Family, Prior, build_code, enumerate_types, kl_exch, l1_exch
from approxsuff import product_type_dist
from approxsuff.asymptotics import (AbsoluteContinuityError, QuantGaussian, bayes_mixture,
                                    best_certified_bound, best_point_codebook, clarke_barron,
                                    converse_decomposition, lan_residual, packing_witness,
                                    pythagorean_residual, quant_gaussian_kl, quant_gaussian_l1,
                                    size_one_codes, sup_over_alpha)
from approxsuff.codec import PointCodebook, error


def qg_by_quad(t, alpha, metric):
    """Cell-by-cell adaptive quadrature of the quantised normal."""
    js = range(math.floor((-10 - alpha) / t) - 1, math.ceil((10 - alpha) / t) + 1)
    cells = [(alpha + j * t, alpha + (j + 1) * t) for j in js]
    Z = sum(norm.pdf(0.5 * (a + b)) * t for a, b in cells)
    total = 0.0
    for a, b in cells:
        c = norm.pdf(0.5 * (a + b)) / Z
        if metric == "kl":
            total += quad(lambda u: c * (math.log(c) - norm.logpdf(u)), a, b, epsabs=1e-14)[0]
        else:
            total += quad(lambda u: abs(norm.pdf(u) - c), a, b, epsabs=1e-14, limit=200)[0]
    return total


@pytest.mark.parametrize("t,alpha", [(0.4, 0.3), (1.0, 0.0), (0.8, 0.55), (2.0, 1.0)])
def test_quantised_gaussian_against_quad(t, alpha):
    assert quant_gaussian_kl(t, alpha) == pytest.approx(qg_by_quad(t, alpha, "kl"), rel=1e-7, abs=1e-12)
    assert quant_gaussian_l1(t, alpha) == pytest.approx(qg_by_quad(t, alpha, "l1"), rel=1e-7, abs=1e-12)


@settings(max_examples=30)
@given(st.floats(0.05, 3.0), st.floats(0.0, 1.0))
def test_quantised_gaussian_reflection_and_pinsker(t, frac):
    a = frac * t
    kl, l1 = quant_gaussian_kl(t, a), quant_gaussian_l1(t, a)
    assert quant_gaussian_kl(t, t - a) == pytest.approx(kl, rel=1e-9, abs=1e-15)
    assert quant_gaussian_l1(t, t - a) == pytest.approx(l1, rel=1e-9, abs=1e-15)
    assert kl >= 0.5 * l1**2 - 1e-12
    qg = QuantGaussian(t, a)
    qg.kl()
    qg.l1()
    assert abs(qg.kl_tail) < 1e-20 and abs(qg.l1_tail) < 1e-20


def test_small_span_limits():
    # KL behaves like t^2 / 24 and L1 is linear in t
    for t in (0.1, 0.05):
        assert sup_over_alpha(t, "kl")[0] == pytest.approx(t * t / 24, rel=1e-3)
    r1, r2 = sup_over_alpha(0.1, "l1")[0], sup_over_alpha(0.05, "l1")[0]
    assert r1 / r2 == pytest.approx(2.0, rel=1e-2)


def test_sup_dominates_grid():
    best, arg = sup_over_alpha(0.8, "l1")
    assert 0 <= arg <= 0.8
    assert best >= max(quant_gaussian_l1(0.8, a) for a in np.linspace(0, 0.8, 11)) - 1e-12
    with pytest.raises(ValueError):
        sup_over_alpha(0.8, "tv")
    with pytest.raises(ValueError):
        QuantGaussian(1.0, 1.5)


def test_bayes_mixture_closed_form(bern):
    n, a, b = 30, 0.1, 0.9
    ts = enumerate_types(n, 2)
    got = bayes_mixture(bern, Prior(bern, support=(a, b)), ts).weights
    c = ts.types[:, 1]
    log_beta = betaln(c + 1, n - c + 1)
    mass = betainc(c + 1, n - c + 1, b) - betainc(c + 1, n - c + 1, a)
    exact = np.exp(ts.log_sizes + log_beta) * mass / (b - a)
    assert np.allclose(got, exact, rtol=1e-10, atol=1e-300)


def test_mutual_information_single_draw(bern):
    prior = Prior(bern, "uniform", (0.0, 1.0), graded=True)
    r = clarke_barron(bern, prior, 1)
    assert r.lhs_mi == pytest.approx(math.log(2) - 0.5, abs=1e-12)
    assert r.log_cj == pytest.approx(math.log(math.pi), abs=1e-9)
    assert r.d_mu_jeffreys == pytest.approx(math.log(math.pi) - 1, abs=1e-8)
    assert r.rhs == pytest.approx(r.lhs_mi - r.discrepancy)
    assert json.loads(r.to_json())["n"] == 1


def test_expansion_discrepancy_shrinks(bern):
    prior = Prior(bern, support=(0.02, 0.98))
    gaps = [abs(clarke_barron(bern, prior, n).discrepancy) for n in (16, 64, 256)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_mismatched_mixing_prior(bern):
    mu = Prior(bern, support=(0.2, 0.8))
    nu = Prior(bern, "jeffreys", support=(0.1, 0.9))
    r = clarke_barron(bern, mu, 32, nu=nu)
    z, w = mu.rule()
    exact = math.fsum(w * (np.log(mu.density(z)) - np.log(nu.density(z))))
    assert r.d_mu_nu == pytest.approx(exact, rel=1e-10)
    assert r.d_mu_nu > 0


def test_pythagorean_identity(bern):
    ts = enumerate_types(12, 2)
    comps = [product_type_dist(bern, z, ts) for z in (0.2, 0.5, 0.7)]
    Q = product_type_dist(bern, 0.4, ts)
    assert abs(pythagorean_residual([0.2, 0.3, 0.5], comps, Q)) < 1e-12
    assert abs(pythagorean_residual([1.0, 0.0, 0.0], comps, Q)) < 1e-13
    with pytest.raises(ValueError):
        pythagorean_residual([0.5, 0.6, -0.1], comps, Q)


def test_pythagorean_needs_absolute_continuity(bern):
    from approxsuff import ExchDist
    ts = enumerate_types(3, 2)
    Q = ExchDist.point_mass(ts, (3, 0))
    with pytest.raises(AbsoluteContinuityError):
        pythagorean_residual([1.0], [product_type_dist(bern, 0.5, ts)], Q)


@pytest.mark.parametrize("spec", [CodeSpec("blind", "quantize_euclid", "point", 1.0),
                                  CodeSpec("blind", "mdl_fisher", "cell_mixture", 0.5)],
                         ids=lambda s: s.label)
@pytest.mark.parametrize("z", [0.37, 0.5, 0.81])
def test_converse_decomposition(bern, spec, z):
    code = build_code(spec, bern, 64)
    terms = converse_decomposition(code, z)
    direct = kl_exch(code.reconstruct(z), product_type_dist(bern, z, code.typespace))
    assert terms.mixture_error == pytest.approx(direct, rel=1e-10)
    assert 0 <= terms.cond_mi <= terms.log_size + 1e-12
    assert abs(terms.residual) < 1e-9


def test_lan_residual(bern):
    r = [lan_residual(bern, 0.5, n) for n in (64, 256, 1024)]
    assert r[0] > r[1] > r[2]
    # the lattice of the standardised binomial has atoms 2/sqrt(n) apart
    assert r[2] == pytest.approx(0.5 * norm.pdf(0) * 2 / math.sqrt(1024), rel=0.05)


def test_lan_trinomial(tri):
    assert lan_residual(tri, [0.3, 0.3], 64) > lan_residual(tri, [0.3, 0.3], 256)


def test_packing_witness_certifies(bern):
    w = packing_witness(bern, ((0.1, 0.9),), 1, 1024, 1.0)
    assert len(w.points) == 5 and w.certified and w.bound == 1.0
    assert w.min_prob >= 1 - 1 / 20
    # exact binomial mass of the middle decision set
    from scipy.stats import binom
    lo, hi = math.ceil(1024 * (0.5 - w.half_width)), math.floor(1024 * (0.5 + w.half_width))
    assert w.probs[2] == pytest.approx(binom.cdf(hi, 1024, 0.5) - binom.cdf(lo - 1, 1024, 0.5))
    assert json.loads(w.to_json())["certified"] is True


def test_packing_witness_infeasible(bern):
    w = packing_witness(bern, ((0.1, 0.9),), 1, 1, 1.99)
    assert not w.feasible and not w.certified and w.bound is None and w.reason
    with pytest.raises(ValueError):
        packing_witness(bern, ((0.1, 0.9),), 0, 10, 1.0)
    with pytest.raises(ValueError):
        packing_witness(bern, ((0.1, 0.9),), 1, 10, 2.0)


def test_certified_bound_is_honoured(bern):
    prior = Prior(bern)
    ts = enumerate_types(1024, 2)
    w = best_certified_bound(bern, prior.support, 1, 1024)
    assert w.certified
    best = min(error(c, prior, "variational").value for c in size_one_codes(bern, prior, ts).values())
    assert best >= w.bound


def test_lloyd_codebook_is_locally_optimal(bern):
    prior = Prior(bern)
    ts = enumerate_types(1, 2)
    y = best_point_codebook(bern, prior, 3)
    base = error(PointCodebook(bern, ts, y), prior, "relative_entropy").value
    rng = np.random.default_rng(0)
    for _ in range(10):
        yy = np.sort(y + rng.normal(scale=0.01, size=3))
        assert error(PointCodebook(bern, ts, yy), prior, "relative_entropy").value >= base - 1e-12
    # error of a point codebook is n times the single-letter distortion
    ts8 = enumerate_types(8, 2)
    assert error(PointCodebook(bern, ts8, y), prior, "relative_entropy").value == pytest.approx(8 * base, rel=1e-10)


def test_sup_nondecreasing_in_span():
    for metric in ("kl", "l1"):
        vals = [sup_over_alpha(t, metric)[0] for t in (0.1, 0.2, 0.4, 0.8, 1.6)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert 0 < quant_gaussian_kl(0.4, 0.3) < 0.05


def test_lan_scale(bern):
    r = lan_residual(bern, 0.5, 1024)
    assert 0 <= r < 0.02
    assert 0 <= lan_residual(bern, 0.2, 1) <= 1


def test_jeffreys_constant_approaches_pi():
    prev = None
    for eps in (0.02, 0.005, 0.001):
        f = Family(2, eps)
        r = clarke_barron(f, Prior(f, "uniform", (eps, 1 - eps)), 4)
        gap = math.pi - math.exp(r.log_cj)
        assert gap > 0 and (prev is None or gap < prev)
        prev = gap
    assert prev == pytest.approx(2 * 2 * math.sqrt(0.001), rel=0.01)  # 2 arcsin(sqrt(eps)) per end


def test_witness_bound_holds_for_lloyd_codes(bern):
    prior = Prior(bern)
    n = 1024
    ts = enumerate_types(n, 2)
    for M in (1, 2):
        w = best_certified_bound(bern, prior.support, M, n)
        if not w.certified:
            continue
        code = PointCodebook(bern, ts, best_point_codebook(bern, prior, M))
        assert error(code, prior, "variational").value >= w.bound - 1e-9
