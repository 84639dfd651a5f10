import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxsuff import (CodeSpec, build_lattice, Family, LatticeCode, Prior, QuadratureError, VisibleEmbedding,
                        build_code, enumerate_types, error, evaluate, kl_exch, l1_exch,
                        product_type_dist)
from approxsuff.checks import oracle_pairs, seq_kl, seq_l1
from approxsuff.codec import CSV_COLUMNS, UnreachablePointError, pointwise_error, write_reports

ALL_SPECS = [CodeSpec(m, e, d, 0.5) for m in ("blind", "visible")
             for e in ("mdl_fisher", "quantize_euclid") for d in ("point", "cell_mixture")]


@pytest.fixture
def small(bern):
    ts = enumerate_types(4, 2)
    return ts, {e: LatticeCode(CodeSpec("blind", e, "point", 0.5), bern, ts)
                for e in ("mdl_fisher", "quantize_euclid")}


def test_grid_at_n4(small):
    _, codes = small
    for code in codes.values():
        assert np.allclose(code.points[:, 0], [0.25, 0.5, 0.75])
        assert code.code_length == pytest.approx(math.log(3))


@pytest.mark.parametrize("enc", ["mdl_fisher", "quantize_euclid"])
@pytest.mark.parametrize("counts,expect", [((1, 3), 0.75), ((0, 4), 0.75), ((2, 2), 0.5), ((4, 0), 0.25)])
def test_blind_encoder_examples(small, enc, counts, expect):
    _, codes = small
    assert codes[enc].encode_blind(counts)[0] == pytest.approx(expect)


def test_visible_encoder(small):
    _, codes = small
    assert codes["quantize_euclid"].encode_visible(0.6)[0] == pytest.approx(0.5)
    assert codes["quantize_euclid"].encode_visible(0.7)[0] == pytest.approx(0.75)


def test_point_decoder_is_product(small, bern):
    ts, codes = small
    Q = codes["quantize_euclid"].decode_point(0.5)
    assert np.allclose(Q.weights, product_type_dist(bern, 0.5, ts).weights)
    with pytest.raises(ValueError):
        codes["quantize_euclid"].decode_point(0.4)


def test_cell_mixture_decoder(bern):
    ts = enumerate_types(4, 2)
    code = LatticeCode(CodeSpec("blind", "quantize_euclid", "cell_mixture", 0.5), bern, ts)
    Q = code.decode_cell_mixture(0.5)
    assert Q.weights[ts.index((2, 2))] == pytest.approx(1.0)
    ts2 = enumerate_types(2, 2)
    one = LatticeCode(CodeSpec("blind", "quantize_euclid", "cell_mixture", 1.0), bern, ts2)
    assert one.size == 1
    assert np.allclose(one.decode_cell_mixture(one.points[0]).weights, 1 / 3)


def test_unreachable_cells_are_pruned(bern):
    ts = enumerate_types(4, 2)
    code = LatticeCode(CodeSpec("blind", "quantize_euclid", "cell_mixture", 0.25), bern, ts)
    assert code.size < code.full_lattice_size
    full = build_lattice(bern, 4, 0.25).points
    missing = [p for p in full if not np.any(np.isclose(code.points[:, 0], p[0]))]
    assert missing
    with pytest.raises(UnreachablePointError):
        code.decode_cell_mixture(missing[0])


def test_brute_force_reconstruction_matches():
    worst = 0.0
    for _, Q, P, q, p in oracle_pairs(max_n=4):
        worst = max(worst, abs(kl_exch(Q, P) - seq_kl(q, p)), abs(l1_exch(Q, P) - seq_l1(q, p)))
    assert worst < 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label)
def test_reconstruction_is_a_distribution(bern, spec):
    code = build_code(spec, bern, 20)
    for z in (0.13, 0.5, 0.91):
        assert code.reconstruct(z).weights.sum() == pytest.approx(1.0)
        assert code.output_distribution(z).sum() == pytest.approx(1.0)


@pytest.mark.parametrize("enc", ["mdl_fisher", "quantize_euclid"])
@pytest.mark.parametrize("criterion", ["relative_entropy", "variational"])
def test_visible_beats_blind_for_point_decoders(bern, enc, criterion):
    prior = Prior(bern)
    for n in (16, 64):
        b = error(build_code(CodeSpec("blind", enc, "point", 0.5), bern, n), prior, criterion).value
        v = error(build_code(CodeSpec("visible", enc, "point", 0.5), bern, n), prior, criterion).value
        assert v <= b + 1e-12


@pytest.mark.parametrize("decoder", ["point", "cell_mixture"])
def test_embedding_reproduces_blind_code(bern, decoder):
    prior = Prior(bern)
    code = build_code(CodeSpec("blind", "quantize_euclid", decoder, 0.5), bern, 32)
    emb = VisibleEmbedding(code)
    for crit in ("relative_entropy", "variational"):
        assert error(emb, prior, crit).value == pytest.approx(error(code, prior, crit).value, rel=1e-12)


def test_refinement_helps_visible_point_code(bern):
    prior = Prior(bern)
    vals = [error(build_code(CodeSpec("visible", "quantize_euclid", "point", t), bern, 64), prior,
                  "relative_entropy").value for t in (2.0, 1.0, 0.5, 0.25)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=25)
@given(st.floats(0.05, 0.95), st.sampled_from(ALL_SPECS), st.sampled_from([6, 13]))
def test_pinsker_pointwise(z, spec, n):
    code = build_code(spec, Family(2), n)
    d = pointwise_error(code, np.array([[z]]), "relative_entropy")[0]
    l1 = pointwise_error(code, np.array([[z]]), "variational")[0]
    assert d >= 0.5 * l1**2 - 1e-12
    assert 0 <= l1 <= 2 + 1e-12


def test_trinomial_codes_evaluate(tri):
    prior = Prior(tri, nodes=16)
    for spec in ALL_SPECS[:4]:
        r = error(build_code(spec, tri, 8), prior, "variational")
        assert 0 <= r.value <= 2


def test_quadrature_converges(bern):
    code = build_code(CodeSpec("blind", "mdl_fisher", "point", 0.5), bern, 64)
    prior = Prior(bern)
    error(code, prior, "relative_entropy", check_convergence=True, rtol=1e-8)
    with pytest.raises(QuadratureError):
        error(code, Prior(bern, nodes=1), "relative_entropy", check_convergence=True, rtol=1e-12)


@pytest.mark.slow
def test_blind_mdl_point_regression(bern):
    code = build_code(CodeSpec("blind", "mdl_fisher", "point", 0.25), bern, 1024)
    r = error(code, Prior(bern), "relative_entropy")
    assert r.value == pytest.approx(0.16122187133697, rel=1e-8)


def test_csv_rows(tmp_path, bern):
    r = evaluate(CodeSpec("visible", "quantize_euclid", "point", 1.0), bern, 16, Prior(bern),
                 "variational", seed=3)
    path = tmp_path / "e.csv"
    write_reports(path, [r])
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert rows[0]["exact_or_mc"] == "exact"
    assert float(rows[0]["error_nats_or_l1"]) == r.value


def test_monte_carlo_fallback_agrees_with_exact(bern):
    spec = CodeSpec("visible", "quantize_euclid", "point", 1.0)
    prior = Prior(bern, nodes=16)
    exact = evaluate(spec, bern, 64, prior, "variational")
    mc = evaluate(spec, bern, 64, prior, "variational", max_types=10, mc_samples=4000, seed=7)
    assert mc.exact_or_mc == "mc" and mc.seed == 7
    assert abs(mc.value - exact.value) < 5 * mc.std_error + 1e-3
    kl = evaluate(spec, bern, 64, prior, "relative_entropy", max_types=10)
    assert kl.value == pytest.approx(evaluate(spec, bern, 64, prior, "relative_entropy").value, rel=1e-10)


def test_no_fallback_for_blind_codes(bern):
    from approxsuff import TypeSpaceTooLarge
    with pytest.raises(TypeSpaceTooLarge):
        evaluate(CodeSpec("blind", "quantize_euclid", "point", 1.0), bern, 64, Prior(bern),
                 "variational", max_types=10)


def test_bad_specs():
    with pytest.raises(ValueError):
        CodeSpec("blind", "nope", "point", 1.0)
    with pytest.raises(ValueError):
        CodeSpec("blind", "mdl_fisher", "point", 0.0)
    with pytest.raises(ValueError):
        build_code(CodeSpec("blind", "mdl_fisher", "point", 1.0), Family(2), 5, enumerate_types(4, 2))


def test_refinement_over_sample_sizes(bern):
    prior = Prior(bern)
    for n in (64, 256, 1024):
        coarse = error(build_code(CodeSpec("visible", "quantize_euclid", "point", 0.5), bern, n),
                       prior, "relative_entropy").value
        fine = error(build_code(CodeSpec("visible", "quantize_euclid", "point", 0.25), bern, n),
                     prior, "relative_entropy").value
        assert fine <= coarse


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_blind_mdl_finite_n_bound(bern, r):
    prior = Prior(bern)
    j_max = 1 / (0.1 * 0.9)
    for n, t in ((64, 0.5), (256, 0.25)):
        value = error(build_code(CodeSpec("blind", "mdl_fisher", "point", t), bern, n), prior,
                      "relative_entropy").value
        assert value <= (1 + r) / 2 * bern.d + (1 + 1 / r) / 2 * j_max * t * t


def test_visible_point_code_exact_on_grid(bern):
    code = build_code(CodeSpec("visible", "quantize_euclid", "point", 1.0), bern, 100)
    z = code.points
    assert np.all(pointwise_error(code, z, "relative_entropy") == 0)
    assert np.allclose(pointwise_error(code, z, "variational"), 0, atol=1e-14)


def test_single_point_blind_code_ignores_parameter(bern):
    code = build_code(CodeSpec("blind", "quantize_euclid", "point", 1.0), bern, 2)
    assert code.size == 1
    ref = product_type_dist(bern, code.points[0], code.typespace).weights
    for z in (0.1, 0.5, 0.9):
        assert np.allclose(code.reconstruct(z).weights, ref)


def test_two_draw_cell_mixture_example(bern):
    ts = enumerate_types(2, 2)
    code = LatticeCode(CodeSpec("blind", "quantize_euclid", "cell_mixture", 0.25 * math.sqrt(2)), bern, ts)
    assert np.allclose(code.points[:, 0], [0.25, 0.5, 0.75])
    # every type has its own cell, so the reconstruction is P_z^2 itself
    assert np.allclose(code.reconstruct(0.5).weights, [0.25, 0.5, 0.25])
    assert np.allclose(code.reconstruct(0.3).weights, product_type_dist(bern, 0.3, ts).weights)
