import math

import numpy as np
import pytest
from scipy.integrate import quad

from approxsuff import Family, Prior, QuadratureError
from approxsuff.quadrature import arcsine_rule, composite_rule, tensor_rule


def test_gauss_legendre_polynomial_exactness():
    x, w = composite_rule(-1.0, 2.0, nodes=8)
    for deg in range(16):
        exact = (2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1)
        assert np.sum(w * x**deg) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_breaks_make_kinks_exact():
    x, w = composite_rule(0.0, 1.0, nodes=4, breaks=[0.3, 0.7])
    assert np.sum(w * np.abs(x - 0.3)) == pytest.approx(0.3**2 / 2 + 0.7**2 / 2, abs=1e-14)


def test_tensor_rule_area():
    pts, wts = tensor_rule([composite_rule(0, 1, 5), composite_rule(0, 2, 5)])
    assert pts.shape == (25, 2)
    assert np.sum(wts * pts[:, 0] * pts[:, 1]) == pytest.approx(1.0)


def test_arcsine_rule_handles_endpoint_singularity():
    x, w = arcsine_rule(0.0, 1.0, 32)
    assert np.all((x > 0) & (x < 1))
    assert np.sum(w / np.sqrt(x * (1 - x))) == pytest.approx(math.pi, rel=1e-12)


@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("kind", ["uniform", "jeffreys"])
def test_prior_normalisation(k, kind):
    prior = Prior(Family(k), kind)
    assert prior.check_normalization() < 1e-8


def test_prior_defaults():
    assert Prior(Family(2)).support == ((0.1, 0.9),)
    assert Prior(Family(3)).support == ((0.1, 0.45), (0.1, 0.45))


def test_jeffreys_density_against_quad():
    f = Family(2)
    prior = Prior(f, "jeffreys", (0.1, 0.9))
    norm = quad(lambda z: 1 / math.sqrt(z * (1 - z)), 0.1, 0.9)[0]
    assert prior.density([[0.3]])[0] == pytest.approx(1 / math.sqrt(0.21) / norm, rel=1e-12)


def test_closed_support_needs_graded_rule():
    f = Family(2)
    prior = Prior(f, "jeffreys", (0.0, 1.0), graded=True)
    assert prior._norm == pytest.approx(math.pi, rel=1e-10)


def test_bad_priors():
    f = Family(2)
    with pytest.raises(ValueError):
        Prior(f, "beta")
    with pytest.raises(ValueError):
        Prior(f, support=(0.5, 0.4))
    with pytest.raises(ValueError):
        Prior(Family(3), support=((0.1, 0.9), (0.1, 0.9)))


def test_normalisation_failure_is_reported():
    prior = Prior(Family(2), "uniform")
    prior._norm *= 1.01
    with pytest.raises(QuadratureError):
        prior.check_normalization()
