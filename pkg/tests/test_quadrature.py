from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spls.quadrature import MAX_DEGREE, simplex_quadrature


def exact_monomial(exps):
    # int over the reference simplex of prod x_i^a_i = prod a_i! / (sum a_i + d)!
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(sum(exps) + len(exps))


def rule_monomial(rule, exps):
    d = rule.dim
    x = rule.points[:, 1:]          # barycentric -> Cartesian on the reference simplex
    vals = np.prod([x[:, i] ** exps[i] for i in range(d)], axis=0)
    return np.dot(rule.weights, vals) / factorial(d)


def monomials(dim, degree):
    if dim == 2:
        return [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    return [(a, b, c) for a in range(degree + 1) for b in range(degree + 1 - a)
            for c in range(degree + 1 - a - b)]


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", range(MAX_DEGREE + 1))
def test_monomial_exactness(dim, degree):
    rule = simplex_quadrature(dim, degree)
    assert rule.degree >= degree
    for exps in monomials(dim, degree):
        assert rule_monomial(rule, exps) == pytest.approx(exact_monomial(exps), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", range(MAX_DEGREE + 1))
def test_weights_and_points(dim, degree):
    rule = simplex_quadrature(dim, degree)
    assert rule.points.shape[1] == dim + 1
    assert np.sum(rule.weights) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    assert np.all(rule.points >= -1e-14)


def test_centroid_rule():
    rule = simplex_quadrature(2, 1)
    assert len(rule.weights) == 1
    assert rule.weights[0] == 1.0
    assert np.allclose(rule.points[0], 1.0 / 3.0)


def test_one_degree_too_high_fails_for_centroid():
    rule = simplex_quadrature(2, 1)
    assert rule_monomial(rule, (2, 0)) != pytest.approx(exact_monomial((2, 0)), rel=1e-6)


@pytest.mark.parametrize("dim,degree", [(2, 7), (3, -1), (4, 2)])
def test_unsupported(dim, degree):
    with pytest.raises(ValueError):
        simplex_quadrature(dim, degree)


@given(st.integers(0, 6), st.data())
def test_random_polynomial_exactness(degree, data):
    rule = simplex_quadrature(2, degree)
    terms = monomials(2, degree)
    coefs = data.draw(st.lists(st.floats(-3, 3), min_size=len(terms), max_size=len(terms)))
    got = sum(c * rule_monomial(rule, e) for c, e in zip(coefs, terms))
    want = sum(c * exact_monomial(e) for c, e in zip(coefs, terms))
    assert got == pytest.approx(want, rel=1e-12, abs=1e-13)
