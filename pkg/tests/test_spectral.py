from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pdeloopgain.spectral import (
    SLSpec,
    WeightFunction,
    check_H4,
    eigen_residual,
    eigensystem_dirichlet_dirichlet,
    eigensystem_dirichlet_robin,
    gauss_rule,
    gauss_rule_for_modes,
    h3_partial_sums,
    loop_a_weight,
    loop_b_weight,
    printed_normalizer,
    robin_offsets,
    unit_normalizer,
    weighted_sup_norm,
)


def test_gauss_rule_exact_for_polynomials():
    nodes, w = gauss_rule(4, 16)
    assert len(nodes) == 64
    for k in range(0, 60, 7):
        assert np.sum(w * nodes ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)
    assert len(gauss_rule_for_modes(200)[0]) == 16 * 100


def test_q_zero_gives_exact_dirichlet_neumann_spectrum():
    p, a = 0.7, 0.3
    es = eigensystem_dirichlet_robin(p, a, 0.0, 20)
    assert np.all(es.offsets == 0.0)
    n = np.arange(1, 21)
    np.testing.assert_allclose(es.eigenvalues, p * ((2 * n - 1) * np.pi / 2) ** 2 - a, rtol=1e-10, atol=0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50.0, 0.999))
def test_robin_roots_solve_the_transcendental_equation(q):
    b = robin_offsets(q, 12)
    n = np.arange(1, 13)
    w = (2 * n - 1) * np.pi / 2 - b
    assert np.all(w > (n - 1) * np.pi) and np.all(w < n * np.pi)
    np.testing.assert_allclose(w / np.tan(w), q, atol=1e-8 * (1 + abs(q)))


def test_robin_q_must_be_below_one():
    with pytest.raises(ValueError):
        robin_offsets(1.0, 3)


def test_omega_cot_omega_decreasing():
    w = np.linspace(1e-6, np.pi - 1e-6, 200001)
    assert np.all(np.diff(w / np.tan(w)) < 0)


@pytest.mark.parametrize("q", [-3.0, -0.5, 0.5, 0.9])
def test_offsets_decay_like_one_over_n(q):
    b = np.abs(robin_offsets(q, 50))
    n = np.arange(1, 51)
    C = np.max(b * n)
    assert np.all(b <= C / n + 1e-15)
    # tail constant settles near |q| / pi (w_n b_n -> q)
    assert b[-1] * 49.5 * np.pi == pytest.approx(abs(q), rel=0.02)


@pytest.mark.parametrize("q", [-2.0, 0.0, 0.6])
def test_orthonormality(q):
    es = eigensystem_dirichlet_robin(1.3, 0.2, q, 20)
    nodes, w = gauss_rule_for_modes(64)
    ph = es.phi(nodes)
    gram = (ph * w) @ ph.T
    assert np.max(np.abs(gram - np.eye(20))) <= 1e-8


def test_orthonormality_dirichlet():
    es = eigensystem_dirichlet_dirichlet(2.0, 20)
    nodes, w = gauss_rule_for_modes(64)
    ph = es.phi(nodes)
    assert np.max(np.abs((ph * w) @ ph.T - np.eye(20))) <= 1e-8


def test_unit_normalizer_matches_quadrature_and_printed_form():
    b = robin_offsets(-1.2, 6)
    for n in range(1, 7):
        w = (2 * n - 1) * np.pi / 2 - b[n - 1]
        integral, _ = quad(lambda z: np.sin(w * z) ** 2, 0.0, 1.0, epsabs=1e-14)
        assert unit_normalizer(w) == pytest.approx(integral ** -0.5, rel=1e-12)
        assert printed_normalizer(n, b[n - 1]) == pytest.approx(unit_normalizer(w), rel=1e-12)


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5])
def test_eigen_residual_second_order(q):
    es = eigensystem_dirichlet_robin(1.0, 0.5, q, 5)
    r1, r2 = eigen_residual(es, 201), eigen_residual(es, 401)
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)
    # leading term p h^2 w^4 A / 12
    h = 1.0 / 200
    bound = h ** 2 / 12 * np.max(es.diffusion * es.frequencies ** 4 * es.normalizers)
    assert r1 <= 1.01 * bound


def test_h3_partial_sums_converge():
    es = eigensystem_dirichlet_robin(1.0, 0.0, -0.5, 400)
    s = h3_partial_sums(es)
    assert np.all(np.diff(s) >= 0)
    assert s[399] - s[199] < 2e-3 * s[399]


def test_weight_functions():
    eta = loop_a_weight(math.pi / 4, 1.0)
    assert eta.sigma == pytest.approx(1.0 + (math.pi / 2) ** 2)
    z = np.linspace(0, 1, 11)
    np.testing.assert_allclose(eta(z), np.sin(math.pi / 4 + math.pi / 2 * z))
    assert eta(0.0) == pytest.approx(eta(1.0))
    with pytest.raises(ValueError):
        loop_a_weight(math.pi / 2, 1.0)
    etb = loop_b_weight(0.3, 1.2, 2.0, 0.5)
    assert etb.sigma == pytest.approx(2.0 * 1.44 - 0.5)
    h = 1e-5
    zz = np.array([0.2, 0.7])
    np.testing.assert_allclose(etb.derivative(zz), (etb(zz + h) - etb(zz - h)) / (2 * h), rtol=1e-8)
    np.testing.assert_allclose(etb.second_derivative(zz),
                               (etb(zz + h) - 2 * etb(zz) + etb(zz - h)) / h ** 2, rtol=1e-4)


def test_weighted_sup_norm():
    eta = WeightFunction(math.pi / 6, 0.0, 1.0)  # constant 1/2
    z = np.linspace(0, 1, 5)
    assert weighted_sup_norm(np.array([0.1, -0.4, 0.2, 0, 0]), z, eta) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        weighted_sup_norm(np.ones(5), z, lambda x: 1.0 - x)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(-5.0, 20.0))
def test_H4_holds_for_loop_a_weight(theta, K):
    assume(K + (math.pi - 2 * theta) ** 2 > 1e-3)
    eta = loop_a_weight(theta, K)
    assert check_H4(SLSpec.loop_a(K), eta, eta.sigma).passed


def test_H4_loop_b_boundary_sign():
    p, a, q = 1.0, -0.5, -0.5
    good = loop_b_weight(0.3, 1.5, p, a)  # 1.5 cot(1.8) = -0.35 > q
    assert check_H4(SLSpec.loop_b(p, a, q), good, good.sigma).passed
    bad = loop_b_weight(0.3, 2.5, p, a)  # 2.5 cot(2.8) = -7.4 < q
    assert not check_H4(SLSpec.loop_b(p, a, q), bad, bad.sigma).passed
    # too large a decay rate breaks the differential inequality
    assert not check_H4(SLSpec.loop_b(p, a, q), good, good.sigma + 0.1).passed


def test_eigensystem_csv():
    text = eigensystem_dirichlet_robin(1.0, 0.0, 0.0, 3).to_csv()
    lines = text.splitlines()
    assert lines[0] == "n,b_n,lambda_n,A_n" and len(lines) == 4
    assert float(lines[1].split(",")[2]) == pytest.approx((np.pi / 2) ** 2)
