import math
from fractions import Fraction

import numpy as np
import pytest

from roughheat.expansion import (
    as_fraction,
    expand,
    fit_order,
    index_set,
    remainder_norms,
)
from roughheat.fbm import dyadic_grid, lift_dyadic
from roughheat.rde import make_fields, solve_scaled_shifted
from roughheat.young import YoungPath

F = Fraction


def test_lambda1_families():
    s = index_set("lambda1", "2/5", 5)
    assert s.elements[:9] == (F(0), F(1), F(2), F(5, 2), F(3), F(7, 2),
                              F(4), F(9, 2), F(5))
    half = index_set("lambda1", "1/2", 6)
    assert half.elements == tuple(F(k) for k in range(7))


def test_lambda2_and_primed():
    l2 = index_set("lambda2", "2/5", 3)
    assert l2.elements == (F(0), F(1), F(3, 2), F(2), F(5, 2), F(3))
    l2p = index_set("lambda2'", "2/5", 2)
    assert l2p.elements == (F(0), F(1, 2), F(1), F(3, 2), F(2))


def test_lambda3_closure_and_lambda4():
    l3 = index_set("lambda3", "2/5", 3)
    assert l3.elements == (F(0), F(1), F(3, 2), F(2), F(5, 2), F(3))
    l4 = index_set("lambda4", "2/5", 3)
    assert l4.elements == (F(0), F(1, 2), F(1), F(3, 2), F(2), F(5, 2), F(3))
    # H = 1/2 collapses every family to the integers
    for fam in ("lambda3", "lambda3'", "lambda4"):
        assert index_set(fam, "1/2", 4).elements == tuple(F(k) for k in range(5))


def test_index_set_guards():
    with pytest.raises(ValueError):
        index_set("lambda1", "1/4", 3)
    with pytest.raises(ValueError):
        index_set("lambda9", "2/5", 3)
    with pytest.raises(ValueError):
        as_fraction(np.pi)


def linear_setup(depth, H="2/5"):
    # dy = y d(eps x + gamma): y_t = a exp(eps x_t + gamma_t), so
    # phi^kappa = a e^{gamma_t} x_t^k / k! on the integer ladder
    g = dyadic_grid(depth)
    xv = np.sin(2 * np.pi * g) + 0.3 * g
    X = lift_dyadic(xv, grid=g)
    gamma = YoungPath(g, 0.5 * g, q=1.0)
    fields = make_fields("linear", sigma_lin=np.ones((1, 1, 1)))
    return g, xv, X, gamma, fields


def test_linear_model_terms_closed_form():
    g, xv, X, gamma, fields = linear_setup(11)
    a = np.array([0.7])
    bundle = expand(X, gamma, fields, a, "2/5", 3)
    base = 0.7 * np.exp(0.5 * g)
    # integer orders carry x^k/k!; kappa = 5/2 is drift-only and vanishes
    for kap, k in ((F(1), 1), (F(2), 2)):
        exact = base * xv**k / math.factorial(k)
        assert np.max(np.abs(bundle.term(kap)[:, 0] - exact)) < 2e-6
    assert np.max(np.abs(bundle.term(F(5, 2)))) == 0.0
    assert bundle.mminv_defect() < 1e-12


def test_linear_model_remainder_closed_form():
    g, xv, X, gamma, fields = linear_setup(13)
    a = np.array([0.7])
    k = 2
    bundle = expand(X, gamma, fields, a, "2/5", k)
    eps = 0.1
    sol = solve_scaled_shifted(X, gamma, eps, fields, a, 0.4)
    rem = sol.y[-1, 0] - bundle.partial_sum(eps)[-1, 0]
    exact = 0.7 * np.exp(0.5 + eps * xv[-1]) - 0.7 * np.exp(0.5) * (
        1.0 + eps * xv[-1] + (eps * xv[-1]) ** 2 / 2.0)
    assert abs(rem - exact) < 1e-8


def test_remainder_norms_fit_order():
    g, xv, X, gamma, fields = linear_setup(9)
    bundle = expand(X, gamma, fields, np.array([0.7]), "2/5", 1)
    eps_list = [0.05, 0.08, 0.12, 0.2]
    rows = remainder_norms(bundle, eps_list, p=2.5)
    fit = fit_order(eps_list, [r["pvar_norm"] for r in rows])
    assert abs(fit["slope"] - 2.0) < 0.2
    assert fit["r2"] > 0.99
    assert rows[0]["kappa_next"] == 2.0


def test_fit_order_synthetic_exact():
    eps = [0.1, 0.2, 0.4]
    fit = fit_order(eps, [3.0 * e**2.5 for e in eps])
    assert np.isclose(fit["slope"], 2.5, atol=1e-12)
    assert np.isclose(fit["r2"], 1.0)
    with pytest.raises(ValueError):
        fit_order([0.1, 0.2], [1.0, -1.0])


def test_expand_gamma_part_enters():
    # nonlinear sigma with a gamma shift: phi^2 includes the j = 2 gamma term;
    # check against a finite difference of the full map in eps
    g = dyadic_grid(10)
    X = lift_dyadic(np.sin(2 * np.pi * g), grid=g)
    gamma = YoungPath(g, 0.6 * g, q=1.0)
    fields = make_fields("trig", n=1, d=1, amplitude=0.7, frequency=1.3,
                         offset=1.0)
    a = np.array([0.4])
    bundle = expand(X, gamma, fields, a, "2/5", 2)
    h = 1e-3
    ys = [solve_scaled_shifted(X, gamma, e, fields, a, 0.4).y[-1, 0]
          for e in (0.0, h, 2 * h)]
    fd2 = (ys[2] - 2 * ys[1] + ys[0]) / h**2
    assert abs(fd2 / 2.0 - bundle.term(F(2))[-1, 0]) < 1e-3
