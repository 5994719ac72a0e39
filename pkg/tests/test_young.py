import numpy as np
import pytest

from roughheat.fbm import lift_dyadic, r_cov
from roughheat.young import (
    TwoParamFunction,
    YoungPath,
    richardson_error,
    young_2d,
    young_integral,
    young_pairing,
    young_translate,
)


def grid_path(depth, fn):
    g = np.linspace(0.0, 1.0, 2**depth + 1)
    return g, fn(g)


def test_t_d_tsquared():
    g, t = grid_path(13, lambda s: s)
    x = YoungPath(g, t, q=1.0)
    y = YoungPath(g, t**2, q=1.0)
    val = young_integral(x, y).values[-1, 0]
    assert abs(val - 2.0 / 3.0) < 1e-8


def test_left_rule_first_order():
    g, t = grid_path(8, lambda s: s)
    x = YoungPath(g, t, q=1.0)
    y = YoungPath(g, t**2, q=1.0)
    left = young_integral(x, y, rule="left").values[-1, 0]
    trap = young_integral(x, y, rule="trapezoid").values[-1, 0]
    assert abs(trap - 2.0 / 3.0) < abs(left - 2.0 / 3.0)


def test_integration_by_parts_exact():
    # trapezoid sums telescope: int x dy + int y dx = xy - x0 y0 exactly
    g = np.linspace(0.0, 1.0, 65)
    x = YoungPath(g, np.sin(3 * g), q=1.0)
    y = YoungPath(g, np.cos(2 * g) + g, q=1.0)
    ixy = young_integral(x, y).values[:, 0]
    iyx = young_integral(y, x).values[:, 0]
    prod = x.values[:, 0] * y.values[:, 0]
    assert np.max(np.abs(ixy + iyx - (prod - prod[0]))) < 1e-13


def test_richardson_error_shrinks():
    errs = []
    for depth in (6, 8):
        g, t = grid_path(depth, lambda s: s)
        x = YoungPath(g, np.sin(t), q=1.0)
        y = YoungPath(g, t**3, q=1.0)
        errs.append(richardson_error(x, y))
    assert errs[1] < errs[0]


def test_young_condition_guard():
    g = np.linspace(0.0, 1.0, 9)
    x = YoungPath(g, g, q=1.9)
    with pytest.raises(ValueError):
        young_integral(x, YoungPath(g, g, q=1.9), p_x=2.5)


def test_pairing_cross_block_oracle():
    # cross integral of the pairing vs dense trapezoid quadrature
    g = np.linspace(0.0, 1.0, 2**9 + 1)
    w = np.sin(2 * np.pi * g)
    X = lift_dyadic(w, grid=g)
    h = YoungPath(g, g**2, q=1.0)
    Z = young_pairing(X, h)
    assert Z.dim == 2
    _, z2 = Z.increment(0, Z.n_steps)
    integrand = w * 2 * g                # int x dh, dense trapezoid
    exact = float(np.sum(0.5 * (integrand[:-1] + integrand[1:]) * np.diff(g)))
    assert abs(z2[0, 1] - exact) < 1e-4
    assert Z.geometric_defect() < 1e-12


def test_translate_group_action():
    g = np.linspace(0.0, 1.0, 2**7 + 1)
    X = lift_dyadic(np.stack([np.sin(g), np.cos(3 * g)], axis=1), grid=g)
    h1 = YoungPath(g, np.stack([g, g**2], axis=1), q=1.0)
    h2 = YoungPath(g, np.stack([np.sqrt(g + 1), -g], axis=1), q=1.0)
    both = YoungPath(g, h1.values + h2.values, q=1.0)
    A = young_translate(young_translate(X, h1), h2)
    B = young_translate(X, both)
    assert np.max(np.abs(A.lvl1 - B.lvl1)) < 1e-14
    assert np.max(np.abs(A.lvl2 - B.lvl2)) < 1e-14
    # inverse translation restores the original lift
    back = young_translate(young_translate(X, h1),
                           YoungPath(g, -h1.values, q=1.0))
    assert np.max(np.abs(back.lvl2 - X.lvl2)) < 1e-14


def test_young_2d_constant_is_variance():
    # f = 1: Delta_T telescopes to R(T, T) exactly
    for H in (0.4, 0.5):
        R = TwoParamFunction(lambda s, t, H=H: r_cov(H, s, t))
        g = np.linspace(0.0, 1.0, 2**6 + 1)
        val = young_2d(np.ones_like(g), R, T=1.0, grid=g)
        assert abs(val - r_cov(H, 1.0, 1.0)) < 1e-12


def test_young_2d_brownian_oracle():
    # H = 1/2: dR concentrates on the diagonal, Delta_T(f) = int_0^T f^2 ds
    R = TwoParamFunction(lambda s, t: r_cov(0.5, s, t))
    g = np.linspace(0.0, 1.0, 2**10 + 1)
    f = np.sin(2 * np.pi * g) + 0.3
    val = young_2d(f, R, T=1.0, grid=g, extrapolate=False)
    exact = 0.5 + 0.09  # int (sin(2 pi s) + 0.3)^2 ds
    assert abs(val - exact) < 1e-3


def test_young_2d_condition_guard():
    R = TwoParamFunction(lambda s, t: r_cov(0.4, s, t))
    with pytest.raises(ValueError):
        young_2d(np.ones(9), R, grid=np.linspace(0, 1, 9),
                 alpha_f=0.1, two_H=0.8)
