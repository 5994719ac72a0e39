import io

import numpy as np
import pytest

from roughheat.roughcore import (
    GeometricRoughPath2,
    besov_norm,
    chen_mul,
    control_value,
    default_p,
    greedy_partition,
    pvar_norm,
    read_jsonl,
    sew_rough_integral,
    sew_refinement_trace,
    write_jsonl,
    OneForm,
)


def circle_lift(depth):
    grid = np.linspace(0.0, 1.0, 2**depth + 1)
    w = np.stack([np.cos(2 * np.pi * grid), np.sin(2 * np.pi * grid)], axis=1)
    dx = np.diff(w, axis=0)
    lvl2 = 0.5 * np.einsum("ia,ib->iab", dx, dx)
    return GeometricRoughPath2(grid, dx, lvl2)


def smooth_lift(depth, fns):
    grid = np.linspace(0.0, 1.0, 2**depth + 1)
    w = np.stack([f(grid) for f in fns], axis=1)
    dx = np.diff(w, axis=0)
    return GeometricRoughPath2(grid, dx, 0.5 * np.einsum("ia,ib->iab", dx, dx))


def test_chen_relation_prefix_consistency():
    rng = np.random.default_rng(0)
    X = GeometricRoughPath2(
        np.linspace(0, 1, 17),
        rng.standard_normal((16, 3)),
        rng.standard_normal((16, 3, 3)),
    )
    a = X.increment(0, 7)
    b = X.increment(7, 16)
    full = X.increment(0, 16)
    c1, c2 = chen_mul(a, b)
    assert np.allclose(c1, full[0], atol=1e-13)
    assert np.allclose(c2, full[1], atol=1e-13)


def test_chen_mul_associative():
    rng = np.random.default_rng(1)
    incs = [(rng.standard_normal(3), rng.standard_normal((3, 3)))
            for _ in range(3)]
    left = chen_mul(chen_mul(incs[0], incs[1]), incs[2])
    right = chen_mul(incs[0], chen_mul(incs[1], incs[2]))
    assert np.max(np.abs(left[0] - right[0])) <= 1e-13
    assert np.max(np.abs(left[1] - right[1])) <= 1e-13


def test_levy_area_circle():
    X = circle_lift(10)
    _, x2 = X.increment(0, X.n_steps)
    area = 0.5 * (x2[0, 1] - x2[1, 0])
    # enclosed area of the unit circle, traversed once counterclockwise
    assert abs(area - np.pi) < 1e-3


def test_geometric_defect_and_scaling():
    X = smooth_lift(8, [np.sin, np.cos])
    assert X.geometric_defect() <= 1e-12
    Y = X.scale(2.0)
    assert np.allclose(Y.lvl1, 2 * X.lvl1)
    assert np.allclose(Y.lvl2, 4 * X.lvl2)


def test_coarsen_matches_increments():
    X = circle_lift(6)
    Y = X.coarsen(4)
    x1, x2 = X.increment(0, X.n_steps)
    y1, y2 = Y.increment(0, Y.n_steps)
    assert np.allclose(x1, y1, atol=1e-14)
    assert np.allclose(x2, y2, atol=1e-13)


def brute_force_pvar(vals, p):
    # sup over all partitions by explicit enumeration
    n = len(vals) - 1
    best = 0.0
    for mask in range(2**max(n - 1, 0)):
        idx = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        s = sum(np.linalg.norm(vals[idx[k + 1]] - vals[idx[k]]) ** p
                for k in range(len(idx) - 1))
        best = max(best, s)
    return best ** (1.0 / p)


def test_pvar_norm_against_brute_force():
    rng = np.random.default_rng(2)
    vals = rng.standard_normal((7, 2))
    for p in (1.5, 2.2, 3.0):
        assert np.isclose(pvar_norm(vals, p), brute_force_pvar(vals, p),
                          rtol=1e-12)


def test_pvar_norm_monotone_path():
    t = np.linspace(0, 1, 9)
    # monotone scalar path: p-variation equals the total increment
    assert np.isclose(pvar_norm(t**2, 2.5), 1.0, atol=1e-12)


def test_control_superadditive():
    X = circle_lift(5)
    g = X.grid
    w = lambda s, t: control_value(X, s, t, p=2.5).value
    for (s, m, t) in [(g[0], g[8], g[32]), (g[2], g[16], g[30])]:
        assert w(s, m) + w(m, t) <= w(s, t) + 1e-12


def test_greedy_partition_counts():
    X = circle_lift(6)
    parts = [greedy_partition(X, alpha, p=2.5).count
             for alpha in (0.05, 0.2, 1.0)]
    assert parts[0] >= parts[1] >= parts[2] >= 0
    assert parts[0] >= 1
    gp = greedy_partition(X, 0.2, p=2.5)
    assert gp.taus[0] == X.grid[0] and gp.taus[-1] == X.grid[-1]


def test_besov_norm_homogeneity():
    X = smooth_lift(6, [np.sin, lambda t: t**2])
    for level, power in ((1, 1.0), (2, 2.0)):
        v1 = besov_norm(X, level, 0.36, 48)
        v2 = besov_norm(X.scale(3.0), level, 0.36, 48)
        assert np.isclose(v2, 3.0**power * v1, rtol=1e-10)


def test_sew_rough_integral_smooth_oracle():
    # int x^0 dx over the lift of (t, t^2): first row = [1/2, 2/3]
    X = smooth_lift(10, [lambda t: t, lambda t: t**2])
    f = OneForm(
        value=lambda z: np.array([[z[0], z[0]], [z[1], z[1]]]),
        grad=lambda z: np.array(
            [[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]]),
        out_dim=2,
    )
    I = sew_rough_integral(f, X)
    end = I.increment(0, I.n_steps)[0]
    # row 0: int t dt + int t d(t^2); row 1: int t^2 dt + int t^2 d(t^2)
    exact = np.array([0.5 + 2.0 / 3.0, 1.0 / 3.0 + 0.5])
    assert np.max(np.abs(end - exact)) < 1e-6
    trace = sew_refinement_trace(f, X)
    errs = [np.max(np.abs(v - exact)) for v in trace]
    assert errs[-1] <= errs[0]


def test_jsonl_roundtrip_bit_exact():
    X = circle_lift(4)
    buf = io.StringIO()
    write_jsonl([X], buf)
    buf.seek(0)
    Y = read_jsonl(buf)[0]
    assert np.array_equal(X.grid, Y.grid)
    assert np.array_equal(X.lvl1, Y.lvl1)
    assert np.array_equal(X.lvl2, Y.lvl2)


def test_default_p_strictly_rougher():
    for H in (0.35, 0.4, 0.5):
        assert 1.0 / default_p(H) < H


def test_invalid_shapes_raise():
    with pytest.raises(ValueError):
        GeometricRoughPath2(np.array([0.0, 1.0]), np.zeros((1, 2)),
                            np.zeros((1, 3, 3)))
    with pytest.raises(ValueError):
        GeometricRoughPath2(np.array([0.0, 0.0]), np.zeros((1, 2)),
                            np.zeros((1, 2, 2)))
