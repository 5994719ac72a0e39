import numpy as np
import pytest

from roughheat.fbm import CameronMartinPath, FbmModel, dyadic_grid, lift_dyadic, sample_fbm
from roughheat.rde import (
    check_gradients,
    make_fields,
    solve_rde,
    solve_scaled_shifted,
    solve_skeleton,
)
from roughheat.young import YoungPath, young_pairing


def smooth_lift(depth, fn):
    g = dyadic_grid(depth)
    return lift_dyadic(fn(g), grid=g)


def test_exponential_oracle():
    # dy = y dx, x smooth: y_t = a exp(x_t)
    fields = make_fields("linear", sigma_lin=np.ones((1, 1, 1)))
    errs = []
    for depth in (8, 10):
        X = smooth_lift(depth, lambda t: np.sin(2 * np.pi * t) + 0.5 * t)
        sol = solve_rde(X, fields, np.array([1.3]))
        exact = 1.3 * np.exp(X.path[:, 0])
        errs.append(float(np.max(np.abs(sol.y[:, 0] - exact))))
    assert errs[-1] <= 1e-4
    slope = np.log2(errs[0] / errs[1]) / 2
    assert slope >= 1.0


def test_field_catalog_gradients():
    rng = np.random.default_rng(0)
    for fields in (
        make_fields("constant", n=2, d=3, sigma=0.7, b=[0.1, -0.2]),
        make_fields("linear", n=2, d=2, sigma_lin=rng.standard_normal((2, 2, 2)),
                    sigma_const=0.3, b_lin=rng.standard_normal((2, 2))),
        make_fields("trig", n=2, d=2, amplitude=0.8,
                    frequency=rng.standard_normal((2, 2, 2)), offset=1.0,
                    b_amplitude=0.5),
    ):
        assert check_gradients(fields, rng.standard_normal(2)) < 1e-8


def test_trig_higher_derivatives_fd():
    # second derivative vs central FD of the first
    fields = make_fields("trig", n=2, d=1, amplitude=0.9,
                         frequency=np.random.default_rng(1).standard_normal((2, 1, 2)),
                         offset=0.2)
    y = np.array([0.3, -0.7])
    h = 1e-5
    d2 = fields.sigma_deriv(y, 2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (fields.sigma_deriv(y + e, 1) - fields.sigma_deriv(y - e, 1)) / (2 * h)
        assert np.max(np.abs(fd - d2[..., k])) < 1e-5


def test_jacobian_inverse_on_fbm():
    model = FbmModel(H=0.4, dim=2, depth=8, seed=3)
    X = lift_dyadic(sample_fbm(model, 1)[0], H=0.4)
    fields = make_fields("trig", n=2, d=2, amplitude=0.5, offset=1.0)
    sol = solve_rde(X, fields, np.zeros(2), with_jacobian=True)
    assert sol.kj_defect() <= 1e-10
    # J solves the linearized equation: FD in the initial condition
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        yp = solve_rde(X, fields, e).y[-1]
        ym = solve_rde(X, fields, -e).y[-1]
        assert np.max(np.abs((yp - ym) / (2 * h) - sol.J[-1][:, k])) < 1e-4


def test_batch_axis_matches_loop():
    model = FbmModel(H=0.45, dim=1, depth=6, seed=9)
    X = lift_dyadic(sample_fbm(model, 1)[0], H=0.45)
    fields = make_fields("trig", n=1, d=1, amplitude=0.4, offset=1.1)
    starts = np.array([[0.0], [0.5], [-0.3]])
    batch = solve_rde(X, fields, starts)
    for i in range(3):
        single = solve_rde(X, fields, starts[i])
        assert np.array_equal(batch.y[i], single.y)


def test_drift_rides_time_coordinate():
    # dy = b dt through the paired time block: y = a + b t
    g = dyadic_grid(6)
    X = lift_dyadic(np.zeros_like(g), grid=g)
    Z = young_pairing(X, YoungPath(g, g, q=1.0))
    fields = make_fields("constant", sigma=0.0, b=2.5)
    sol = solve_rde(Z, fields, np.array([1.0]))
    assert np.max(np.abs(sol.y[:, 0] - (1.0 + 2.5 * g))) < 1e-12


def test_scaled_shifted_eps_zero_is_skeleton():
    g = dyadic_grid(6)
    X = lift_dyadic(np.sin(g), grid=g, H=0.4)
    gamma = CameronMartinPath(0.4, [0.5, 1.0], [[0.8], [-0.2]])
    fields = make_fields("trig", n=1, d=1, amplitude=0.3, offset=1.0,
                         b_offset=0.7)
    sol0 = solve_scaled_shifted(X, gamma, 0.0, fields, np.array([0.2]), 0.4)
    skel = solve_skeleton(gamma, fields, np.array([0.2]), grid=g)
    assert np.max(np.abs(sol0.y - skel.y)) < 1e-13


def test_box_guard_raises():
    fields = make_fields("linear", sigma_lin=np.ones((1, 1, 1)), box=2.0)
    X = smooth_lift(6, lambda t: 3.0 * t)
    with pytest.raises(RuntimeError):
        solve_rde(X, fields, np.array([1.0]))


def test_driver_dimension_guard():
    X = smooth_lift(4, lambda t: np.stack([t, t**2], axis=1))
    fields = make_fields("constant", n=1, d=4, sigma=1.0)
    with pytest.raises(ValueError):
        solve_rde(X, fields, np.zeros(1))
