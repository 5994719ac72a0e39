import numpy as np
import pytest

from roughheat.fbm import FbmModel, dyadic_grid, lift_dyadic, r_cov, sample_fbm
from roughheat.malliavin import (
    calibrate_cll_constant,
    cll_interpolation_check,
    holder_norm,
    malliavin_cov,
    nondegeneracy_scan,
)
from roughheat.rde import make_fields, solve_scaled_shifted


def fbm_lift(H, dim, depth, seed, index=0):
    model = FbmModel(H=H, dim=dim, depth=depth, seed=seed)
    return lift_dyadic(sample_fbm(model, 1, start=index)[0], H=H)


def test_identity_field_gives_identity_cov():
    X = fbm_lift(0.4, 2, 7, seed=2)
    fields = make_fields("constant", n=2, d=2, sigma=1.0)
    for eps in (0.25, 0.5, 1.0):
        sol = solve_scaled_shifted(X, None, eps, fields, np.zeros(2), 0.4,
                                   with_jacobian=True)
        mc = malliavin_cov(sol, fields, 0.4, eps=eps)
        assert np.max(np.abs(mc.Q - np.eye(2))) < 1e-10
        assert mc.min_eig > 0


def test_brownian_reduces_to_1d_quadrature():
    # H = 1/2: dR concentrates on the diagonal, so the 2D left-point sum
    # collapses exactly to the left-point 1D integral of B B^T ds
    X = fbm_lift(0.5, 1, 7, seed=4)
    fields = make_fields("trig", n=1, d=1, amplitude=0.4, offset=1.0)
    sol = solve_scaled_shifted(X, None, 0.5, fields, np.zeros(1), 0.5,
                               with_jacobian=True)
    mc = malliavin_cov(sol, fields, 0.5)
    A = np.einsum("tij,tja->tia", sol.K, fields.sigma(sol.y))[:-1]
    dt = np.diff(sol.grid)
    oracle = sol.J[-1] @ np.einsum("tia,tja,t->ij", A, A, dt) @ sol.J[-1].T
    assert np.max(np.abs(mc.Q - oracle)) < 1e-12


def test_cov_symmetric_psd_elliptic():
    X = fbm_lift(0.4, 2, 6, seed=6)
    rng = np.random.default_rng(8)
    fields = make_fields("trig", n=2, d=2, amplitude=0.3,
                         frequency=rng.standard_normal((2, 2, 2)),
                         offset=np.array([[1.0, 0.2], [-0.3, 1.1]]))
    sol = solve_scaled_shifted(X, None, 1.0, fields, np.zeros(2), 0.4,
                               with_jacobian=True)
    mc = malliavin_cov(sol, fields, 0.4)
    assert np.array_equal(mc.Q, mc.Q.T)
    assert mc.is_psd()
    assert mc.min_eig > 0


def test_nondegeneracy_scan_rank_guard():
    fields = make_fields("constant", n=2, d=1, sigma=np.array([[1.0], [0.0]]))
    with pytest.raises(ValueError):
        nondegeneracy_scan(fields, np.zeros(2), 0.4, [0.5], 2, depth=4)


def test_nondegeneracy_scan_summary():
    fields = make_fields("trig", n=1, d=1, amplitude=0.4, offset=1.0)
    rows, summary = nondegeneracy_scan(fields, np.zeros(1), 0.4,
                                       [0.5, 1.0], 5, depth=5, seed=1)
    assert len(rows) == 10
    for eps in (0.5, 1.0):
        q = summary[eps]["quantiles"]
        assert q[0.0] > 0
        assert q[0.0] <= q[0.5] <= q[1.0]
        assert summary[eps]["tail"][0.0] == 0.0


def test_holder_norm_oracle():
    g = np.linspace(0.0, 1.0, 65)
    assert np.isclose(holder_norm(g**0.4, g, 0.4), 1.0, atol=1e-12)
    assert np.isclose(holder_norm(2.0 * g, g, 1.0), 2.0, atol=1e-12)


def test_cll_check_scaling_and_trivial():
    g = dyadic_grid(6)
    f = np.sin(2 * np.pi * g)
    out = cll_interpolation_check(f, g, H=0.4, alpha=0.36, C_H=1.0)
    assert out["lhs"] <= out["rhs"] + 1e-12 or not out["holds"]
    # both sides are 1-homogeneous in f
    out2 = cll_interpolation_check(3.0 * f, g, H=0.4, alpha=0.36, C_H=1.0)
    assert np.isclose(out2["lhs"], 3.0 * out["lhs"])
    assert np.isclose(out2["rhs"], 3.0 * out["rhs"], rtol=1e-10)


def test_calibrated_constant_holds_on_fresh_paths():
    C_H = calibrate_cll_constant(0.4, 0.36, n_paths=60, depth=6, seed=100)
    assert C_H > 0
    rng = np.random.Generator(np.random.Philox(key=[999, 0]))
    g = dyadic_grid(6)
    from roughheat.malliavin import _random_trig_path
    for _ in range(60):
        f = _random_trig_path(rng, g)
        out = cll_interpolation_check(f, g, H=0.4, alpha=0.36, C_H=C_H)
        assert out["holds"]
