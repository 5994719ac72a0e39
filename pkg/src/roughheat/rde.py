"""Vector fields with exact derivatives and the level-2 RDE solver.

The step scheme is the area-corrected Euler (Davie) step

    y_{i+1} = y_i + F(y_i) z^1 + sum_{ab} grad F_b <F_a>(y_i) z^2[a, b]

using exactly the data a level-2 rough path provides. The Jacobian J and
its inverse K advance with the one-step matrix E of the linearized scheme,
K via the exact inverse of E, so K_t J_t = Id holds to rounding on every
grid point. All state arrays carry an optional leading batch axis, so one
call can propagate many Monte Carlo samples at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fbm import CameronMartinPath, lift_dyadic, r_cov
from .roughcore import GeometricRoughPath2
from .young import YoungPath, young_pairing, young_translate

__all__ = [
    "VectorFieldSet",
    "SolutionBundle",
    "make_fields",
    "check_gradients",
    "solve_rde",
    "solve_skeleton",
    "solve_scaled_shifted",
]

_SIN_CYCLE = (np.sin, np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u))


class VectorFieldSet:
    """sigma: R^n -> R^{n x d}, drift b: R^n -> R^n, with analytic
    derivatives up to order 4 for the built-in catalog.

    ``sigma_deriv(y, j)`` returns shape (..., n, d, n^j as j trailing axes);
    ``b_deriv(y, j)`` returns (..., n, n^j). Derivative axes index the state
    directions of differentiation, outermost first.
    """

    def __init__(self, kind, n, d, params, box=1e10):
        self.kind = kind
        self.n = n
        self.d = d
        self.params = params
        self.box = box

    # -- catalog evaluators -------------------------------------------------

    def sigma(self, y):
        return self.sigma_deriv(y, 0)

    def b(self, y):
        return self.b_deriv(y, 0)

    def sigma_deriv(self, y, j):
        y = np.asarray(y, dtype=float)
        p = self.params
        n, d = self.n, self.d
        batch = y.shape[:-1]
        if self.kind == "constant":
            if j == 0:
                out = np.broadcast_to(p["sigma"], batch + (n, d)).copy()
            else:
                out = np.zeros(batch + (n, d) + (n,) * j)
            return out
        if self.kind == "linear":
            A, S = p["sigma_lin"], p["sigma_const"]
            if j == 0:
                return np.einsum("iak,...k->...ia", A, y) + S
            if j == 1:
                return np.broadcast_to(A, batch + (n, d, n)).copy()
            return np.zeros(batch + (n, d) + (n,) * j)
        if self.kind == "trig":
            amp, freq, phase, off = (
                p["amp"], p["freq"], p["phase"], p["offset"]
            )
            u = np.einsum("iak,...k->...ia", freq, y) + phase
            g = amp * _SIN_CYCLE[j % 4](u)
            if j == 0:
                return g + off
            # each derivative multiplies by the frequency vector of the entry
            out = g
            for _ in range(j):
                out = out[..., None] * freq.reshape(
                    freq.shape[:2] + (1,) * (out.ndim - g.ndim) + (freq.shape[2],)
                )
            return out
        raise ValueError(f"unknown field kind {self.kind!r}")

    def b_deriv(self, y, j):
        y = np.asarray(y, dtype=float)
        p = self.params
        n = self.n
        batch = y.shape[:-1]
        if self.kind == "constant":
            if j == 0:
                return np.broadcast_to(p["b"], batch + (n,)).copy()
            return np.zeros(batch + (n,) + (n,) * j)
        if self.kind == "linear":
            B, c = p["b_lin"], p["b_const"]
            if j == 0:
                return np.einsum("ik,...k->...i", B, y) + c
            if j == 1:
                return np.broadcast_to(B, batch + (n, n)).copy()
            return np.zeros(batch + (n,) + (n,) * j)
        if self.kind == "trig":
            amp, freq, phase, off = (
                p["b_amp"], p["b_freq"], p["b_phase"], p["b_offset"]
            )
            u = np.einsum("ik,...k->...i", freq, y) + phase
            g = amp * _SIN_CYCLE[j % 4](u)
            if j == 0:
                return g + off
            out = g
            for _ in range(j):
                out = out[..., None] * freq.reshape(
                    freq.shape[:1] + (1,) * (out.ndim - g.ndim) + (freq.shape[1],)
                )
            return out
        raise ValueError(f"unknown field kind {self.kind!r}")

    def check_box(self, y):
        if np.max(np.abs(y)) > self.box:
            raise RuntimeError("field-domain exceeded: state left the boundedness box")


def _as_matrix(value, n, d):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return float(value) * np.eye(n, d)
    return value.reshape(n, d)


def make_fields(kind: str, n: int = 1, d: int = 1, box: float = 1e10, **kw) -> VectorFieldSet:
    """Field catalog factory; entries addressable by name + parameters.

    constant: sigma (scalar -> sigma * Id, or n x d), b (n,)
    linear:   sigma_lin (n,d,n), sigma_const, b_lin (n,n), b_const
    trig:     sigma[i,a] = offset + amp sin(freq . y + phase), same for b
    """
    if kind == "constant":
        params = {
            "sigma": _as_matrix(kw.get("sigma", 1.0), n, d),
            "b": np.broadcast_to(np.asarray(kw.get("b", 0.0), float), (n,)).copy(),
        }
    elif kind == "linear":
        A = np.asarray(kw.get("sigma_lin", np.zeros((n, d, n))), float).reshape(n, d, n)
        params = {
            "sigma_lin": A,
            "sigma_const": _as_matrix(kw.get("sigma_const", 0.0), n, d),
            "b_lin": np.asarray(kw.get("b_lin", np.zeros((n, n))), float).reshape(n, n),
            "b_const": np.broadcast_to(np.asarray(kw.get("b_const", 0.0), float), (n,)).copy(),
        }
    elif kind == "trig":
        def mat(name, default, shape):
            return np.broadcast_to(np.asarray(kw.get(name, default), float), shape).copy()
        params = {
            "amp": mat("amplitude", 1.0, (n, d)),
            "freq": mat("frequency", 1.0, (n, d, n)),
            "phase": mat("phase", 0.0, (n, d)),
            "offset": mat("offset", 0.0, (n, d)),
            "b_amp": mat("b_amplitude", 0.0, (n,)),
            "b_freq": mat("b_frequency", 1.0, (n, n)),
            "b_phase": mat("b_phase", 0.0, (n,)),
            "b_offset": mat("b_offset", 0.0, (n,)),
        }
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return VectorFieldSet(kind, n, d, params, box=box)


def check_gradients(fields: VectorFieldSet, y, h: float = 1e-6) -> float:
    """Max abs deviation of analytic first derivatives from central FD."""
    y = np.asarray(y, dtype=float)
    n = fields.n
    worst = 0.0
    ds = fields.sigma_deriv(y, 1)
    db = fields.b_deriv(y, 1)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        fd_s = (fields.sigma(y + e) - fields.sigma(y - e)) / (2 * h)
        fd_b = (fields.b(y + e) - fields.b(y - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd_s - ds[..., k]))))
        worst = max(worst, float(np.max(np.abs(fd_b - db[..., k]))))
    return worst


@dataclass
class SolutionBundle:
    grid: np.ndarray
    y: np.ndarray
    J: np.ndarray | None = None
    K: np.ndarray | None = None
    eps: float | None = None
    gamma: object = None

    @property
    def terminal(self):
        return self.y[..., -1, :]

    def kj_defect(self) -> float:
        if self.J is None:
            raise ValueError("bundle lacks Jacobian data")
        eye = np.eye(self.J.shape[-1])
        return float(np.max(np.abs(np.einsum(
            "...ij,...jk->...ik", self.K, self.J) - eye)))


def _combined(fields: VectorFieldSet, y, j, with_drift: bool):
    """F = [sigma | b] (drift block last) and its j-th derivative."""
    s = fields.sigma_deriv(y, j)
    if not with_drift:
        return s
    b = np.expand_dims(fields.b_deriv(y, j), axis=-(j + 1))
    return np.concatenate([s, b], axis=-(j + 1))


def solve_rde(driver: GeometricRoughPath2, fields: VectorFieldSet, a,
              with_jacobian: bool = False) -> SolutionBundle:
    """Solve the RDE along a level-2 driver; drift rides the final driver
    coordinate (the time block of the Young pairing) when driver.dim ==
    fields.d + 1.

    ``a`` may be (n,) or (batch, n); outputs then carry the batch axis first.
    """
    D = driver.dim
    if D == fields.d:
        with_drift = False
    elif D == fields.d + 1:
        with_drift = True
    else:
        raise ValueError("driver dimension must be d or d + 1")
    a = np.asarray(a, dtype=float)
    n = fields.n
    batch = a.shape[:-1]
    N = driver.n_steps
    y = np.empty(batch + (N + 1, n))
    y[..., 0, :] = a
    if with_jacobian:
        J = np.empty(batch + (N + 1, n, n))
        K = np.empty(batch + (N + 1, n, n))
        J[..., 0, :, :] = np.eye(n)
        K[..., 0, :, :] = np.eye(n)
    cur = np.broadcast_to(a, batch + (n,)).copy()
    for i in range(N):
        z1 = driver.lvl1[i]
        z2 = driver.lvl2[i]
        F = _combined(fields, cur, 0, with_drift)       # (..., n, D)
        dF = _combined(fields, cur, 1, with_drift)      # (..., n, D, n)
        # y-step: F z1 + grad F_b <F_a> z2[a, b]
        step = np.einsum("...ib,b->...i", F, z1)
        step += np.einsum("...ibk,...ka,ab->...i", dF, F, z2)
        if with_jacobian:
            d2F = _combined(fields, cur, 2, with_drift)  # (..., n, D, n, n)
            E = np.einsum("...iaj,a->...ij", dF, z1)
            E += np.einsum("...ibkj,...ka,ab->...ij", d2F, F, z2)
            E += np.einsum("...ibk,...kaj,ab->...ij", dF, dF, z2)
            E += np.eye(n)
            J[..., i + 1, :, :] = np.einsum("...ij,...jk->...ik", E, J[..., i, :, :])
            K[..., i + 1, :, :] = np.einsum(
                "...ij,...jk->...ik", K[..., i, :, :], np.linalg.inv(E))
        cur = cur + step
        fields.check_box(cur)
        y[..., i + 1, :] = cur
    if with_jacobian:
        return SolutionBundle(driver.grid, y, J=J, K=K)
    return SolutionBundle(driver.grid, y)


def solve_skeleton(gamma, fields: VectorFieldSet, a, grid=None,
                   with_jacobian: bool = False) -> SolutionBundle:
    """Skeleton Young ODE d phi^0 = sigma(phi^0) d gamma, no drift."""
    if isinstance(gamma, CameronMartinPath):
        if grid is None:
            raise ValueError("grid required for a Cameron-Martin gamma")
        values = gamma.evaluate(grid)
    elif isinstance(gamma, YoungPath):
        grid = gamma.grid
        values = gamma.values
    else:
        values = np.asarray(gamma, dtype=float)
        if grid is None:
            raise ValueError("grid required for raw gamma values")
    lift = lift_dyadic(values, grid=np.asarray(grid, float))
    return solve_rde(lift, fields, a, with_jacobian=with_jacobian)


def build_scaled_driver(X: GeometricRoughPath2, gamma, eps: float, H: float,
                        fields_d: int | None = None) -> GeometricRoughPath2:
    """Driver of (scaled, shifted) form: tau_gamma(eps x) paired with
    eps^{1/H} lambda. Works at eps = 0 too (pure skeleton driver)."""
    if isinstance(gamma, CameronMartinPath):
        g = gamma.as_young(X.grid)
    elif gamma is None:
        g = YoungPath(X.grid, np.zeros((len(X.grid), X.dim)))
    else:
        g = gamma
    Z = young_translate(X.scale(eps), g)
    lam = YoungPath(X.grid, eps ** (1.0 / H) * X.grid if eps > 0 else 0.0 * X.grid)
    return young_pairing(Z, lam)


def solve_scaled_shifted(X: GeometricRoughPath2, gamma, eps: float,
                         fields: VectorFieldSet, a, H: float,
                         with_jacobian: bool = False) -> SolutionBundle:
    """Solve d y = sigma(y)(eps dx + d gamma) + eps^{1/H} b(y) dt."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    driver = build_scaled_driver(X, gamma, eps, H)
    out = solve_rde(driver, fields, a, with_jacobian=with_jacobian)
    out.eps = eps
    out.gamma = gamma
    return out
