"""Fractional Brownian motion: covariance, exact sampling on dyadic grids,
canonical rough-path lifts, scaled drivers, and the finite-rank
reproducing-kernel representation of the Cameron-Martin space.

Sampling is deterministic and worker-count independent: sample ``i`` of a
model with seed ``s`` always uses the counter-based stream keyed by
``(s, i)`` (Philox), so batches can be generated in any order or split
across processes without changing the output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .roughcore import GeometricRoughPath2, default_p
from .young import YoungPath, young_pairing

__all__ = [
    "FbmModel",
    "CameronMartinPath",
    "r_cov",
    "sample_fbm",
    "lift_dyadic",
    "scaled_driver",
    "cm_inner",
    "dyadic_grid",
]

_CIRCULANT_MIN = 2**12


def r_cov(H: float, s, t):
    """fBm covariance R^H(s,t) = 0.5 (s^{2H} + t^{2H} - |t-s|^{2H})."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def dyadic_grid(depth: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, 2**depth + 1)


@dataclass
class FbmModel:
    """Sampling model for d independent fBm coordinates on a dyadic grid."""

    H: float
    dim: int = 1
    depth: int = 10
    seed: int = 0
    sampler: str = "auto"

    def __post_init__(self):
        if not 1.0 / 3.0 < self.H <= 0.5:
            raise ValueError("H must lie in (1/3, 1/2]")
        if self.sampler not in ("auto", "cholesky", "circulant"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        self.grid = dyadic_grid(self.depth)
        self._chol = None
        self._sqrt_eigs = None

    @property
    def n_steps(self) -> int:
        return 2**self.depth

    def _resolve_sampler(self) -> str:
        if self.sampler != "auto":
            return self.sampler
        return "circulant" if self.n_steps >= _CIRCULANT_MIN else "cholesky"

    def _cholesky_factor(self):
        if self._chol is None:
            ts = self.grid[1:]
            C = r_cov(self.H, ts[:, None], ts[None, :])
            try:
                self._chol = np.linalg.cholesky(C)
            except np.linalg.LinAlgError:
                # grid covariance can lose positive definiteness to rounding
                C = C + 1e-12 * np.eye(len(ts))
                self._chol = np.linalg.cholesky(C)
        return self._chol

    def _circulant_sqrt(self):
        # Davies-Harte embedding of the fGn autocovariance at unit step
        if self._sqrt_eigs is None:
            N = self.n_steps
            k = np.arange(N)
            rho = 0.5 * (
                np.abs(k + 1.0) ** (2 * self.H)
                + np.abs(k - 1.0) ** (2 * self.H)
                - 2.0 * np.abs(k) ** (2 * self.H)
            )
            c = np.concatenate([rho, [0.0], rho[1:][::-1]])
            g = np.fft.fft(c).real
            if np.any(g < -1e-10):
                raise ValueError("circulant embedding has negative eigenvalues")
            self._sqrt_eigs = np.sqrt(np.maximum(g, 0.0))
        return self._sqrt_eigs

    def manifest(self, count: int) -> dict:
        return {"H": self.H, "depth": self.depth, "seed": self.seed, "count": count}


def _sample_one(model: FbmModel, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[model.seed, index]))
    N, d = model.n_steps, model.dim
    kind = model._resolve_sampler()
    w = np.zeros((N + 1, d))
    if kind == "cholesky":
        L = model._cholesky_factor()
        z = rng.standard_normal((N, d))
        w[1:] = L @ z
    else:
        sq = model._circulant_sqrt()
        M = len(sq)
        for i in range(d):
            z = rng.standard_normal(M)
            # unitary mixing of real normals gives the right complex spectrum
            spec = sq * np.fft.fft(z) / np.sqrt(M)
            fgn = np.fft.ifft(spec * np.sqrt(M)).real[:N]
            w[1:, i] = np.cumsum(fgn) * (1.0 / N) ** model.H
    return w


def sample_fbm(model: FbmModel, n_samples: int, start: int = 0):
    """Sample paths w^(start), ..., w^(start+n_samples-1), shape (k, N+1, d)."""
    return np.stack([_sample_one(model, start + i) for i in range(n_samples)])


def lift_dyadic(w, depth: int | None = None, H: float | None = None,
                grid=None) -> GeometricRoughPath2:
    """Canonical level-2 lift of the piecewise-linear interpolation of w.

    Per finest step x^2 = 0.5 x^1 (x) x^1 (exact for line segments); coarser
    spans follow from the Chen relation inside GeometricRoughPath2.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if grid is None:
        grid = np.linspace(0.0, 1.0, len(w))
    n_avail = len(w) - 1
    if depth is not None:
        if 2**depth > n_avail:
            raise ValueError("depth exceeds data resolution")
        stride = n_avail // 2**depth
        w = w[::stride]
        grid = grid[::stride]
    dx = np.diff(w, axis=0)
    lvl2 = 0.5 * np.einsum("ia,ib->iab", dx, dx)
    p = default_p(H) if H is not None else None
    return GeometricRoughPath2(grid, dx, lvl2, p=p)


def scaled_driver(X: GeometricRoughPath2, eps: float, H: float) -> GeometricRoughPath2:
    """Young pairing of eps * x with the time path eps^{1/H} lambda_t = t."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    lam = YoungPath(X.grid, eps ** (1.0 / H) * X.grid, q=1.0)
    return young_pairing(X.scale(eps), lam)


@dataclass
class CameronMartinPath:
    """gamma_t = sum_j coeffs[j] R^H(t, nodes[j]); norm exact on the span."""

    H: float
    nodes: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim == 1:
            self.coeffs = self.coeffs[:, None]
        if len(self.nodes) != len(self.coeffs):
            raise ValueError("nodes/coeffs length mismatch")
        self.gram = r_cov(self.H, self.nodes[:, None], self.nodes[None, :])

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        K = r_cov(self.H, t[:, None], self.nodes[None, :])
        return K @ self.coeffs

    def as_young(self, grid, q: float = 1.0) -> YoungPath:
        return YoungPath(np.asarray(grid, float), self.evaluate(grid), q=q)

    def norm_sq(self) -> float:
        return float(np.einsum("ji,jk,ki->", self.coeffs, self.gram, self.coeffs))

    def to_record(self) -> dict:
        return {
            "H": self.H,
            "nodes": self.nodes.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CameronMartinPath":
        return cls(rec["H"], np.asarray(rec["nodes"]), np.asarray(rec["coeffs"]))

    @classmethod
    def zero(cls, H: float, dim: int = 1) -> "CameronMartinPath":
        return cls(H, np.array([1.0]), np.zeros((1, dim)))


def cm_inner(g1: CameronMartinPath, g2: CameronMartinPath) -> float:
    """RKHS inner product via the cross-Gram of the node sets."""
    if g1.H != g2.H:
        raise ValueError("Hurst parameters differ")
    if g1.dim != g2.dim:
        raise ValueError("dimension mismatch")
    G12 = r_cov(g1.H, g1.nodes[:, None], g2.nodes[None, :])
    return float(np.einsum("ji,jk,ki->", g1.coeffs, G12, g2.coeffs))
