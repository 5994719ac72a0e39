"""Index-set arithmetic and the fractional Taylor expansion of the
Lyons-Ito map.

Index sets live in Z + H^{-1} Z and are enumerated with exact Fraction
arithmetic (H must be rational). Expansion terms phi^kappa solve the linear
hierarchy

    d phi^k - grad sigma(phi^0)<phi^k, d gamma> = dZ^k,

where dZ^k collects, over ordered tuples of lower positive orders,
(1/j!) grad^j sigma(phi^0)<phi^{i_1},...,phi^{i_j}, dx> with tuple sum k-1
(x part; j = 0 gives sigma(phi^0) dx at k = 1), the same against d gamma
with j >= 2 and tuple sum k (gamma part), and grad^j b(phi^0)<...> dt with
tuple sum k - 1/H (drift part; j = 0 gives b(phi^0) dt at k = 1/H).
Each term is recovered by variation of constants phi^k = M int M^{-1} dZ^k
with M the skeleton Jacobian. The x-driven integrals are controlled rough
integrals: every phi^i carries its Gubinelli derivative D phi^i (the x-part
integrand of its own equation), which supplies the level-2 correction; the
quadrature uses endpoint-averaged integrands so smooth drivers converge at
second order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fbm import CameronMartinPath
from .rde import VectorFieldSet, solve_scaled_shifted, solve_skeleton
from .roughcore import GeometricRoughPath2, pvar_norm

__all__ = [
    "IndexSet",
    "ExpansionBundle",
    "as_fraction",
    "index_set",
    "expand",
    "remainder_norms",
    "fit_order",
]


def as_fraction(H) -> Fraction:
    if isinstance(H, (Fraction, int)):
        return Fraction(H)
    if isinstance(H, str):
        return Fraction(H)
    f = Fraction(H).limit_denominator(1000)
    if abs(float(f) - float(H)) > 1e-12:
        raise ValueError("H must be rational (e.g. Fraction(2, 5) or '2/5')")
    return f


@dataclass(frozen=True)
class IndexSet:
    family: str
    H: Fraction
    cutoff: Fraction
    elements: tuple

    def floats(self):
        return [float(e) for e in self.elements]

    def __getitem__(self, i):
        return self.elements[i]

    def __len__(self):
        return len(self.elements)


def _lambda1(H: Fraction, cutoff: Fraction):
    inv = 1 / H
    out = set()
    n1 = 0
    while n1 <= cutoff:
        n2 = 0
        while n1 + n2 * inv <= cutoff:
            out.add(Fraction(n1) + n2 * inv)
            n2 += 1
        n1 += 1
    return sorted(out)


def _sum_closure(gens, cutoff: Fraction):
    """All finite sums of the positive generators, plus 0, up to cutoff."""
    out = {Fraction(0)}
    frontier = {Fraction(0)}
    gens = [g for g in gens if 0 < g <= cutoff]
    while frontier:
        nxt = set()
        for v in frontier:
            for g in gens:
                w = v + g
                if w <= cutoff and w not in out:
                    out.add(w)
                    nxt.add(w)
        frontier = nxt
    return sorted(out)


def index_set(family: str, H, cutoff=6) -> IndexSet:
    """Enumerate one of the families Lambda1, Lambda2, Lambda2', Lambda3,
    Lambda3', Lambda4 below the cutoff."""
    H = as_fraction(H)
    cutoff = Fraction(cutoff)
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if not Fraction(1, 3) < H <= Fraction(1, 2):
        raise ValueError("H must lie in (1/3, 1/2]")
    fam = family.replace("'", "p").replace("′", "p").lower()
    l1 = _lambda1(H, cutoff + 2)
    if fam == "lambda1":
        elems = [e for e in l1 if e <= cutoff]
    elif fam == "lambda2":
        elems = sorted(e - 1 for e in l1 if e != 0 and e - 1 <= cutoff)
    elif fam == "lambda2p":
        elems = sorted(e - 2 for e in l1 if e > 1 and e - 2 <= cutoff)
    elif fam in ("lambda3", "lambda3p", "lambda4"):
        g2 = [e - 1 for e in l1 if e > 1 and e - 1 <= cutoff]
        g2p = [e - 2 for e in l1 if e > 2 and e - 2 <= cutoff]
        if fam == "lambda3":
            elems = _sum_closure(g2, cutoff)
        elif fam == "lambda3p":
            elems = _sum_closure(g2p, cutoff)
        else:
            l3 = _sum_closure(g2, cutoff)
            l3p = _sum_closure(g2p, cutoff)
            elems = sorted({a + b for a in l3 for b in l3p if a + b <= cutoff})
    else:
        raise ValueError(f"unknown index family {family!r}")
    return IndexSet(family, H, cutoff, tuple(elems))


def _compositions(target: Fraction, pool, min_parts: int = 1,
                  max_parts: int = 12):
    """Ordered tuples from the sorted positive ``pool`` summing to target."""
    out = []

    def rec(prefix, remaining, parts_left):
        if remaining == 0:
            if len(prefix) >= min_parts:
                out.append(tuple(prefix))
            return
        if parts_left == 0:
            return
        for g in pool:
            if g > remaining:
                break
            prefix.append(g)
            rec(prefix, remaining - g, parts_left - 1)
            prefix.pop()

    if target > 0:
        rec([], target, max_parts)
    return out


def _fold(T, vecs):
    """Contract the trailing derivative slots of T with state paths.

    T: (N+1, ..., n, n, ..., n) with len(vecs) trailing slots; the slots are
    symmetric, so folding from the last axis is order-independent.
    """
    out = T
    for v in vecs:
        out = np.einsum("t...k,tk->t...", out, v)
    return out


@dataclass
class ExpansionBundle:
    H: Fraction
    grid: np.ndarray
    kappas: tuple
    kappa_next: Fraction
    phi0: np.ndarray
    terms: dict
    dterms: dict
    M: np.ndarray
    Minv: np.ndarray
    fields: VectorFieldSet
    gamma: object
    X: GeometricRoughPath2
    a: np.ndarray

    def term(self, kappa):
        kappa = Fraction(kappa)
        if kappa == 0:
            return self.phi0
        return self.terms[kappa]

    def partial_sum(self, eps: float) -> np.ndarray:
        out = self.phi0.copy()
        for kap, phi in self.terms.items():
            out = out + eps ** float(kap) * phi
        return out

    def mminv_defect(self) -> float:
        eye = np.eye(self.M.shape[-1])
        return float(np.max(np.abs(
            np.einsum("tij,tjk->tik", self.M, self.Minv) - eye)))


def _gamma_values(gamma, grid, dim):
    if gamma is None:
        return np.zeros((len(grid), dim))
    if isinstance(gamma, CameronMartinPath):
        return gamma.evaluate(grid)
    v = np.asarray(getattr(gamma, "values", gamma), dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return v


def expand(X: GeometricRoughPath2, gamma, fields: VectorFieldSet, a, H,
           k: int) -> ExpansionBundle:
    """Compute phi^{kappa_1}, ..., phi^{kappa_k} on the grid of X."""
    H = as_fraction(H)
    grid = X.grid
    n, d = fields.n, fields.d
    a = np.asarray(a, dtype=float)
    N = X.n_steps
    inv_H = 1 / H

    gvals = _gamma_values(gamma, grid, d)
    skel = solve_skeleton(gvals, fields, a, grid=grid, with_jacobian=True)
    phi0, M, Minv = skel.y, skel.J, skel.K
    dgam = np.diff(gvals, axis=0)
    dt = np.diff(grid)

    l1 = index_set("lambda1", H, cutoff=Fraction(30))
    positive = [e for e in l1.elements if e != 0]
    if k > len(positive):
        raise ValueError("order k exceeds enumerated index set")
    kappas = positive[:k]
    kappa_next = positive[k] if k < len(positive) else None

    max_j = max(int(max(kappas)) + 1, 2) if kappas else 2
    dsig = {j: fields.sigma_deriv(phi0, j) for j in range(max_j + 1)}
    dbb = {j: fields.b_deriv(phi0, j) for j in range(max_j + 1)}

    # per-step level-2 data of x, with the sym part removed (the endpoint
    # average of the integrand already supplies 0.5 x^1 (x) x^1)
    x1 = X.lvl1
    x2a = X.lvl2 - 0.5 * np.einsum("ia,ib->iab", x1, x1)

    terms: dict = {}
    dterms: dict = {}
    phi_of = {Fraction(0): phi0}

    for kap in kappas:
        done = sorted(key for key in phi_of if key > 0)
        # ---- x part: integrand g and Gubinelli derivative gp
        g = np.zeros((N + 1, n, d))
        gp = np.zeros((N + 1, n, d, d))  # gp[t,i,b,a] = d g[t,i,b] / d x^a
        if kap == 1:
            g += dsig[0]
        for tup in _compositions(kap - 1, done):
            j = len(tup)
            if j > max_j:
                raise ValueError(f"need grad^{j} sigma beyond catalog order")
            coef = 1.0 / math.factorial(j)
            vecs = [phi_of[t] for t in tup]
            g += coef * _fold(dsig[j], vecs)
            for l in range(j):
                Dl = dterms.get(tup[l])
                if Dl is None:
                    continue
                rest = [v for m, v in enumerate(vecs) if m != l]
                part = _fold(dsig[j], rest)  # (N+1, n, d, n)
                gp += coef * np.einsum("tibk,tka->tiba", part, Dl)
        # ---- gamma part (j >= 2) and drift part
        q = np.zeros((N + 1, n, d))
        for tup in _compositions(kap, done, min_parts=2):
            j = len(tup)
            if j > max_j:
                raise ValueError(f"need grad^{j} sigma beyond catalog order")
            q += (1.0 / math.factorial(j)) * _fold(
                dsig[j], [phi_of[t] for t in tup])
        r = np.zeros((N + 1, n))
        if kap == inv_H:
            r += dbb[0]
        for tup in _compositions(kap - inv_H, done):
            j = len(tup)
            if j > max_j:
                raise ValueError(f"need grad^{j} b beyond catalog order")
            r += (1.0 / math.factorial(j)) * _fold(
                dbb[j], [phi_of[t] for t in tup])

        # ---- variation of constants: I = int M^{-1} dZ, phi = M I
        Wg = np.einsum("tui,tib->tub", Minv, g)
        Wgp = np.einsum("tui,tiba->tuba", Minv, gp)
        Wq = np.einsum("tui,tib->tub", Minv, q)
        Wr = np.einsum("tui,ti->tu", Minv, r)
        steps = np.einsum("iub,ib->iu", 0.5 * (Wg[:-1] + Wg[1:]), x1)
        steps += np.einsum("iuba,iab->iu", Wgp[:-1], x2a)
        steps += np.einsum("iub,ib->iu", 0.5 * (Wq[:-1] + Wq[1:]), dgam)
        steps += 0.5 * (Wr[:-1] + Wr[1:]) * dt[:, None]
        I = np.concatenate([np.zeros((1, n)), np.cumsum(steps, axis=0)])
        phi = np.einsum("tij,tj->ti", M, I)
        terms[kap] = phi
        dterms[kap] = g
        phi_of[kap] = phi

    return ExpansionBundle(H, grid, tuple(kappas), kappa_next, phi0, terms,
                           dterms, M, Minv, fields, gamma, X, a)


def remainder_norms(bundle: ExpansionBundle, eps_list, p: float | None = None,
                    max_points: int = 2048):
    """Table of p-variation norms of the level-1 remainder per epsilon.

    Rows: dicts with eps, k, kappa_next, pvar_norm, endpoint_abs. The
    remainder path is subsampled to at most ``max_points`` grid points
    before the O(N^2) p-variation DP.
    """
    if p is None:
        p = bundle.X.p
    if p is None:
        p = 2.5
    k = len(bundle.terms)
    kn = float(bundle.kappa_next) if bundle.kappa_next is not None else float("nan")
    N = len(bundle.grid) - 1
    stride = max(1, N // max_points)
    rows = []
    for eps in eps_list:
        if eps == 0.0:
            rem = np.zeros_like(bundle.phi0)
        else:
            sol = solve_scaled_shifted(bundle.X, bundle.gamma, eps,
                                       bundle.fields, bundle.a, float(bundle.H))
            rem = sol.y - bundle.partial_sum(eps)
        rows.append({
            "eps": float(eps),
            "k": k,
            "kappa_next": kn,
            "pvar_norm": pvar_norm(rem[::stride], p),
            "endpoint_abs": float(np.linalg.norm(rem[-1])),
        })
    return rows


def fit_order(eps_list, norms):
    """Least-squares slope of log norm against log eps; returns slope,
    intercept, r2."""
    eps = np.asarray(eps_list, dtype=float)
    nrm = np.asarray(norms, dtype=float)
    if len(eps) < 2:
        raise ValueError("need at least two points")
    if np.any(nrm < 0):
        raise ValueError("norms must be nonnegative")
    if np.all(nrm == nrm[0]):
        return {"slope": 0.0, "intercept": float(np.log(nrm[0])) if nrm[0] > 0 else 0.0, "r2": 1.0}
    if np.any(nrm <= 0):
        raise ValueError("norms must be positive for a log-log fit")
    lx, ly = np.log(eps), np.log(nrm)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2}
