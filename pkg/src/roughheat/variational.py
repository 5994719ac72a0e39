"""Cameron-Martin energy minimization over K_a^{a'} = {gamma :
phi^0_1(gamma) = a'}, the Lagrange multiplier certificate, and the
second-variation quadratic form A-hat with the sup Spec(A-hat) < 1/2 test.

Everything is posed on the finite-rank RKHS span of node functions
k_{j,i} = R^H(., s_j) e_i, where the inner product is exact (Gram matrix of
the kernel) and the endpoint map is evaluated through the skeleton ODE on a
dyadic grid. The minimizer uses an augmented Lagrangian (penalty doubling,
multiplier updates) with analytic gradients; uniqueness is probed by
multi-start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh as generalized_eigh
from scipy.optimize import minimize as scipy_minimize

from .fbm import CameronMartinPath, r_cov
from .rde import VectorFieldSet, solve_skeleton

__all__ = [
    "MinimizerResult",
    "HessianReport",
    "EndpointProblem",
    "endpoint_jacobian",
    "minimize_energy",
    "lagrange_residual",
    "hessian_spectrum",
    "second_variation_check",
]


class EndpointProblem:
    """Shared geometry: nodes, Gram matrix, grid, and the endpoint map
    c -> phi^0_1(gamma_c) with its Jacobian in coefficient space."""

    def __init__(self, fields: VectorFieldSet, a, H: float, nodes, depth: int = 8):
        self.fields = fields
        self.a = np.asarray(a, dtype=float)
        self.H = H
        self.nodes = np.asarray(nodes, dtype=float)
        self.M = len(self.nodes)
        self.d = fields.d
        self.n = fields.n
        self.G = r_cov(H, self.nodes[:, None], self.nodes[None, :])
        self.grid = np.linspace(0.0, 1.0, 2**depth + 1)
        self.Rmat = r_cov(H, self.grid[:, None], self.nodes[None, :])
        self.dRmat = np.diff(self.Rmat, axis=0)

    def gamma(self, c) -> CameronMartinPath:
        return CameronMartinPath(self.H, self.nodes, np.asarray(c))

    def energy(self, c) -> float:
        c = np.asarray(c)
        return 0.5 * float(np.einsum("ji,jk,ki->", c, self.G, c))

    def solve(self, c, with_jacobian: bool = True):
        gvals = self.Rmat @ np.asarray(c)
        return solve_skeleton(gvals, self.fields, self.a, grid=self.grid,
                              with_jacobian=with_jacobian)

    def endpoint_and_jacobian(self, c):
        """phi^0_1(gamma_c) and D[l, j, i] = D_{k_{j,i}} phi^{0,l}_1."""
        skel = self.solve(c)
        sig = self.fields.sigma(skel.y)                    # (N+1, n, d)
        W = np.einsum("ij,tjk,tka->tia", skel.J[-1], skel.K, sig)
        D = np.einsum("sli,sj->lji", 0.5 * (W[:-1] + W[1:]), self.dRmat)
        return skel.y[-1], D, skel

    def representers(self, D):
        """Coefficients of sharp phi^{1,l}_1 (n, M, d) and the positive
        matrix C[l, l'] = <sharp^l, sharp^l'>."""
        crep = np.einsum("jk,lki->lji", np.linalg.inv(self.G), D)
        C = np.einsum("lji,mji->lm", D, crep)
        return crep, C


def endpoint_jacobian(gamma: CameronMartinPath, fields: VectorFieldSet, a,
                      depth: int = 8):
    """Endpoint derivative table D_k phi^0_1 over the node directions of
    ``gamma`` and the representer coefficients."""
    prob = EndpointProblem(fields, a, gamma.H, gamma.nodes, depth=depth)
    endpoint, D, _ = prob.endpoint_and_jacobian(gamma.coeffs)
    crep, C = prob.representers(D)
    return {"endpoint": endpoint, "D": D, "rep_coeffs": crep, "gram_rep": C,
            "problem": prob}


@dataclass
class MinimizerResult:
    gamma_bar: CameronMartinPath
    nu_bar: np.ndarray
    energy: float
    endpoint_residual: float
    converged: bool
    trace: list
    basins: list
    unique_up_to_tol: bool
    problem: EndpointProblem = field(repr=False, default=None)

    def to_record(self) -> dict:
        return {
            "nodes": self.gamma_bar.nodes.tolist(),
            "coeffs": self.gamma_bar.coeffs.tolist(),
            "nu_bar": self.nu_bar.tolist(),
            "energy": self.energy,
            "endpoint_residual": self.endpoint_residual,
            "converged": self.converged,
            "unique_up_to_tol": self.unique_up_to_tol,
        }


def _al_minimize(prob: EndpointProblem, a_prime, c0, tol_endpoint=1e-8,
                 max_outer=200):
    """Augmented Lagrangian loop from one start; returns (c, nu, trace)."""
    a_prime = np.asarray(a_prime, dtype=float)
    c = np.asarray(c0, dtype=float).copy()
    nu = np.zeros(prob.n)
    mu = 10.0
    trace = []
    shape = c.shape

    for outer in range(max_outer):
        def fg(cf):
            cc = cf.reshape(shape)
            endpoint, D, _ = prob.endpoint_and_jacobian(cc)
            F = endpoint - a_prime
            val = prob.energy(cc) - nu @ F + 0.5 * mu * float(F @ F)
            grad = np.einsum("jk,ki->ji", prob.G, cc)
            grad -= np.einsum("l,lji->ji", nu - mu * F, D)
            return val, grad.ravel()

        res = scipy_minimize(fg, c.ravel(), jac=True, method="L-BFGS-B",
                             options={"maxiter": 200, "ftol": 1e-14,
                                      "gtol": 1e-12})
        c = res.x.reshape(shape)
        endpoint, D, _ = prob.endpoint_and_jacobian(c)
        F = endpoint - a_prime
        nu = nu - mu * F
        resid = float(np.linalg.norm(F))
        trace.append({"outer": outer, "endpoint_residual": resid,
                      "energy": prob.energy(c), "mu": mu})
        if resid <= tol_endpoint:
            return c, nu, trace, True
        mu *= 2.0
    return c, nu, trace, False


def _sqp_polish(prob: EndpointProblem, a_prime, c, iters: int = 6):
    """Gauss-Newton KKT steps: with the constraint linearized at c, the
    exact-quadratic energy gives c = G^{-1} D* nu in closed form, which
    drives both the endpoint and the Lagrange residual to rounding."""
    a_prime = np.asarray(a_prime, dtype=float)
    nu = np.zeros(prob.n)
    for _ in range(iters):
        endpoint, D, _ = prob.endpoint_and_jacobian(c)
        F = endpoint - a_prime
        crep, C = prob.representers(D)
        rhs = np.einsum("lji,ji->l", D, c) - F
        nu = np.linalg.solve(C, rhs)
        c_new = np.einsum("l,lji->ji", nu, crep)
        if np.max(np.abs(c_new - c)) < 1e-14:
            c = c_new
            break
        c = c_new
    return c, nu


def minimize_energy(a, a_prime, fields: VectorFieldSet, H: float,
                    nodes=None, depth: int = 8, n_starts: int = 8,
                    seed: int = 0, tol_endpoint: float = 1e-8,
                    basin_tol: float = 1e-4) -> MinimizerResult:
    """Minimize 0.5 ||gamma||_H^2 subject to phi^0_1(gamma) = a'."""
    a = np.asarray(a, dtype=float)
    a_prime = np.asarray(a_prime, dtype=float)
    if nodes is None:
        nodes = np.linspace(1.0 / 64, 1.0, 64)
    prob = EndpointProblem(fields, a, H, nodes, depth=depth)
    sig_a = fields.sigma(a)
    if np.linalg.matrix_rank(sig_a) < fields.n:
        raise ValueError("(A1) violated: sigma(a) not full rank at a")

    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    starts = [np.zeros((prob.M, prob.d))]
    scale = float(np.linalg.norm(a_prime - a)) + 0.1
    for _ in range(max(0, n_starts - 1)):
        starts.append(scale * rng.standard_normal((prob.M, prob.d)) / prob.M)

    candidates = []
    for c0 in starts:
        c, nu, trace, ok = _al_minimize(prob, a_prime, c0,
                                        tol_endpoint=tol_endpoint)
        candidates.append((prob.energy(c), c, nu, trace, ok))
    candidates.sort(key=lambda t: (not t[4], t[0]))
    best_e, best_c, best_nu, best_trace, best_ok = candidates[0]
    best_c, best_nu = _sqp_polish(prob, a_prime, best_c)
    best_e = prob.energy(best_c)

    # basin analysis: pairwise H-distance of converged candidates
    basins = []
    for e, c, nu, _, ok in candidates:
        if not ok:
            continue
        diff = c - best_c
        dist = np.sqrt(max(float(np.einsum("ji,jk,ki->", diff, prob.G, diff)), 0.0))
        basins.append({"energy": e, "dist_to_best": dist})
    unique = all(b["dist_to_best"] <= basin_tol for b in basins) and bool(basins)

    endpoint, _, _ = prob.endpoint_and_jacobian(best_c)
    return MinimizerResult(
        gamma_bar=prob.gamma(best_c),
        nu_bar=best_nu,
        energy=best_e,
        endpoint_residual=float(np.linalg.norm(endpoint - a_prime)),
        converged=best_ok,
        trace=best_trace,
        basins=basins,
        unique_up_to_tol=unique,
        problem=prob,
    )


def lagrange_residual(result: MinimizerResult, probes=None) -> float:
    """max_k |<gamma_bar, k>_H - <nu_bar, D_k phi^0_1>| over probe
    directions (defaults to all node directions)."""
    prob = result.problem
    c = result.gamma_bar.coeffs
    _, D, _ = prob.endpoint_and_jacobian(c)
    lhs = np.einsum("jk,ki->ji", prob.G, c)              # <gamma, k_{j,i}>
    rhs = np.einsum("l,lji->ji", result.nu_bar, D)
    res = np.abs(lhs - rhs)
    if probes is not None:
        res = np.array([np.abs(np.sum(p * (lhs - rhs))) for p in probes])
    return float(np.max(res))


@dataclass
class HessianReport:
    A_hat: np.ndarray
    gram: np.ndarray
    spectrum: np.ndarray
    sup_spec: float
    verdict: bool
    pi_defect: float


def _phi1_paths(prob: EndpointProblem, skel, basis_coeffs):
    """phi^1_t(k) = J_t int_0^t J_s^{-1} sigma(phi^0_s) dk_s for each basis
    element; basis_coeffs has shape (B, M, d); returns (B, N+1, n)."""
    sig = prob.fields.sigma(skel.y)
    W = np.einsum("tij,tja->tia", skel.K, sig)           # (N+1, n, d)
    Wm = 0.5 * (W[:-1] + W[1:])
    dk = np.einsum("sj,bji->bsi", prob.dRmat, basis_coeffs)  # (B, N, d)
    steps = np.einsum("sia,bsa->bsi", Wm, dk)
    I = np.concatenate([np.zeros((len(basis_coeffs), 1, prob.n)),
                        np.cumsum(steps, axis=1)], axis=1)
    return np.einsum("tij,btj->bti", skel.J, I)


def _a_form(prob: EndpointProblem, skel, gvals, basis_coeffs, phi1):
    """A(k, k') in R^n over all basis pairs: (B, B, n)."""
    dsig = prob.fields.sigma_deriv(skel.y, 1)            # (N+1, n, d, n)
    d2sig = prob.fields.sigma_deriv(skel.y, 2)           # (N+1, n, d, n, n)
    JinvT = np.einsum("ij,tjk->tik", skel.J[-1], skel.K)  # J_1 J_t^{-1}
    # term 1: 0.5 J1 int J^-1 [grad sigma <phi1(k'), dk> + symmetrization]
    U = np.einsum("tij,tjvk->tivk", JinvT, dsig)         # (N+1, n, d, n)
    Um = 0.5 * (U[:-1] + U[1:])
    dk = np.einsum("sj,bji->bsi", prob.dRmat, basis_coeffs)
    phim = 0.5 * (phi1[:, :-1] + phi1[:, 1:])
    t1 = np.einsum("sivk,csk,bsv->bci", Um, phim, dk)
    t1 = 0.5 * (t1 + np.swapaxes(t1, 0, 1))
    # term 2: 0.5 J1 int J^-1 grad^2 sigma <phi1(k), phi1(k'), d gamma_bar>
    V = np.einsum("tij,tjbkl->tibkl", JinvT, d2sig)      # (N+1, n, d, n, n)
    Vm = 0.5 * (V[:-1] + V[1:])
    dgam = np.diff(gvals, axis=0)
    t2 = 0.5 * np.einsum("sivkl,bsk,csl,sv->bci", Vm, phim, phim, dgam)
    return t1 + t2


def hessian_spectrum(result: MinimizerResult, fields: VectorFieldSet,
                     H: float, basis_size: int | None = None) -> HessianReport:
    """Assemble A-hat(k, k') = <nu_bar, A(pi k, pi k')> on the node basis
    and solve the generalized eigenproblem against the Gram matrix."""
    prob = result.problem
    c_bar = result.gamma_bar.coeffs
    M, d, n = prob.M, prob.d, prob.n
    endpoint, D, skel = prob.endpoint_and_jacobian(c_bar)
    crep, C = prob.representers(D)
    Kmat = np.linalg.inv(C)
    gvals = prob.Rmat @ c_bar

    # basis: node directions, optionally truncated
    B = M * d if basis_size is None else min(basis_size, M * d)
    basis = np.zeros((B, M, d))
    idx = [(j, i) for j in range(M) for i in range(d)][:B]
    for b, (j, i) in enumerate(idx):
        basis[b, j, i] = 1.0

    # project: pi k = k - sum K_{ll'} phi^{1,l}_1(k) sharp^{l'}
    vals = np.einsum("lji,bji->bl", D, basis)            # phi^{1,l}_1(k)
    pbasis = basis - np.einsum("bl,lm,mji->bji", vals, Kmat, crep)
    # idempotency / orthogonality diagnostics
    pvals = np.einsum("lji,bji->bl", D, pbasis)
    pi_defect = float(np.max(np.abs(pvals))) if B else 0.0

    phi1 = _phi1_paths(prob, skel, pbasis)
    Aform = _a_form(prob, skel, gvals, pbasis, phi1)
    A_hat = np.einsum("bci,i->bc", Aform, result.nu_bar)
    A_hat = 0.5 * (A_hat + A_hat.T)

    gram_full = np.einsum("bji,jk,cki->bc",
                          basis, prob.G, basis)
    evals = generalized_eigh(A_hat, gram_full, eigvals_only=True)
    sup = float(np.max(evals)) if len(evals) else 0.0
    return HessianReport(A_hat=A_hat, gram=gram_full,
                         spectrum=np.asarray(evals), sup_spec=sup,
                         verdict=bool(sup < 0.5), pi_defect=pi_defect)


def second_variation_check(result: MinimizerResult, fields: VectorFieldSet,
                           H: float, direction=None, u: float = 1e-3,
                           seed: int = 5):
    """Finite-difference check of the second-variation identity: along a
    constrained curve f(u) in K_a^{a'} with f(0) = gamma_bar and
    f'(0) = h (pi h = h), the second derivative of the energy equals
    ||h||^2 - 2 <nu_bar, A(h, h)>."""
    prob = result.problem
    c_bar = result.gamma_bar.coeffs
    endpoint0, D, skel = prob.endpoint_and_jacobian(c_bar)
    crep, C = prob.representers(D)
    Kmat = np.linalg.inv(C)
    a_prime = endpoint0

    if direction is None:
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        direction = rng.standard_normal((prob.M, prob.d)) / prob.M
    h = np.asarray(direction, dtype=float)
    vals = np.einsum("lji,ji->l", D, h)
    h = h - np.einsum("l,lm,mji->ji", vals, Kmat, crep)   # enforce pi h = h

    def retract(uu):
        # f(u) = gamma + u h + sum beta_l sharp^l with endpoint pinned
        beta = np.zeros(prob.n)
        c = c_bar + uu * h
        for _ in range(60):
            cc = c + np.einsum("l,lji->ji", beta, crep)
            endpoint, Dc, _ = prob.endpoint_and_jacobian(cc)
            F = endpoint - a_prime
            if np.linalg.norm(F) < 1e-13:
                break
            Jbeta = np.einsum("lji,mji->lm", Dc, crep)
            beta = beta - np.linalg.solve(Jbeta, F)
        return c + np.einsum("l,lji->ji", beta, crep)

    E = lambda c: prob.energy(c)
    second_fd = (E(retract(u)) - 2 * E(c_bar) + E(retract(-u))) / u**2

    gvals = prob.Rmat @ c_bar
    phi1 = _phi1_paths(prob, skel, h[None])
    Ahh = _a_form(prob, skel, gvals, h[None], phi1)[0, 0]
    h_norm2 = float(np.einsum("ji,jk,ki->", h, prob.G, h))
    predicted = h_norm2 - 2.0 * float(result.nu_bar @ Ahh)
    return {"fd": float(second_fd), "predicted": predicted,
            "diff": abs(float(second_fd) - predicted), "h_norm2": h_norm2}
