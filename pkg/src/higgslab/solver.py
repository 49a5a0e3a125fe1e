"""Chern connections, curvature, the moment-map flow and energy diagnostics.

Data live on the trivial bundle. A holomorphic structure is ``dbar + beta``
with ``beta`` an End-valued (0,1)-form (``None`` means ``beta = 0``). For a
metric ``H`` with ``<s1, s2>_H = s2^* H s1`` the Chern connection has
(1,0) part ``alpha = H^-1 dH - beta^dagger_H``.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConditioningError, DivergenceError
from .higgs import adjoint_wrt, bracket, check_metric, commutator_field, wedge_square
from .lattice import (
    FormField,
    _wavenumbers,
    complex_derivatives,
    contract_lambda,
    dbar,
    del_,
    endo_scalar,
    integrate,
    laplacian,
    pointwise_norm2,
    scalar_field,
    wedge,
)


@dataclass
class ChernConnection:
    H: np.ndarray
    alpha: FormField
    beta: FormField = None
    _curv: FormField = field(default=None, repr=False)


def _matmul_form(M, f):
    """Multiply each component of an End form on the left by a per-site matrix."""
    return FormField(M[..., None, :, :] @ f.values, f.bidegree, f.n)


def chern_connection(H, domain, beta=None, check=True):
    if check:
        check_metric(H)
    Hinv = np.linalg.inv(H)
    alpha = _matmul_form(Hinv, del_(endo_scalar(H, domain), domain))
    if beta is not None:
        alpha = alpha - adjoint_wrt(H, beta, check=False)
    return ChernConnection(H, alpha, beta)


def curvature(conn, domain):
    """(1,1) curvature ``H^-1 (dbar del H - dbar H ^ H^-1 del H) - dbar(beta^dagger) + del beta + [alpha, beta]``.

    Analytically this equals ``dbar alpha + del beta + [alpha, beta]``.
    """
    if conn._curv is None:
        # dbar(H^-1 dH) expanded as H^-1 (dbar del H - dbar H ^ H^-1 del H): the
        # discrete product rule is inexact, and only this form keeps i Lambda F
        # exactly H-selfadjoint on the grid
        H = endo_scalar(conn.H, domain)
        Hinv = np.linalg.inv(conn.H)
        dH = del_(H, domain)
        F = dbar(dH, domain) - wedge(dbar(H, domain), _matmul_form(Hinv, dH))
        F = _matmul_form(Hinv, F)
        if conn.beta is not None:
            F = F - dbar(adjoint_wrt(conn.H, conn.beta, check=False), domain)
            F = F + del_(conn.beta, domain) + bracket(conn.alpha, conn.beta)
        conn._curv = F
    return conn._curv


def dbar_A(conn, f, domain, strict=True):
    out = dbar(f, domain, strict=strict)
    if conn.beta is not None:
        out = out + bracket(conn.beta, f)
    return out


def del_A(conn, f, domain, strict=True):
    return del_(f, domain, strict=strict) + bracket(conn.alpha, f)


def covariant_gradient_norm2(conn, f, domain):
    """Pointwise ``|nabla_A f|^2`` of an End-valued form, summed over all directions."""
    dz, dzb = complex_derivatives(f.values, domain)
    total = 0.0
    for j in range(f.n):
        a_j = conn.alpha.comp(j)[..., None, :, :]
        cov = dz[j] + a_j @ f.values - f.values @ a_j
        total = total + 2.0 * pointwise_norm2(FormField(cov, f.bidegree, f.n), conn.H)
        cov = dzb[j]
        if conn.beta is not None:
            b_j = conn.beta.comp(j)[..., None, :, :]
            cov = cov + b_j @ f.values - f.values @ b_j
        total = total + 2.0 * pointwise_norm2(FormField(cov, f.bidegree, f.n), conn.H)
    return total


def _traceless(F):
    r = F.rank
    tr = np.trace(F.values, axis1=-2, axis2=-1)
    return FormField(F.values - tr[..., None, None] * np.eye(r) / r, F.bidegree, F.n)


def moment_map(H, phi, domain, beta=None, sl_mode=False, conn=None):
    """``i Lambda (F^perp + [phi, phi^dagger])`` as an End-valued 0-form.

    With ``gamma = 0`` the trace part of F is kept unless ``sl_mode`` is set,
    in which case only the trace-free part enters (det H is held fixed).
    """
    if conn is None:
        conn = chern_connection(H, domain, beta)
    F = curvature(conn, domain)
    if sl_mode:
        F = _traceless(F)
    return contract_lambda(F + commutator_field(phi, H)) * 1j


def active_mask(domain):
    return domain.interior_mask()


def residual_norms(m, H, domain, mask=None):
    """Volume-normalized L2 and sup norms of an End 0-form over the active sites."""
    if mask is None:
        mask = active_mask(domain)
    p = pointwise_norm2(m, H)
    w = domain.weights() * mask
    return float(np.sqrt(np.sum(w * p) / np.sum(w))), float(np.sqrt(np.max(p[mask])))


def hs_residual(H, phi, domain, beta=None, sl_mode=False):
    """Pointwise moment-map, holomorphy and integrability residuals."""
    conn = chern_connection(H, domain, beta)
    m = moment_map(H, phi, domain, beta, sl_mode, conn)
    hol = dbar_A(conn, phi, domain, strict=False)
    return {
        "momentmap": np.sqrt(pointwise_norm2(m, H)),
        "holomorphy": np.sqrt(pointwise_norm2(hol, H)),
        "integrability": np.sqrt(pointwise_norm2(wedge_square(phi), H)) if phi.n > 1 else np.zeros(domain.shape),
    }


# ---------------------------------------------------------------------------
# the flow

@dataclass
class SolverParams:
    step: float = 1.0
    max_iter: int = 500
    tol: float = None
    sl_mode: bool = False
    boundary: np.ndarray = None
    max_backtracks: int = 40
    divergence_factor: float = 10.0
    refresh: int = 20

    def resolved_tol(self, domain):
        if self.tol is not None:
            return self.tol
        return 1e-8 if domain.periodic else 1e-6


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    residual_l2: list = field(default_factory=list)
    residual_linf: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    energy: float = float("nan")
    wall_time: float = 0.0
    message: str = ""

    @property
    def final_residual(self):
        return self.residual_l2[-1] if self.residual_l2 else float("nan")

    def to_dict(self, timing=False):
        d = {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual_l2": self.final_residual,
            "final_residual_linf": self.residual_linf[-1] if self.residual_linf else float("nan"),
            "energy": self.energy,
            "message": self.message,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def _sqrtm_h(H):
    ev, U = np.linalg.eigh(H)
    s = np.sqrt(ev)
    Uh = np.conj(np.swapaxes(U, -1, -2))
    return (U * s[..., None, :]) @ Uh, (U / s[..., None, :]) @ Uh


def _expm_h(X):
    X = 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))
    ev, U = np.linalg.eigh(X)
    return (U * np.exp(ev)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


def _ad(A, r):
    """Matrix of ``X -> [A, X]`` on row-major vec(X)."""
    I = np.eye(r)
    return np.einsum("...ij,kl->...ikjl", A, I).reshape(A.shape[:-2] + (r * r, r * r)) - np.einsum(
        "ij,...lk->...ikjl", I, A
    ).reshape(A.shape[:-2] + (r * r, r * r))


def higgs_mass(phi, H):
    """Per-site matrix of ``delta -> 2 sum_i [f_i, [f_i^*, delta]]`` in an H-orthonormal frame."""
    r = phi.rank
    S, Sinv = _sqrtm_h(H)
    T = 0.0
    for i in range(phi.n):
        f = S @ phi.comp(i) @ Sinv
        fh = np.conj(np.swapaxes(f, -1, -2))
        T = T + 2.0 * _ad(f, r) @ _ad(fh, r)
    return T


def _gradient_matrix(N, h):
    """Sparse matrix reproducing ``np.gradient(edge_order=2)`` along one axis."""
    rows, cols, vals = [], [], []
    for i in range(1, N - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, N - 1, N - 1, N - 1]
    cols += [0, 1, 2, N - 3, N - 2, N - 1]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h, 0.5 / h, -2.0 / h, 1.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


class _Preconditioner:
    """Inverse of the frozen linearization ``1/2 Delta + T`` of the moment map.

    Torus: block solve per Fourier mode with the site-averaged Higgs mass.
    Patch: sparse LU on the interior unknowns with the site-local mass.
    """

    def __init__(self, domain, phi, H):
        self.domain = domain
        self.r = phi.rank
        T = higgs_mass(phi, H)
        r2 = self.r * self.r
        if np.ndim(T) == 0:
            T = np.zeros(domain.shape + (r2, r2))
        if domain.periodic:
            lam = 0.0
            for a in range(domain.ndim):
                k = _wavenumbers(domain, a).reshape([-1 if b == a else 1 for b in range(domain.ndim)])
                lam = lam + k**2
            Tbar = np.mean(T.reshape(-1, r2, r2), axis=0)
            M = 0.5 * np.asarray(lam)[..., None, None] * np.eye(r2) + Tbar
            self.Minv = np.linalg.pinv(M, rcond=1e-10, hermitian=True)
        else:
            interior = domain.interior_mask().ravel()
            D2 = 0
            for a in range(domain.ndim):
                mats = [sp.identity(domain.shape[b], format="csr") for b in range(domain.ndim)]
                mats[a] = _gradient_matrix(domain.shape[a], domain.spacing[a])
                Da = mats[0]
                for m in mats[1:]:
                    Da = sp.kron(Da, m, format="csr")
                D2 = D2 + Da @ Da
            L = (-0.5 * D2).tocsr()[interior][:, interior]
            nI = L.shape[0]
            Tin = T.reshape(-1, r2, r2)[interior]
            A = sp.kron(L, sp.identity(r2), format="csr") + sp.block_diag(list(Tin), format="csr")
            A = A + sp.identity(nI * r2) * (1e-12 * (1.0 + abs(A).max()))
            self.lu = spla.splu(A.tocsc())
            self.interior = interior

    def apply(self, m):
        """``m``: ``grid + (r, r)`` Hermitian field; returns the preconditioned update."""
        d = self.domain
        r2 = self.r * self.r
        flat = m.reshape(d.shape + (r2,))
        if d.periodic:
            axes = tuple(range(d.ndim))
            mh = np.fft.fftn(flat, axes=axes)
            uh = np.einsum("...ij,...j->...i", self.Minv, mh)
            u = np.fft.ifftn(uh, axes=axes)
        else:
            rhs = flat.reshape(-1, r2)[self.interior].ravel()
            sol = self.lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self.lu.solve(np.ascontiguousarray(rhs.imag))
            u = np.zeros((flat.size // r2, r2), dtype=complex)
            u[self.interior] = sol.reshape(-1, r2)
            u = u.reshape(d.shape + (r2,))
        u = u.reshape(m.shape)
        return 0.5 * (u + np.conj(np.swapaxes(u, -1, -2)))


def solve_metric(domain, phi, H0=None, params=None, beta=None, callback=None):
    """Drive ``i Lambda (F^perp + [phi, phi^dagger])`` to zero.

    The metric is updated multiplicatively, ``H <- H^1/2 exp(-tau P m~) H^1/2``
    with ``m~ = H^1/2 m H^-1/2`` Hermitian; to first order this is
    ``s <- s - tau P m`` for ``H = H0 exp(s)``. ``P`` inverts the frozen
    linearization (refreshed every ``params.refresh`` iterations) and ``tau``
    is found by backtracking on the L2 residual. On a patch the boundary
    sites keep the values of ``params.boundary`` (or of ``H0``).
    """
    params = params or SolverParams()
    r = phi.rank
    t0 = time.perf_counter()
    H = np.array(H0 if H0 is not None else np.broadcast_to(np.eye(r), domain.shape + (r, r)), dtype=complex)
    if not domain.periodic and params.boundary is not None:
        edge = ~domain.interior_mask()
        H[edge] = params.boundary[edge]
    check_metric(H)
    tol = params.resolved_tol(domain)
    report = SolveReport()
    mask = active_mask(domain)

    def evaluate(Hc):
        m = moment_map(Hc, phi, domain, beta, params.sl_mode)
        l2, linf = residual_norms(m, Hc, domain, mask)
        return m, l2, linf

    m, l2, linf = evaluate(H)
    report.residual_l2.append(l2)
    report.residual_linf.append(linf)
    best = l2
    tau = params.step
    precond = None
    for it in range(params.max_iter):
        if l2 <= tol:
            report.converged = True
            break
        if precond is None or it % params.refresh == 0:
            precond = _Preconditioner(domain, phi, H)
        S, Sinv = _sqrtm_h(H)
        mt = S @ m.values[..., 0, :, :] @ Sinv
        mt = 0.5 * (mt + np.conj(np.swapaxes(mt, -1, -2)))
        u = precond.apply(mt)
        if params.sl_mode:
            u = u - np.trace(u, axis1=-2, axis2=-1)[..., None, None] * np.eye(r) / r
        u[~mask] = 0.0
        accepted = False
        for _ in range(params.max_backtracks):
            Hn = S @ _expm_h(-tau * u) @ S
            Hn = 0.5 * (Hn + np.conj(np.swapaxes(Hn, -1, -2)))
            Hn[~mask] = H[~mask]
            try:
                mn, l2n, linfn = evaluate(Hn)
            except (np.linalg.LinAlgError, ConditioningError, FloatingPointError):
                tau *= 0.5
                continue
            if np.isfinite(l2n) and l2n < l2:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            report.message = "line search stalled"
            break
        H, m, l2, linf = Hn, mn, l2n, linfn
        report.steps.append(tau)
        report.residual_l2.append(l2)
        report.residual_linf.append(linf)
        report.iterations = it + 1
        best = min(best, l2)
        if l2 > params.divergence_factor * best:
            report.wall_time = time.perf_counter() - t0
            raise DivergenceError("residual grew tenfold from its minimum", report)
        if callback is not None:
            callback(it, H, l2)
        tau = min(params.step, 2.0 * tau)
    else:
        report.converged = l2 <= tol
    if l2 <= tol:
        report.converged = True
    if not report.message:
        report.message = "converged" if report.converged else "max_iter reached"
    report.energy = energy(H, phi, domain, beta, params.sl_mode)[0]
    report.wall_time = time.perf_counter() - t0
    return H, report


# ---------------------------------------------------------------------------
# energies and identities

def energy(H, phi, domain, beta=None, sl_mode=False, mask=None):
    """``(E_direct, E_identity)``; gamma and ch_2 vanish on the trivial bundle."""
    if mask is None:
        mask = active_mask(domain)
    conn = chern_connection(H, domain, beta)
    F = curvature(conn, domain)
    if sl_mode:
        F = _traceless(F)
    G = F + commutator_field(phi, H)
    dA = pointwise_norm2(dbar_A(conn, phi, domain, strict=False), H) if phi.n >= 1 else 0.0
    d2 = del_A(conn, phi, domain, strict=False)
    if d2.values.shape[2 * phi.n]:
        dA = dA + pointwise_norm2(d2, H)
    e_direct = float(np.real(integrate(pointwise_norm2(G, H) + dA, domain, mask)))
    e_ident = float(np.real(integrate(pointwise_norm2(contract_lambda(G) * 1j, H), domain, mask)))
    return e_direct, e_ident


def weitzenbock_field(H, phi, domain, beta=None, coefficient=2.0):
    """``Delta|phi|^2 + c |nabla_A phi|^2 + c |[phi, phi^dagger]|^2`` pointwise (c = 2 by default)."""
    conn = chern_connection(H, domain, beta)
    norm2 = scalar_field(pointwise_norm2(phi, H), domain)
    lap = np.real(laplacian(norm2, domain).values[..., 0])
    grad = covariant_gradient_norm2(conn, phi, domain)
    comm = pointwise_norm2(commutator_field(phi, H), H)
    return lap + coefficient * grad + coefficient * comm


def weitzenbock_residual(H, phi, domain, beta=None, mask=None):
    """L1 norm of :func:`weitzenbock_field` (Ricci term is identically zero)."""
    if mask is None:
        mask = active_mask(domain)
    return float(integrate(np.abs(weitzenbock_field(H, phi, domain, beta)), domain, mask))


def weitzenbock_integrated(H, phi, domain, beta=None, mask=None):
    """``int |nabla_A phi|^2 + |[phi, phi^dagger]|^2``."""
    if mask is None:
        mask = active_mask(domain)
    conn = chern_connection(H, domain, beta)
    dens = covariant_gradient_norm2(conn, phi, domain) + pointwise_norm2(commutator_field(phi, H), H)
    return float(integrate(dens, domain, mask))


def l2_norm_sq(phi, domain, H=None, mask=None):
    return float(integrate(pointwise_norm2(phi, H), domain, mask))


# ---------------------------------------------------------------------------
# complex gauge group

def complex_gauge_act(g, phi, H, domain, beta=None, cond_max=1e12):
    """Act by ``g``: ``beta -> g^-1 beta g + g^-1 dbar g``, ``phi -> g^-1 phi g``, ``H -> g^* H g``."""
    g = np.asarray(g, dtype=complex)
    sv = np.linalg.svd(g, compute_uv=False)
    if np.min(sv[..., -1]) <= 0 or np.max(sv[..., 0] / sv[..., -1]) > cond_max:
        raise ConditioningError("gauge transformation is singular")
    ginv = np.linalg.inv(g)
    gi = ginv[..., None, :, :]
    gg = g[..., None, :, :]
    phi_g = FormField(gi @ phi.values @ gg, phi.bidegree, phi.n)
    dg = dbar(endo_scalar(g, domain), domain)
    beta_g = FormField(gi @ dg.values, (0, 1), phi.n)
    if beta is not None:
        beta_g = beta_g + FormField(gi @ beta.values @ gg, (0, 1), phi.n)
    H_g = np.conj(np.swapaxes(g, -1, -2)) @ H @ g
    return beta_g, phi_g, H_g
