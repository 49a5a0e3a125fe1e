"""End(E)-valued form algebra, the Hitchin morphism and spectral data."""

from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateSpectrumError,
    IntegrabilityError,
    NoSpectralDataError,
    NotInBXError,
    RankOverflowError,
    ShapeMismatchError,
)
from .lattice import FormField, contract_lambda, form_basis, pointwise_inner, pointwise_norm2, wedge

COND_MAX = 1e12


def higgs_field(domain, comps):
    """(1,0) End-valued form from per-direction matrix arrays ``[phi_1, ..., phi_n]``."""
    comps = [np.broadcast_to(np.asarray(c, dtype=complex), domain.shape + np.shape(c)[-2:]) for c in comps]
    if len(comps) != domain.n:
        raise ShapeMismatchError("need one matrix field per complex direction")
    return FormField(np.stack(comps, axis=domain.ndim), (1, 0), domain.n)


def identity_metric(domain, r):
    return np.broadcast_to(np.eye(r, dtype=complex), domain.shape + (r, r)).copy()


def check_metric(H, cond_max=COND_MAX):
    """Raise :class:`ConditioningError` unless every site is Hermitian positive definite and well conditioned."""
    H = np.asarray(H)
    if np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2)))) > 1e-10 * max(1.0, np.max(np.abs(H))):
        raise ConditioningError("metric is not Hermitian")
    ev = np.linalg.eigvalsh(H)
    if np.min(ev[..., 0]) <= 0:
        raise ConditioningError("metric is not positive definite")
    cond = np.max(ev[..., -1] / ev[..., 0])
    if cond > cond_max:
        raise ConditioningError(f"metric condition number {cond:.3g} exceeds {cond_max:.0e}")
    return ev


def adjoint_wrt(H, phi, check=True):
    """``phi^dagger = H^-1 phi^* H`` with the form part conjugated.

    A (p,q) form goes to a (q,p) form; ``dz_I ^ dzbar_J`` conjugates to
    ``(-1)^(pq) dz_J ^ dzbar_I``.
    """
    if not phi.fiber:
        raise ShapeMismatchError("adjoint needs an End-valued form")
    n = phi.n
    p, q = phi.bidegree
    src = form_basis(n, p, q)
    dst = form_basis(n, q, p)
    g = 2 * n
    vals = np.conj(np.swapaxes(phi.values, -1, -2))
    if H is not None:
        if check:
            check_metric(H)
        Hinv = np.linalg.inv(H)[..., None, :, :]
        vals = Hinv @ vals @ H[..., None, :, :]
    out = np.empty_like(vals)
    sign = (-1) ** (p * q)
    for k, (I, J) in enumerate(src):
        out[(slice(None),) * g + (dst.index((J, I)),)] = sign * vals[(slice(None),) * g + (k,)]
    return FormField(out, (q, p), n)


def bracket(a, b):
    """Graded commutator ``a ^ b - (-1)^(deg a deg b) b ^ a``; for 1-forms ``a^b + b^a``."""
    s = (-1) ** (a.degree * b.degree)
    return wedge(a, b) - wedge(b, a) * s


def wedge_square(phi):
    """``phi ^ phi``; the ``dz_i ^ dz_j`` component is ``[phi_i, phi_j]``. Zero field when n = 1."""
    return wedge(phi, phi)


def endo_norm(phi, H=None):
    return np.sqrt(pointwise_norm2(phi, H))


def commutator_field(phi, H=None):
    """``[phi, phi^dagger_H]`` as a (1,1) form."""
    return bracket(phi, adjoint_wrt(H, phi))


def bracket_pairing(phi, H=None):
    """Pointwise ``<[i Lambda [phi, phi^dagger], phi], phi>`` and ``|[phi, phi^dagger]|^2``."""
    c = commutator_field(phi, H)
    m = contract_lambda(c) * 1j
    lhs = np.real(pointwise_inner(bracket(m, phi), phi, H))
    return lhs, pointwise_norm2(c, H)


# ---------------------------------------------------------------------------
# Hitchin morphism

def _monomials(n, k):
    if n == 1:
        return ((k,),)
    return tuple((k - j, j) for j in range(k + 1))


def _multinomial(alpha):
    out = factorial(sum(alpha))
    for a in alpha:
        out //= factorial(a)
    return out


@dataclass(eq=False)
class SpectralData:
    """Hitchin-base tuple ``(p_1, ..., p_r)``.

    ``coeffs[k-1]`` has shape ``grid + (n_monomials,)`` and holds the
    coefficients of ``p_k = sum_alpha P_alpha dz^alpha`` over the monomials
    of :func:`_monomials` (exponent tuples; for n = 2 these are
    ``(k, 0), (k-1, 1), ..., (0, k)``).
    """

    n: int
    r: int
    coeffs: list
    discriminant: np.ndarray = None
    mask: np.ndarray = None
    gap: np.ndarray = None
    roots: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def grid_shape(self):
        return self.coeffs[0].shape[:-1]

    def monomials(self, k):
        return _monomials(self.n, k)

    def scaled(self, t):
        return SpectralData(self.n, self.r, [c * t ** (k + 1) for k, c in enumerate(self.coeffs)])


def _poly_mul(a, b, n):
    out = {}
    for ea, va in a.items():
        for eb, vb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out[e] + va * vb if e in out else va * vb
    return out


def _matrix_power_traces(comps, alpha):
    acc = None
    for i, a in enumerate(alpha):
        for _ in range(a):
            acc = comps[i] if acc is None else acc @ comps[i]
    return np.trace(acc, axis1=-2, axis2=-1)


def hitchin_map(phi, integrability_tol=1e-8):
    """Characteristic coefficients via power sums and Newton's identities.

    Signs follow ``lambda^r + p_1 lambda^(r-1) + ... + p_r``, so ``p_k = (-1)^k e_k``.
    """
    n, r = phi.n, phi.rank
    comps = [phi.comp(i) for i in range(n)]
    if n > 1:
        ww = wedge_square(phi)
        scale = 1.0 + np.max(pointwise_norm2(phi))
        if np.sqrt(np.max(pointwise_norm2(ww))) > integrability_tol * scale:
            raise IntegrabilityError("phi ^ phi does not vanish")
    grid = phi.grid_shape
    power_sums = []
    for k in range(1, r + 1):
        power_sums.append({al: _multinomial(al) * _matrix_power_traces(comps, al) for al in _monomials(n, k)})
    zero = tuple([0] * n)
    e = [{zero: np.ones(grid, dtype=complex)}]
    for k in range(1, r + 1):
        acc = {}
        for i in range(1, k + 1):
            term = _poly_mul(e[k - i], power_sums[i - 1], n)
            sgn = (-1) ** (i - 1)
            for ex, v in term.items():
                acc[ex] = acc[ex] + sgn * v if ex in acc else sgn * v
        e.append({ex: v / k for ex, v in acc.items()})
    coeffs = []
    for k in range(1, r + 1):
        sgn = (-1) ** k
        coeffs.append(np.stack([sgn * e[k][al] for al in _monomials(n, k)], axis=-1))
    return SpectralData(n, r, coeffs)


def _sym2_matrix(c, n):
    """Symmetric coefficient matrix of a quadratic form stored on monomials."""
    if n == 1:
        return c[..., :1, None]
    S = np.empty(c.shape[:-1] + (2, 2), dtype=complex)
    S[..., 0, 0] = c[..., 0]
    S[..., 1, 1] = c[..., 2]
    S[..., 0, 1] = S[..., 1, 0] = c[..., 1] / 2
    return S


def symmetric_norm(c, n):
    """Frobenius norm of the symmetric coefficient matrix; ``|u (x) u| = |u|^2``."""
    S = _sym2_matrix(c, n)
    return np.sqrt(np.sum(np.abs(S) ** 2, axis=(-1, -2)))


def _companion_roots(c):
    """Roots of ``mu^r + c_1 mu^(r-1) + ... + c_r`` for every leading index."""
    r = c.shape[-1]
    C = np.zeros(c.shape[:-1] + (r, r), dtype=complex)
    C[..., 0, :] = -c
    if r > 1:
        idx = np.arange(r - 1)
        C[..., idx + 1, idx] = 1.0
    return np.linalg.eigvals(C)


def _rank_one_reduction(theta, tol):
    """For n = 2: write ``p_k = c_k w^k`` with a common covector w per site."""
    grid = theta.grid_shape
    r = theta.r
    norms = np.stack([np.sqrt(np.sum(np.abs(c) ** 2, axis=-1)) for c in theta.coeffs], axis=-1)
    kstar = np.argmax(norms, axis=-1)
    w = np.zeros(grid + (2,), dtype=complex)
    w[..., 0] = 1.0
    for k in range(1, r + 1):
        sel = kstar == k - 1
        if not np.any(sel):
            continue
        c = theta.coeffs[k - 1][sel]
        first = np.abs(c[:, 0]) >= np.abs(c[:, -1])
        ww = np.zeros((c.shape[0], 2), dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            ww[first, 0] = 1.0
            ww[first, 1] = c[first, 1] / (k * c[first, 0])
            ww[~first, 1] = 1.0
            ww[~first, 0] = c[~first, -2] / (k * c[~first, -1])
        ww[~np.isfinite(ww)] = 0.0
        w[sel] = ww
    w = w / np.linalg.norm(w, axis=-1, keepdims=True)
    cs = np.zeros(grid + (r,), dtype=complex)
    for k in range(1, r + 1):
        mons = _monomials(2, k)
        basis = np.stack([_multinomial(al) * w[..., 0] ** al[0] * w[..., 1] ** al[1] for al in mons], axis=-1)
        # least-squares scalar fit, then check the residual
        ck = np.sum(np.conj(basis) * theta.coeffs[k - 1], axis=-1) / np.sum(np.abs(basis) ** 2, axis=-1)
        resid = np.sqrt(np.sum(np.abs(theta.coeffs[k - 1] - ck[..., None] * basis) ** 2, axis=-1))
        scale = 1.0 + np.sqrt(np.sum(np.abs(theta.coeffs[k - 1]) ** 2, axis=-1))
        if np.max(resid / scale) > tol:
            raise NotInBXError(f"p_{k} is not a multiple of a rank-one power")
        cs[..., k - 1] = ck
    return w, cs


def _lex_sort(roots):
    keys = np.concatenate([roots.real, roots.imag], axis=-1)
    order = sorted(range(roots.shape[0]), key=lambda i: tuple(np.round(keys[i], 12)))
    return roots[order]


def spectral_roots(theta, site, tol=1e-8):
    """The r eigenvalue covectors at one site, shape ``(r, n)``, lexicographically ordered."""
    site = tuple(site)
    sub = SpectralData(theta.n, theta.r, [c[site][None] for c in theta.coeffs])
    return _lex_sort(_all_roots(sub, tol)[0])


def _all_roots(theta, tol=1e-8):
    if theta.n == 1:
        c = np.stack([cc[..., 0] for cc in theta.coeffs], axis=-1)
        return _companion_roots(c)[..., None]
    w, cs = _rank_one_reduction(theta, tol)
    mu = _companion_roots(cs)
    return mu[..., :, None] * w[..., None, :]


def boustrophedon_order(shape):
    """Snake scan over a grid: consecutive sites are grid neighbours."""
    if len(shape) == 1:
        return [(i,) for i in range(shape[0])]
    inner = boustrophedon_order(shape[1:])
    out = []
    for i in range(shape[0]):
        seq = inner if i % 2 == 0 else inner[::-1]
        out.extend((i,) + s for s in seq)
    return out


def spectral_roots_field(theta, tol=1e-8):
    """Labelled roots ``grid + (r, n)`` by nearest-neighbour continuation along the snake scan."""
    raw = _all_roots(theta, tol)
    r = theta.r
    perms = np.array(list(permutations(range(r))))
    out = np.empty_like(raw)
    prev = None
    for site in boustrophedon_order(theta.grid_shape):
        cur = raw[site]
        if prev is None:
            cur = _lex_sort(cur)
        else:
            cand = cur[perms]  # (nperm, r, n)
            cost = np.sum(np.linalg.norm(cand - prev[None], axis=-1), axis=-1)
            best = cost.min()
            ties = np.flatnonzero(cost <= best + 1e-12 * (1.0 + best))
            pick = min(ties, key=lambda t: tuple(np.angle(cand[t][:, 0])))
            cur = cand[pick]
        out[site] = cur
        prev = cur
    return out


def discriminant_from_roots(roots, n):
    """``sum_{i<j} (l_i - l_j)^2`` on the degree-2 monomials."""
    r = roots.shape[-2]
    mons = _monomials(n, 2)
    acc = np.zeros(roots.shape[:-2] + (len(mons),), dtype=complex)
    for i in range(r):
        for j in range(i + 1, r):
            u = roots[..., i, :] - roots[..., j, :]
            for m, al in enumerate(mons):
                term = _multinomial(al) * np.ones(u.shape[:-1], dtype=complex)
                for a, e in enumerate(al):
                    term = term * u[..., a] ** e
                acc[..., m] += term
    return acc


def discriminant_from_coeffs(theta):
    """Polynomial route: ``(r-1) p_1^2 - 2 r p_2``."""
    r, n = theta.r, theta.n
    mons2 = _monomials(n, 2)
    if r < 2:
        return np.zeros(theta.grid_shape + (len(mons2),), dtype=complex)
    p1 = {al: theta.coeffs[0][..., i] for i, al in enumerate(_monomials(n, 1))}
    sq = _poly_mul(p1, p1, n)
    return np.stack([(r - 1) * sq[al] - 2 * r * theta.coeffs[1][..., i] for i, al in enumerate(mons2)], axis=-1)


def discriminant(theta, eps=None, h=None, roots=None, tol=1e-8):
    """Discriminant section, locus mask and eigen-gap field; also stored on ``theta``.

    ``eps`` defaults to ``10 * h * max|root|``.
    """
    if roots is None:
        roots = spectral_roots_field(theta, tol)
    delta = discriminant_from_roots(roots, theta.n)
    mag = symmetric_norm(delta, theta.n)
    rootnorm = np.linalg.norm(roots, axis=-1)
    if eps is None:
        eps = 10.0 * (h if h is not None else 1.0) * float(np.max(rootnorm))
    r = theta.r
    if r > 1:
        gaps = [np.linalg.norm(roots[..., i, :] - roots[..., j, :], axis=-1) for i in range(r) for j in range(i + 1, r)]
        gap = np.min(np.stack(gaps, axis=-1), axis=-1)
    else:
        gap = np.full(theta.grid_shape, np.inf)
    mask = mag < eps if eps > 0 else np.ones(theta.grid_shape, dtype=bool)
    theta.discriminant, theta.mask, theta.gap, theta.roots = delta, mask, gap, roots
    theta.meta["eps_disc"] = float(eps)
    # Delta vanishes identically to the resolution eps: Z is the whole domain
    theta.meta["degenerate"] = bool(np.all(mask))
    return delta, mask, gap


def rle_mask(mask):
    """Run-length encoding of a boolean mask in row-major order: ``[first_value, run, run, ...]``."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return [False]
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return [bool(flat[0])] + [int(b - a) for a, b in zip(bounds[:-1], bounds[1:])]


def rle_decode(code, shape):
    val = bool(code[0])
    parts = []
    for run in code[1:]:
        parts.append(np.full(run, val))
        val = not val
    return np.concatenate(parts).reshape(shape) if parts else np.zeros(shape, dtype=bool)


# ---------------------------------------------------------------------------
# pointwise matrix lemmas

_MIX = (1.0, 0.6180339887498949 + 0.3819660112501051j)


@dataclass
class Projections:
    pi: np.ndarray
    pi_prime: np.ndarray
    chi: np.ndarray
    eigenvalues: np.ndarray
    gap: np.ndarray


def _hnorm(A, H):
    if H is None:
        return np.sqrt(np.sum(np.abs(A) ** 2, axis=(-1, -2)))
    Hinv = np.linalg.inv(H)
    AH = Hinv @ np.conj(np.swapaxes(A, -1, -2)) @ H
    return np.sqrt(np.real(np.trace(A @ AH, axis1=-2, axis2=-1)))


def eigen_projections(phis, H=None, gap_tol=1e-8, commute_tol=1e-8):
    """Spectral idempotents, H-orthogonal projections and their difference.

    ``phis`` has shape ``(..., m, r, r)``, one matrix per frame direction; a
    single ``(r, r)`` matrix is accepted. Output arrays have shape
    ``(..., r, r, r)`` indexed by eigenline first.
    """
    phis = np.asarray(phis, dtype=complex)
    if phis.ndim == 2:
        phis = phis[None]
    m = phis.shape[-3]
    scale = np.sqrt(np.sum(np.abs(phis) ** 2, axis=(-3, -2, -1)))
    for a in range(m):
        for b in range(a + 1, m):
            c = phis[..., a, :, :] @ phis[..., b, :, :] - phis[..., b, :, :] @ phis[..., a, :, :]
            if np.max(np.sqrt(np.sum(np.abs(c) ** 2, axis=(-1, -2))) / (1 + scale**2)) > commute_tol:
                raise IntegrabilityError("frame components do not commute")
    theta = sum(_MIX[a % 2] * (1 + 0.25 * a) * phis[..., a, :, :] for a in range(m))
    _, V = np.linalg.eig(theta)
    Vinv = np.linalg.inv(V)
    lam = np.einsum("...ij,...ajk,...ki->...ia", Vinv, phis, V)  # joint eigenvalues (..., r, m)
    r = V.shape[-1]
    if r > 1:
        diffs = [np.linalg.norm(lam[..., i, :] - lam[..., j, :], axis=-1) for i in range(r) for j in range(i + 1, r)]
        gap = np.min(np.stack(diffs, axis=-1), axis=-1)
    else:
        gap = np.full(V.shape[:-2], np.inf)
    if np.any(gap < gap_tol * np.maximum(1.0, scale)):
        raise DegenerateSpectrumError("eigenvalues are not separated")
    pi = np.einsum("...ai,...ib->...iab", V, Vinv)
    Hm = np.eye(r) if H is None else H
    v = np.swapaxes(V, -1, -2)  # (..., r, r): row i is the i-th eigenvector
    Hv = np.einsum("...ab,...ib->...ia", Hm, v)
    norm2 = np.real(np.sum(np.conj(v) * Hv, axis=-1))
    pip = v[..., :, :, None] * np.conj(Hv)[..., :, None, :] / norm2[..., None, None]
    return Projections(pi, pip, pi - pip, lam, gap)


def projection_norm(A, H=None):
    return _hnorm(A, H)


def gap_function(A):
    """``g(A) = sum |lambda_i|^2`` from the Schur diagonal (LAPACK's eigenvalues of the Schur factor)."""
    ev = np.linalg.eigvals(A)
    return np.sum(np.abs(ev) ** 2, axis=-1)


def commutator_gap_ratio(A, tol=1e-12):
    """``|[A, A^*]|^2 / (|A|^2 - g(A))^2``; ``inf`` when A is numerically normal."""
    A = np.asarray(A, dtype=complex)
    AH = np.conj(np.swapaxes(A, -1, -2))
    num = np.sum(np.abs(A @ AH - AH @ A) ** 2, axis=(-1, -2))
    nrm2 = np.sum(np.abs(A) ** 2, axis=(-1, -2))
    den = nrm2 - gap_function(A)
    small = den <= tol * np.maximum(nrm2, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, np.inf, num / np.where(small, 1.0, den) ** 2)
    return out if out.ndim else float(out)


def tensor_product(phi1, phi2, max_rank=16):
    """``phi1 (x) Id + Id (x) phi2`` on ``E1 (x) E2`` (Kronecker sum per component)."""
    if phi1.bidegree != phi2.bidegree or phi1.grid_shape != phi2.grid_shape:
        raise ShapeMismatchError("tensor factors must share bidegree and grid")
    r1, r2 = phi1.rank, phi2.rank
    if r1 * r2 > max_rank:
        raise RankOverflowError(f"rank {r1 * r2} exceeds limit {max_rank}")
    I1, I2 = np.eye(r1), np.eye(r2)
    a = np.einsum("...ij,kl->...ikjl", phi1.values, I2)
    b = np.einsum("ij,...kl->...ikjl", I1, phi2.values)
    v = (a + b).reshape(phi1.values.shape[:-2] + (r1 * r2, r1 * r2))
    return FormField(v, phi1.bidegree, phi1.n)


def eigenvalue_bound_gap(phi, H=None, roots=None):
    """Pointwise ``|phi| - max_i |lambda_i|`` (non-negative when the bound holds).

    Covector norms use the frame convention ``|dz|^2 = 2``.
    """
    if roots is None:
        roots = spectral_roots_field(hitchin_map(phi))
    lam = np.sqrt(2.0) * np.max(np.linalg.norm(roots, axis=-1), axis=-1)
    return endo_norm(phi, H) - lam


def require_spectral_data(theta):
    if all(np.max(np.abs(c)) == 0 for c in theta.coeffs):
        raise NoSpectralDataError("all characteristic coefficients vanish")
