"""Discrete flat Kähler geometry on periodic tori and Dirichlet patches.

Conventions
-----------
Real axes are ordered ``(x_1, y_1, ..., x_n, y_n)`` with ``z_j = x_j + i y_j``,
so ``d/dz = (d/dx - i d/dy)/2``.  The Kähler form is
``omega = (i/2) sum dz_j ^ dzbar_j`` and the frame satisfies ``|dz_j|^2 = 2``;
the basis form ``dz_I ^ dzbar_J`` has squared norm ``2^(|I|+|J|)``.

A form of bidegree (p, q) stores its coefficients in an array of shape
``grid + (ncomp,) + fiber`` where the component axis runs over the sorted
pairs ``(I, J)`` of :func:`form_basis` and ``fiber`` is ``()`` for scalar
forms or ``(r, r)`` for endomorphism-valued forms.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb, factorial, prod

import numpy as np

from .errors import InvalidDegreeError, ShapeMismatchError

KINDS = ("periodic-torus", "dirichlet-patch")


@dataclass(frozen=True)
class LatticeDomain:
    """A flat Kähler domain sampled on a regular grid.

    Torus sites sit at ``k*h`` for ``k = 0..N-1`` (span ``N*h``). Patch nodes
    are centred on the origin, ``(k - (N-1)/2)*h`` (span ``(N-1)*h``), so an
    even site count keeps the origin at a cell centre.
    """

    kind: str
    n: int
    shape: tuple
    spacing: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.n not in (1, 2):
            raise ValueError("complex dimension must be 1 or 2")
        if len(self.shape) != 2 * self.n or len(self.spacing) != 2 * self.n:
            raise ValueError("shape and spacing need one entry per real axis")
        if min(self.shape) < 8:
            raise ValueError("every axis needs at least 8 sites")
        if min(self.spacing) <= 0:
            raise ValueError("spacings must be positive")

    @classmethod
    def torus(cls, n=1, N=64, length=1.0):
        return cls("periodic-torus", n, (N,) * 2 * n, (length / N,) * 2 * n)

    @classmethod
    def patch(cls, n=1, N=64, span=1.0):
        return cls("dirichlet-patch", n, (N,) * 2 * n, (span / (N - 1),) * 2 * n)

    @property
    def periodic(self):
        return self.kind == "periodic-torus"

    @property
    def ndim(self):
        return 2 * self.n

    @property
    def extent(self):
        if self.periodic:
            return tuple(N * h for N, h in zip(self.shape, self.spacing))
        return tuple((N - 1) * h for N, h in zip(self.shape, self.spacing))

    @property
    def total_volume(self):
        return prod(self.extent)

    @property
    def h(self):
        return max(self.spacing)

    def axis_coords(self, a):
        N, h = self.shape[a], self.spacing[a]
        k = np.arange(N, dtype=float)
        return k * h if self.periodic else (k - (N - 1) / 2) * h

    def coords(self):
        return np.meshgrid(*[self.axis_coords(a) for a in range(self.ndim)], indexing="ij")

    def z(self, j=0):
        xs = self.coords()
        return xs[2 * j] + 1j * xs[2 * j + 1]

    def weights(self):
        """Quadrature weights: uniform on the torus, trapezoid on the patch."""
        w = np.ones(self.shape)
        for a, h in enumerate(self.spacing):
            wa = np.full(self.shape[a], h)
            if not self.periodic:
                wa[0] = wa[-1] = h / 2
            w = w * wa.reshape([-1 if b == a else 1 for b in range(self.ndim)])
        return w

    def interior_mask(self):
        m = np.ones(self.shape, dtype=bool)
        if not self.periodic:
            for a in range(self.ndim):
                sl = [slice(None)] * self.ndim
                sl[a] = [0, -1]
                m[tuple(sl)] = False
        return m

    def distance_from(self, point):
        """Euclidean distance of every site from ``point`` (periodic on the torus)."""
        d2 = 0.0
        for a, x in enumerate(self.coords()):
            dx = x - point[a]
            if self.periodic:
                L = self.extent[a]
                dx = dx - L * np.round(dx / L)
            d2 = d2 + dx * dx
        return np.sqrt(d2)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "shape": list(self.shape), "spacing": list(self.spacing)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["n"]), tuple(d["shape"]), tuple(d["spacing"]))


# ---------------------------------------------------------------------------
# form index algebra

@lru_cache(maxsize=None)
def form_basis(n, p, q):
    return tuple((I, J) for I in combinations(range(n), p) for J in combinations(range(n), q))


def ncomponents(n, p, q):
    return comb(n, p) * comb(n, q)


def _perm_sign(keys):
    if len(set(keys)) < len(keys):
        return 0
    s = 1
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            if keys[i] > keys[j]:
                s = -s
    return s


@lru_cache(maxsize=None)
def wedge_table(n, pa, qa, pb, qb):
    """Entries ``(ia, ib, iout, sign)`` with ``e_ia ^ e_ib = sign * e_iout``."""
    out_index = {c: k for k, c in enumerate(form_basis(n, pa + pb, qa + qb))}
    table = []
    for ia, (I, J) in enumerate(form_basis(n, pa, qa)):
        for ib, (K, L) in enumerate(form_basis(n, pb, qb)):
            keys = [(0, i) for i in I] + [(1, j) for j in J] + [(0, k) for k in K] + [(1, l) for l in L]
            s = _perm_sign(keys)
            if s == 0:
                continue
            c = (tuple(sorted(I + K)), tuple(sorted(J + L)))
            table.append((ia, ib, out_index[c], s))
    return tuple(table)


@lru_cache(maxsize=None)
def _lefschetz_matrix(n, p, q):
    """Matrix of ``omega ^ .`` from (p, q) to (p+1, q+1) in the coordinate basis."""
    rows, cols = ncomponents(n, p + 1, q + 1), ncomponents(n, p, q)
    M = np.zeros((rows, cols), dtype=complex)
    basis11 = form_basis(n, 1, 1)
    for ia, ib, io, s in wedge_table(n, 1, 1, p, q):
        I, J = basis11[ia]
        if I == J:
            M[io, ib] += 0.5j * s
    return M


@lru_cache(maxsize=None)
def _lambda_matrix(n, p, q):
    """Pointwise adjoint of the Lefschetz map, from (p, q) to (p-1, q-1)."""
    L = _lefschetz_matrix(n, p - 1, q - 1)
    # <L a, b> = <a, Lam b> with |e_(p,q)|^2 = 2^(p+q)
    return np.conj(L.T) * 2.0 ** (p + q) / 2.0 ** (p + q - 2)


@dataclass(frozen=True, eq=False)
class FormField:
    """Coefficients of a (possibly End-valued) form of fixed bidegree."""

    values: np.ndarray
    bidegree: tuple
    n: int

    def __post_init__(self):
        p, q = self.bidegree
        if p > self.n or q > self.n or p < 0 or q < 0:
            nc = 0
        else:
            nc = ncomponents(self.n, p, q)
        v = np.asarray(self.values)
        if v.ndim < 2 * self.n + 1 or v.shape[2 * self.n] != nc:
            raise ShapeMismatchError(f"expected {nc} components for bidegree {self.bidegree}")
        if v.ndim not in (2 * self.n + 1, 2 * self.n + 3):
            raise ShapeMismatchError("fiber must be scalar or square matrix")
        object.__setattr__(self, "bidegree", tuple(self.bidegree))

    @property
    def grid_shape(self):
        return self.values.shape[: 2 * self.n]

    @property
    def fiber(self):
        return self.values.shape[2 * self.n + 1:]

    @property
    def rank(self):
        return self.fiber[0] if self.fiber else 1

    @property
    def degree(self):
        return sum(self.bidegree)

    @property
    def basis(self):
        p, q = self.bidegree
        return form_basis(self.n, p, q) if p <= self.n and q <= self.n else ()

    def comp(self, k):
        return self.values[(slice(None),) * (2 * self.n) + (k,)]

    def component(self, I, J=()):
        return self.comp(self.basis.index((tuple(I), tuple(J))))

    def _like(self, values):
        return FormField(values, self.bidegree, self.n)

    def __add__(self, other):
        _check_compatible(self, other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self._like(self.values - other.values)

    def __neg__(self):
        return self._like(-self.values)

    def __mul__(self, c):
        return self._like(self.values * c)

    __rmul__ = __mul__


def _check_compatible(a, b):
    if a.bidegree != b.bidegree or a.values.shape != b.values.shape or a.n != b.n:
        raise ShapeMismatchError("forms differ in bidegree, grid or fiber")


def zero_form(domain, p, q, fiber=()):
    nc = ncomponents(domain.n, p, q) if p <= domain.n and q <= domain.n else 0
    return FormField(np.zeros(domain.shape + (nc,) + tuple(fiber), dtype=complex), (p, q), domain.n)


def scalar_field(values, domain):
    v = np.asarray(values, dtype=complex)
    return FormField(np.broadcast_to(v, domain.shape)[..., None].copy(), (0, 0), domain.n)


def endo_scalar(values, domain):
    """Promote a per-site matrix array ``grid + (r, r)`` to an End-valued 0-form."""
    v = np.asarray(values, dtype=complex)
    return FormField(v[..., None, :, :].copy(), (0, 0), domain.n)


def form_from_components(domain, bidegree, comps, fiber=()):
    """Build a form from ``{(I, J): array}``; missing components are zero."""
    f = zero_form(domain, *bidegree, fiber=fiber)
    v = f.values
    basis = form_basis(domain.n, *bidegree)
    for (I, J), arr in comps.items():
        k = basis.index((tuple(I), tuple(J)))
        v[(slice(None),) * domain.ndim + (k,)] = arr
    return f


def kahler_form(domain):
    n = domain.n
    return form_from_components(domain, (1, 1), {((k,), (k,)): 0.5j for k in range(n)})


# ---------------------------------------------------------------------------
# derivatives

@lru_cache(maxsize=None)
def _wavenumbers(domain, a):
    N, h = domain.shape[a], domain.spacing[a]
    k = 2 * np.pi * np.fft.fftfreq(N, d=h)
    if N % 2 == 0:
        k[N // 2] = 0.0  # the Nyquist mode has no odd derivative
    return k


def _axis_shape(domain, a, extra):
    return [-1 if b == a else 1 for b in range(domain.ndim)] + [1] * extra


def real_derivatives(values, domain):
    """All first derivatives ``d/dx_a`` of a grid-leading array."""
    g = domain.ndim
    extra = values.ndim - g
    if domain.periodic:
        axes = tuple(range(g))
        vh = np.fft.fftn(values, axes=axes)
        out = []
        for a in range(g):
            k = _wavenumbers(domain, a).reshape(_axis_shape(domain, a, extra))
            out.append(np.fft.ifftn(1j * k * vh, axes=axes))
        return out
    return [np.gradient(values, domain.spacing[a], axis=a, edge_order=2) for a in range(g)]


def complex_derivatives(values, domain):
    """Return ``([d/dz_j], [d/dzbar_j])`` for j = 1..n."""
    D = real_derivatives(values, domain)
    dz = [0.5 * (D[2 * j] - 1j * D[2 * j + 1]) for j in range(domain.n)]
    dzb = [0.5 * (D[2 * j] + 1j * D[2 * j + 1]) for j in range(domain.n)]
    return dz, dzb


def _fiber_mul(x, y, fx, fy):
    if fx and fy:
        return x @ y
    if fx:
        return x * y[..., None, None]
    if fy:
        return x[..., None, None] * y
    return x * y


def wedge(a, b):
    """Exterior product; End-valued factors are multiplied in the given order."""
    if a.n != b.n:
        raise ShapeMismatchError("forms live on different dimensions")
    n = a.n
    (pa, qa), (pb, qb) = a.bidegree, b.bidegree
    p, q = pa + pb, qa + qb
    fiber = a.fiber or b.fiber
    nc = ncomponents(n, p, q) if p <= n and q <= n else 0
    grid = np.broadcast_shapes(a.grid_shape, b.grid_shape)
    out = np.zeros(grid + (nc,) + fiber, dtype=complex)
    if nc:
        g = 2 * n
        for ia, ib, io, s in wedge_table(n, pa, qa, pb, qb):
            out[(slice(None),) * g + (io,)] += s * _fiber_mul(a.comp(ia), b.comp(ib), bool(a.fiber), bool(b.fiber))
    return FormField(out, (p, q), n)


def _unit_forms(domain, p, q):
    return [form_from_components(domain, (p, q), {c: 1.0}) for c in form_basis(domain.n, p, q)]


def _apply_first_order(f, domain, derivs, p_step, q_step, strict):
    n = f.n
    p, q = f.bidegree
    P, Q = p + p_step, q + q_step
    if strict and (P > n or Q > n):
        raise InvalidDegreeError(f"bidegree ({P},{Q}) exceeds complex dimension {n}")
    nc = ncomponents(n, P, Q) if P <= n and Q <= n else 0
    out = np.zeros(f.grid_shape + (nc,) + f.fiber, dtype=complex)
    if nc:
        g = 2 * n
        for ia, ib, io, s in wedge_table(n, p_step, q_step, p, q):
            out[(slice(None),) * g + (io,)] += s * derivs[ia][(slice(None),) * g + (ib,)]
    return FormField(out, (P, Q), n)


def dbar(f, domain, strict=True):
    """Flat ``dbar``: sum_j dzbar_j ^ (d f / dzbar_j)."""
    _, dzb = complex_derivatives(f.values, domain)
    return _apply_first_order(f, domain, dzb, 0, 1, strict)


def del_(f, domain, strict=True):
    """Flat ``del``: sum_j dz_j ^ (d f / dz_j)."""
    dz, _ = complex_derivatives(f.values, domain)
    return _apply_first_order(f, domain, dz, 1, 0, strict)


def _apply_adjoint(g_form, domain, derivs, p_step, q_step):
    n = g_form.n
    P, Q = g_form.bidegree
    p, q = P - p_step, Q - q_step
    if p < 0 or q < 0:
        raise InvalidDegreeError("no lower-degree target for the adjoint")
    out = np.zeros(g_form.grid_shape + (ncomponents(n, p, q),) + g_form.fiber, dtype=complex)
    gi = 2 * n
    for ia, ib, io, s in wedge_table(n, p_step, q_step, p, q):
        out[(slice(None),) * gi + (ib,)] += -2.0 * s * derivs[ia][(slice(None),) * gi + (io,)]
    return FormField(out, (p, q), n)


def adjoint_dbar(g, domain):
    """Formal L2 adjoint of :func:`dbar`, built from the index tables directly."""
    dz, _ = complex_derivatives(g.values, domain)
    return _apply_adjoint(g, domain, dz, 0, 1)


def adjoint_del(g, domain):
    _, dzb = complex_derivatives(g.values, domain)
    return _apply_adjoint(g, domain, dzb, 1, 0)


# ---------------------------------------------------------------------------
# Kähler contraction and inner products

def contract_lambda(alpha, domain=None):
    """Lambda on (1,1)-forms: ``-2i`` times the sum of diagonal coefficients."""
    if alpha.bidegree != (1, 1):
        raise InvalidDegreeError("contract_lambda needs a (1,1)-form")
    basis = alpha.basis
    diag = sum(alpha.comp(basis.index(((k,), (k,)))) for k in range(alpha.n))
    return FormField((-2j * diag)[(slice(None),) * (2 * alpha.n) + (None,)], (0, 0), alpha.n)


def lefschetz(f):
    M = _lefschetz_matrix(f.n, *f.bidegree)
    return _apply_component_matrix(f, M, (f.bidegree[0] + 1, f.bidegree[1] + 1))


def lambda_adjoint(f):
    """Lambda on forms of any bidegree, as the pointwise adjoint of ``omega ^ .``."""
    p, q = f.bidegree
    if p == 0 or q == 0:
        raise InvalidDegreeError("Lambda lowers both degrees; bidegree has a zero entry")
    if p > f.n or q > f.n:
        nc = ncomponents(f.n, p - 1, q - 1) if p - 1 <= f.n and q - 1 <= f.n else 0
        return FormField(np.zeros(f.grid_shape + (nc,) + f.fiber, dtype=complex), (p - 1, q - 1), f.n)
    return _apply_component_matrix(f, _lambda_matrix(f.n, p, q), (p - 1, q - 1))


def _apply_component_matrix(f, M, bidegree):
    g = 2 * f.n
    v = np.moveaxis(f.values, g, -1) @ M.T if not f.fiber else np.einsum("oc,...cij->...oij", M, f.values)
    if not f.fiber:
        v = np.moveaxis(v, -1, g)
    return FormField(v, bidegree, f.n)


def laplacian(f, domain):
    """``Delta = 2 i Lambda dbar del`` on 0-forms; non-negative spectrum."""
    if f.bidegree != (0, 0):
        raise InvalidDegreeError("laplacian acts on 0-forms")
    lam = contract_lambda(dbar(del_(f, domain), domain))
    return lam * 2j


def _metric_inv(H):
    return None if H is None else np.linalg.inv(H)


def pointwise_inner(a, b, H=None):
    """``sum_c 2^(p+q) <a_c, b_c>``; for End fields ``<A, B> = tr(A H^-1 B^* H)``."""
    _check_compatible(a, b)
    w = 2.0 ** a.degree
    g = 2 * a.n
    if not a.fiber:
        return w * np.sum(a.values * np.conj(b.values), axis=g)
    bH = np.conj(np.swapaxes(b.values, -1, -2))
    if H is not None:
        Hinv = np.linalg.inv(H)[..., None, :, :]
        bH = Hinv @ bH @ H[..., None, :, :]
    return w * np.einsum("...cij,...cji->...", a.values, bH)


def pointwise_norm2(a, H=None):
    return np.real(pointwise_inner(a, a, H))


def l2_inner(a, b, domain, H=None):
    if a.grid_shape != domain.shape:
        raise ShapeMismatchError("field does not live on this domain")
    return complex(np.sum(domain.weights() * pointwise_inner(a, b, H)))


def l2_norm(a, domain, H=None, mask=None):
    w = domain.weights() if mask is None else domain.weights() * mask
    return float(np.sqrt(np.sum(w * pointwise_norm2(a, H))))


def integrate(values, domain, mask=None):
    w = domain.weights() if mask is None else domain.weights() * mask
    return np.sum(w * values)


def top_coefficient_ratio(alpha, domain):
    """Compare ``Lambda(alpha) vol`` with ``alpha ^ omega^(n-1)/(n-1)!``.

    Returns both (n,n) coefficient fields so a caller can measure the gap.
    """
    n = domain.n
    omega = kahler_form(domain)
    vol = omega
    for _ in range(n - 1):
        vol = wedge(vol, omega)
    vol = vol * (1.0 / factorial(n))
    lhs = wedge(contract_lambda(alpha), vol)
    rhs = alpha
    for _ in range(n - 1):
        rhs = wedge(rhs, omega)
    rhs = rhs * (1.0 / factorial(n - 1))
    return lhs, rhs


def kahler_identity_residual(f, domain, which="del", reference=None):
    """L2 norm of ``d^* f - (+-i)[Lambda, d'] f``.

    ``which="del"`` checks ``del^* = i[Lambda, dbar]``; ``which="dbar"`` checks
    ``dbar^* = -i[Lambda, del]``. When ``reference`` is given it replaces the
    discrete adjoint on the left-hand side (used on patches, where both
    discrete sides share one stencil and agree to rounding).
    """
    if which not in ("del", "dbar"):
        raise ValueError(which)
    d = dbar if which == "del" else del_
    comm = lambda_adjoint(d(f, domain, strict=False))
    if min(f.bidegree) > 0:
        comm = comm - d(lambda_adjoint(f), domain, strict=False)
    rhs = comm * (1j if which == "del" else -1j)
    if reference is None:
        reference = adjoint_del(f, domain) if which == "del" else adjoint_dbar(f, domain)
    return l2_norm(reference - rhs, domain)
