"""Higgs-field presets, decoupled metrics and named random streams."""

import zlib

import numpy as np

from .higgs import higgs_field
from .solver import _expm_h


def rng_for(seed, name):
    """Counter-based generator keyed on ``(seed, name)``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])
    return np.random.Generator(np.random.Philox(ss))


def q_field(domain, kind="constant", value=1.0):
    """``q = value`` (constant) or ``q = value * z`` (linear in the first coordinate)."""
    if kind == "constant":
        return np.full(domain.shape, complex(value))
    if kind == "linear":
        return complex(value) * domain.z(0)
    raise ValueError(f"unknown q kind {kind!r}")


def diagonal_higgs(domain, eigenvalues):
    """``phi_j = diag(eigenvalues[j])`` constant; ``eigenvalues`` is ``(n, r)`` or ``(r,)`` for n = 1."""
    ev = np.atleast_2d(np.asarray(eigenvalues, dtype=complex))
    if ev.shape[0] != domain.n:
        ev = np.broadcast_to(ev[:1], (domain.n, ev.shape[1]))
    return higgs_field(domain, [np.diag(e) for e in ev])


def hitchin_section(domain, q):
    """``[[0, 1], [q, 0]] dz_1``; other directions zero."""
    q = np.asarray(q, dtype=complex)
    comp = np.zeros(domain.shape + (2, 2), dtype=complex)
    comp[..., 0, 1] = 1.0
    comp[..., 1, 0] = q
    comps = [comp] + [np.zeros_like(comp) for _ in range(domain.n - 1)]
    return higgs_field(domain, comps)


def decoupled_metric(q):
    """``diag(|q|^1/2, |q|^-1/2)``: flat where q is nonzero and makes the hitchin section normal."""
    a = np.sqrt(np.abs(np.asarray(q)))
    H = np.zeros(a.shape + (2, 2), dtype=complex)
    H[..., 0, 0] = a
    H[..., 1, 1] = 1.0 / a
    return H


def random_hermitian(domain, r, rng, amplitude=0.1, kmax=2, traceless=False):
    """Smooth random Hermitian field built from low Fourier modes of the domain."""
    x = domain.coords()
    L = domain.extent
    S = np.zeros(domain.shape + (r, r), dtype=complex)
    grids = np.meshgrid(*[np.arange(-kmax, kmax + 1)] * domain.ndim, indexing="ij")
    for ks in zip(*[g.ravel() for g in grids]):
        A = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
        A = 0.5 * (A + A.conj().T)
        phase = np.exp(2j * np.pi * sum(k * xa / La for k, xa, La in zip(ks, x, L)))
        term = A * phase[..., None, None]
        S += 0.5 * (term + np.conj(np.swapaxes(term, -1, -2)))
    S *= amplitude / max(np.max(np.abs(S)), 1e-300)
    if traceless:
        S -= np.trace(S, axis1=-2, axis2=-1)[..., None, None] * np.eye(r) / r
    return S


def random_metric(domain, r, rng, amplitude=0.1, kmax=2, traceless=False, base=None):
    """``base^1/2 exp(S) base^1/2`` with ``S`` from :func:`random_hermitian` (``base`` defaults to Id)."""
    E = _expm_h(random_hermitian(domain, r, rng, amplitude, kmax, traceless))
    if base is None:
        return E
    from .solver import _sqrtm_h

    B, _ = _sqrtm_h(base)
    return B @ E @ B


def random_unitary(shape, r, rng):
    """Haar-distributed unitary matrices of the given batch shape."""
    Z = (rng.normal(size=tuple(shape) + (r, r)) + 1j * rng.normal(size=tuple(shape) + (r, r))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]
