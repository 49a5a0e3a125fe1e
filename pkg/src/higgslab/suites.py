"""Identity and matrix-lemma suites shared by the CLI and the acceptance tests."""

import json
from importlib import resources

import numpy as np

from .higgs import commutator_gap_ratio, eigen_projections, identity_metric, projection_norm, wedge_square
from .lattice import (
    FormField,
    contract_lambda,
    dbar,
    del_,
    kahler_form,
    kahler_identity_residual,
    l2_norm,
    laplacian,
    ncomponents,
    pointwise_norm2,
    scalar_field,
    top_coefficient_ratio,
)
from .presets import hitchin_section, random_hermitian, random_metric, rng_for
from .solver import chern_connection, complex_gauge_act, curvature, hs_residual

C0 = 4.0


def _check(name, value, tol, **extra):
    value = float(value)
    return {"name": name, "value": value, "tol": tol, "pass": bool(value <= tol), **extra}


def random_form(domain, p, q, rng, fiber=(), kmax=2):
    """Band-limited random (p,q)-form: every coefficient is a sum of low Fourier modes."""
    nc = ncomponents(domain.n, p, q)
    x = domain.coords()
    L = domain.extent
    vals = np.zeros(domain.shape + (nc,) + tuple(fiber), dtype=complex)
    grids = np.meshgrid(*[np.arange(-kmax, kmax + 1)] * domain.ndim, indexing="ij")
    for ks in zip(*[g.ravel() for g in grids]):
        if rng.random() < 0.5:
            continue
        c = rng.normal(size=(nc,) + tuple(fiber)) + 1j * rng.normal(size=(nc,) + tuple(fiber))
        phase = np.exp(2j * np.pi * sum(k * xa / La for k, xa, La in zip(ks, x, L)))
        vals += phase.reshape(domain.shape + (1,) * (1 + len(fiber))) * c
    return FormField(vals, (p, q), domain.n)


def lattice_identities(domain, rng):
    """Kaehler identities, ``Lambda omega = n``, the top-degree comparison and ``d^2 = 0``."""
    out = []
    n = domain.n
    for p in range(n + 1):
        for q in range(n + 1):
            f = random_form(domain, p, q, rng)
            nf = l2_norm(f, domain)
            for which in ("del", "dbar"):
                if (p if which == "del" else q) == 0:
                    continue  # the adjoint would leave the form degrees
                res = kahler_identity_residual(f, domain, which)
                out.append(_check(f"kahler_{which}_{p}{q}", res / nf, 1e-10))
    lam = contract_lambda(kahler_form(domain)).values
    out.append(_check("lambda_omega", np.max(np.abs(lam - n)), 0.0))
    a = random_form(domain, n, n, rng) if n == 1 else random_form(domain, 1, 1, rng)
    lhs, rhs = top_coefficient_ratio(a, domain)
    out.append(_check("top_degree", np.max(np.abs(lhs.values - rhs.values)) / np.max(np.abs(a.values)), 1e-10))
    for p, q in [(0, 0), (1, 0), (0, 1)]:
        f = random_form(domain, p, q, rng)
        scale = np.max(np.abs(f.values))
        dd = dbar(dbar(f, domain, strict=False), domain, strict=False).values
        out.append(_check(f"dbar_sq_{p}{q}", np.max(np.abs(dd), initial=0.0) / scale, 1e-12))
        dd = del_(del_(f, domain, strict=False), domain, strict=False).values
        out.append(_check(f"del_sq_{p}{q}", np.max(np.abs(dd), initial=0.0) / scale, 1e-12))
    return out


def solver_identities(domain, rng):
    """Scalar curvature reduction, the closed-form moment map and unitary gauge invariance."""
    out = []
    u = np.real(random_hermitian(domain, 1, rng, amplitude=0.5)[..., 0, 0])
    H = np.exp(u)[..., None, None] * np.eye(1)
    F = curvature(chern_connection(H, domain), domain)
    iLF = (contract_lambda(F) * 1j).values[..., 0, 0, 0]
    lap = laplacian(scalar_field(u, domain), domain).values[..., 0]
    out.append(_check("scalar_reduction", np.max(np.abs(iLF - 0.5 * lap)) / np.max(np.abs(lap)), 1e-8))
    for qv in (1.0, 0.5, 2.0 + 1.0j):
        phi = hitchin_section(domain, np.full(domain.shape, qv))
        m = hs_residual(identity_metric(domain, 2), phi, domain)["momentmap"]
        expect = 2.0 * np.sqrt(2.0) * abs(1.0 - abs(qv) ** 2)
        out.append(_check(f"momentmap_closed_form_q{qv}", np.max(np.abs(m - expect)), 1e-12))
    out += gauge_invariance(domain, rng)
    return out


def gauge_invariance(domain, rng, r=2):
    """Diagnostics before and after a smooth random unitary gauge ``g = exp(iS)``."""
    phi = random_form(domain, 1, 0, rng, fiber=(r, r)) * 0.3
    H = random_metric(domain, r, rng, amplitude=0.3)
    ev, U = np.linalg.eigh(random_hermitian(domain, r, rng, amplitude=0.7))
    g = (U * np.exp(1j * ev)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))
    beta_g, phi_g, H_g = complex_gauge_act(g, phi, H, domain)

    def diag(H_, phi_, beta_):
        F = curvature(chern_connection(H_, domain, beta_), domain)
        res = hs_residual(H_, phi_, domain, beta_)
        return {
            "F": np.sqrt(pointwise_norm2(F, H_)),
            "phi": np.sqrt(pointwise_norm2(phi_, H_)),
            "wedge": np.sqrt(pointwise_norm2(wedge_square(phi_), H_)),
            "momentmap": res["momentmap"],
            "holomorphy": res["holomorphy"],
        }

    a, b = diag(H, phi, None), diag(H_g, phi_g, beta_g)
    out = []
    for k in a:
        scale = max(1.0, float(np.max(a[k])))
        out.append(_check(f"gauge_{k}", np.max(np.abs(a[k] - b[k]), initial=0.0) / scale, 1e-10))
    return out


def identity_suite(domain, seed=0):
    """Lattice identities on any domain; curvature and gauge identities on 2D tori.

    The curvature checks rely on spectral accuracy for products such as
    ``exp(u)``, which coarse four-dimensional grids do not resolve.
    """
    rng = rng_for(seed, "identities")
    checks = lattice_identities(domain, rng)
    if domain.periodic and domain.n == 1:
        checks += solver_identities(domain, rng)
    return checks


# ---------------------------------------------------------------------------
# matrix lemmas

def oracle_constants():
    with resources.files("higgslab").joinpath("data/matrix_constants.json").open() as fh:
        return json.load(fh)


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def planted_batch(rng, r, m):
    """Planted-gap matrices: minimal eigenvalue gap exactly ``d``; norm-capped at ``C0 (d + 1)``."""
    d = np.exp(rng.uniform(0.0, np.log(10.0), m))
    w = _cgauss(rng, (m, r))
    gaps = np.abs(w[:, :, None] - w[:, None, :]) + np.eye(r) * 1e300
    w = w / gaps.min(axis=(1, 2))[:, None]
    V = _cgauss(rng, (m, r, r))
    theta = V @ ((d[:, None] * w)[:, :, None] * np.linalg.inv(V))
    keep = np.sqrt(np.sum(np.abs(theta) ** 2, axis=(1, 2))) <= C0 * (d + 1)
    return theta[keep], d[keep]


def matrix_lemma_suite(samples, rank, seed=0, chunk=100_000):
    """Eigenvalue bound, commutator-gap ratio and projection bounds on random samples.

    Thresholds come from the frozen oracle constants at their recorded margins.
    """
    const = oracle_constants()[f"rank{rank}"]
    C_thr = const["C"] * (1 - const["C_margin"])
    B_thr = const["B"] * (1 + const["B_margin"])
    Bp_thr = const["Bprime"] * (1 - const["Bprime_margin"])
    rng = rng_for(seed, f"matrix-lemmas/rank{rank}")
    eig_viol = gap_viol = chi_viol = comm_viol = 0
    ratio_min, chi_max, bp_min = np.inf, 0.0, np.inf
    planted = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        A = _cgauss(rng, (m, rank, rank))
        lam = np.max(np.abs(np.linalg.eigvals(A)), axis=-1)
        eig_viol += int(np.sum(lam > np.sqrt(np.sum(np.abs(A) ** 2, axis=(1, 2))) * (1 + 1e-12)))
        ratio = commutator_gap_ratio(A)
        gap_viol += int(np.sum(ratio < C_thr))
        ratio_min = min(ratio_min, float(np.min(ratio)))
        theta, d = planted_batch(rng, rank, m)
        planted += len(d)
        pr = eigen_projections(theta[:, None])
        chi = projection_norm(pr.chi)  # (m, r)
        thH = np.conj(np.swapaxes(theta, -1, -2))[:, None]
        comm = projection_norm(thH @ pr.pi - pr.pi @ thH)
        chi_viol += int(np.sum(chi > B_thr))
        chi_max = max(chi_max, float(np.max(chi)))
        sel = chi > 1e-8
        rat = comm[sel] / (d[:, None] * chi)[sel]
        comm_viol += int(np.sum(rat < Bp_thr))
        bp_min = min(bp_min, float(np.min(rat)))
        done += m
    return {
        "rank": rank,
        "samples": samples,
        "planted_samples": planted,
        "seed": seed,
        "eigenvalue_bound_violations": eig_viol,
        "gap_ratio_min": ratio_min,
        "gap_ratio_threshold": C_thr,
        "gap_ratio_violations": gap_viol,
        "chi_max": chi_max,
        "chi_threshold": B_thr,
        "chi_violations": chi_viol,
        "commutator_ratio_min": bp_min,
        "commutator_ratio_threshold": Bp_thr,
        "commutator_violations": comm_viol,
        "pass": eig_viol == gap_viol == chi_viol == comm_viol == 0,
    }
