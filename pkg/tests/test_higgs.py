import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from higgslab.errors import (
    ConditioningError,
    DegenerateSpectrumError,
    IntegrabilityError,
    NoSpectralDataError,
    NotInBXError,
    RankOverflowError,
)
from higgslab.higgs import (
    _all_roots,
    adjoint_wrt,
    bracket,
    bracket_pairing,
    check_metric,
    commutator_gap_ratio,
    discriminant,
    discriminant_from_coeffs,
    discriminant_from_roots,
    eigen_projections,
    eigenvalue_bound_gap,
    higgs_field,
    hitchin_map,
    identity_metric,
    require_spectral_data,
    rle_decode,
    rle_mask,
    spectral_roots_field,
    tensor_product,
    wedge_square,
)
from higgslab.lattice import LatticeDomain, pointwise_norm2
from higgslab.presets import diagonal_higgs, hitchin_section, random_metric, random_unitary, rng_for
from higgslab.suites import random_form

T1 = LatticeDomain.torus(1, 8)
T2 = LatticeDomain.torus(2, 8)


def commuting_pair(rng, r, proportional=False):
    """Simultaneously diagonalizable pair; ``proportional`` keeps the spectral data rank one."""
    V = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    Vi = np.linalg.inv(V)
    a = rng.normal(size=r) + 1j * rng.normal(size=r)
    b = (rng.normal() + 1j * rng.normal()) * a if proportional else rng.normal(size=r) + 1j * rng.normal(size=r)
    return V @ np.diag(a) @ Vi, V @ np.diag(b) @ Vi


def evaluate(theta, k, v, site):
    """Evaluate the stored p_k at a covector argument ``v``."""
    c = theta.coeffs[k - 1][site]
    if theta.n == 1:
        return c[0] * v[0] ** k
    return sum(c[j] * v[0] ** (k - j) * v[1] ** j for j in range(k + 1))


def test_hitchin_map_matches_np_poly_one_dim():
    rng = rng_for(0, "hitchin")
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    theta = hitchin_map(higgs_field(T1, [A]))
    ref = np.poly(A)
    for k in range(1, 4):
        assert abs(theta.coeffs[k - 1][0, 0, 0] - ref[k]) < 1e-12 * (1 + abs(ref[k]))


def test_hitchin_map_matches_np_poly_two_dims():
    rng = rng_for(1, "hitchin")
    A, B = commuting_pair(rng, 3)
    theta = hitchin_map(higgs_field(T2, [A, B]))
    site = (1, 2, 3, 4)
    for _ in range(3):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        ref = np.poly(v[0] * A + v[1] * B)
        for k in range(1, 4):
            assert abs(evaluate(theta, k, v, site) - ref[k]) < 1e-10 * (1 + abs(ref[k]))


def test_hitchin_map_rejects_noncommuting():
    rng = rng_for(2, "hitchin")
    A = rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 2))
    with pytest.raises(IntegrabilityError):
        hitchin_map(higgs_field(T2, [A, B]))


@given(st.integers(0, 2**31 - 1), st.integers(-6, 6))
def test_kappa_homogeneous_powers_of_two(seed, e):
    # multiplying by 2^e is exact in floating point, so the scaling is exact
    rng = np.random.default_rng(seed)
    A, B = commuting_pair(rng, 2)
    t = 2.0**e
    th = hitchin_map(higgs_field(T2, [A, B]))
    ts = hitchin_map(higgs_field(T2, [t * A, t * B]))
    for k in (1, 2):
        assert np.max(np.abs(ts.coeffs[k - 1] - t**k * th.coeffs[k - 1])) <= 1e-12 * (1 + np.max(np.abs(ts.coeffs[k - 1])))


@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3]))
def test_discriminant_routes_agree(seed, r):
    rng = np.random.default_rng(seed)
    A, B = commuting_pair(rng, r, proportional=True)
    theta = hitchin_map(higgs_field(T2, [A, B]))
    roots = _all_roots(theta)
    a = discriminant_from_roots(roots, 2)
    b = discriminant_from_coeffs(theta)
    assert np.max(np.abs(a - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


def test_roots_rank_one_and_not_in_bx():
    rng = rng_for(3, "hitchin")
    A, B = commuting_pair(rng, 2, proportional=True)
    theta = hitchin_map(higgs_field(T2, [A, B]))
    roots = spectral_roots_field(theta)
    ev_a = np.sort_complex(np.linalg.eigvals(A))
    assert np.allclose(np.sort_complex(roots[0, 0, 0, 0, :, 0]), ev_a, atol=1e-8)
    with pytest.raises(NotInBXError):
        spectral_roots_field(hitchin_map(higgs_field(T2, [np.diag([1, 0]), np.diag([0, 1])])))


def test_discriminant_mask_on_q_equals_z():
    d = LatticeDomain.patch(1, 17, 1.0)
    theta = hitchin_map(hitchin_section(d, d.z(0)))
    delta, mask, gap = discriminant(theta, h=d.h)
    assert mask[8, 8] and mask.sum() < 20
    assert np.allclose(delta[..., 0], 4 * d.z(0))
    assert theta.meta["eps_disc"] > 0


def test_roots_are_continuous_along_scan():
    d = LatticeDomain.torus(1, 16)
    theta = hitchin_map(diagonal_higgs(d, [1.0, -1.0]))
    roots = spectral_roots_field(theta)
    assert np.all(roots[..., 0, 0] == roots[0, 0, 0, 0])


def test_no_spectral_data():
    with pytest.raises(NoSpectralDataError):
        require_spectral_data(hitchin_map(higgs_field(T1, [np.zeros((2, 2))])))


@given(st.lists(st.booleans(), min_size=1, max_size=60))
def test_rle_roundtrip(bits):
    m = np.array(bits)
    assert np.array_equal(rle_decode(rle_mask(m), m.shape), m)


def test_check_metric():
    H = identity_metric(T1, 2)
    check_metric(H)
    with pytest.raises(ConditioningError):
        check_metric(-H)
    bad = H.copy()
    bad[..., 0, 1] = 1.0
    with pytest.raises(ConditioningError):
        check_metric(bad)
    skew = H.copy()
    skew[..., 1, 1] = 1e-14
    with pytest.raises(ConditioningError):
        check_metric(skew)


@given(st.integers(0, 2**31 - 1), st.sampled_from([(1, 0), (0, 1), (1, 1), (2, 1)]))
def test_adjoint_is_involution(seed, bd):
    rng = np.random.default_rng(seed)
    f = random_form(T2, *bd, rng, fiber=(2, 2), kmax=1)
    H = random_metric(T2, 2, rng, amplitude=0.5, kmax=1)
    back = adjoint_wrt(H, adjoint_wrt(H, f))
    assert back.bidegree == f.bidegree
    assert np.max(np.abs(back.values - f.values)) <= 1e-10 * np.max(np.abs(f.values))


def test_adjoint_is_h_adjoint_pointwise():
    rng = rng_for(4, "hitchin")
    H = random_metric(T1, 2, rng, amplitude=0.5)
    A = random_form(T1, 0, 0, rng, fiber=(2, 2)).values[..., 0, :, :]
    u = rng.normal(size=(2,)) + 1j * rng.normal(size=(2,))
    w = rng.normal(size=(2,)) + 1j * rng.normal(size=(2,))
    from higgslab.lattice import FormField

    Ad = adjoint_wrt(H, FormField(A[..., None, :, :], (0, 0), 1)).values[..., 0, :, :]
    lhs = np.einsum("...i,...ij,...j->...", np.conj(A @ u), H, w)
    rhs = np.einsum("...i,...ij,...j->...", np.conj(u), H, Ad @ w)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_bracket_graded_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    a = random_form(T2, 1, 0, rng, fiber=(2, 2), kmax=1)
    b = random_form(T2, 0, 1, rng, fiber=(2, 2), kmax=1)
    c = random_form(T2, 1, 1, rng, fiber=(2, 2), kmax=1)
    assert np.allclose(bracket(a, b).values, bracket(b, a).values)
    assert np.allclose(bracket(a, c).values, -bracket(c, a).values)


def test_wedge_square_is_commutator():
    rng = rng_for(5, "hitchin")
    A = rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 2))
    ww = wedge_square(higgs_field(T2, [A, B])).values[0, 0, 0, 0, 0]
    assert np.allclose(ww, A @ B - B @ A)
    assert np.all(wedge_square(hitchin_section(T1, np.ones(T1.shape))).values == 0)


def test_bracket_pairing_identity():
    rng = rng_for(6, "hitchin")
    phi = random_form(T1, 1, 0, rng, fiber=(2, 2))
    H = random_metric(T1, 2, rng, amplitude=0.4)
    lhs, rhs = bracket_pairing(phi, H)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(rhs)


def test_projections_basic():
    rng = rng_for(7, "hitchin")
    A, B = commuting_pair(rng, 3)
    pr = eigen_projections(np.stack([A, B]))
    pi = pr.pi
    assert np.allclose(pi.sum(axis=0), np.eye(3))
    assert np.allclose(pi[0] @ pi[0], pi[0])
    assert np.allclose(pi[0] @ pi[1], 0, atol=1e-10)
    pip = pr.pi_prime
    assert np.allclose(pip[1], np.conj(pip[1]).T)
    with pytest.raises(DegenerateSpectrumError):
        eigen_projections(np.eye(2))
    with pytest.raises(IntegrabilityError):
        eigen_projections(np.stack([np.diag([1.0, 2.0]), np.array([[0, 1.0], [0, 0]])]))


def test_projections_normal_matrix_has_no_chi():
    U = random_unitary((), 3, rng_for(8, "hitchin"))
    A = U @ np.diag([1.0, 2.0j, -1.5]) @ np.conj(U).T
    assert np.max(np.abs(eigen_projections(A).chi)) < 1e-10


def test_commutator_gap_ratio_normal_is_inf():
    assert commutator_gap_ratio(np.diag([1.0, 2.0])) == np.inf
    assert np.isfinite(commutator_gap_ratio(np.array([[0, 1.0], [0, 0]])))


@given(st.integers(0, 2**31 - 1))
def test_tensor_eigenvalues_are_sums(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    T = tensor_product(higgs_field(T1, [A]), higgs_field(T1, [B])).comp(0)[0, 0]
    ea, eb = np.linalg.eigvals(A), np.linalg.eigvals(B)
    sums = (ea[:, None] + eb[None, :]).ravel()
    et = np.linalg.eigvals(T)
    for s in sums:
        assert np.min(np.abs(et - s)) < 1e-7 * (1 + abs(s))


def test_tensor_rank_overflow():
    a = higgs_field(T1, [np.eye(4)])
    b = higgs_field(T1, [np.eye(5)])
    with pytest.raises(RankOverflowError):
        tensor_product(a, b)


@given(st.integers(0, 2**31 - 1))
def test_eigenvalue_bound(seed):
    rng = np.random.default_rng(seed)
    A, B = commuting_pair(rng, 2, proportional=True)
    phi = higgs_field(T2, [A, B])
    assert np.min(eigenvalue_bound_gap(phi)) >= -1e-9 * np.sqrt(np.max(pointwise_norm2(phi)))
