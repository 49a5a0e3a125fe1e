import numpy as np
import pytest

from higgslab.errors import NormalizationError, NoSpectralDataError, StageError
from higgslab.higgs import discriminant, hitchin_map, identity_metric
from higgslab.lattice import LatticeDomain, form_from_components
from higgslab.limits import (
    adiabatic_residual,
    decay_fit,
    dirichlet_energy,
    extract_z2,
    fit_log_linear,
    loop_monodromy,
    p2_defect,
    plaquette_products,
    probe_radius,
    realization_experiment,
    scaling_sweep,
    scramble_cocycle,
    slope_ratios,
    square_loop,
    uhlenbeck_radius_field,
    z2_harmonicity_residual,
)
from higgslab.presets import decoupled_metric, diagonal_higgs, hitchin_section, rng_for
from higgslab.solver import SolverParams


@pytest.fixture(scope="module")
def patch_sweep():
    d = LatticeDomain.patch(1, 32, 1.0)
    q = d.z(0)
    phi = hitchin_section(d, q)
    Hb = decoupled_metric(q + 1e-300)
    probes = [(0.2, 0.0), (0.4, 0.0)]
    recs = scaling_sweep(d, phi, [1, 2, 4, 8], SolverParams(boundary=Hb), Hb, probes)
    return d, phi, Hb, recs


def test_fit_log_linear_exact():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    slope, b, r2, n_used, floored = fit_log_linear(x, 3.0 * np.exp(-0.7 * x))
    assert slope == pytest.approx(-0.7) and np.exp(b) == pytest.approx(3.0)
    assert r2 == pytest.approx(1.0) and n_used == 4 and not floored


def test_fit_log_linear_floor():
    slope, _, _, n_used, floored = fit_log_linear([1, 2, 3, 4], [1e-2, 1e-4, 1e-20, 1e-30])
    assert n_used == 2 and floored and slope == pytest.approx(np.log(1e-2))
    assert np.isnan(fit_log_linear([1, 2, 3, 4], [1e-20] * 4)[0])


def test_probe_radius():
    d = LatticeDomain.patch(1, 16, 2.0)
    assert probe_radius(d, 0.1) == 0.05
    assert probe_radius(d, 5.0) == pytest.approx(0.1)


def test_sweep_scaling_and_invariance(patch_sweep):
    d, phi, Hb, recs = patch_sweep
    r1 = recs[0].r_t
    for rec in recs:
        assert rec.r_t == pytest.approx(rec.t * r1, rel=1e-14)
        assert rec.solve["converged"]
        for k in range(2):
            assert np.max(np.abs(rec.kappa[k] - recs[0].kappa[k])) <= 1e-10
    for j in range(2):
        sup = [rec.probes[j]["sup_comm"] for rec in recs]
        assert all(b < a for a, b in zip(sup[:-1], sup[1:]))


def test_decay_fit_orders_slopes(patch_sweep):
    *_, recs = patch_sweep
    fits = decay_fit(recs)
    assert all(f.r2 >= 0.95 for f in fits)
    # farther from the zero of q means faster decay
    assert fits[1].slope < fits[0].slope < 0
    assert len(slope_ratios(fits)) == 2
    with pytest.raises(ValueError):
        decay_fit(recs[:3])


def test_sweep_rejects_short_lists():
    d = LatticeDomain.torus(1, 16)
    with pytest.raises(ValueError):
        scaling_sweep(d, diagonal_higgs(d, [1.0, -1.0]), [1, 2, 3])
    with pytest.raises(ValueError):
        scaling_sweep(d, diagonal_higgs(d, [1.0, -1.0]), [1, 3, 2, 4])


def test_sweep_wraps_solver_failures():
    d = LatticeDomain.torus(1, 16)
    H0 = identity_metric(d, 2)
    H0[0, 0, 1, 1] = 1e-14
    with pytest.raises(StageError, match="sweep t=1"):
        scaling_sweep(d, diagonal_higgs(d, [1.0, -1.0]), [1, 2, 3, 4], H0=H0)


def test_adiabatic_residual(patch_sweep):
    d, phi, _, recs = patch_sweep
    rec = recs[-1]
    res = adiabatic_residual(rec.H, phi * (rec.t / rec.integrals["norm_H"]), d)
    assert res["norm"] < 1e-12 and res["dbar_phi"] < 1e-10 and res["wedge"] == 0
    with pytest.raises(NormalizationError):
        adiabatic_residual(recs[-1].H, phi * 0.0, d)


def test_adiabatic_torus_endpoint():
    d = LatticeDomain.torus(1, 32)
    phi = hitchin_section(d, np.ones(d.shape))
    res = adiabatic_residual(identity_metric(d, 2), phi * 8.0, d)
    assert res["iLF"] <= 1e-3 and res["comm"] <= 1e-12


def test_z2_torus_constant_q():
    d = LatticeDomain.torus(1, 32)
    q = 0.6 - 0.8j
    phi = hitchin_section(d, np.full(d.shape, q))
    theta = hitchin_map(phi)
    discriminant(theta, h=d.h)
    z2 = extract_z2(theta, phi, identity_metric(d, 2), d)
    assert not np.any(z2.mask)
    assert np.max(np.abs(z2.v_norm2 - 2 * abs(q))) <= 1e-12
    assert z2.summary()["n_negative_edges"] == 0
    harm = z2_harmonicity_residual(z2, d)
    assert harm["dv"] <= 1e-10 and harm["dstar_v"] <= 1e-10
    assert p2_defect(z2, theta) <= 1e-12


def test_z2_branch_point_monodromy():
    d = LatticeDomain.patch(1, 64, 1.0)
    q = d.z(0)
    phi = hitchin_section(d, q)
    theta = hitchin_map(phi)
    discriminant(theta, h=d.h)
    z2 = extract_z2(theta, phi, decoupled_metric(q + 1e-300), d)
    assert np.any(z2.mask)
    # lambda^2 = q, an independent closed form for the root
    off = ~z2.mask
    assert np.max(np.abs(z2.lam[..., 0][off] ** 2 - q[off])) <= 1e-12
    assert loop_monodromy(z2, square_loop(d, (0.0, 0.0), 16)) == -1
    pp = plaquette_products(z2, d)[:-1, :-1]
    assert np.sum(pp < 0) == 0
    harm = z2_harmonicity_residual(z2, d, 0.1)
    bad = z2_harmonicity_residual(scramble_cocycle(z2, rng_for(0, "scramble")), d, 0.1)
    assert bad["dv_rel"] > 100 * harm["dv_rel"]
    assert dirichlet_energy(z2, d, 0.1) > 0


def test_z2_errors():
    d = LatticeDomain.torus(1, 16)
    phi3 = diagonal_higgs(d, [1.0, 0.0, -1.0])
    with pytest.raises(ValueError):
        extract_z2(hitchin_map(phi3), phi3, identity_metric(d, 3), d)
    phi0 = diagonal_higgs(d, [0.0, 0.0])
    with pytest.raises(NoSpectralDataError):
        extract_z2(hitchin_map(phi0), phi0, identity_metric(d, 2), d)


def test_uhlenbeck_radius():
    d1 = LatticeDomain.torus(1, 16)
    F1 = form_from_components(d1, (1, 1), {((0,), (0,)): 1.0})
    r, note = uhlenbeck_radius_field(F1, d1, 0.1)
    assert np.all(r == 0.5) and note
    d2 = LatticeDomain.torus(2, 8)
    F = form_from_components(d2, (1, 1), {((0,), (0,)): 1.0})
    small, _ = uhlenbeck_radius_field(F, d2, 1e-3)
    large, _ = uhlenbeck_radius_field(F, d2, 1e-1)
    assert np.all(small <= large) and np.ptp(small) == 0


def test_realization_torus_passes():
    d = LatticeDomain.torus(1, 16)
    out = realization_experiment(d, diagonal_higgs(d, [1.0, -1.0]), [1, 2, 4, 8])
    assert out["status"] == "PASS", out["checks"]
    with pytest.raises(StageError):
        realization_experiment(d, diagonal_higgs(d, [1.0, 0.0, -1.0]), [1, 2, 4, 8])


def test_realization_degenerate_spectrum():
    d = LatticeDomain.torus(1, 16)
    out = realization_experiment(d, diagonal_higgs(d, [1.0, 1.0]), [1, 2, 4, 8])
    assert out["status"] == "DEGENERATE" and out["z2"]["n_masked"] == 256


def test_dirichlet_energy_across_resolutions():
    # |grad v|^2 ~ 1/|z| near the branch point is integrable in two dimensions,
    # so with the exclusion disc the discrete energy settles as h -> 0
    energies = []
    for N in (32, 64, 128):
        d = LatticeDomain.patch(1, N, 1.0)
        q = d.z(0)
        phi = hitchin_section(d, q)
        theta = hitchin_map(phi)
        discriminant(theta, h=d.h)
        z2 = extract_z2(theta, phi, decoupled_metric(q + 1e-300), d)
        energies.append(dirichlet_energy(z2, d, 0.1))
    assert np.all(np.isfinite(energies))
    growth = abs(energies[2] - energies[1]) / abs(energies[1] - energies[0])
    assert growth < 0.5
