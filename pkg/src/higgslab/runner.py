"""Experiment pipelines and run-directory artifacts.

Every pipeline writes its outputs, then ``manifest.json`` last by atomic
rename. Reports never contain wall-clock data; timings live in the manifest.
"""

import csv
import hashlib
import json
import math
import os
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, validate_config
from .errors import ConfigError, HiggsLabError, StageError
from .fieldio import read_fld, read_matrix_field, write_fld
from .higgs import discriminant, hitchin_map, identity_metric
from .lattice import FormField, LatticeDomain, pointwise_norm2
from .limits import (
    adiabatic_residual,
    centre_monodromy,
    decay_fit,
    dirichlet_energy,
    extract_z2,
    p2_defect,
    plaquette_products,
    scaling_sweep,
    slope_ratios,
    z2_harmonicity_residual,
)
from .presets import decoupled_metric, diagonal_higgs, hitchin_section, q_field, random_metric, rng_for
from .solver import SolverParams, energy, hs_residual, solve_metric, weitzenbock_integrated, weitzenbock_residual
from .suites import identity_suite, matrix_lemma_suite


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Output directory bookkeeping: files, stage status and the final manifest."""

    def __init__(self, out_dir, command, config=None):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.files = []
        self.stages = []

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (HiggsLabError, np.linalg.LinAlgError) as exc:
            self.stages.append({"stage": name, "status": "failed", "error": str(exc), "seconds": time.perf_counter() - t0})
            self.write_manifest()
            if isinstance(exc, StageError):
                raise
            raise StageError(name, exc) from exc
        self.stages.append({"stage": name, "status": "ok", "seconds": time.perf_counter() - t0})
        return result

    def path(self, name):
        return self.out / name

    def add(self, name):
        if name not in self.files:
            self.files.append(name)

    def write_text(self, name, text):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.add(name)

    def write_json(self, name, obj):
        self.write_text(name, dumps(obj))

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        self.add(name)

    def write_field(self, name, domain, field):
        write_fld(self.path(name), domain, field)
        self.add(name)

    def write_manifest(self):
        manifest = {
            "tool": "higgslab",
            "version": __version__,
            "command": self.command,
            "config_hash": self.config.digest() if self.config is not None else None,
            "stages": self.stages,
            "status": "ok" if all(s["status"] == "ok" for s in self.stages) else "failed",
            "files": {f: {"sha256": _sha256(self.path(f)), "bytes": self.path(f).stat().st_size} for f in self.files},
            "created": datetime.now(timezone.utc).isoformat(),
        }
        tmp = self.path("manifest.json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(dumps(manifest))
        os.replace(tmp, self.path("manifest.json"))
        return manifest


def verify_manifest(run_dir):
    """Return the list of listed files that are missing or fail their checksum."""
    run_dir = Path(run_dir)
    with open(run_dir / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    bad = []
    for name, meta in manifest["files"].items():
        p = run_dir / name
        if not p.exists() or _sha256(p) != meta["sha256"]:
            bad.append(name)
    return bad


# ---------------------------------------------------------------------------
# building blocks

def build_domain(cfg):
    d = cfg.domain
    if d.kind == "torus":
        return LatticeDomain.torus(d.n, d.N, d.extent)
    return LatticeDomain.patch(d.n, d.N, d.extent)


def build_phi(cfg, domain):
    h = cfg.higgs
    if h.preset == "diagonal":
        return diagonal_higgs(domain, h.eigenvalues)
    if h.preset == "hitchin-section":
        return hitchin_section(domain, q_field(domain, h.q.kind, h.q.complex_value))
    try:
        dom, phi, _ = read_fld(h.path)
    except (OSError, ValueError) as exc:
        raise ConfigError("higgs.path", str(exc)) from None
    if dom.shape != domain.shape or dom.kind != domain.kind:
        raise ConfigError("higgs.path", "dump does not match the configured domain")
    if phi.bidegree != (1, 0) or phi.rank != h.rank:
        raise ConfigError("higgs.path", "dump is not a (1,0) Higgs field of the configured rank")
    return phi


def _decoupled_for(cfg, domain):
    h = cfg.higgs
    if h.preset != "hitchin-section":
        return None
    q = q_field(domain, h.q.kind, h.q.complex_value)
    if np.min(np.abs(q)) == 0:
        return None
    return decoupled_metric(q)


def build_metrics(cfg, domain, r):
    """Initial metric and (patch) boundary metric."""
    s = cfg.solver
    dec = _decoupled_for(cfg, domain)
    ident = identity_metric(domain, r)
    init = s.init
    if init == "auto":
        init = "decoupled" if dec is not None else "identity"
    if init == "decoupled" and dec is None:
        raise ConfigError("solver.init", "decoupled metric needs the hitchin-section preset with q nonzero on the grid")
    H0 = dec if init == "decoupled" else ident
    boundary = None
    if not domain.periodic:
        boundary = dec if (s.boundary == "decoupled" and dec is not None) else ident
        H0 = H0.copy()
    if s.init_perturbation > 0:
        rng = rng_for(cfg.seed, "init-metric")
        H0 = random_metric(domain, r, rng, amplitude=s.init_perturbation, traceless=s.sl_mode, base=H0)
        if boundary is not None:
            edge = ~domain.interior_mask()
            H0[edge] = boundary[edge]
    return H0, boundary


def solver_params(cfg, boundary):
    s = cfg.solver
    return SolverParams(
        step=s.step, max_iter=s.max_iter, tol=s.tol, sl_mode=s.sl_mode, boundary=boundary, refresh=s.refresh
    )


def _setup(cfg):
    domain = build_domain(cfg)
    phi = build_phi(cfg, domain)
    H0, boundary = build_metrics(cfg, domain, phi.rank)
    return domain, phi, H0, boundary


def solution_diagnostics(H, phi, domain, sl_mode=False):
    mask = domain.interior_mask()
    res = hs_residual(H, phi, domain, sl_mode=sl_mode)
    e_direct, e_ident = energy(H, phi, domain, sl_mode=sl_mode)
    norm2 = float(np.sum(domain.weights() * mask * pointwise_norm2(phi, H)))
    det = np.real(np.linalg.det(H))[mask]
    return {
        "momentmap_max": float(np.max(res["momentmap"][mask])),
        "holomorphy_max": float(np.max(res["holomorphy"][mask])),
        "integrability_max": float(np.max(res["integrability"][mask])),
        "energy_direct": e_direct,
        "energy_identity": e_ident,
        "energy_gap": abs(e_direct - e_ident),
        "phi_norm_sq": norm2,
        "weitzenbock_l1": weitzenbock_residual(H, phi, domain),
        "weitzenbock_integrated": weitzenbock_integrated(H, phi, domain),
        "det_H_range": [float(np.min(det)), float(np.max(det))],
    }


def _header(cfg, kind):
    return {"kind": kind, "version": __version__, "config": cfg.model_dump(mode="json"), "config_hash": cfg.digest()}


# ---------------------------------------------------------------------------
# pipelines

def run_solve(cfg, out_dir):
    run = Run(out_dir, "solve", cfg)
    run.write_text("config.json", dumps(cfg.model_dump(mode="json")))
    domain, phi, H0, boundary = run.stage("build", _setup, cfg)
    H, rep = run.stage("solve", solve_metric, domain, phi, H0, solver_params(cfg, boundary))
    diag = run.stage("diagnostics", solution_diagnostics, H, phi, domain, cfg.solver.sl_mode)
    report = {**_header(cfg, "solve"), "solve": rep.to_dict(), "diagnostics": diag}
    run.write_json("report.json", report)
    run.write_field("H.fld", domain, H)
    run.write_csv(
        "residuals.csv",
        ["iteration", "residual_l2", "residual_linf"],
        [(i, a, b) for i, (a, b) in enumerate(zip(rep.residual_l2, rep.residual_linf))],
    )
    manifest = run.write_manifest()
    return report, manifest


def sweep_checks(records, fits, tol_kappa):
    """Monotone decoupling, fit quality, slope ordinality, kappa invariance and r_t linearity."""
    active = [j for j, f in enumerate(fits) if np.isfinite(f.d) and f.d > 0]
    mono = True
    for j in active:
        seq = [rec.probes[j]["sup_comm"] for rec in records]
        mono &= all(b < a for a, b in zip(seq[:-1], seq[1:]))
    r2_ok = all(fits[j].r2 >= 0.95 for j in active) if active else True
    order = sorted(active, key=lambda j: fits[j].d)
    ordinal = all(abs(fits[a].slope) <= abs(fits[b].slope) for a, b in zip(order[:-1], order[1:]))
    base = records[0].kappa
    kappa_spread = max(float(np.max(np.abs(c - c0))) for rec in records for c, c0 in zip(rec.kappa, base))
    r1 = records[0].r_t / records[0].t
    lin = max(abs(rec.r_t - rec.t * r1) / (rec.t * r1) for rec in records)
    return {
        "monotone_decoupling": mono,
        "fit_r2": r2_ok,
        "slope_ordinal": ordinal,
        "kappa_invariant": kappa_spread <= tol_kappa,
        "kappa_spread": kappa_spread,
        "r_t_linearity": lin,
    }


def run_sweep(cfg, out_dir):
    run = Run(out_dir, "sweep", cfg)
    run.write_text("config.json", dumps(cfg.model_dump(mode="json")))
    domain, phi, H0, boundary = run.stage("build", _setup, cfg)
    histories = []

    def keep(rec, rep):
        histories.append((rec.t, rep))

    probes = [tuple(p) for p in cfg.experiment.probes]
    records = run.stage(
        "sweep", scaling_sweep, domain, phi, cfg.experiment.t_list, solver_params(cfg, boundary), H0, probes, keep
    )
    fits = run.stage("decay-fit", decay_fit, records)
    checks = sweep_checks(records, fits, cfg.experiment.tolerances.get("kappa", 1e-10))
    report = {
        **_header(cfg, "sweep"),
        "records": [rec.to_dict() for rec in records],
        "fits": [f.to_dict() for f in fits],
        "slope_over_d": slope_ratios(fits),
        "checks": checks,
        "fields": [f"H_t{rec.t:g}.fld" for rec in records],
    }
    run.write_json("report.json", report)
    for rec in records:
        run.write_field(f"H_t{rec.t:g}.fld", domain, rec.H)
    rows = []
    for t, rep in histories:
        rows += [(t, i, a, b) for i, (a, b) in enumerate(zip(rep.residual_l2, rep.residual_linf))]
    run.write_csv("residuals.csv", ["t", "iteration", "residual_l2", "residual_linf"], rows)
    manifest = run.write_manifest()
    return report, manifest


def _load_run(run_dir):
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "report.json", encoding="utf-8") as fh:
            report = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--run", f"{run_dir}: no report.json") from None
    cfg = validate_config(report["config"])
    return cfg, report


def z2_from_run(run_dir):
    """Rebuild the limiting field of a solve or sweep run and extract its Z2 one-form."""
    run_dir = Path(run_dir)
    cfg, report = _load_run(run_dir)
    domain = build_domain(cfg)
    phi = build_phi(cfg, domain)
    if report["kind"] == "sweep":
        last = report["records"][-1]
        _, H, _ = read_matrix_field(run_dir / report["fields"][-1])
        phi_hat = phi * (last["t"] / last["r_t"])
    else:
        _, H, _ = read_matrix_field(run_dir / "H.fld")
        nrm = math.sqrt(report["diagnostics"]["phi_norm_sq"])
        phi_hat = phi * (1.0 / nrm)
    theta = hitchin_map(phi_hat)
    discriminant(theta, h=domain.h)
    return cfg, domain, phi_hat, H, theta


def run_extract_z2(run_dir, out_dir):
    run = Run(out_dir, "extract-z2")
    cfg, domain, phi_hat, H, theta = run.stage("load", z2_from_run, run_dir)
    run.config = cfg
    z2 = run.stage("extract", extract_z2, theta, phi_hat, H, domain)
    if theta.meta.get("degenerate"):
        # Delta vanishes identically: Z is everything and there is no one-form to test
        report = {
            **_header(cfg, "extract-z2"),
            "source_run": str(Path(run_dir).name),
            "degenerate": True,
            "z2": z2.summary(),
            "eps_disc": theta.meta.get("eps_disc"),
        }
        run.write_json("report.json", report)
        return report, run.write_manifest()
    empty = not np.any(z2.mask)
    excl = 0.0 if empty else 0.1 * min(domain.extent)
    harm = z2_harmonicity_residual(z2, domain, excl)
    monodromy = centre_monodromy(z2, domain)
    neg_plaq = 0
    for a in range(domain.ndim):
        for b in range(a + 1, domain.ndim):
            pp = plaquette_products(z2, domain, a, b)
            if not domain.periodic:
                pp = pp[tuple(slice(0, -1) for _ in range(domain.ndim))]
            neg_plaq += int(np.sum(pp < 0))
    off = ~z2.mask
    vn = z2.v_norm2[off]
    report = {
        **_header(cfg, "extract-z2"),
        "source_run": str(Path(run_dir).name),
        "degenerate": False,
        "z2": z2.summary(),
        "edge_signs_rle": [[int(x) for x in _rle_int(s)] for s in z2.edge_signs],
        "v_norm2_min": float(np.min(vn)) if vn.size else None,
        "v_norm2_max": float(np.max(vn)) if vn.size else None,
        "v_norm2_vs_2abs_p2": float(np.max(np.abs(vn - 2 * np.abs(theta.coeffs[1][..., 0][off])))) if theta.n == 1 and vn.size else None,
        "p2_defect": p2_defect(z2, theta),
        "harmonicity": harm,
        "exclude_radius": excl,
        "negative_plaquettes": neg_plaq,
        "monodromy": monodromy,
        "dirichlet_energy": dirichlet_energy(z2, domain, excl),
        "eps_disc": theta.meta.get("eps_disc"),
    }
    run.write_json("report.json", report)
    run.write_field("v.fld", domain, FormField(z2.lam[..., :], (1, 0), domain.n))
    manifest = run.write_manifest()
    return report, manifest


def _rle_int(a):
    """Run-length code of an integer array in row-major order: ``value, count`` pairs flattened."""
    flat = np.asarray(a).ravel()
    out = []
    start = 0
    for i in range(1, flat.size + 1):
        if i == flat.size or flat[i] != flat[start]:
            out += [int(flat[start]), i - start]
            start = i
    return out


def run_check_identities(cfg, out_dir=None):
    domain = build_domain(cfg)
    checks = identity_suite(domain, cfg.seed)
    report = {**_header(cfg, "check-identities"), "checks": checks, "pass": all(c["pass"] for c in checks)}
    if out_dir is not None:
        run = Run(out_dir, "check-identities", cfg)
        run.stages.append({"stage": "identities", "status": "ok" if report["pass"] else "failed", "seconds": 0.0})
        run.write_json("report.json", report)
        run.write_manifest()
    return report


def run_matrix_lemmas(samples, rank, seed=0, out_dir=None):
    report = {"kind": "matrix-lemmas", "version": __version__, **matrix_lemma_suite(samples, rank, seed)}
    if out_dir is not None:
        run = Run(out_dir, "matrix-lemmas")
        run.stages.append({"stage": "matrix-lemmas", "status": "ok" if report["pass"] else "failed", "seconds": 0.0})
        run.write_json("report.json", report)
        run.write_manifest()
    return report


def adiabatic_for_run(run_dir):
    """Adiabatic residuals of the rescaled endpoint of a run (diagnostic helper)."""
    cfg, domain, phi_hat, H, _ = z2_from_run(run_dir)
    return adiabatic_residual(H, phi_hat, domain)


__all__ = [
    "RunConfig",
    "run_solve",
    "run_sweep",
    "run_extract_z2",
    "run_check_identities",
    "run_matrix_lemmas",
    "verify_manifest",
]
