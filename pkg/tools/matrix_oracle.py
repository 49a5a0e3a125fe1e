"""Brute-force sampling oracle for the rank-dependent matrix constants.

Run once before the package code existed; its output is frozen into
``src/higgslab/data/matrix_constants.json``. Nothing here imports higgslab.

Protocols
---------
gap ratio C_r
    A has iid standard complex Gaussian entries. Route: r = 2 uses the
    closed-form quadratic eigenvalues; r = 3 reads |N|^2 = |A|^2 - g(A)
    off the strictly upper triangle of a per-sample complex Schur form.
    ratio = |[A, A^*]|^2 / |N|^4.
projection constants B, B'
    Planted data: a gap d drawn log-uniformly in [1, 10], eigenvalues
    alpha_i = d * w_i with w_i iid complex Gaussian rescaled so that the
    minimal pairwise gap is exactly 1, eigenvectors V iid complex
    Gaussian, theta = V diag(alpha) V^-1, metric h = Id. Samples with
    |theta| > C0 (d + 1), C0 = 4, are rejected. pi_i = v_i w_i^T from the
    planted V and V^-1, pi_i' = v_i v_i^* / |v_i|^2.
    B  = sup |chi_i|, B_pi = sup |pi_i|,
    B' = inf |[theta^*, pi_i]| / (d |chi_i|) over |chi_i| > 1e-8.
Margins
    Ten independent batches of 10^5; the recorded margin is twice the
    relative spread of the batch extrema, with a floor of 1e-6 for the
    gap ratio and 5e-2 for B, B'.
"""

import json
import sys
import time

import numpy as np
import scipy.linalg

C0 = 4.0
BATCH = 100_000
NBATCH = 10


def cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def gap_ratio_batch(rng, r, m):
    A = cgauss(rng, (m, r, r))
    AH = np.conj(np.swapaxes(A, -1, -2))
    comm = A @ AH - AH @ A
    num = np.sum(np.abs(comm) ** 2, axis=(-1, -2))
    if r == 2:
        tr = A[:, 0, 0] + A[:, 1, 1]
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        disc = np.sqrt(tr * tr - 4 * det)
        l1, l2 = (tr + disc) / 2, (tr - disc) / 2
        nilp = np.sum(np.abs(A) ** 2, axis=(-1, -2)) - np.abs(l1) ** 2 - np.abs(l2) ** 2
    else:
        nilp = np.empty(m)
        for k in range(m):
            T, _ = scipy.linalg.schur(A[k], output="complex")
            nilp[k] = np.sum(np.abs(np.triu(T, 1)) ** 2)
    return num / nilp ** 2


def projection_batch(rng, r, m):
    d = np.exp(rng.uniform(0.0, np.log(10.0), m))
    w = cgauss(rng, (m, r))
    gaps = np.abs(w[:, :, None] - w[:, None, :]) + np.eye(r) * 1e300
    w = w / gaps.min(axis=(1, 2))[:, None]
    alpha = d[:, None] * w
    V = cgauss(rng, (m, r, r))
    Vinv = np.linalg.inv(V)
    theta = V @ (alpha[:, :, None] * Vinv)
    ok = np.sqrt(np.sum(np.abs(theta) ** 2, axis=(1, 2))) <= C0 * (d + 1)
    V, Vinv, theta, d = V[ok], Vinv[ok], theta[ok], d[ok]
    thH = np.conj(np.swapaxes(theta, -1, -2))
    chi_max, pi_max, ratio_min = 0.0, 0.0, np.inf
    for i in range(r):
        v = V[:, :, i]
        pi = v[:, :, None] * Vinv[:, i, None, :]
        pip = v[:, :, None] * np.conj(v)[:, None, :] / np.sum(np.abs(v) ** 2, axis=1)[:, None, None]
        chi = np.sqrt(np.sum(np.abs(pi - pip) ** 2, axis=(1, 2)))
        pin = np.sqrt(np.sum(np.abs(pi) ** 2, axis=(1, 2)))
        comm = np.sqrt(np.sum(np.abs(thH @ pi - pi @ thH) ** 2, axis=(1, 2)))
        sel = chi > 1e-8
        chi_max = max(chi_max, chi.max())
        pi_max = max(pi_max, pin.max())
        ratio_min = min(ratio_min, (comm[sel] / (d[sel] * chi[sel])).min())
    return chi_max, pi_max, ratio_min, int(ok.sum())


def margin(vals, floor):
    vals = np.asarray(vals)
    spread = (vals.max() - vals.min()) / abs(vals.mean())
    return float(max(2 * spread, floor))


def main(path):
    out = {"protocol_seed": 20240917, "batch": BATCH, "nbatch": NBATCH, "C0": C0}
    for r in (2, 3):
        t0 = time.time()
        rng = np.random.Generator(np.random.Philox(key=out["protocol_seed"] + r))
        infs = [gap_ratio_batch(rng, r, BATCH).min() for _ in range(NBATCH)]
        proj = [projection_batch(rng, r, BATCH) for _ in range(NBATCH)]
        chis, pis, ratios, kept = zip(*proj)
        out[f"rank{r}"] = {
            "C": float(min(infs)),
            "C_margin": margin(infs, 1e-6),
            "C_batch_inf": [float(x) for x in infs],
            "B": float(max(chis)),
            "B_pi": float(max(pis)),
            "B_margin": margin(chis, 5e-2),
            "Bprime": float(min(ratios)),
            "Bprime_margin": margin(ratios, 5e-2),
            "planted_kept": int(sum(kept)),
        }
        print(r, out[f"rank{r}"], f"{time.time() - t0:.1f}s", file=sys.stderr)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/higgslab/data/matrix_constants.json")
