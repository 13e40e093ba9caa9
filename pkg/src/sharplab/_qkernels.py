"""Hot inner loops for the random-quadratic dynamics.

Two interchangeable implementations live here: numba-compiled loops (the
default) and vectorized numpy fallbacks, selected once at import time via
``SHARPLAB_BACKEND``.  Both consume identical pre-drawn batch indices, so a
run is reproducible within a backend; across backends results agree to
floating-point reassociation error.  ``benchmarks/bench_backends.py``
compares the two.
"""

from __future__ import annotations

import numpy as np

from .backend import USE_NUMBA, njit

# --- SGD stepping ----------------------------------------------------------
#
# run_chunk advances theta through m steps with given (m, b) batch indices.
# At every step t (global index = phase + s) with t % record_every == 0 the
# pre-update state is recorded: theta, full loss, and the mean squared
# per-sample gradient norm.  Divergence checks: loss threshold at recorded
# steps, squared-norm threshold after every update.
# Returns (n_recorded, steps_done, diverged).


@njit(cache=True)
def _run_chunk_numba(
    A, xs, theta, idx, phase, eta, record_every,
    loss_thresh, norm_thresh_sq, rec_thetas, rec_losses, rec_gradsq,
):
    m, b = idx.shape
    n, d = xs.shape
    n_rec = 0
    g = np.empty(d)
    for s in range(m):
        t = phase + s
        if t % record_every == 0:
            loss = 0.0
            gradsq = 0.0
            for i in range(n):
                ldot = 0.0
                ysq = 0.0
                for r in range(d):
                    acc = 0.0
                    for c in range(d):
                        acc += A[i, r, c] * (theta[c] - xs[i, c])
                    ysq += acc * acc
                    ldot += acc * (theta[r] - xs[i, r])
                loss += 0.5 * ldot
                gradsq += ysq
            loss /= n
            gradsq /= n
            for r in range(d):
                rec_thetas[n_rec, r] = theta[r]
            rec_losses[n_rec] = loss
            rec_gradsq[n_rec] = gradsq
            n_rec += 1
            if not np.isfinite(loss) or loss > loss_thresh:
                return n_rec, s, 1
        for r in range(d):
            g[r] = 0.0
        for k in range(b):
            i = idx[s, k]
            for r in range(d):
                acc = 0.0
                for c in range(d):
                    acc += A[i, r, c] * (theta[c] - xs[i, c])
                g[r] += acc
        nsq = 0.0
        for r in range(d):
            theta[r] -= eta * g[r] / b
            nsq += theta[r] * theta[r]
        if not np.isfinite(nsq) or nsq > norm_thresh_sq:
            return n_rec, s + 1, 1
    return n_rec, m, 0


def _run_chunk_numpy(
    A, xs, theta, idx, phase, eta, record_every,
    loss_thresh, norm_thresh_sq, rec_thetas, rec_losses, rec_gradsq,
):
    m, b = idx.shape
    n_rec = 0
    for s in range(m):
        t = phase + s
        if t % record_every == 0:
            r = theta[None, :] - xs
            Y = np.einsum("nij,nj->ni", A, r)
            loss = 0.5 * float(np.mean(np.sum(Y * r, axis=1)))
            gradsq = float(np.mean(np.sum(Y * Y, axis=1)))
            rec_thetas[n_rec] = theta
            rec_losses[n_rec] = loss
            rec_gradsq[n_rec] = gradsq
            n_rec += 1
            if not np.isfinite(loss) or loss > loss_thresh:
                return n_rec, s, 1
        bi = idx[s]
        rb = theta[None, :] - xs[bi]
        g = np.einsum("kij,kj->i", A[bi], rb)
        theta -= eta * g / b
        nsq = float(theta @ theta)
        if not np.isfinite(nsq) or nsq > norm_thresh_sq:
            return n_rec, s + 1, 1
    return n_rec, m, 0


run_chunk = _run_chunk_numba if USE_NUMBA else _run_chunk_numpy


# --- Stationary residual moments -------------------------------------------
#
# For each recorded theta, enumerate all samples exactly; the only Monte
# Carlo error left is over the theta samples.  Accumulates, over (t, i):
#   out[0] += Y^T A_i Y      (directional curvature on the own sample)
#   out[1] += Y^T Hbar Y     (directional curvature on the mean landscape)
#   out[2] += |Y|^2
#   out[3] += |Y - mu|^4     (centered fourth moment)
#   out[4] += mu . mean_i(A_i Y)   per t
#   out[5] += |mu|^2               per t
#   out[6] += mu^T Hbar mu         per t
# mu_sum accumulates mu over t.  Y = A_i (theta - x_i), mu = Hbar theta - G.


@njit(cache=True)
def _scalars_chunk_numba(A, xs, hbar, gvec, thetas, out, mu_sum):
    T, d = thetas.shape
    n = xs.shape[0]
    mu = np.empty(d)
    y = np.empty(d)
    z = np.empty(d)
    hy = np.empty(d)
    ay = np.empty(d)
    for t in range(T):
        for r in range(d):
            acc = 0.0
            for c in range(d):
                acc += hbar[r, c] * thetas[t, c]
            mu[r] = acc - gvec[r]
        for r in range(d):
            ay[r] = 0.0
        for i in range(n):
            for r in range(d):
                acc = 0.0
                for c in range(d):
                    acc += A[i, r, c] * (thetas[t, c] - xs[i, c])
                y[r] = acc
            for r in range(d):
                acc = 0.0
                acch = 0.0
                for c in range(d):
                    acc += A[i, r, c] * y[c]
                    acch += hbar[r, c] * y[c]
                z[r] = acc
                hy[r] = acch
            yy = 0.0
            ya = 0.0
            yh = 0.0
            cen = 0.0
            for r in range(d):
                yy += y[r] * y[r]
                ya += y[r] * z[r]
                yh += y[r] * hy[r]
                cen += (y[r] - mu[r]) * (y[r] - mu[r])
                ay[r] += z[r]
            out[0] += ya
            out[1] += yh
            out[2] += yy
            out[3] += cen * cen
        dcross = 0.0
        musq = 0.0
        mucurv = 0.0
        for r in range(d):
            dcross += mu[r] * ay[r] / n
            musq += mu[r] * mu[r]
            acc = 0.0
            for c in range(d):
                acc += hbar[r, c] * mu[c]
            mucurv += mu[r] * acc
        out[4] += dcross
        out[5] += musq
        out[6] += mucurv
        for r in range(d):
            mu_sum[r] += mu[r]


def _scalars_chunk_numpy(A, xs, hbar, gvec, thetas, out, mu_sum):
    n = xs.shape[0]
    # chunk over t to bound the (chunk, n, d) temporaries
    step = max(1, int(2_000_000 // max(n * xs.shape[1], 1)))
    for lo in range(0, thetas.shape[0], step):
        th = thetas[lo : lo + step]
        r = th[:, None, :] - xs[None, :, :]
        Y = np.einsum("nij,tnj->tni", A, r)
        AY = np.einsum("nij,tnj->tni", A, Y)
        HY = np.einsum("ij,tnj->tni", hbar, Y)
        mu = th @ hbar.T - gvec[None, :]
        cen = Y - mu[:, None, :]
        out[0] += float(np.einsum("tni,tni->", Y, AY))
        out[1] += float(np.einsum("tni,tni->", Y, HY))
        out[2] += float(np.einsum("tni,tni->", Y, Y))
        out[3] += float((np.sum(cen * cen, axis=2) ** 2).sum())
        out[4] += float(np.einsum("ti,ti->", mu, AY.mean(axis=1)))
        out[5] += float(np.einsum("ti,ti->", mu, mu))
        out[6] += float(np.einsum("ti,ij,tj->", mu, hbar, mu))
        mu_sum += mu.sum(axis=0)


scalars_chunk = _scalars_chunk_numba if USE_NUMBA else _scalars_chunk_numpy
