"""Random-quadratic test world: exact SGD dynamics and closed-form oracles.

Each sample i carries its own quadratic bowl
    loss_i(theta) = 0.5 * (theta - x_i)^T A_i (theta - x_i),
so grad_i(theta) = A_i (theta - x_i) and the per-sample Hessian is literally
A_i.  The full loss is the mean over samples; with this convention every
2/eta stability threshold reads directly off the Hessians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _qkernels
from .numerics import check_symmetric

_CHUNK_STEPS = 8192


class ZeroGradientError(ValueError):
    """Raised where a metric is undefined because the full gradient vanishes."""


class DivergedRunError(RuntimeError):
    pass


@dataclass(frozen=True)
class BatchMode:
    """How mini-batches are drawn: 'with' or 'without' replacement, size b."""

    kind: str = "with"
    b: int = 1

    def __post_init__(self):
        if self.kind not in ("with", "without"):
            raise ValueError(f"batch kind must be 'with' or 'without', got {self.kind!r}")
        if self.b < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class QuadraticEnsemble:
    """Per-sample Hessians and anchors; derived mean landscape quantities."""

    hessians: np.ndarray  # (n, d, d), each symmetric (may be indefinite)
    anchors: np.ndarray  # (n, d)

    mean_hessian: np.ndarray = field(init=False)
    mean_hess_anchor: np.ndarray = field(init=False)  # mean of A_i x_i
    theta_star: np.ndarray = field(init=False)  # minimum-norm solution

    def __post_init__(self):
        self.hessians = np.ascontiguousarray(self.hessians, dtype=float)
        self.anchors = np.ascontiguousarray(self.anchors, dtype=float)
        if self.hessians.ndim != 3 or self.hessians.shape[1] != self.hessians.shape[2]:
            raise ValueError(f"hessians must be (n, d, d), got {self.hessians.shape}")
        if self.anchors.shape != self.hessians.shape[:2]:
            raise ValueError("anchors shape must match (n, d)")
        for i in range(self.n):
            check_symmetric(self.hessians[i], f"hessians[{i}]")
        self.mean_hessian = self.hessians.mean(axis=0)
        w = np.linalg.eigvalsh(self.mean_hessian)
        if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
            raise ValueError(f"mean Hessian must be PSD (min eigenvalue {w[0]:.3g})")
        self.mean_hess_anchor = np.einsum(
            "nij,nj->i", self.hessians, self.anchors
        ) / self.n
        self.theta_star = np.linalg.pinv(self.mean_hessian) @ self.mean_hess_anchor

    @property
    def n(self) -> int:
        return self.hessians.shape[0]

    @property
    def d(self) -> int:
        return self.hessians.shape[1]

    def loss(self, theta: np.ndarray) -> float:
        r = theta[None, :] - self.anchors
        Y = np.einsum("nij,nj->ni", self.hessians, r)
        return 0.5 * float(np.mean(np.sum(Y * r, axis=1)))

    def per_sample_grads(self, theta: np.ndarray) -> np.ndarray:
        r = theta[None, :] - self.anchors
        return np.einsum("nij,nj->ni", self.hessians, r)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return self.mean_hessian @ theta - self.mean_hess_anchor

    def batch_grad(self, theta: np.ndarray, indices: np.ndarray) -> np.ndarray:
        r = theta[None, :] - self.anchors[indices]
        return np.einsum("kij,kj->i", self.hessians[indices], r) / len(indices)

    def batch_hessian_apply(self, indices: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("kij,j->i", self.hessians[indices], v) / len(indices)

    def gradient_covariance(self, theta: np.ndarray) -> np.ndarray:
        """Covariance over samples of the per-sample gradients at theta."""
        Y = self.per_sample_grads(theta)
        mu = Y.mean(axis=0)
        C = (Y - mu).T @ (Y - mu) / self.n
        return 0.5 * (C + C.T)


def make_1d_gaussian_means(
    n: int, seed: int = 0, anchors: Sequence[float] | None = None
) -> QuadraticEnsemble:
    """1-D unit-curvature ensemble: loss_i(x) = 0.5 (x - a_i)^2."""
    if anchors is not None:
        a = np.asarray(anchors, dtype=float)
        n = len(a)
    else:
        a = np.random.default_rng(seed).normal(size=n)
    if n < 2:
        raise ValueError("need at least 2 samples")
    return QuadraticEnsemble(np.ones((n, 1, 1)), a.reshape(n, 1))


def make_random_psd_ensemble(
    n: int, d: int, rank: int, scale: float, seed: int = 0
) -> QuadraticEnsemble:
    """A_i = scale * B_i B_i^T with B_i a (d, rank) standard-normal draw."""
    if not 1 <= rank <= d:
        raise ValueError(f"need 1 <= rank <= d, got rank={rank}, d={d}")
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, d, rank))
    A = scale * np.einsum("nik,njk->nij", B, B)
    A = 0.5 * (A + A.transpose(0, 2, 1))
    xs = rng.normal(size=(n, d))
    return QuadraticEnsemble(A, xs)


def make_counterexample(alpha: float, gamma: float) -> QuadraticEnsemble:
    """Two-sample d=2 ensemble with mean alpha*I but sample spread gamma.

    A_1 = diag(alpha, alpha + gamma), A_2 = diag(alpha, alpha - gamma),
    both anchored at the origin.  Single-sample steps on the second
    coordinate contract or expand by |1 - eta*(alpha +/- gamma)| no matter
    how tame the mean landscape looks.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    A = np.array(
        [
            [[alpha, 0.0], [0.0, alpha + gamma]],
            [[alpha, 0.0], [0.0, alpha - gamma]],
        ]
    )
    return QuadraticEnsemble(A, np.zeros((2, 2)))


class DiagonalNetSpectra(NamedTuple):
    lambda1: float
    lambda2: float
    lambda_max_full: float
    lambda_max_b1: float
    gap: float
    interpolating: bool


def diagonal_net_spectra(a1: float, b1: float, a2: float, b2: float) -> DiagonalNetSpectra:
    """Closed-form spectra of a two-unit diagonal linear network on two
    orthogonal samples.

    Each sample's Hessian is rank one with eigenvalue a_i^2 + b_i^2; the
    full-batch top eigenvalue is max(l1, l2)/2 while the expected b=1 top
    eigenvalue is (l1 + l2)/2, leaving a gap of min(l1, l2)/2.  The
    ``interpolating`` flag reports whether |a_i * b_i| = 1 holds for both
    units (the fitted-solution condition; Cauchy-Schwarz then forces
    l1, l2 >= 2).
    """
    l1 = a1 * a1 + b1 * b1
    l2 = a2 * a2 + b2 * b2
    interpolating = abs(abs(a1 * b1) - 1.0) <= 1e-9 and abs(abs(a2 * b2) - 1.0) <= 1e-9
    full = max(l1, l2) / 2.0
    single = (l1 + l2) / 2.0
    return DiagonalNetSpectra(l1, l2, full, single, single - full, interpolating)


# --- batch sampling ---------------------------------------------------------
#
# With-replacement indices come from a counter-based Philox stream keyed by
# the seed: step t owns raw words [t*b, (t+1)*b), reduced mod n.  This makes
# per-step draws and whole-chunk draws produce identical indices.  Without
# replacement, each epoch (ceil(n/b) steps) gets its own permutation.


def _raw_words(seed: int, start_word: int, count: int) -> np.ndarray:
    tick, phase = divmod(start_word, 4)
    bg = np.random.Philox(key=seed, counter=[tick, 0, 0, 0])
    return bg.random_raw(phase + count)[phase:]


def _epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(1, epoch))
    return np.random.default_rng(ss).permutation(n)


def steps_per_epoch(n: int, b: int) -> int:
    return -(-n // b)


def sample_batch(n: int, mode: BatchMode, seed: int, step_index: int) -> np.ndarray:
    """Deterministic batch of indices for one SGD step."""
    b = mode.b
    if mode.kind == "without":
        if b > n:
            raise ValueError(f"batch size {b} exceeds dataset size {n} without replacement")
        spe = steps_per_epoch(n, b)
        epoch, pos = divmod(step_index, spe)
        perm = _epoch_permutation(n, seed, epoch)
        chunk = perm[pos * b : pos * b + b]
        if len(chunk) < b:  # tail batch: top up from the front of the permutation
            chunk = np.concatenate([chunk, perm[: b - len(chunk)]])
        return chunk.astype(np.int64)
    words = _raw_words(seed, step_index * b, b)
    return (words % np.uint64(n)).astype(np.int64)


def sample_batches(n: int, mode: BatchMode, seed: int, t0: int, t1: int) -> np.ndarray:
    """Indices for steps [t0, t1), identical to per-step sample_batch calls."""
    b = mode.b
    steps = t1 - t0
    if mode.kind == "with":
        words = _raw_words(seed, t0 * b, steps * b)
        return (words % np.uint64(n)).astype(np.int64).reshape(steps, b)
    out = np.empty((steps, b), dtype=np.int64)
    spe = steps_per_epoch(n, b)
    perm = None
    perm_epoch = -1
    for s in range(steps):
        t = t0 + s
        epoch, pos = divmod(t, spe)
        if epoch != perm_epoch:
            perm = _epoch_permutation(n, seed, epoch)
            perm_epoch = epoch
        chunk = perm[pos * b : pos * b + b]
        if len(chunk) < b:
            chunk = np.concatenate([chunk, perm[: b - len(chunk)]])
        out[s] = chunk
    return out


# --- SGD runs ---------------------------------------------------------------


@dataclass
class SgdRun:
    thetas: np.ndarray  # (T, d) iterates recorded at the cadence
    losses: np.ndarray  # (T,) full-batch loss at recorded iterates
    grad_sq_series: np.ndarray  # (T,) mean_i |grad_i|^2 at recorded iterates
    record_steps: np.ndarray  # (T,) global step index of each record
    final_theta: np.ndarray
    steps_done: int
    diverged: bool
    seed: int
    eta: float
    mode: BatchMode
    record_every: int


def sgd_run(
    ens: QuadraticEnsemble,
    eta: float,
    mode: BatchMode,
    steps: int,
    theta0: np.ndarray | None = None,
    record_every: int = 1,
    blowup: float = 1e6,
    seed: int = 0,
) -> SgdRun:
    """Run theta_{t+1} = theta_t - eta * mean_{i in B_t} A_i (theta_t - x_i).

    The recorded state at step t is the pre-update iterate.  The run halts
    early, with ``diverged`` set, when the recorded loss exceeds
    ``blowup * initial_loss``, when ||theta|| exceeds ``blowup``, or when
    anything turns non-finite.  Divergence is an outcome, not an error.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if eta <= 0:
        raise ValueError("eta must be > 0")
    if mode.kind == "without" and mode.b > ens.n:
        raise ValueError(f"batch size {mode.b} exceeds dataset size {ens.n} without replacement")
    theta = np.ones(ens.d) if theta0 is None else np.array(theta0, dtype=float)
    if theta.shape != (ens.d,):
        raise ValueError(f"theta0 must have shape ({ens.d},)")

    initial_loss = ens.loss(theta)
    loss_thresh = blowup * initial_loss if initial_loss > 0 else blowup
    norm_thresh_sq = blowup * blowup

    n_rec_max = -(-steps // record_every)
    rec_thetas = np.empty((n_rec_max, ens.d))
    rec_losses = np.empty(n_rec_max)
    rec_gradsq = np.empty(n_rec_max)

    total_rec = 0
    done = 0
    diverged = False
    while done < steps:
        m = min(_CHUNK_STEPS, steps - done)
        idx = sample_batches(ens.n, mode, seed, done, done + m)
        n_rec, steps_done, flag = _qkernels.run_chunk(
            ens.hessians,
            ens.anchors,
            theta,
            idx,
            done,
            float(eta),
            int(record_every),
            float(loss_thresh),
            float(norm_thresh_sq),
            rec_thetas[total_rec:],
            rec_losses[total_rec:],
            rec_gradsq[total_rec:],
        )
        total_rec += n_rec
        done += steps_done
        if flag:
            diverged = True
            break

    record_steps = np.arange(0, steps, record_every, dtype=np.int64)[:total_rec]
    return SgdRun(
        thetas=rec_thetas[:total_rec].copy(),
        losses=rec_losses[:total_rec].copy(),
        grad_sq_series=rec_gradsq[:total_rec].copy(),
        record_steps=record_steps,
        final_theta=theta,
        steps_done=done,
        diverged=diverged,
        seed=seed,
        eta=eta,
        mode=mode,
        record_every=record_every,
    )


# --- stationary statistics --------------------------------------------------


@dataclass(frozen=True)
class StationaryScalars:
    """Exact-over-samples residual moments averaged over retained iterates.

    With Y = A_i (theta - x_i) and mu(theta) the full gradient:
    curv_own = E[Y^T A_i Y], curv_full = E[Y^T Hbar Y], grad_sq = E|Y|^2,
    noise_sq = E|Y - mu|^2, cross = E[mu . mean_i A_i Y],
    mean_grad_sq = E|mu|^2, mean_grad_curv = E[mu^T Hbar mu],
    kurtosis = E|Y - mu|^4 / noise_sq^2.
    """

    curv_own: float
    curv_full: float
    grad_sq: float
    noise_sq: float
    cross: float
    mean_grad: np.ndarray
    mean_grad_sq: float
    mean_grad_curv: float
    kurtosis: float
    wor_factor: float
    num_iterates: int


def stationary_stats(
    ens: QuadraticEnsemble, run: SgdRun, burn_in_fraction: float = 0.5
) -> tuple[np.ndarray, np.ndarray, StationaryScalars]:
    """Empirical stationary mean/covariance plus the residual scalars.

    Sample expectations are exact (all i enumerated per iterate); only the
    average over iterates is empirical.  Requires a non-diverged run with at
    least 1000 retained iterates.
    """
    if run.diverged:
        raise DivergedRunError("cannot take stationary statistics of a diverged run")
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError("burn_in_fraction must be in [0, 1)")
    start = int(len(run.thetas) * burn_in_fraction)
    thetas = np.ascontiguousarray(run.thetas[start:])
    if len(thetas) < 1000:
        raise ValueError(f"need >= 1000 post-burn-in iterates, have {len(thetas)}")

    emp_mean = thetas.mean(axis=0)
    centered = thetas - emp_mean
    emp_cov = centered.T @ centered / (len(thetas) - 1)
    emp_cov = 0.5 * (emp_cov + emp_cov.T)

    out = np.zeros(7)
    mu_sum = np.zeros(ens.d)
    _qkernels.scalars_chunk(
        ens.hessians, ens.anchors, ens.mean_hessian, ens.mean_hess_anchor,
        thetas, out, mu_sum,
    )
    T = len(thetas)
    per_pair = T * ens.n
    noise_sq = out[2] / per_pair - out[5] / T  # E|Y|^2 - E|mu|^2, exact per iterate
    kurt = out[3] / per_pair / noise_sq**2 if noise_sq > 0 else float("nan")
    scalars = StationaryScalars(
        curv_own=out[0] / per_pair,
        curv_full=out[1] / per_pair,
        grad_sq=out[2] / per_pair,
        noise_sq=noise_sq,
        cross=out[4] / T,
        mean_grad=mu_sum / T,
        mean_grad_sq=out[5] / T,
        mean_grad_curv=out[6] / T,
        kurtosis=kurt,
        wor_factor=wor_variance_factor(ens.n, run.mode.b) if run.mode.kind == "without" else 1.0,
        num_iterates=T,
    )
    return emp_mean, emp_cov, scalars


def stationary_gni(scalars: StationaryScalars, b: int = 1, wor: bool = False) -> float:
    """Stationary-averaged gradient-noise interaction, as a ratio of averages.

    Per-iterate ratios have heavy tails whenever the full gradient passes
    near zero, so the stationary value is estimated as
    E_t[numerator] / E_t[denominator]; at b=1 this is curv_full over the
    mean squared full gradient.
    """
    if scalars.mean_grad_sq <= 0:
        raise ZeroGradientError("mean squared full gradient vanishes")
    noise_curv = scalars.curv_full - scalars.mean_grad_curv
    factor = scalars.wor_factor if wor else 1.0
    num = scalars.mean_grad_curv + factor * noise_curv / b
    return num / scalars.mean_grad_sq


def stationary_batch_sharpness(scalars: StationaryScalars) -> float:
    """Stationary-averaged b=1 batch sharpness (ratio of averages)."""
    if scalars.grad_sq <= 0:
        raise ZeroGradientError("batch gradients vanish identically")
    return scalars.curv_own / scalars.grad_sq


# --- exact pointwise metrics --------------------------------------------------


def gni_exact(ens: QuadraticEnsemble, theta: np.ndarray, b: int = 1, wor: bool = False) -> float:
    """Gradient-noise interaction at theta, exact by sample enumeration.

    E_B[g_B^T Hbar g_B] / |grad L|^2.  For b > 1 the numerator decomposes
    into the full-gradient term plus the b=1 noise term scaled by 1/b (times
    the without-replacement factor when ``wor``).
    """
    theta = np.asarray(theta, dtype=float)
    g = ens.grad(theta)
    gsq = float(g @ g)
    if gsq <= (1e-12 * math.sqrt(ens.d)) ** 2:
        raise ZeroGradientError("full gradient is zero at theta")
    Y = ens.per_sample_grads(theta)
    HY = Y @ ens.mean_hessian.T
    noise = Y - g[None, :]
    noise_term = float(np.mean(np.sum(noise * (noise @ ens.mean_hessian.T), axis=1)))
    if b == 1:
        num = float(np.mean(np.sum(Y * HY, axis=1)))
    else:
        factor = wor_variance_factor(ens.n, b) if wor else 1.0
        num = float(g @ ens.mean_hessian @ g) + factor * noise_term / b
    return num / gsq


def batch_sharpness_exact(
    ens: QuadraticEnsemble,
    theta: np.ndarray,
    mode: BatchMode | None = None,
    num_batches: int = 256,
    seed: int = 0,
) -> float:
    """Batch sharpness at theta: E_B[g_B^T H_B g_B] / E_B[|g_B|^2].

    Always a ratio of expectations.  b=1 is exact by enumeration; larger
    batches are Monte Carlo over ``num_batches`` draws.
    """
    theta = np.asarray(theta, dtype=float)
    mode = mode or BatchMode("with", 1)
    if mode.b == 1:
        Y = ens.per_sample_grads(theta)
        AY = np.einsum("nij,nj->ni", ens.hessians, Y)
        den = float(np.mean(np.sum(Y * Y, axis=1)))
        if den <= 0:
            raise ZeroGradientError("all single-sample gradients are zero at theta")
        return float(np.mean(np.sum(Y * AY, axis=1))) / den
    num = 0.0
    den = 0.0
    for k in range(num_batches):
        idx = sample_batch(ens.n, mode, seed, k)
        g = ens.batch_grad(theta, idx)
        num += float(g @ ens.batch_hessian_apply(idx, g))
        den += float(g @ g)
    if den <= 0:
        raise ZeroGradientError("all sampled batch gradients are zero at theta")
    return num / den


# --- probes and identities ----------------------------------------------------


class DivergenceProbe(NamedTuple):
    diverged: bool
    grad_sq_growth_rate: float  # least-squares slope of log grad_sq per step


def divergence_probe(
    ens: QuadraticEnsemble,
    eta: float,
    mode: BatchMode,
    steps: int,
    growth_window: int,
    theta0: np.ndarray | None = None,
    seed: int = 0,
    blowup: float = 1e6,
) -> DivergenceProbe:
    """Run SGD and fit the log growth rate of the mean squared sample gradient.

    The slope is fit over the last ``growth_window`` recorded steps that are
    finite and above underflow; the divergence flag reports whether the run
    exited the blow-up compact.
    """
    if steps < 2 * growth_window:
        raise ValueError("steps must be >= 2 * growth_window")
    run = sgd_run(ens, eta, mode, steps, theta0=theta0, record_every=1, blowup=blowup, seed=seed)
    series = run.grad_sq_series
    ok = np.isfinite(series) & (series > 1e-280)
    t = run.record_steps[ok]
    y = np.log(series[ok])
    if len(y) < 3:
        return DivergenceProbe(run.diverged, 0.0)
    t = t[-growth_window:]
    y = y[-growth_window:]
    design = np.column_stack([t.astype(float), np.ones(len(t))])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    return DivergenceProbe(run.diverged, float(coef[0]))


def theoretical_variance_1d(eta: float) -> float:
    """Stationary variance eta / (2 - eta) of the unit-curvature 1-D chain."""
    if not 0 < eta < 2:
        raise ValueError(f"eta={eta} is outside the stable domain (0, 2)")
    return eta / (2.0 - eta)


def wor_variance_factor(n: int, b: int) -> float:
    """Variance shrinkage (n - b) / (n - 1) of without-replacement batches."""
    if n < 2:
        raise ValueError("need n >= 2")
    if not 1 <= b <= n:
        raise ValueError(f"need 1 <= b <= n, got b={b}, n={n}")
    return (n - b) / (n - 1)


def kurtosis_gaussian(S: np.ndarray) -> float:
    """Kurtosis ratio E|Z|^4 / (E|Z|^2)^2 for Z ~ N(0, S): 1 + 2 tr(S^2)/(tr S)^2."""
    S = check_symmetric(S, "S")
    w = np.linalg.eigvalsh(S)
    if w[0] < -1e-12 * max(abs(w[-1]), 1.0):
        raise ValueError("S must be PSD")
    tr = float(np.trace(S))
    if tr <= 0:
        raise ValueError("tr S must be > 0")
    return 1.0 + 2.0 * float(np.sum(S * S)) / tr**2


class OrderCheck(NamedTuple):
    bs_leq_gni: bool
    lhs: float  # curv_full * noise_sq
    rhs: float  # mean_grad_sq * (curv_own - curv_full)
    hessian_spread_bound: float  # sufficient |H_i - Hbar| spread for bs <= gni


def bs_gni_order_check(scalars: StationaryScalars, eta: float) -> OrderCheck:
    """Stationary ordering of batch sharpness vs gradient-noise interaction.

    bs <= gni exactly when curv_full * noise_sq >= mean_grad_sq * (centered
    cross term + 2 * cross), i.e. mean_grad_sq * (curv_own - curv_full).
    Also reports the kurtosis-based sufficient bound: the ordering holds
    whenever sqrt(E|H_i - Hbar|^2) stays below the returned spread bound.
    """
    delta_tilde = scalars.curv_own - scalars.curv_full - 2.0 * scalars.cross
    lhs = scalars.curv_full * scalars.noise_sq
    rhs = scalars.mean_grad_sq * (delta_tilde + 2.0 * scalars.cross)
    if scalars.noise_sq > 0:
        ratio = (
            scalars.kurtosis
            + 2.0 * scalars.mean_grad_sq / scalars.noise_sq
            + (scalars.mean_grad_sq / scalars.noise_sq) ** 2
        )
        bound = 2.0 / (eta * math.sqrt(ratio))
    else:
        bound = float("inf")
    return OrderCheck(bool(lhs >= rhs), lhs, rhs, bound)


# --- adapters for the oracle-generic metrics ----------------------------------


class QuadraticOracle:
    """LossOracle view of an ensemble (the Hessian is exact, not autodiff)."""

    def __init__(self, ens: QuadraticEnsemble):
        self.ens = ens
        self.num_samples = ens.n
        self.param_dim = ens.d

    def full_loss(self, theta):
        return self.ens.loss(np.asarray(theta, dtype=float))

    def full_grad(self, theta):
        return self.ens.grad(np.asarray(theta, dtype=float))

    def batch_grad(self, theta, indices):
        return self.ens.batch_grad(np.asarray(theta, dtype=float), np.asarray(indices))

    def hvp_full(self, theta, v):
        return self.ens.mean_hessian @ np.asarray(v, dtype=float)

    def hvp_batch(self, theta, indices, v):
        return self.ens.batch_hessian_apply(np.asarray(indices), np.asarray(v, dtype=float))


class QuadraticTrainer:
    """Steppable SGD on an ensemble with checkpoint/restore, for probing."""

    def __init__(
        self,
        ens: QuadraticEnsemble,
        eta: float,
        mode: BatchMode,
        theta0: np.ndarray | None = None,
        seed: int = 0,
        metric_batches: int = 256,
    ):
        self.ens = ens
        self.eta = float(eta)
        self.mode = mode
        self.theta = np.ones(ens.d) if theta0 is None else np.array(theta0, dtype=float)
        self.seed = seed
        self.step_count = 0
        self.loss_series: list[float] = []
        self.metric_batches = metric_batches

    @property
    def batch_size(self) -> int:
        return self.mode.b

    def snapshot(self):
        return (self.theta.copy(), self.step_count, self.eta, self.mode, list(self.loss_series))

    def restore(self, state):
        theta, step_count, eta, mode, losses = state
        self.theta = theta.copy()
        self.step_count = step_count
        self.eta = eta
        self.mode = mode
        self.loss_series = list(losses)

    def set_eta(self, eta: float) -> None:
        self.eta = float(eta)

    def set_batch(self, b: int) -> None:
        self.mode = BatchMode(self.mode.kind, b)

    def run_steps(self, k: int) -> list[float]:
        out = []
        for _ in range(k):
            idx = sample_batch(self.ens.n, self.mode, self.seed, self.step_count)
            self.theta -= self.eta * self.ens.batch_grad(self.theta, idx)
            self.step_count += 1
            loss = self.ens.loss(self.theta) if np.all(np.isfinite(self.theta)) else float("inf")
            out.append(loss)
        self.loss_series.extend(out)
        return out

    def measure_batch_sharpness(self) -> float:
        return batch_sharpness_exact(
            self.ens, self.theta, self.mode, num_batches=self.metric_batches, seed=self.seed
        )


__all__ = [
    "BatchMode",
    "QuadraticEnsemble",
    "QuadraticOracle",
    "QuadraticTrainer",
    "SgdRun",
    "StationaryScalars",
    "DivergenceProbe",
    "DiagonalNetSpectra",
    "OrderCheck",
    "ZeroGradientError",
    "DivergedRunError",
    "make_1d_gaussian_means",
    "make_random_psd_ensemble",
    "make_counterexample",
    "diagonal_net_spectra",
    "sample_batch",
    "sample_batches",
    "steps_per_epoch",
    "sgd_run",
    "stationary_stats",
    "stationary_gni",
    "stationary_batch_sharpness",
    "gni_exact",
    "batch_sharpness_exact",
    "divergence_probe",
    "theoretical_variance_1d",
    "wor_variance_factor",
    "kurtosis_gaussian",
    "bs_gni_order_check",
]
