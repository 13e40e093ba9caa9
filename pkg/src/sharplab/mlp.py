"""Tiny MLP back end: reverse-mode gradients, exact Hessian-vector products,
synthetic datasets, and an SGD/noisy-GD trainer with mid-run schedules.

MSE throughout, with the 1/2 factor fixed: loss = 1/(2m) sum |f(x) - y|^2.
Hidden layers use tanh by default (smooth second derivatives keep the
curvature checks clean); relu is available behind the activation flag.
All heavy lifting is numpy matmuls, which BLAS already saturates, so this
module has no numba path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import metrics as _metrics
from .quadratic import BatchMode, sample_batch


def _act(name):
    if name == "tanh":
        return np.tanh, lambda s, a: 1.0 - a * a, lambda s, a: -2.0 * a * (1.0 - a * a)
    if name == "relu":
        return (
            lambda s: np.maximum(s, 0.0),
            lambda s, a: (s > 0).astype(float),
            lambda s, a: np.zeros_like(s),
        )
    if name == "identity":  # linear network: the whole loss is quadratic
        return (
            lambda s: s,
            lambda s, a: np.ones_like(s),
            lambda s, a: np.zeros_like(s),
        )
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class MlpParams:
    layer_dims: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def from_flat(self, flat: np.ndarray) -> "MlpParams":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {flat.shape}")
        weights, biases = [], []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos : pos + b.size].copy())
            pos += b.size
        return MlpParams(self.layer_dims, self.activation, weights, biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.layer_dims,
            self.activation,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def init_mlp(
    layer_dims: Sequence[int], activation: str = "tanh", init_scale: float = 1.0, seed: int = 0
) -> MlpParams:
    """Fan-in-scaled normal weights (times a global rescaling), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 3:
        raise ValueError("need at least one hidden layer")
    _act(activation)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / fan_in) * init_scale
        weights.append(rng.normal(0.0, 1.0, size=(fan_in, fan_out)) * std)
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, activation, weights, biases)


def _forward(params: MlpParams, X: np.ndarray):
    phi, dphi, _ = _act(params.activation)
    acts = [X]
    pres = []
    a = X
    L = len(params.weights)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        s = a @ w + b
        pres.append(s)
        a = s if l == L - 1 else phi(s)
        acts.append(a)
    return acts, pres


def forward_loss(params: MlpParams, X: np.ndarray, Y: np.ndarray) -> float:
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"batch mismatch: {X.shape[0]} inputs vs {Y.shape[0]} targets")
    if X.shape[1] != params.layer_dims[0] or Y.shape[1] != params.layer_dims[-1]:
        raise ValueError("input/target width does not match the network dims")
    out = _forward(params, X)[0][-1]
    r = out - Y
    # an overflowing (infinite) loss is the divergence signal, not an error
    with np.errstate(over="ignore"):
        return 0.5 * float(np.sum(r * r)) / X.shape[0]


def _backward(params: MlpParams, acts, pres, e_top):
    """Backprop an output-layer error signal; returns flat parameter grads."""
    phi, dphi, _ = _act(params.activation)
    L = len(params.weights)
    parts = [None] * (2 * L)
    e = e_top
    for l in range(L - 1, -1, -1):
        parts[2 * l] = (acts[l].T @ e).ravel()
        parts[2 * l + 1] = e.sum(axis=0)
        if l > 0:
            e = (e @ params.weights[l].T) * dphi(pres[l - 1], acts[l])
    return np.concatenate(parts)


def grad(params: MlpParams, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    acts, pres = _forward(params, X)
    e_top = (acts[-1] - Y) / X.shape[0]
    return _backward(params, acts, pres, e_top)


def per_sample_grads(params: MlpParams, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """(n, p) matrix of per-sample gradients of 0.5 |f(x_i) - y_i|^2."""
    phi, dphi, _ = _act(params.activation)
    acts, pres = _forward(params, X)
    L = len(params.weights)
    n = X.shape[0]
    parts = [None] * (2 * L)
    e = acts[-1] - Y
    for l in range(L - 1, -1, -1):
        parts[2 * l] = np.einsum("ni,nj->nij", acts[l], e).reshape(n, -1)
        parts[2 * l + 1] = e
        if l > 0:
            e = (e @ params.weights[l].T) * dphi(pres[l - 1], acts[l])
    return np.concatenate(parts, axis=1)


def hvp(params: MlpParams, X: np.ndarray, Y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exact Hessian-vector product by a forward-over-reverse double pass."""
    vp = params.from_flat(v)
    phi, dphi, d2phi = _act(params.activation)
    acts, pres = _forward(params, X)
    L = len(params.weights)
    m = X.shape[0]

    # forward tangent pass
    Ra = np.zeros_like(X)
    Rpres = []
    Racts = [Ra]
    for l in range(L):
        Rs = Ra @ params.weights[l] + acts[l] @ vp.weights[l] + vp.biases[l]
        Rpres.append(Rs)
        Ra = Rs if l == L - 1 else dphi(pres[l], acts[l + 1]) * Rs
        Racts.append(Ra)

    # reverse pass carrying (error, tangent-of-error) jointly
    e = (acts[-1] - Y) / m
    Re = Racts[-1] / m
    parts = [None] * (2 * L)
    for l in range(L - 1, -1, -1):
        parts[2 * l] = (Racts[l].T @ e + acts[l].T @ Re).ravel()
        parts[2 * l + 1] = Re.sum(axis=0)
        if l > 0:
            back = e @ params.weights[l].T
            Rback = Re @ params.weights[l].T + e @ vp.weights[l].T
            d1 = dphi(pres[l - 1], acts[l])
            d2 = d2phi(pres[l - 1], acts[l])
            Re = Rback * d1 + back * d2 * Rpres[l - 1]
            e = back * d1
    return np.concatenate(parts)


def ggn_hvp(params: MlpParams, X: np.ndarray, Y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Gauss-Newton curvature product J^T J v / m: the Hessian with the
    residual (second-order network) term dropped.  PSD by construction and
    equal to hvp at zero residual or for a linear network."""
    vp = params.from_flat(v)
    phi, dphi, _ = _act(params.activation)
    acts, pres = _forward(params, X)
    L = len(params.weights)

    Ra = np.zeros_like(X)
    for l in range(L):
        Rs = Ra @ params.weights[l] + acts[l] @ vp.weights[l] + vp.biases[l]
        Ra = Rs if l == L - 1 else dphi(pres[l], acts[l + 1]) * Rs
    return _backward(params, acts, pres, Ra / X.shape[0])


class MlpOracle:
    """LossOracle adapter binding a network shape to a dataset."""

    def __init__(self, template: MlpParams, X: np.ndarray, Y: np.ndarray):
        self.template = template
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.num_samples = self.X.shape[0]
        self.param_dim = template.num_params

    def _params(self, theta):
        return self.template.from_flat(theta)

    def full_loss(self, theta):
        return forward_loss(self._params(theta), self.X, self.Y)

    def full_grad(self, theta):
        return grad(self._params(theta), self.X, self.Y)

    def batch_grad(self, theta, indices):
        idx = np.asarray(indices)
        return grad(self._params(theta), self.X[idx], self.Y[idx])

    def hvp_full(self, theta, v):
        return hvp(self._params(theta), self.X, self.Y, v)

    def hvp_batch(self, theta, indices, v):
        idx = np.asarray(indices)
        return hvp(self._params(theta), self.X[idx], self.Y[idx], v)


# --- synthetic data -----------------------------------------------------------


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, d_in)
    targets: np.ndarray  # (n, k) one-hot
    kind: str

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] < 1:
            raise ValueError("inputs and targets must share a positive sample count")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.targets).all()):
            raise ValueError("dataset has non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def make_synthetic_dataset(
    kind: str,
    n: int,
    d_in: int,
    classes: int,
    spread: float,
    seed: int = 0,
    label_noise: float = 0.1,
) -> Dataset:
    """Gaussian class clusters with one-hot targets.

    blobs: centers drawn standard normal, points scattered by ``spread``.
    easy-separable: the same clusters with centers pulled far enough apart
    that a least-squares linear classifier reaches zero training error.
    noisy-labels: blobs with a ``label_noise`` fraction of labels reassigned.
    """
    if classes < 2:
        raise ValueError("need classes >= 2")
    if kind not in ("blobs", "easy-separable", "noisy-labels"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes)
    centers = rng.normal(size=(classes, d_in))
    if kind == "easy-separable":
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        centers *= 4.0 * spread * np.sqrt(d_in) + 4.0
    X = centers[labels] + spread * rng.normal(size=(n, d_in))
    if kind == "noisy-labels":
        flip = rng.choice(n, size=int(round(label_noise * n)), replace=False)
        labels[flip] = (labels[flip] + rng.integers(1, classes, size=len(flip))) % classes
    Y = np.zeros((n, classes))
    Y[np.arange(n), labels] = 1.0
    return Dataset(X, Y, kind)


# --- training -----------------------------------------------------------------

NOISE_MODES = ("none", "sgd", "anisotropic-sampling", "diagonal", "isotropic")


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    b: int = 8
    sample_mode: str = "with"  # batch draws: with | without replacement
    steps: int = 10_000
    seed: int = 0
    metric_every: int = 100
    metric_batches: int = 64
    noise_mode: str = "sgd"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.metric_every < 1:
            raise ValueError("metric cadence must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")


@dataclass(frozen=True)
class ScheduleEvent:
    at_step: int
    action: str  # set_eta | set_batch
    value: float

    def __post_init__(self):
        if self.action not in ("set_eta", "set_batch"):
            raise ValueError(f"unknown schedule action {self.action!r}")
        if self.value <= 0:
            raise ValueError("schedule values must be positive")


class CatapultEvent(NamedTuple):
    start_step: int
    peak_step: int
    peak_ratio: float


def detect_catapult(
    loss_series: Sequence[float], window: int = 20, factor: float = 3.0
) -> list[CatapultEvent]:
    """Spike events in a loss series against a trailing-median baseline.

    An event opens at t when loss[t] > factor * median(loss[t-window:t]) and
    closes once the loss drops back below that opening median (the median is
    frozen while the event is open, so the spike cannot mask itself).
    """
    if window < 3:
        raise ValueError("window must be >= 3")
    losses = np.asarray(loss_series, dtype=float)
    events: list[CatapultEvent] = []
    open_start = None
    open_median = 0.0
    peak = 0.0
    peak_step = 0
    for t in range(window, len(losses)):
        x = losses[t]
        if open_start is None:
            med = float(np.median(losses[t - window : t]))
            if np.isfinite(x) and med > 0 and x > factor * med:
                open_start, open_median = t, med
                peak, peak_step = x, t
        else:
            if not np.isfinite(x) or x > peak:
                peak, peak_step = x, t
            if np.isfinite(x) and x <= open_median:
                events.append(CatapultEvent(open_start, peak_step, peak / open_median))
                open_start = None
    if open_start is not None:
        events.append(CatapultEvent(open_start, peak_step, peak / open_median))
    return events


def gradient_noise_stats(params: MlpParams, X: np.ndarray, Y: np.ndarray):
    """Diagonal and trace of the per-sample gradient covariance."""
    G = per_sample_grads(params, X, Y)
    mean = G.mean(axis=0)
    diag = np.mean(G * G, axis=0) - mean * mean
    np.maximum(diag, 0.0, out=diag)
    return diag, float(diag.sum())


def noisy_gd_step(
    params: MlpParams,
    data: Dataset,
    eta: float,
    mode: str,
    seed: int = 0,
    b: int = 8,
    noise_stats=None,
    step_index: int = 0,
) -> MlpParams:
    """One full-gradient step with injected noise matched to size-b SGD noise.

    anisotropic-sampling reweights the per-sample losses with
    w_i ~ N(1, n/b - 1), preserving the mini-batch directional structure;
    diagonal and isotropic add Gaussian noise with, respectively, the
    diagonal of the per-sample gradient covariance over b and a spherical
    covariance of matched trace.
    """
    if mode not in ("anisotropic-sampling", "diagonal", "isotropic"):
        raise ValueError(f"unknown noisy-GD mode {mode!r}")
    n = data.n
    if b > n:
        raise ValueError(f"implied batch size {b} exceeds dataset size {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, step_index)))
    if mode == "anisotropic-sampling":
        acts, pres = _forward(params, data.inputs)
        w = 1.0 + np.sqrt(max(n / b - 1.0, 0.0)) * rng.normal(size=n)
        e_top = w[:, None] * (acts[-1] - data.targets) / n
        g = _backward(params, acts, pres, e_top)
    else:
        g = grad(params, data.inputs, data.targets)
        if noise_stats is None:
            noise_stats = gradient_noise_stats(params, data.inputs, data.targets)
        diag, trace = noise_stats
        if mode == "diagonal":
            g = g + rng.normal(size=g.size) * np.sqrt(diag / b)
        else:
            g = g + rng.normal(size=g.size) * np.sqrt(trace / (b * g.size))
    return params.from_flat(params.to_flat() - eta * g)


class MlpTrainer:
    """Steppable trainer with checkpoint/restore; drives train() and probes."""

    NOISE_REFRESH = 50  # steps between per-sample covariance recomputes

    def __init__(self, params: MlpParams, data: Dataset, config: TrainConfig):
        self.params = params.copy()
        self.data = data
        self.config = config
        self.eta = config.eta
        self.b = config.b
        self.sample_mode = config.sample_mode
        self.noise_mode = config.noise_mode
        self.seed = config.seed
        self.step_count = 0
        self.loss_series: list[float] = []
        self._noise_stats = None
        self._noise_stats_step = -1

    @property
    def batch_size(self) -> int:
        return self.b

    def oracle(self) -> MlpOracle:
        return MlpOracle(self.params, self.data.inputs, self.data.targets)

    def snapshot(self):
        return (
            self.params.copy(),
            self.step_count,
            self.eta,
            self.b,
            list(self.loss_series),
            self._noise_stats,
            self._noise_stats_step,
        )

    def restore(self, state):
        params, step, eta, b, losses, stats, stats_step = state
        self.params = params.copy()
        self.step_count = step
        self.eta = eta
        self.b = b
        self.loss_series = list(losses)
        self._noise_stats = stats
        self._noise_stats_step = stats_step

    def set_eta(self, eta: float) -> None:
        if eta <= 0:
            raise ValueError("eta must be > 0")
        self.eta = float(eta)

    def set_batch(self, b: int) -> None:
        if not 1 <= int(b) <= self.data.n:
            raise ValueError(f"batch size must be in [1, {self.data.n}]")
        self.b = int(b)

    def next_batch(self) -> np.ndarray:
        return sample_batch(
            self.data.n, BatchMode(self.sample_mode, self.b), self.seed, self.step_count
        )

    def step(self) -> float:
        if self.noise_mode == "sgd":
            idx = self.next_batch()
            g = grad(self.params, self.data.inputs[idx], self.data.targets[idx])
            self.params = self.params.from_flat(self.params.to_flat() - self.eta * g)
        elif self.noise_mode == "none":
            g = grad(self.params, self.data.inputs, self.data.targets)
            self.params = self.params.from_flat(self.params.to_flat() - self.eta * g)
        else:
            if self.noise_mode in ("diagonal", "isotropic"):
                if self.step_count - self._noise_stats_step >= self.NOISE_REFRESH:
                    self._noise_stats = gradient_noise_stats(
                        self.params, self.data.inputs, self.data.targets
                    )
                    self._noise_stats_step = self.step_count
            self.params = noisy_gd_step(
                self.params,
                self.data,
                self.eta,
                self.noise_mode,
                seed=self.seed,
                b=self.b,
                noise_stats=self._noise_stats,
                step_index=self.step_count,
            )
        self.step_count += 1
        flat = self.params.to_flat()
        if np.isfinite(flat).all():
            loss = forward_loss(self.params, self.data.inputs, self.data.targets)
        else:
            loss = float("inf")
        self.loss_series.append(loss)
        return loss

    def run_steps(self, k: int) -> list[float]:
        return [self.step() for _ in range(k)]

    def measure_batch_sharpness(self, num_batches: int | None = None) -> float:
        return _metrics.batch_sharpness_est(
            self.oracle(),
            self.params.to_flat(),
            self.b,
            num_batches or self.config.metric_batches,
            mode=self.sample_mode,
            seed=self.seed,
        )


@dataclass
class RunLog:
    """Everything one seeded training run produced."""

    steps: list[int]  # metric-row step indices
    losses: list[float]  # full-batch loss at the metric rows
    reports: list[_metrics.SharpnessReport]
    loss_series: np.ndarray  # per-step full-batch loss
    schedule_events: list[tuple[int, str, float]]
    catapult_events: list[CatapultEvent]
    diverged: bool
    final_params: MlpParams
    config: TrainConfig


def train(
    params: MlpParams,
    data: Dataset,
    config: TrainConfig,
    schedule: Sequence[ScheduleEvent] = (),
    metrics: Sequence[str] = _metrics.ALL_METRICS,
) -> RunLog:
    """SGD (or a noisy-GD variant) with schedules and metric rows at a cadence.

    Metric rows describe the parameters *before* the step at that index.
    Divergence (non-finite loss) ends the run with the flag set rather than
    raising.  Catapult events are detected on the per-step loss series.
    """
    events = sorted(schedule, key=lambda ev: ev.at_step)
    if any(ev.at_step >= config.steps for ev in events):
        raise ValueError("schedule event beyond the end of the run")
    trainer = MlpTrainer(params, data, config)
    rows_steps: list[int] = []
    rows_losses: list[float] = []
    reports: list[_metrics.SharpnessReport] = []
    applied: list[tuple[int, str, float]] = []
    diverged = False
    ev_i = 0
    eig_cache: dict = {}
    for t in range(config.steps):
        while ev_i < len(events) and events[ev_i].at_step == t:
            ev = events[ev_i]
            if ev.action == "set_eta":
                trainer.set_eta(ev.value)
            else:
                trainer.set_batch(int(ev.value))
            applied.append((t, ev.action, float(ev.value)))
            ev_i += 1
        if t % config.metric_every == 0:
            theta = trainer.params.to_flat()
            step_batch = trainer.next_batch() if config.noise_mode == "sgd" else None
            report = _metrics.measure_report(
                trainer.oracle(),
                theta,
                step=t,
                b=trainer.b,
                num_batches=config.metric_batches,
                mode=config.sample_mode,
                seed=config.seed,
                metrics=metrics,
                step_batch=step_batch,
                full_settings=_metrics.TRAIN_FULL_SETTINGS,
                batch_settings=_metrics.TRAIN_BATCH_SETTINGS,
                eig_cache=eig_cache,
            )
            rows_steps.append(t)
            rows_losses.append(forward_loss(trainer.params, data.inputs, data.targets))
            reports.append(report)
        loss = trainer.step()
        if not np.isfinite(loss):
            diverged = True
            break
    catapults = detect_catapult(trainer.loss_series) if len(trainer.loss_series) > 20 else []
    return RunLog(
        steps=rows_steps,
        losses=rows_losses,
        reports=reports,
        loss_series=np.array(trainer.loss_series),
        schedule_events=applied,
        catapult_events=catapults,
        diverged=diverged,
        final_params=trainer.params,
        config=config,
    )


# --- checkpoints ----------------------------------------------------------------

CHECKPOINT_MAGIC = b"SHARPLAB-CKPT-1\x00"  # 16 bytes: magic + version


def save_checkpoint(path, flat: np.ndarray, dims: Sequence[int]) -> None:
    """16-byte magic/version prefix, little-endian dims header, f64 parameters."""
    import struct

    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(np.asarray(flat, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, tuple[int, ...]]:
    import struct

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:16] != CHECKPOINT_MAGIC:
        raise ValueError("not a sharplab checkpoint (bad magic)")
    (ndims,) = struct.unpack_from("<I", raw, 16)
    dims = struct.unpack_from(f"<{ndims}I", raw, 20)
    flat = np.frombuffer(raw, dtype="<f8", offset=20 + 4 * ndims)
    return flat.astype(float), tuple(int(d) for d in dims)


# --- batch-size scans -------------------------------------------------------------


class GapScanRow(NamedTuple):
    b: int
    lambda_max_b: float
    lambda_max: float
    gap: float


def gap_scan_static(
    params: MlpParams,
    data: Dataset,
    b_list: Sequence[int],
    num_batches: int = 64,
    seed: int = 0,
) -> list[GapScanRow]:
    """Fixed parameters, varying batch size: the expected mini-batch top
    eigenvalue against the (single) full-batch one."""
    if list(b_list) != sorted(b_list):
        raise ValueError("b_list must be ascending")
    oracle = MlpOracle(params, data.inputs, data.targets)
    theta = params.to_flat()
    lam = _metrics.lambda_max_full(oracle, theta)
    rows = []
    for b in b_list:
        lmb = _metrics.lambda_max_b_est(oracle, theta, b, num_batches, mode="without", seed=seed)
        rows.append(GapScanRow(int(b), lmb.value, lam, lmb.value - lam))
    return rows


class TrainedScanRow(NamedTuple):
    b: int
    final_lambda_max: float
    final_batch_sharpness: float
    diverged: bool


def plateau_median(values: Sequence[float]) -> float:
    """Median of the final 10% of a metric series (>=1 row), nan-safe."""
    vals = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if len(vals) == 0:
        return float("nan")
    k = max(1, len(vals) // 10)
    return float(np.median(vals[-k:]))


def gap_scan_trained(
    base_config: TrainConfig,
    data: Dataset,
    b_list: Sequence[int],
    seed: int = 0,
    layer_dims: Sequence[int] = (10, 32, 32, 4),
    activation: str = "tanh",
) -> list[TrainedScanRow]:
    """One full training run per batch size; plateau values are medians over
    the final 10% of metric rows."""
    rows = []
    for b in b_list:
        cfg = replace(base_config, b=int(b), seed=seed)
        params = init_mlp(layer_dims, activation, cfg.init_scale, seed=seed)
        log = train(params, data, cfg, metrics=("batch_sharpness", "lambda_max"))
        rows.append(
            TrainedScanRow(
                int(b),
                plateau_median([r.lambda_max for r in log.reports]),
                plateau_median([r.batch_sharpness for r in log.reports]),
                log.diverged,
            )
        )
    return rows
