"""Oracle-generic curvature statistics.

Every estimator here sees a loss only through the LossOracle protocol
(gradients and Hessian-vector products, full-batch and per-batch), so the
same code measures the random-quadratic world and the MLP back end.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .numerics import LinearOperator, PowerIterationError, PowerIterSettings, top_eigenvalue
from .quadratic import ZeroGradientError

GNI_SATURATION = 1e6
EXHAUSTIVE_LIMIT = 4096

REPORT_COLUMNS = [
    "step",
    "batch_sharpness",
    "gni",
    "ias",
    "lambda_max",
    "lambda_max_b",
    "step_sharpness",
    "grad_full_sq",
    "grad_batch_sq_mean",
    "grad_noise_sq_mean",
    "num_batches",
    "seed",
]

ALL_METRICS = (
    "batch_sharpness",
    "gni",
    "ias",
    "lambda_max",
    "lambda_max_b",
    "step_sharpness",
)

FULL_SETTINGS = PowerIterSettings(max_iters=500, rel_tol=1e-6, seed=0)
BATCH_SETTINGS = PowerIterSettings(max_iters=500, rel_tol=1e-4, seed=0)
# during training a report row tolerates the post-budget estimate, so the
# iteration caps are tighter (clustered spectra at the plateau stall the
# 1e-6 residual target without materially moving the Rayleigh quotient)
TRAIN_FULL_SETTINGS = PowerIterSettings(max_iters=150, rel_tol=1e-6, seed=0)
TRAIN_BATCH_SETTINGS = PowerIterSettings(max_iters=80, rel_tol=1e-4, seed=0)


class LossOracle(Protocol):
    """Differentiable-loss contract shared by the quadratic and MLP back ends."""

    num_samples: int
    param_dim: int

    def full_loss(self, theta: np.ndarray) -> float: ...

    def full_grad(self, theta: np.ndarray) -> np.ndarray: ...

    def batch_grad(self, theta: np.ndarray, indices: np.ndarray) -> np.ndarray: ...

    def hvp_full(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray: ...

    def hvp_batch(self, theta: np.ndarray, indices: np.ndarray, v: np.ndarray) -> np.ndarray: ...


def check_oracle(oracle: LossOracle, theta: np.ndarray, seed: int = 0) -> None:
    """Assert the oracle contract at theta; raises AssertionError on violation.

    Checks batch/full gradient consistency (1e-8 relative), hvp linearity and
    hvp symmetry (1e-6) on random probes.
    """
    rng = np.random.default_rng(seed)
    p = oracle.param_dim
    g_full = oracle.full_grad(theta)
    g_all = oracle.batch_grad(theta, np.arange(oracle.num_samples))
    scale = max(np.linalg.norm(g_full), 1e-12)
    assert np.linalg.norm(g_all - g_full) <= 1e-8 * scale, "batch_grad(all) != full_grad"
    for _ in range(3):
        u = rng.normal(size=p)
        v = rng.normal(size=p)
        a, b = rng.normal(size=2)
        lin = oracle.hvp_full(theta, a * u + b * v)
        parts = a * oracle.hvp_full(theta, u) + b * oracle.hvp_full(theta, v)
        ref = np.linalg.norm(lin) + np.linalg.norm(parts) + 1e-12
        assert np.linalg.norm(lin - parts) <= 1e-6 * ref, "hvp is not linear"
        sym_gap = abs(u @ oracle.hvp_full(theta, v) - v @ oracle.hvp_full(theta, u))
        assert sym_gap <= 1e-6 * ref, "hvp is not symmetric"


def draw_metric_batches(
    n: int,
    b: int,
    num_batches: int,
    mode: str = "with",
    seed: int = 0,
    exhaustive: str | bool = "auto",
) -> tuple[list[np.ndarray], bool]:
    """Batches for a metric estimate, in a deterministic order.

    When the batch population is enumerable (C(n, b) <= 4096) and matches the
    sampling mode (without replacement, or any mode at b=1), every batch is
    returned once and the estimate becomes exact.  Otherwise ``num_batches``
    are sampled from the requested mode.
    """
    if num_batches < 1:
        raise ValueError("num_batches must be >= 1")
    if b < 1 or b > n:
        raise ValueError(f"need 1 <= b <= n, got b={b}, n={n}")
    enumerable = mode == "without" or b == 1
    if exhaustive is True or (exhaustive == "auto" and enumerable and math.comb(n, b) <= EXHAUSTIVE_LIMIT):
        if not enumerable:
            raise ValueError("exhaustive enumeration only matches b=1 or without-replacement modes")
        combos = [np.array(c, dtype=np.int64) for c in itertools.combinations(range(n), b)]
        return combos, True
    rng = np.random.default_rng(seed)
    if mode == "with":
        return [rng.integers(0, n, size=b) for _ in range(num_batches)], False
    if mode == "without":
        return [rng.choice(n, size=b, replace=False) for _ in range(num_batches)], False
    raise ValueError(f"unknown batch mode {mode!r}")


# --- individual estimators ---------------------------------------------------


def lambda_max_full(
    oracle: LossOracle, theta: np.ndarray, settings: PowerIterSettings = FULL_SETTINGS
) -> float:
    """Largest eigenvalue of the full-batch Hessian via power iteration."""
    op = LinearOperator(oracle.param_dim, lambda v: oracle.hvp_full(theta, v))
    return top_eigenvalue(op, settings).value


class LambdaMaxBatch(NamedTuple):
    value: float  # mean over converged batches
    num_converged: int
    num_batches: int
    failed_indices: tuple[int, ...]


def lambda_max_b_est(
    oracle: LossOracle,
    theta: np.ndarray,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    settings: PowerIterSettings = BATCH_SETTINGS,
    v0: np.ndarray | None = None,
) -> LambdaMaxBatch:
    """Expected top eigenvalue of a size-b mini-batch Hessian.

    The per-batch power iterations warm start from the previous batch's
    eigenvector (batch Hessians at one theta share most of their top
    subspace), which only affects iteration counts: each batch's value is
    still certified to its own rel_tol.
    """
    batches, _ = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed)
    vals = []
    failed = []
    carry = v0
    for k, idx in enumerate(batches):
        op = LinearOperator(oracle.param_dim, lambda v, idx=idx: oracle.hvp_batch(theta, idx, v))
        try:
            res = top_eigenvalue(op, settings, v0=carry)
            vals.append(res.value)
            carry = res.vector
        except PowerIterationError as err:
            failed.append(k)
            carry = err.vector
    if not vals:
        raise PowerIterationError(float("nan"), np.zeros(oracle.param_dim), settings.max_iters)
    return LambdaMaxBatch(float(np.mean(vals)), len(vals), len(batches), tuple(failed))


def _batch_forms(oracle, theta, batches, need_full_curv):
    """Per-batch numerators/denominators shared by the ratio estimators."""
    bs_num = np.empty(len(batches))
    ias_num = np.empty(len(batches)) if need_full_curv else None
    den = np.empty(len(batches))
    grads = []
    for k, idx in enumerate(batches):
        g = oracle.batch_grad(theta, idx)
        grads.append(g)
        den[k] = g @ g
        bs_num[k] = g @ oracle.hvp_batch(theta, idx, g)
        if need_full_curv:
            ias_num[k] = g @ oracle.hvp_full(theta, g)
    return bs_num, ias_num, den, grads


def batch_sharpness_est(
    oracle: LossOracle,
    theta: np.ndarray,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    exhaustive: str | bool = "auto",
) -> float:
    """E_B[g_B . H(L_B) g_B] / E_B[|g_B|^2], always as a ratio of means."""
    batches, _ = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed, exhaustive)
    bs_num, _, den, _ = _batch_forms(oracle, theta, batches, need_full_curv=False)
    d = float(den.mean())
    if d <= 0:
        raise ZeroGradientError("all sampled batch gradients vanish")
    return float(bs_num.mean()) / d


def gni_est(
    oracle: LossOracle,
    theta: np.ndarray,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    exhaustive: str | bool = "auto",
) -> float:
    """E_B[g_B . H g_B] / |grad L|^2 with the full-batch Hessian.

    Unbounded near stationary points; values above GNI_SATURATION are
    reported as the cap.  A genuinely zero full gradient raises.
    """
    g_full = oracle.full_grad(theta)
    gsq = float(g_full @ g_full)
    if gsq <= (1e-12 * math.sqrt(oracle.param_dim)) ** 2:
        raise ZeroGradientError("full gradient is zero at theta")
    batches, _ = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed, exhaustive)
    num = 0.0
    for idx in batches:
        g = oracle.batch_grad(theta, idx)
        num += g @ oracle.hvp_full(theta, g)
    return min(num / len(batches) / gsq, GNI_SATURATION)


def ias_est(
    oracle: LossOracle,
    theta: np.ndarray,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    exhaustive: str | bool = "auto",
) -> float:
    """E_B[g_B . H g_B] / E_B[|g_B|^2]: full-batch curvature along batch gradients."""
    batches, _ = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed, exhaustive)
    _, ias_num, den, _ = _batch_forms(oracle, theta, batches, need_full_curv=True)
    d = float(den.mean())
    if d <= 0:
        raise ZeroGradientError("all sampled batch gradients vanish")
    return float(ias_num.mean()) / d


def step_sharpness(oracle: LossOracle, theta: np.ndarray, batch_indices: np.ndarray) -> float:
    """Directional curvature of one batch landscape along its own gradient."""
    g = oracle.batch_grad(theta, np.asarray(batch_indices))
    gsq = float(g @ g)
    if gsq <= 0:
        raise ZeroGradientError("batch gradient is zero")
    return float(g @ oracle.hvp_batch(theta, np.asarray(batch_indices), g)) / gsq


class GradNormDecomposition(NamedTuple):
    full_sq: float
    batch_sq_mean: float
    noise_sq_mean: float


def grad_norm_decomposition(
    oracle: LossOracle,
    theta: np.ndarray,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    exhaustive: str | bool = "auto",
) -> GradNormDecomposition:
    """|grad L|^2, E|g_B|^2 and E|g_B - grad L|^2 over the same draws."""
    g_full = oracle.full_grad(theta)
    batches, _ = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed, exhaustive)
    batch_sq = 0.0
    noise_sq = 0.0
    for idx in batches:
        g = oracle.batch_grad(theta, idx)
        batch_sq += g @ g
        diff = g - g_full
        noise_sq += diff @ diff
    m = len(batches)
    return GradNormDecomposition(float(g_full @ g_full), batch_sq / m, noise_sq / m)


# --- one measurement snapshot -------------------------------------------------


@dataclass
class SharpnessReport:
    """One row of curvature statistics at a fixed parameter point."""

    step: int
    batch_sharpness: float
    gni: float
    ias: float
    lambda_max: float
    lambda_max_b: float
    step_sharpness: float
    grad_full_sq: float
    grad_batch_sq_mean: float
    grad_noise_sq_mean: float
    num_batches: int
    seed: int

    def to_csv_row(self) -> str:
        vals = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            if isinstance(v, (int, np.integer)):
                vals.append(str(int(v)))
            else:
                vals.append(format(float(v), ".17g"))
        return ",".join(vals)

    @staticmethod
    def csv_header() -> str:
        return ",".join(REPORT_COLUMNS)


def measure_report(
    oracle: LossOracle,
    theta: np.ndarray,
    step: int,
    b: int,
    num_batches: int = 64,
    mode: str = "with",
    seed: int = 0,
    metrics: Sequence[str] = ALL_METRICS,
    step_batch: np.ndarray | None = None,
    full_settings: PowerIterSettings = FULL_SETTINGS,
    batch_settings: PowerIterSettings = BATCH_SETTINGS,
    eig_cache: dict | None = None,
) -> SharpnessReport:
    """All requested metrics at theta over one shared set of batch draws.

    Unrequested metrics come back as nan.  ``step_batch``, when given, is the
    batch the training step actually used; otherwise the first drawn batch
    stands in for the single-batch sharpness.  Passing the same ``eig_cache``
    dict across successive calls warm starts the eigenvalue solves from the
    previous point's eigenvectors.
    """
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    batches, exhaustive = draw_metric_batches(oracle.num_samples, b, num_batches, mode, seed)
    need_ias = "ias" in metrics or "gni" in metrics
    bs_num, ias_num, den, grads = _batch_forms(oracle, theta, batches, need_full_curv=need_ias)

    g_full = oracle.full_grad(theta)
    full_sq = float(g_full @ g_full)
    batch_sq_mean = float(den.mean())
    noise_sq_mean = float(np.mean([(g - g_full) @ (g - g_full) for g in grads]))

    out = dict.fromkeys(ALL_METRICS, float("nan"))
    den_mean = batch_sq_mean
    if "batch_sharpness" in metrics and den_mean > 0:
        out["batch_sharpness"] = float(bs_num.mean()) / den_mean
    if "ias" in metrics and den_mean > 0:
        out["ias"] = float(ias_num.mean()) / den_mean
    if "gni" in metrics:
        if full_sq > (1e-12 * math.sqrt(oracle.param_dim)) ** 2:
            out["gni"] = min(float(ias_num.mean()) / full_sq, GNI_SATURATION)
        else:
            out["gni"] = GNI_SATURATION
    cache = eig_cache if eig_cache is not None else {}
    if "lambda_max" in metrics:
        # a report row tolerates an uncertified estimate (spiky Hessians can
        # exhaust the iteration budget); standalone lambda_max_full propagates
        op = LinearOperator(oracle.param_dim, lambda v: oracle.hvp_full(theta, v))
        try:
            res = top_eigenvalue(op, full_settings, v0=cache.get("full_vec"))
            out["lambda_max"] = res.value
            cache["full_vec"] = res.vector
        except PowerIterationError as err:
            out["lambda_max"] = err.estimate
            cache["full_vec"] = err.vector
    if "lambda_max_b" in metrics:
        try:
            lmb = lambda_max_b_est(
                oracle, theta, b, num_batches, mode, seed, batch_settings,
                v0=cache.get("batch_vec", cache.get("full_vec")),
            )
            out["lambda_max_b"] = lmb.value
            cache["batch_vec"] = cache.get("full_vec")
        except PowerIterationError as err:
            out["lambda_max_b"] = err.estimate
    if "step_sharpness" in metrics:
        idx = step_batch if step_batch is not None else batches[0]
        try:
            out["step_sharpness"] = step_sharpness(oracle, theta, idx)
        except ZeroGradientError:
            out["step_sharpness"] = float("nan")

    return SharpnessReport(
        step=step,
        batch_sharpness=out["batch_sharpness"],
        gni=out["gni"],
        ias=out["ias"],
        lambda_max=out["lambda_max"],
        lambda_max_b=out["lambda_max_b"],
        step_sharpness=out["step_sharpness"],
        grad_full_sq=full_sq,
        grad_batch_sq_mean=batch_sq_mean,
        grad_noise_sq_mean=noise_sq_mean,
        num_batches=len(batches),
        seed=seed,
    )


# --- hyperparameter probe ------------------------------------------------------


@dataclass(frozen=True)
class ProbeConfig:
    """Mid-training perturbation: scale eta or switch the batch size."""

    eta_factor: float | None = None
    new_b: int | None = None
    probe_steps: int = 100
    catapult_factor: float = 3.0
    restore_after: bool = True
    baseline_window: int = 50

    def __post_init__(self):
        if (self.eta_factor is None) == (self.new_b is None):
            raise ValueError("set exactly one of eta_factor or new_b")
        if self.probe_steps < 1:
            raise ValueError("probe_steps must be >= 1")
        if self.catapult_factor <= 1:
            raise ValueError("catapult_factor must be > 1")


NOISE_DRIVEN = "noise-driven"
CURVATURE_DRIVEN = "curvature-driven"


@dataclass(frozen=True)
class OscillationVerdict:
    kind: str  # noise-driven | curvature-driven | none
    peak_loss_ratio: float
    re_stabilized: bool
    post_probe_batch_sharpness: float
    pre_probe_batch_sharpness: float
    new_threshold: float  # 2/eta in effect during the probe


class TrainerProbe(Protocol):
    """What classify_oscillation needs from a live trainer."""

    eta: float
    loss_series: list[float]

    def snapshot(self) -> object: ...

    def restore(self, state: object) -> None: ...

    def run_steps(self, k: int) -> list[float]: ...

    def set_eta(self, eta: float) -> None: ...

    def set_batch(self, b: int) -> None: ...

    def measure_batch_sharpness(self) -> float: ...


def classify_oscillation(trainer: TrainerProbe, probe: ProbeConfig) -> OscillationVerdict:
    """Perturb the hyperparameters and classify the oscillation regime.

    Divergence during the probe is curvature-driven instability outright
    (the trajectory left every compact).  A bounded catapult, a spike of at
    least catapult_factor over the pre-probe median, counts as curvature
    evidence only when the sharpness had already crossed the new 2/eta
    threshold; below the threshold, spikes of that size occur in plain
    stationary noise.  Growing but bounded oscillations without a qualifying
    catapult are noise-driven.
    """
    if not (hasattr(trainer, "snapshot") and hasattr(trainer, "restore")):
        raise TypeError("trainer does not support checkpoint/restore")
    baseline = list(trainer.loss_series)
    if len(baseline) < probe.baseline_window:
        raise ValueError(f"need >= {probe.baseline_window} baseline steps, have {len(baseline)}")
    tail = np.array(baseline[-probe.baseline_window :])
    pre_median = float(np.median(tail))
    pre_amp = float(np.std(tail))
    bs_before = trainer.measure_batch_sharpness()

    state = trainer.snapshot()
    if probe.eta_factor is not None:
        trainer.set_eta(trainer.eta * probe.eta_factor)
    else:
        trainer.set_batch(probe.new_b)
    new_threshold = 2.0 / trainer.eta

    losses = np.array(trainer.run_steps(probe.probe_steps))
    finite = losses[np.isfinite(losses)]
    floor = max(pre_median, 1e-300)
    diverged = len(finite) < len(losses) or (len(finite) and finite.max() > 1e6 * floor)
    peak_ratio = float("inf") if diverged else float(finite.max() / floor)

    settle = finite[-max(len(finite) // 4, 1) :] if len(finite) else np.array([np.inf])
    re_stabilized = bool(not diverged and np.median(settle) <= probe.catapult_factor * floor)
    post_amp = float(np.std(settle)) if len(settle) > 1 else float("inf")
    try:
        bs_after = trainer.measure_batch_sharpness()
    except ZeroGradientError:
        bs_after = float("nan")

    if probe.restore_after:
        trainer.restore(state)

    catapulted = not diverged and peak_ratio >= probe.catapult_factor
    if diverged:
        kind = CURVATURE_DRIVEN
    elif catapulted and bs_before >= new_threshold:
        kind = CURVATURE_DRIVEN
    elif post_amp > 1.2 * pre_amp or (catapulted and bs_before < new_threshold):
        kind = NOISE_DRIVEN
    else:
        kind = "none"
    return OscillationVerdict(
        kind=kind,
        peak_loss_ratio=peak_ratio,
        re_stabilized=re_stabilized,
        post_probe_batch_sharpness=bs_after,
        pre_probe_batch_sharpness=bs_before,
        new_threshold=new_threshold,
    )
