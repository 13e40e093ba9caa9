"""Dense symmetric linear algebra and small fitting utilities.

Everything here is a pure function of its inputs (plus an explicit seed),
sized for dense matrices up to a couple thousand rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np


class NumericsError(ValueError):
    pass


class PowerIterationError(RuntimeError):
    """Power iteration ran out of iterations; carries the last estimate."""

    def __init__(self, estimate: float, vector: np.ndarray, iters: int):
        super().__init__(
            f"power iteration did not converge in {iters} iterations "
            f"(last estimate {estimate:.6g})"
        )
        self.estimate = estimate
        self.vector = vector
        self.iters = iters


def check_symmetric(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise NumericsError(f"{name} has non-finite entries")
    if not np.array_equal(A, A.T):
        # tolerate round-off asymmetry but reject genuinely lopsided input
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(A).max())):
            raise NumericsError(f"{name} is not symmetric")
        A = 0.5 * (A + A.T)
    return A


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns, A = V diag(w) V^T


def sym_eigendecomp(A: np.ndarray) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    A = check_symmetric(A)
    w, V = np.linalg.eigh(A)
    return Spectrum(w, V)


class LinearOperator:
    """A deterministic v -> A v map of fixed dimension.

    Used to feed Hessian-vector products into power iteration without
    materializing the matrix.
    """

    def __init__(self, dim: int, apply: Callable[[np.ndarray], np.ndarray]):
        if dim < 1:
            raise NumericsError("operator dimension must be >= 1")
        self.dim = dim
        self.apply = apply

    @classmethod
    def from_matrix(cls, A: np.ndarray) -> "LinearOperator":
        A = check_symmetric(A)
        return cls(A.shape[0], lambda v: A @ v)


@dataclass(frozen=True)
class PowerIterSettings:
    max_iters: int = 500
    rel_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise NumericsError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise NumericsError("rel_tol must be > 0")


class PowerIterResult(NamedTuple):
    value: float
    vector: np.ndarray
    iters: int


def power_iteration(
    op: LinearOperator, settings: PowerIterSettings, v0: np.ndarray | None = None
) -> PowerIterResult:
    """Dominant eigenpair of a symmetric operator by plain power iteration.

    Converges to the eigenvalue of largest magnitude; the caller is
    responsible for that eigenvalue being positive (shift if in doubt, see
    ``top_eigenvalue``).  Convergence is declared on the residual
    |A v - est v| <= rel_tol * |est|, which for symmetric operators bounds
    the distance of ``est`` to a true eigenvalue.  A zero operator yields
    eigenvalue 0 with whatever unit vector the seed produced.  ``v0`` warm
    starts the iteration (useful along a slowly moving trajectory); it only
    changes the iteration count, never the certified target.
    """
    if v0 is not None and np.linalg.norm(v0) > 0 and np.isfinite(v0).all():
        v = np.asarray(v0, dtype=float) / np.linalg.norm(v0)
    else:
        rng = np.random.default_rng(settings.seed)
        v = rng.normal(size=op.dim)
        v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, settings.max_iters + 1):
        w = op.apply(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return PowerIterResult(0.0, v, it)
        est = float(v @ w)
        if np.linalg.norm(w - est * v) <= settings.rel_tol * abs(est):
            return PowerIterResult(est, v, it)
        v = w / nw
    raise PowerIterationError(est, v, settings.max_iters)


def top_eigenvalue(
    op: LinearOperator,
    settings: PowerIterSettings,
    shift_bound: float | None = None,
    v0: np.ndarray | None = None,
) -> PowerIterResult:
    """Largest (signed) eigenvalue of a symmetric operator.

    Plain power iteration locks onto the eigenvalue of largest magnitude,
    which for an indefinite operator may be the most negative one.  If the
    unshifted run converges to a negative value, or fails to settle (a sign
    of +/- lambda ties), the iteration is rerun on A + sigma*I and sigma is
    subtracted.  ``shift_bound`` can supply sigma directly (e.g. a row-sum
    bound when the matrix is available).
    """

    def _shifted(sigma: float) -> PowerIterResult:
        shifted_op = LinearOperator(op.dim, lambda v: op.apply(v) + sigma * v)
        try:
            res = power_iteration(shifted_op, settings, v0=v0)
        except PowerIterationError as err:
            # keep the carried estimate in the caller's (unshifted) frame
            raise PowerIterationError(err.estimate - sigma, err.vector, err.iters) from None
        return PowerIterResult(res.value - sigma, res.vector, res.iters)

    if shift_bound is not None:
        return _shifted(float(shift_bound))
    try:
        res = power_iteration(op, settings, v0=v0)
        if res.value >= 0.0:
            return res
        scale = abs(res.value)
    except PowerIterationError as err:
        if err.estimate > 0:
            # dominant direction is positive, just slow (clustered top):
            # shifting would only flatten the gap further
            raise
        scale = max(abs(err.estimate), 1e-12)
    # sigma just past |lambda_min| keeps the shifted gap ratio workable;
    # oversized shifts drive (lambda_2+sigma)/(lambda_1+sigma) toward 1
    try:
        return _shifted(1.1 * scale)
    except PowerIterationError:
        return _shifted(2.0 * scale)


def matrix_shift_bound(A: np.ndarray) -> float:
    """Row-sum upper bound on the spectral radius (Gershgorin)."""
    A = check_symmetric(A)
    return float(np.abs(A).sum(axis=1).max())


def lyapunov_apply(H: np.ndarray, X: np.ndarray) -> np.ndarray:
    """The Kronecker-sum map X -> H X + X H."""
    H = check_symmetric(H, "H")
    X = np.asarray(X, dtype=float)
    if X.shape != H.shape:
        raise NumericsError(f"dimension mismatch: H {H.shape} vs X {X.shape}")
    return H @ X + X @ H


def default_null_cutoff(H: np.ndarray) -> float:
    w = np.linalg.eigvalsh(check_symmetric(H, "H"))
    return 1e-10 * max(float(w[-1]), 0.0)


def lyapunov_pinv_solve(
    H: np.ndarray, S: np.ndarray, null_cutoff: float | None = None
) -> np.ndarray:
    """Pseudo-inverse solve of H X + X H = S for PSD H.

    In H's eigenbasis the map scales the (i, j) component by lambda_i +
    lambda_j, so the pseudo-inverse divides by it and zeroes components
    where the sum falls below ``null_cutoff`` (default 1e-10 * lambda_max).
    """
    H = check_symmetric(H, "H")
    S = check_symmetric(S, "S")
    if S.shape != H.shape:
        raise NumericsError(f"dimension mismatch: H {H.shape} vs S {S.shape}")
    if null_cutoff is None:
        null_cutoff = default_null_cutoff(H)
    w, V = np.linalg.eigh(H)
    if w[0] < -null_cutoff:
        raise NumericsError(f"H is not PSD (min eigenvalue {w[0]:.3g})")
    pair_sums = w[:, None] + w[None, :]
    S_tilde = V.T @ S @ V
    X_tilde = np.where(pair_sums > null_cutoff, S_tilde / np.where(pair_sums > null_cutoff, pair_sums, 1.0), 0.0)
    X = V @ X_tilde @ V.T
    return 0.5 * (X + X.T)


def stationary_covariance_prediction(
    H: np.ndarray, sigma_g: np.ndarray, eta: float, b: int
) -> np.ndarray:
    """Leading-order stationary iterate covariance (eta/b) * Kdagger(sigma_g)."""
    if eta <= 0:
        raise NumericsError("eta must be > 0")
    if b < 1:
        raise NumericsError("b must be >= 1")
    return (eta / b) * lyapunov_pinv_solve(H, sigma_g)


class PowerLawFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def powerlaw_fit(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Ordinary least squares of log(gap) on log(b).

    ``intercept`` is the natural-log intercept, i.e. gap ~ exp(intercept) * b**slope.
    """
    if len(points) < 3:
        raise NumericsError(f"need >= 3 points for a power-law fit, got {len(points)}")
    b = np.array([p[0] for p in points], dtype=float)
    gap = np.array([p[1] for p in points], dtype=float)
    for i, (bi, gi) in enumerate(zip(b, gap)):
        if bi <= 0 or gi <= 0:
            raise NumericsError(f"non-positive value at point index {i}: ({bi}, {gi})")
    x = np.log(b)
    y = np.log(gap)
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = y - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return PowerLawFit(slope, intercept, float(min(max(r2, 0.0), 1.0)))
