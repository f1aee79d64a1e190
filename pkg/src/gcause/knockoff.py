"""Second-order Gaussian knockoffs used as interventional replacements.

Rows of the series are treated as i.i.d. draws from ``N(mu, Sigma)``. Given
an observed row ``z``, its knockoff is sampled from::

    N(mu + (Sigma - diag(s)) Sigma^{-1} (z - mu),  2 diag(s) - diag(s) Sigma^{-1} diag(s))

which makes the joint covariance of ``(Z, Z~)`` equal to
``[[Sigma, Sigma - diag(s)], [Sigma - diag(s), Sigma]]``. Larger ``s``
decorrelates each knockoff from its original while the knockoff block keeps
the original covariance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .series import MultivariateSeries

SHRINKAGE_GRID = (0.0, 0.01, 0.05, 0.1, 0.2)
MIN_EIGENVALUE = 1e-6
JITTER = 1e-10
MU_FLOOR = 1e-8


class KnockoffError(ValueError):
    pass


@dataclass(frozen=True)
class KnockoffModel:
    mu: np.ndarray
    sigma: np.ndarray
    s: np.ndarray
    cond_mean_mat: np.ndarray
    cond_cov_chol: np.ndarray
    pull: np.ndarray  # diag(s) Sigma^{-1}, so that cond_mean_mat = I - pull
    shrinkage: float = 0.0
    method: str = "sdp_coordinate"

    @property
    def N(self) -> int:
        return self.mu.shape[0]

    @property
    def s_cov(self) -> np.ndarray:
        """``s`` on the covariance scale."""
        return self.s * np.diag(self.sigma)


def _is_psd(mat: np.ndarray, jitter: float = JITTER) -> bool:
    try:
        np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def cov_to_corr(sigma: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return corr


def _schur_bound(two_sigma: np.ndarray, s: np.ndarray, j: int) -> float:
    """Exact supremum of feasible ``s_j`` with the others fixed: the Schur complement of
    the remaining block (``nan`` if that block is singular)."""
    others = np.arange(len(s)) != j
    A = two_sigma - np.diag(np.where(others, s, 0.0))
    v = A[others, j]
    try:
        return float(A[j, j] - v @ np.linalg.solve(A[np.ix_(others, others)], v))
    except np.linalg.LinAlgError:
        return float("nan")


def _barrier_newton(two_sigma: np.ndarray, s: np.ndarray, mu: float, max_iter: int = 50) -> np.ndarray:
    """Damped Newton ascent on ``sum(s) + mu * logdet(2 * sigma_corr - diag(s))`` over the
    coordinates strictly inside ``(0, 1)``.

    Coordinate moves crawl along the curved ridge of this objective; Newton
    steps cross it in a few iterations. Steps are halved until they stay
    strictly feasible, inside the box and uphill.
    """
    free = (s > 0) & (s < 1)
    if not free.any():
        return s

    def value(x):
        try:
            chol = np.linalg.cholesky(two_sigma - np.diag(x))
        except np.linalg.LinAlgError:
            return -np.inf
        return x.sum() + 2.0 * mu * np.log(np.diag(chol)).sum()

    current = value(s)
    for _ in range(max_iter):
        W = np.linalg.inv(two_sigma - np.diag(s))[np.ix_(free, free)]
        grad = 1.0 - mu * np.diag(W)
        hess = -mu * W * W
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if grad @ step < 1e-14:
            break
        t = 1.0
        while t > 1e-12:
            trial = s.copy()
            trial[free] += t * step
            if np.all(trial > 0) and np.all(trial < 1):
                v = value(trial)
                if v > current:
                    s, current = trial, v
                    break
            t *= 0.5
        else:
            break
    return s


def _max_feasible(two_sigma: np.ndarray, s: np.ndarray, j: int) -> float:
    """Largest ``s_j`` in ``[0, 1]`` keeping ``two_sigma - diag(s)`` PSD, others fixed.

    Bisection on the Cholesky test. The bracket is seeded from the Schur
    complement of the other coordinates when that block is invertible.
    """
    trial = s.copy()
    trial[j] = 1.0
    if _is_psd(two_sigma - np.diag(trial)):
        return 1.0
    lo, hi = 0.0, 1.0
    est = _schur_bound(two_sigma, s, j)
    if np.isfinite(est):
        for cand_lo, cand_hi in ((est - 1e-9, est + 1e-9), (est - 1e-4, est + 1e-4)):
            cand_lo, cand_hi = max(cand_lo, 0.0), min(cand_hi, 1.0)
            trial[j] = cand_lo
            ok_lo = _is_psd(two_sigma - np.diag(trial))
            trial[j] = cand_hi
            if ok_lo and not _is_psd(two_sigma - np.diag(trial)):
                lo, hi = cand_lo, cand_hi
                break
    while hi - lo > 2e-9:
        mid = 0.5 * (lo + hi)
        trial[j] = mid
        if _is_psd(two_sigma - np.diag(trial)):
            lo = mid
        else:
            hi = mid
    return lo


def solve_s(sigma_corr: np.ndarray, method: str = "sdp_coordinate", tol: float = 1e-6,
            max_sweeps: int = 100) -> np.ndarray:
    """Decorrelation weights on the correlation scale.

    ``equicorrelated`` sets every entry to ``min(2 * lambda_min, 1)``.

    ``sdp_coordinate`` approximates the SDP ``max sum(s)`` subject to
    ``0 <= s <= 1`` and ``2 * sigma_corr - diag(s) >= 0`` by cyclic
    coordinate ascent. Each coordinate is moved to its largest feasible value
    (bisection on a Cholesky test) minus a margin ``mu``, which is the exact
    coordinate maximiser of ``sum(s) + mu * logdet(2 * sigma_corr - diag(s))``.
    Sweeps run until no coordinate moves by more than ``tol`` (at most
    ``max_sweeps``), then ``mu`` shrinks and the sweeps repeat, so the
    iterate follows the barrier path to the boundary instead of jamming
    against it after the first coordinate. Damped Newton steps on the same
    objective finish each ``mu`` level, since coordinate moves alone are slow
    along the curved ridge.
    The iterate then moves along the all-ones direction by the smallest
    eigenvalue of ``2 * sigma_corr - diag(s)`` and each coordinate goes to its
    exact Schur-complement bound.
    The result is returned only if it is feasible and beats the
    equicorrelated solution, otherwise the latter is returned.
    """
    sigma_corr = np.asarray(sigma_corr, dtype=float)
    n = sigma_corr.shape[0]
    if sigma_corr.shape != (n, n):
        raise KnockoffError(f"expected a square matrix, got {sigma_corr.shape}")
    if not np.allclose(sigma_corr, sigma_corr.T, atol=1e-10):
        raise KnockoffError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(sigma_corr), 1.0, atol=1e-10):
        raise KnockoffError("correlation matrix must have unit diagonal")

    lam_min = np.linalg.eigvalsh(sigma_corr)[0]
    if lam_min <= 0:
        raise KnockoffError(f"correlation matrix is not positive definite (lambda_min={lam_min:.3g})")
    s_equi = np.full(n, min(2.0 * lam_min, 1.0))
    if method == "equicorrelated":
        return s_equi
    if method != "sdp_coordinate":
        raise KnockoffError(f"unknown method {method!r}")

    two_sigma = 2.0 * sigma_corr
    s = np.zeros(n)
    mu = 0.1
    while True:
        for _ in range(max_sweeps):
            biggest = 0.0
            for j in range(n):
                new = max(_max_feasible(two_sigma, s, j) - mu, 0.0)
                biggest = max(biggest, abs(new - s[j]))
                s[j] = new
            if biggest < max(tol, 0.01 * mu):
                break
        s = _barrier_newton(two_sigma, s, mu)
        if mu <= MU_FLOOR:
            break
        mu = max(mu * 0.3, MU_FLOOR)
    # last steps onto the boundary: first the largest feasible move along the all-ones
    # direction, then each coordinate up to its exact bound when the Cholesky test agrees
    slack = np.linalg.eigvalsh(two_sigma - np.diag(s))[0]
    if slack > 0:
        lifted = np.minimum(s + slack, 1.0)
        if _is_psd(two_sigma - np.diag(lifted)):
            s = lifted
    for j in range(n):
        bound = min(_schur_bound(two_sigma, s, j), 1.0)
        if np.isfinite(bound) and bound > s[j]:
            trial = s.copy()
            trial[j] = bound
            if _is_psd(two_sigma - np.diag(trial)):
                s = trial

    if not _is_psd(two_sigma - np.diag(s)) or s.sum() < s_equi.sum():
        return s_equi
    return s


def _shrink(cov: np.ndarray, lam: float) -> np.ndarray:
    return (1.0 - lam) * cov + lam * np.diag(np.diag(cov))


def _conditional_factor(cond_cov: np.ndarray, support: np.ndarray) -> np.ndarray:
    n = cond_cov.shape[0]
    factor = np.zeros((n, n))
    if not support.any():
        return factor
    # rows/cols with s_j = 0 are exactly zero; factor only the rest
    sub = cond_cov[np.ix_(support, support)]
    sub = 0.5 * (sub + sub.T)
    # boundary solutions make cond_cov singular; clip round-off negatives
    w, v = np.linalg.eigh(sub)
    repaired = (v * np.clip(w, 0.0, None)) @ v.T
    scale = max(float(np.mean(np.diag(sub))), 1.0)
    factor[np.ix_(support, support)] = np.linalg.cholesky(repaired + JITTER * scale * np.eye(sub.shape[0]))
    return factor


def build_model(mu: np.ndarray, sigma: np.ndarray, s: np.ndarray, shrinkage: float = 0.0,
                method: str = "given") -> KnockoffModel:
    """Assemble a model from explicit parameters (``s`` on the correlation scale)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s = np.asarray(s, dtype=float)
    s_cov = s * np.diag(sigma)
    sigma_inv = np.linalg.inv(sigma)
    cond_mean_mat = (sigma - np.diag(s_cov)) @ sigma_inv
    cond_cov = 2.0 * np.diag(s_cov) - np.diag(s_cov) @ sigma_inv @ np.diag(s_cov)
    factor = _conditional_factor(cond_cov, s_cov > 0)
    pull = s_cov[:, None] * sigma_inv
    return KnockoffModel(mu, sigma, s, cond_mean_mat, factor, pull, shrinkage, method)


def fit_gaussian(series: MultivariateSeries | np.ndarray, shrinkage: float | str = "auto",
                 method: str = "sdp_coordinate") -> KnockoffModel:
    """Fit mean and (diagonally shrunk) covariance, then solve for ``s``.

    With ``shrinkage="auto"`` the smallest value on :data:`SHRINKAGE_GRID`
    giving ``lambda_min >= 1e-6`` is used.
    """
    X = series.values if isinstance(series, MultivariateSeries) else np.asarray(series, dtype=float)
    T = X.shape[0]
    if T < 2:
        raise KnockoffError(f"need at least 2 rows to fit a covariance, got {T}")
    mu = X.mean(axis=0)
    cov = np.cov(X, rowvar=False)

    grid: Sequence[float] = SHRINKAGE_GRID if shrinkage == "auto" else (float(shrinkage),)
    for lam in grid:
        if not 0.0 <= lam <= 1.0:
            raise KnockoffError(f"shrinkage must lie in [0, 1], got {lam}")
        sigma = _shrink(cov, lam)
        if np.all(np.diag(sigma) > 0) and np.linalg.eigvalsh(sigma)[0] >= MIN_EIGENVALUE:
            break
    else:
        raise KnockoffError(f"covariance is singular for every shrinkage value in {list(grid)}")

    s = solve_s(cov_to_corr(sigma), method)
    return build_model(mu, sigma, s, lam, method)


def _sample_rows(model: KnockoffModel, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # z - diag(s) Sigma^{-1} (z - mu) equals the conditional mean and is exact when s = 0
    mean = X - (X - model.mu) @ model.pull.T
    noise = rng.standard_normal(X.shape) @ model.cond_cov_chol.T
    return mean + noise


def sample_knockoffs(model: KnockoffModel, series: MultivariateSeries | np.ndarray,
                     seed: int | Sequence[int] | None = None) -> MultivariateSeries | np.ndarray:
    """Draw one knockoff row per observed row; returns the same type it was given."""
    X = series.values if isinstance(series, MultivariateSeries) else np.asarray(series, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.N:
        raise KnockoffError(f"series has shape {X.shape}, model expects {model.N} columns")
    Xk = _sample_rows(model, X, np.random.default_rng(seed))
    if isinstance(series, MultivariateSeries):
        return series.with_values(Xk)
    return Xk


@dataclass(frozen=True)
class KnockoffDiagnostics:
    knockoff_corr_dev: float
    cross_corr_dev: float
    self_corr: np.ndarray

    def to_json(self) -> dict:
        return {
            "knockoff_corr_dev": float(self.knockoff_corr_dev),
            "cross_corr_dev": float(self.cross_corr_dev),
            "self_corr": [float(v) for v in self.self_corr],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def joint_correlation(originals: np.ndarray, knockoffs: np.ndarray) -> np.ndarray:
    """Sample correlation of the stacked ``(Z, Z~)`` columns, ``2N x 2N``."""
    return np.corrcoef(np.hstack([originals, knockoffs]), rowvar=False)


def diagnostics(originals: MultivariateSeries | np.ndarray,
                knockoffs: MultivariateSeries | np.ndarray) -> KnockoffDiagnostics:
    Z = originals.values if isinstance(originals, MultivariateSeries) else np.asarray(originals, float)
    Zk = knockoffs.values if isinstance(knockoffs, MultivariateSeries) else np.asarray(knockoffs, float)
    if Z.shape != Zk.shape:
        raise KnockoffError(f"shape mismatch: {Z.shape} vs {Zk.shape}")
    n = Z.shape[1]
    C = joint_correlation(Z, Zk)
    orig, kk, cross = C[:n, :n], C[n:, n:], C[:n, n:]
    off = ~np.eye(n, dtype=bool)
    return KnockoffDiagnostics(
        knockoff_corr_dev=float(np.max(np.abs(kk - orig))),
        cross_corr_dev=float(np.max(np.abs(cross[off] - orig[off]))),
        self_corr=np.clip(np.diag(cross).copy(), -1.0, 1.0),
    )
