"""Structured approximate Hessian of the ridge loss and derived diagnostics.

With (U, Sigma, V) the top-r factors of A/sqrt(n), the curvature model is

    H = V (Sigma^2 + gamma2 I) V^T + (sigma_r^2 + gamma2) (I - V V^T),

whose eigenvalues are {sigma_i^2 + gamma2} on span(V) and the tail value
sigma_r^2 + gamma2 on its orthogonal complement. Both H and H^{-1} apply in
O(r d). This module also derives the per-sample smoothness surrogates

    ell_i = a_i^T H^{-1} a_i + 1 >= L_i-up-to-constants,

the sampling distribution p_i = ell_i / (n L_avg), the strong-convexity
estimate, and all condition-number diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datasets import Problem
from .linalg import SparseMatrix
from .sketch import LowRankFactors

__all__ = [
    "HessianModel",
    "SmoothnessProfile",
    "ConditionReport",
    "build_hessian",
    "apply_h",
    "apply_h_inv",
    "h_norm",
    "h_inv_norm",
    "smoothness_profile",
    "effective_dimension",
    "condition_report",
    "lemma1_spectral_check",
]

_NEG_CLAMP = -1e-14


@dataclass(frozen=True)
class HessianModel:
    """Rank-r + isotropic-tail curvature model. Never materialized as d x d."""

    V: np.ndarray  # d x r, orthonormal columns
    sig2: np.ndarray  # r eigenvalue heads sigma_i^2, nonincreasing
    gamma2: float
    tail: float  # sigma_r^2 + gamma2

    def __post_init__(self):
        if self.gamma2 <= 0:
            raise ValueError("gamma2 must be > 0")
        if len(self.sig2) == 0:
            raise ValueError("need at least one retained direction")
        if np.any(self.sig2 < 0) or np.any(np.diff(self.sig2) > 1e-12 * max(1.0, self.sig2[0])):
            raise ValueError("sig2 must be nonnegative and nonincreasing")
        if self.tail != self.sig2[-1] + self.gamma2:
            raise ValueError("tail must equal sig2[-1] + gamma2 exactly")

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return len(self.sig2)

    @property
    def lam1(self) -> float:
        """Largest eigenvalue sigma_1^2 + gamma2."""
        return float(self.sig2[0] + self.gamma2)

    @property
    def kappa_sub(self) -> float:
        """Condition number (sigma_1^2 + gamma2) / (sigma_r^2 + gamma2)."""
        return self.lam1 / self.tail

    def toarray(self) -> np.ndarray:
        """Dense d x d realization; test/diagnostic use only."""
        V = self.V
        head = (V * (self.sig2 + self.gamma2 - self.tail)) @ V.T
        return head + self.tail * np.eye(self.d)

    def inv_sqrt_array(self) -> np.ndarray:
        """Dense H^{-1/2}; used by the exact strong-convexity estimate."""
        V = self.V
        w = 1.0 / np.sqrt(self.sig2 + self.gamma2)
        t = 1.0 / math.sqrt(self.tail)
        return (V * (w - t)) @ V.T + t * np.eye(self.d)


def build_hessian(factors: LowRankFactors, gamma2: float) -> HessianModel:
    """Assemble the curvature model from sketch factors of A/sqrt(n)."""
    if gamma2 <= 0:
        raise ValueError("gamma2 must be > 0")
    sig2 = factors.Sigma**2
    return HessianModel(factors.V, sig2, float(gamma2), float(sig2[-1] + gamma2))


def apply_h(H: HessianModel, x: np.ndarray) -> np.ndarray:
    """Return ``H @ x`` in O(r d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (H.d,):
        raise ValueError(f"apply_h: x has shape {x.shape}, expected ({H.d},)")
    w = H.V.T @ x
    return H.V @ ((H.sig2 + H.gamma2 - H.tail) * w) + H.tail * x


def apply_h_inv(H: HessianModel, x: np.ndarray) -> np.ndarray:
    """Return ``H^{-1} @ x`` in O(r d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (H.d,):
        raise ValueError(f"apply_h_inv: x has shape {x.shape}, expected ({H.d},)")
    w = H.V.T @ x
    inv_head = 1.0 / (H.sig2 + H.gamma2)
    inv_tail = 1.0 / H.tail
    return H.V @ ((inv_head - inv_tail) * w) + inv_tail * x


def _clamped_sqrt(q: float, what: str) -> float:
    if q < _NEG_CLAMP:
        raise ArithmeticError(f"{what}: quadratic form {q} below the -1e-14 clamp; H is broken")
    return math.sqrt(max(q, 0.0))


def h_norm(H: HessianModel, x: np.ndarray) -> float:
    """Mahalanobis norm sqrt(x^T H x); tiny negatives (>= -1e-14) clamp to 0."""
    return _clamped_sqrt(float(np.dot(x, apply_h(H, x))), "h_norm")


def h_inv_norm(H: HessianModel, x: np.ndarray) -> float:
    """Dual norm sqrt(x^T H^{-1} x) with the same clamping."""
    return _clamped_sqrt(float(np.dot(x, apply_h_inv(H, x))), "h_inv_norm")


@dataclass(frozen=True)
class SmoothnessProfile:
    """Per-sample surrogate smoothness and the induced sampling distribution."""

    ell: np.ndarray  # n surrogates, each >= 1
    L_avg: float
    mu_hat: float
    cum_p: np.ndarray  # cumulative weights of p_i = ell_i / (n L_avg)

    def __post_init__(self):
        if np.any(self.ell < 1.0 - 1e-12):
            raise ValueError("surrogate constants must satisfy ell_i >= 1")
        if self.mu_hat <= 0:
            raise ValueError("mu_hat must be > 0")
        if abs(self.cum_p[-1] - 1.0) > 1e-12:
            raise ValueError("sampling weights do not sum to 1")

    @property
    def n(self) -> int:
        return len(self.ell)

    @property
    def L_max(self) -> float:
        return float(self.ell.max())

    @property
    def p(self) -> np.ndarray:
        return np.diff(self.cum_p, prepend=0.0)


def smoothness_profile(problem: Problem, H: HessianModel, mu_mode="exact") -> SmoothnessProfile:
    """Compute ell_i = a_i^T H^{-1} a_i + 1 for every row, plus mu_hat.

    One O(n r d_touched) pass: with W = A V and s_i = ||a_i||^2, the
    quadratic form splits into the head sum_j W_ij^2/(sigma_j^2+gamma2) and
    the tail (s_i - ||W_i||^2)/tail.

    ``mu_mode`` selects the strong-convexity estimate: ``"exact"`` (dense
    eigen-solve of the effective Hessian, needs d <= 2000), ``"bound"`` (the
    conservative lower bound gamma2 / (19 (sigma_r^2 + gamma2))), or a
    positive float override.
    """
    A = problem.A
    W = A._scipy() @ H.V  # n x r
    head = (W * W) @ (1.0 / (H.sig2 + H.gamma2))
    resid = np.maximum(A.row_sq_norms() - np.einsum("ij,ij->i", W, W), 0.0)
    ell = head + resid / H.tail + 1.0
    L_avg = float(ell.mean())

    if isinstance(mu_mode, (int, float)) and not isinstance(mu_mode, bool):
        mu_hat = float(mu_mode)
        if mu_hat <= 0:
            raise ValueError("mu override must be > 0")
    elif mu_mode == "exact":
        lam_max, lam_min = lemma1_spectral_check(problem, H)
        mu_hat = lam_min
    elif mu_mode == "bound":
        mu_hat = H.gamma2 / (19.0 * H.tail)
    else:
        raise ValueError(f"unknown mu_mode {mu_mode!r}")

    cum_p = np.cumsum(ell / (len(ell) * L_avg))
    cum_p[-1] = 1.0
    return SmoothnessProfile(ell, L_avg, mu_hat, cum_p)


def effective_dimension(lambdas: np.ndarray, lam: float) -> float:
    """d_lambda = sum_i lambda_i / (lambda_i + lam); counts positives at lam=0."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas < 0) or lam < 0:
        raise ValueError("effective_dimension needs nonnegative inputs")
    if lam == 0.0:
        return float(np.count_nonzero(lambdas > 0))
    return float(np.sum(lambdas / (lambdas + lam)))


@dataclass(frozen=True)
class ConditionReport:
    """Condition-number diagnostics; d_eff is an interval because only the
    head of the spectrum is available."""

    kappa_h: float
    kappa_tilde: float
    kappa_sub: float
    d_eff_lo: float
    d_eff_hi: float
    lambda_head: np.ndarray
    theorem1_bound: float

    def as_dict(self) -> dict:
        return {
            "kappa_h": self.kappa_h,
            "kappa_tilde": self.kappa_tilde,
            "kappa_sub": self.kappa_sub,
            "d_eff_lo": self.d_eff_lo,
            "d_eff_hi": self.d_eff_hi,
            "spectrum_head": [float(v) for v in self.lambda_head],
            "theorem1_bound": self.theorem1_bound,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


def condition_report(
    problem: Problem, H: HessianModel, profile: SmoothnessProfile
) -> ConditionReport:
    """Assemble kappa_H, kappa-tilde, kappa_sub, the effective-dimension
    interval, and the spectral upper bound on kappa_H.

    The tail eigenvalue mass sum_{i>r} lambda_i is exact via the trace
    identity tr(C) = ||A||_F^2 / n. Individual tail eigenvalues are unknown,
    so d_eff is reported as [all-tail-zero, all-tail-at-lambda_r] and the
    upper bound uses the wide end.
    """
    d = problem.d
    g2 = H.gamma2
    lam_head = H.sig2.copy()
    trace_c = problem.A.frobenius_sq() / problem.n
    tail_mass = max(trace_c - float(lam_head.sum()), 0.0)

    kappa_h = profile.L_avg / profile.mu_hat
    kappa_tilde = (trace_c + d * g2) / g2
    lam_r = float(lam_head[-1])
    d_eff_lo = effective_dimension(lam_head, g2)
    d_eff_hi = d_eff_lo + (d - H.r) * (lam_r / (lam_r + g2) if lam_r > 0 else 0.0)
    bound = min(d_eff_hi / g2, (H.r * lam_r + tail_mass) / g2 + d)
    return ConditionReport(kappa_h, kappa_tilde, H.kappa_sub, d_eff_lo, d_eff_hi, lam_head, bound)


def lemma1_spectral_check(problem: Problem, H: HessianModel) -> tuple[float, float]:
    """Extreme eigenvalues of the effective Hessian H^{-1/2} (C + gamma2 I) H^{-1/2}.

    Dense symmetric eigen-solve; restricted to d <= 2000.
    """
    d = problem.d
    if d > 2000:
        raise ValueError("lemma1_spectral_check needs d <= 2000 (dense eigendecomposition)")
    A = problem.A._scipy()
    C = (A.T @ A).toarray() / problem.n
    C[np.diag_indices(d)] += H.gamma2
    Hs = H.inv_sqrt_array()
    M = Hs @ C @ Hs
    evals = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(evals[-1]), float(evals[0])
