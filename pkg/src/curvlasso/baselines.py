"""First-order reference solvers: proximal gradient, FISTA, ProxSVRG, Katyusha1.

All of them share the Problem contract, the trace format, and the epoch
accounting of the main solver (n component gradients = one epoch). Step
sizes default to their theory-predicted values; the benchmark harness tunes
only the step, as in the experimental protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import Problem
from .linalg import spectral_norm
from .prox import soft_threshold
from .solver import DivergenceError, SolverTrace, full_gradient, objective, split_rng

__all__ = ["BaselineConfig", "pgd", "fista", "prox_svrg", "katyusha1", "smooth_lipschitz"]


@dataclass
class BaselineConfig:
    """Shared baseline hyper-parameters; ``step=None`` means theory default."""

    step: float | None = None
    batch: int | None = None
    epoch_len: int | None = None
    epochs_budget: float = 100.0
    seed: int = 0
    sampling: str = "uniform"  # prox_svrg also accepts "weighted"

    def __post_init__(self):
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be > 0")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1")


def smooth_lipschitz(problem: Problem) -> float:
    """L = lambda_1(C) + gamma2, the Euclidean smoothness of the ridge loss."""
    sigma, _ = spectral_norm(problem.A)
    return sigma**2 / problem.n + problem.gamma2


def _guard(problem) -> float:
    f0 = objective(problem, np.zeros(problem.d))
    return 1e3 * f0 if f0 > 0 else math.inf


def _check(obj, x, trace, where):
    if not np.isfinite(obj) or not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite iterate in {where}", trace)


def pgd(problem: Problem, cfg: BaselineConfig) -> tuple[np.ndarray, SolverTrace]:
    """Proximal gradient descent with step 1/L; one full gradient per iteration."""
    L = smooth_lipschitz(problem)
    step = cfg.step if cfg.step is not None else 1.0 / L
    n = problem.n
    x = np.zeros(problem.d)
    trace = SolverTrace()
    guard = _guard(problem)
    trace.append(0, -1, 0.0, objective(problem, x), 0, 0)
    iters = max(1, int(math.ceil(cfg.epochs_budget)))
    for k in range(iters):
        x = soft_threshold(x - step * full_gradient(problem, x), step * problem.gamma1)
        obj = objective(problem, x)
        trace.append(0, k, float(k + 1), obj, (k + 1) * n, 0)
        _check(obj, x, trace, "pgd")
        if obj > guard:
            raise DivergenceError("pgd diverged", trace)
    return x, trace


def fista(problem: Problem, cfg: BaselineConfig) -> tuple[np.ndarray, SolverTrace]:
    """FISTA with the strongly-convex constant momentum (sqrt(k)-1)/(sqrt(k)+1).

    kappa = (lambda_1(C) + gamma2)/gamma2; step defaults to 1/(lambda_1(C) +
    gamma2). The objective is not monotone (momentum oscillates); only the
    best-so-far value is meaningful for convergence checks.
    """
    L = smooth_lipschitz(problem)
    step = cfg.step if cfg.step is not None else 1.0 / L
    kappa = L / problem.gamma2
    beta = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    n = problem.n
    x = np.zeros(problem.d)
    y = x.copy()
    trace = SolverTrace()
    guard = _guard(problem)
    trace.append(0, -1, 0.0, objective(problem, x), 0, 0)
    iters = max(1, int(math.ceil(cfg.epochs_budget)))
    for k in range(iters):
        x_next = soft_threshold(y - step * full_gradient(problem, y), step * problem.gamma1)
        y = x_next + beta * (x_next - x)
        x = x_next
        obj = objective(problem, x)
        trace.append(0, k, float(k + 1), obj, (k + 1) * n, 0)
        _check(obj, x, trace, "fista")
        if obj > guard:
            raise DivergenceError("fista diverged", trace)
    return x, trace


def prox_svrg(problem: Problem, cfg: BaselineConfig) -> tuple[np.ndarray, SolverTrace]:
    """Euclidean ProxSVRG with mini-batches and epoch length 2n/b.

    Sampling is uniform or weighted by the Euclidean smoothness constants
    L_i = ||a_i||^2 + gamma2. The step defaults to 0.1/L with L the mean
    (weighted) or max (uniform) of the L_i, the value the method's authors
    recommend in experiments. The stage-end iterate seeds the next stage.
    """
    n, d = problem.n, problem.d
    A = problem.A._scipy()
    L_i = problem.A.row_sq_norms() + problem.gamma2
    if cfg.sampling == "weighted":
        L_ref = float(L_i.mean())
        cum_p = np.cumsum(L_i / L_i.sum())
        cum_p[-1] = 1.0
        weights = L_ref / L_i  # 1/(n p_i)
    elif cfg.sampling == "uniform":
        L_ref = float(L_i.max())
        cum_p = None
        weights = None
    else:
        raise ValueError(f"unknown sampling mode {cfg.sampling!r}")
    step = cfg.step if cfg.step is not None else 0.1 / L_ref
    b = cfg.batch if cfg.batch is not None else max(1, int(round(math.sqrt(n))))
    T = cfg.epoch_len if cfg.epoch_len is not None else math.ceil(2.0 * n / b)
    rng = split_rng(cfg.seed)
    theta = step * problem.gamma1

    x_tilde = np.zeros(d)
    trace = SolverTrace()
    guard = _guard(problem)
    grad_evals = 0
    s = 0
    while grad_evals / n < cfg.epochs_budget:
        trace.append(s, -1, grad_evals / n, objective(problem, x_tilde), grad_evals, 0)
        mu_full = full_gradient(problem, x_tilde)
        grad_evals += n
        x = x_tilde.copy()
        for k in range(T):
            if cum_p is None:
                idx = rng.integers(0, n, size=b)
                w = None
            else:
                idx = np.searchsorted(cum_p, rng.random(b), side="right")
                w = weights[idx]
            diff = x - x_tilde
            A_B = A[idx]
            t = A_B @ diff
            if w is not None:
                t = t * w
                reg = problem.gamma2 * float(w.mean()) * diff
            else:
                reg = problem.gamma2 * diff
            v = (A_B.T @ t) / b + reg + mu_full
            x = soft_threshold(x - step * v, theta)
            grad_evals += 2 * b
            obj = objective(problem, x)
            trace.append(s, k, grad_evals / n, obj, grad_evals, 0)
            _check(obj, x, trace, "prox_svrg")
            if obj > guard:
                raise DivergenceError("prox_svrg diverged", trace)
        x_tilde = x
        s += 1
    trace.append(s, -1, grad_evals / n, objective(problem, x_tilde), grad_evals, 0)
    return x_tilde, trace


def katyusha1(problem: Problem, cfg: BaselineConfig) -> tuple[np.ndarray, SolverTrace]:
    """Katyusha (Option I) with negative momentum anchored at x_tilde.

    tau_2 = 0.5/b, tau_1 = min(sqrt(n gamma2 / (3 L)), 0.5) with
    L = lambda_1(C) + gamma2, and alpha = 1/(3 tau_1 L). The tunable step is
    the y-update step 1/(3 L); alpha scales with it as step/tau_1. The stage
    anchor is the (1 + alpha gamma2)^j weighted average of the epoch's
    y-iterates. Uniform sampling.
    """
    n, d = problem.n, problem.d
    A = problem.A._scipy()
    L = smooth_lipschitz(problem)
    b = cfg.batch if cfg.batch is not None else max(1, int(round(math.sqrt(n))))
    T = cfg.epoch_len if cfg.epoch_len is not None else math.ceil(2.0 * n / b)
    sigma = problem.gamma2
    tau2 = 0.5 / b
    tau1 = min(math.sqrt(n * sigma / (3.0 * L)), 0.5)
    step = cfg.step if cfg.step is not None else 1.0 / (3.0 * L)
    alpha = step / tau1
    rng = split_rng(cfg.seed)

    x_tilde = np.zeros(d)
    y = np.zeros(d)
    z = np.zeros(d)
    trace = SolverTrace()
    guard = _guard(problem)
    grad_evals = 0
    s = 0
    theta_w = 1.0 + alpha * sigma
    while grad_evals / n < cfg.epochs_budget:
        trace.append(s, -1, grad_evals / n, objective(problem, x_tilde), grad_evals, 0)
        mu_full = full_gradient(problem, x_tilde)
        grad_evals += n
        acc = np.zeros(d)
        wsum = 0.0
        w = 1.0
        for k in range(T):
            x = tau1 * z + tau2 * x_tilde + (1.0 - tau1 - tau2) * y
            idx = rng.integers(0, n, size=b)
            diff = x - x_tilde
            A_B = A[idx]
            v = (A_B.T @ (A_B @ diff)) / b + problem.gamma2 * diff + mu_full
            z = soft_threshold(z - alpha * v, alpha * problem.gamma1)
            y = soft_threshold(x - step * v, step * problem.gamma1)
            acc += w * y
            wsum += w
            w *= theta_w
            grad_evals += 2 * b
            obj = objective(problem, y)
            trace.append(s, k, grad_evals / n, obj, grad_evals, 0)
            _check(obj, y, trace, "katyusha1")
            if obj > guard:
                raise DivergenceError("katyusha1 diverged", trace)
        x_tilde = acc / wsum
        s += 1
    trace.append(s, -1, grad_evals / n, objective(problem, x_tilde), grad_evals, 0)
    return x_tilde, trace
