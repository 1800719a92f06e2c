"""Inexact accelerated scaled proximal SVRG.

Outer/inner structure: every stage refreshes the full gradient at the anchor
x_tilde, then runs T inner steps of

    y_k   = (x_k + tau z_k) / (1 + tau)
    v_k   = minibatch variance-reduced gradient at y_k
    x_k+1 ~ argmin  gamma1 ||x||_1 + (1/(2 eta)) ||x - (y_k - eta H^{-1} v_k)||_H^2
    g_k+1 = (y_k - x_k+1) / eta
    z_k+1 = z_k + tau (y_k - z_k) - (tau / mu) g_k+1

with the subproblem warm-started from the previous step and solved on a
fixed iteration budget. Default parameters follow the theory: eta = 1/L_avg,
tau = sqrt(mu/(2 L_avg)), batch b = 60 sqrt(L_avg/mu) (capped at n),
epoch length T = 2n/b, and rho = 0.9 tau.

Epoch accounting: one epoch is n component-gradient evaluations of cost
O(d); each subproblem iteration costs r component-equivalents. A full stage
therefore costs 1 + 2 b T / n + T * budget.iters * r / n epochs.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datasets import Problem
from .hessian import HessianModel, SmoothnessProfile, apply_h, apply_h_inv
from .linalg import matvec, matvec_t
from .prox import SubproblemBudget, SubproblemSpec, solve_scaled_prox, subproblem_budget, warm_start

__all__ = [
    "SolverConfig",
    "SolverState",
    "SolverTrace",
    "DivergenceError",
    "objective",
    "full_gradient",
    "minibatch_gradient",
    "inner_step",
    "run",
    "lyapunov_value",
    "split_rng",
]

TRACE_HEADER = "outer,inner,epoch,objective,grad_evals,sub_iters,wall_ns"


class DivergenceError(RuntimeError):
    """Raised when iterates blow up; carries the trace collected so far."""

    def __init__(self, message: str, trace: "SolverTrace"):
        super().__init__(message)
        self.trace = trace


def split_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for run ``run_index`` of a seeded experiment.

    Streams are derived as PCG64(SeedSequence((seed, run_index))), so any
    (seed, index) pair maps to a documented, platform-stable generator.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, run_index))))


def objective(problem: Problem, x: np.ndarray) -> float:
    """F(x) = ||Ax-b||^2/(2n) + (gamma2/2)||x||^2 + gamma1 ||x||_1."""
    res = matvec(problem.A, x) - problem.b
    return (
        0.5 * float(np.dot(res, res)) / problem.n
        + 0.5 * problem.gamma2 * float(np.dot(x, x))
        + problem.gamma1 * float(np.abs(x).sum())
    )


def full_gradient(problem: Problem, x: np.ndarray) -> np.ndarray:
    """Gradient of the smooth part: (1/n) A^T (Ax - b) + gamma2 x."""
    return matvec_t(problem.A, matvec(problem.A, x) - problem.b) / problem.n + problem.gamma2 * x


def minibatch_gradient(
    problem: Problem,
    profile: SmoothnessProfile,
    y: np.ndarray,
    x_tilde: np.ndarray,
    full_grad: np.ndarray,
    batch: int,
    rng: np.random.Generator,
    sampling: str = "nonuniform",
    indices: np.ndarray | None = None,
) -> np.ndarray:
    """Variance-reduced estimate v_k of the smooth gradient at y.

    Indices are drawn i.i.d. with replacement, either nonuniformly with
    p_i = ell_i / (n L_avg) or uniformly; each sampled component is weighted
    by 1/(n p_i) so the estimate is unbiased. ``indices`` overrides the draw
    (test hook).
    """
    n = problem.n
    if indices is None:
        if sampling == "nonuniform":
            indices = np.searchsorted(profile.cum_p, rng.random(batch), side="right")
        elif sampling == "uniform":
            indices = rng.integers(0, n, size=batch)
        else:
            raise ValueError(f"unknown sampling mode {sampling!r}")
    if sampling == "nonuniform":
        w = profile.L_avg / profile.ell[indices]  # 1/(n p_i)
    else:
        w = np.ones(len(indices))
    diff = y - x_tilde
    A_B = problem.A._scipy()[indices]
    t = (A_B @ diff) * w
    corr = (A_B.T @ t) / len(indices) + problem.gamma2 * float(w.mean()) * diff
    return corr + full_grad


@dataclass
class SolverConfig:
    """Hyper-parameters; :meth:`from_profile` fills in the theory defaults."""

    eta: float
    tau: float
    batch: int
    epoch_len: int
    outer_iters: int = 100
    sampling: str = "nonuniform"
    seed: int = 0
    rho: float | None = None
    budget_multiplier: float = 1.0
    max_epochs: float | None = None
    batch_capped: bool = False

    def __post_init__(self):
        if self.rho is None:
            self.rho = 0.9 * self.tau
        # tau = 1 (degenerate momentum) is allowed as a diagnostic override
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("need 0 < tau <= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epoch_len < 1:
            raise ValueError("epoch_len must be >= 1")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if self.sampling not in ("nonuniform", "uniform"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")

    @classmethod
    def from_profile(
        cls,
        profile: SmoothnessProfile,
        n: int,
        sampling: str = "nonuniform",
        seed: int = 0,
        outer_iters: int = 100,
        step_scale: float = 1.0,
        max_epochs: float | None = None,
        budget_multiplier: float = 1.0,
    ) -> "SolverConfig":
        """Theory-predicted parameters; uniform sampling swaps L_avg for L_max.

        ``step_scale`` multiplies only the step size eta (the quantity the
        benchmark protocol tunes); tau, batch and epoch length stay at their
        theoretical values.
        """
        L = profile.L_avg if sampling == "nonuniform" else profile.L_max
        mu = profile.mu_hat
        batch_raw = math.ceil(60.0 * math.sqrt(L / mu))
        capped = batch_raw > n
        if capped:
            warnings.warn(
                f"theoretical batch {batch_raw} exceeds n={n}; capping at n "
                "(large-mini-batch premise violated)",
                RuntimeWarning,
                stacklevel=2,
            )
        batch = min(n, batch_raw)
        return cls(
            eta=step_scale / L,
            tau=math.sqrt(mu / (2.0 * L)),
            batch=batch,
            epoch_len=math.ceil(2.0 * n / batch),
            outer_iters=outer_iters,
            sampling=sampling,
            seed=seed,
            max_epochs=max_epochs,
            budget_multiplier=budget_multiplier,
            batch_capped=capped,
        )


@dataclass
class SolverState:
    """Mutable per-run state (never shared across runs)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_tilde: np.ndarray
    full_grad: np.ndarray
    u_prev: np.ndarray
    rng: np.random.Generator


class SolverTrace:
    """Per-iteration records driving plots and the acceptance tests.

    Rows are (outer, inner, epoch_equiv, objective, grad_component_evals,
    subproblem_iters, wall_ns); counters are cumulative. ``inner == -1``
    marks the stage-start snapshot taken right after the full-gradient
    refresh. wall_ns is measurement noise, not part of the deterministic
    contract.
    """

    def __init__(self):
        self.rows: list[tuple] = []
        self._t0 = time.perf_counter_ns()

    def append(self, outer, inner, epoch, obj, grad_evals, sub_iters):
        self.rows.append(
            (outer, inner, epoch, obj, grad_evals, sub_iters, time.perf_counter_ns() - self._t0)
        )

    @property
    def epochs(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    def to_csv_string(self) -> str:
        lines = [TRACE_HEADER]
        for outer, inner, epoch, obj, ge, si, wall in self.rows:
            lines.append(f"{outer},{inner},{epoch:.17g},{obj:.17g},{ge},{si},{wall}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_string())


class _Counters:
    """Cumulative grad-eval / subproblem accounting shared by one run."""

    def __init__(self, n: int, r: int):
        self.n = n
        self.r = r
        self.grad_evals = 0
        self.sub_iters = 0

    @property
    def epoch_equiv(self) -> float:
        return (self.grad_evals + self.sub_iters * self.r) / self.n


def inner_step(
    state: SolverState,
    problem: Problem,
    H: HessianModel,
    profile: SmoothnessProfile,
    cfg: SolverConfig,
    budget: SubproblemBudget,
    trace: SolverTrace | None = None,
    counters: _Counters | None = None,
    outer: int = 0,
    inner: int = 0,
    guard: float = math.inf,
    capture: list | None = None,
) -> SolverState:
    """One inner iteration; mutates and returns ``state``.

    ``capture``, when given, collects per-step internals (y, u, z0, x_next)
    for instrumented verification runs.
    """
    eta, tau = cfg.eta, cfg.tau
    state.y = (state.x + tau * state.z) / (1.0 + tau)
    v = minibatch_gradient(
        problem, profile, state.y, state.x_tilde, state.full_grad, cfg.batch, state.rng,
        sampling=cfg.sampling,
    )
    u = state.y - eta * apply_h_inv(H, v)
    z0 = warm_start(state.x, state.u_prev, H, eta, budget.gamma_ws, problem.gamma1)
    x_next = solve_scaled_prox(SubproblemSpec(u, eta, H, problem.gamma1), z0, budget)
    if capture is not None:
        capture.append({"y": state.y.copy(), "u": u.copy(), "z0": z0.copy(), "x_next": x_next.copy()})
    g = (state.y - x_next) / eta
    state.z = state.z + tau * (state.y - state.z) - (tau / profile.mu_hat) * g
    state.x = x_next
    state.u_prev = u

    if counters is not None:
        counters.grad_evals += 2 * cfg.batch
        counters.sub_iters += budget.iters
    if trace is not None and counters is not None:
        obj = objective(problem, state.x)
        trace.append(outer, inner, counters.epoch_equiv, obj, counters.grad_evals, counters.sub_iters)
        if not np.isfinite(obj) or not np.all(np.isfinite(state.x)):
            raise DivergenceError(f"non-finite iterate at stage {outer}, step {inner}", trace)
        if obj > guard:
            raise DivergenceError(
                f"objective {obj:.3e} exceeded the divergence guard at stage {outer}", trace
            )
    return state


def run(
    problem: Problem,
    H: HessianModel,
    profile: SmoothnessProfile,
    cfg: SolverConfig,
    x0: np.ndarray | None = None,
    capture: list | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """Full solver run: ``cfg.outer_iters`` stages of ``cfg.epoch_len`` steps.

    Stops early once ``cfg.max_epochs`` epoch-equivalents have been spent, if
    set. Initialized at zero unless ``x0`` is given. Aborts with
    :class:`DivergenceError` if the objective exceeds 1000x its initial value.
    """
    d = problem.d
    x_tilde = np.zeros(d) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    base = subproblem_budget(H, cfg.eta, cfg.rho)
    iters = max(1, math.ceil(base.iters * cfg.budget_multiplier))
    budget = SubproblemBudget(iters, base.gamma_ws, base.rho)
    trace = SolverTrace()
    counters = _Counters(problem.n, H.r)
    state = SolverState(
        x=x_tilde.copy(),
        y=x_tilde.copy(),
        z=x_tilde.copy(),
        x_tilde=x_tilde,
        full_grad=np.zeros(d),
        u_prev=x_tilde.copy(),  # u_{-1} := x0: first warm start degenerates to a plain prox step
        rng=split_rng(cfg.seed),
    )
    f0 = objective(problem, x_tilde)
    guard = 1e3 * f0 if f0 > 0 else math.inf

    for s in range(cfg.outer_iters):
        # Stage snapshot precedes the full-gradient refresh, so consecutive
        # snapshots bracket exactly one stage's work: 1 + 2bT/n + T*iters*r/n.
        trace.append(s, -1, counters.epoch_equiv, objective(problem, state.x_tilde),
                     counters.grad_evals, counters.sub_iters)
        state.full_grad = full_gradient(problem, state.x_tilde)
        counters.grad_evals += problem.n
        state.x = state.x_tilde.copy()
        state.z = state.x_tilde.copy()
        for k in range(cfg.epoch_len):
            inner_step(
                state, problem, H, profile, cfg, budget,
                trace=trace, counters=counters, outer=s, inner=k, guard=guard,
                capture=capture,
            )
        state.x_tilde = state.x.copy()
        if cfg.max_epochs is not None and counters.epoch_equiv >= cfg.max_epochs:
            s += 1
            break
    else:
        s = cfg.outer_iters
    trace.append(s, -1, counters.epoch_equiv, objective(problem, state.x_tilde),
                 counters.grad_evals, counters.sub_iters)
    return state.x_tilde, trace


def lyapunov_value(
    state: SolverState,
    x_star: np.ndarray,
    H: HessianModel,
    mu_hat: float,
    problem: Problem,
) -> float:
    """V_k = F(x_k) - F(x*) + (mu/2) ||z_k - x*||_H^2 (diagnostic only)."""
    dz = state.z - x_star
    return (
        objective(problem, state.x)
        - objective(problem, x_star)
        + 0.5 * mu_hat * float(np.dot(dz, apply_h(H, dz)))
    )
