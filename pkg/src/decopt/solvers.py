"""Iteration engines: adaptive primal-dual solvers, the fixed-parameter
oracle, the EXTRA baseline, and the synchronous run loop.

All engines share one round structure per iteration: evaluate each agent's
gradient once, exchange one m x d message block with neighbors (a single
multiplication by a graph-sparse matrix), and update. The adaptive engines
additionally exchange one scalar per agent (a global average for the
shared-stepsize variant, a neighborhood minimum for the local one); those
scalar rounds are counted separately.

States are plain dataclasses; step functions return fresh states so a run
is an explicit state machine and traces can be reconstructed exactly. One
run is strictly sequential (the synchronous-round semantics are part of
correctness); distinct runs share nothing mutable and may execute in
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import StepEvent, Trace, TraceRecorder
from .errors import (
    ConfigError,
    NoConvergentStepsizeError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .objectives import ProblemInstance
from .stepsize import (
    MODE_CONVEX,
    MODE_LOCAL,
    MODE_STRONGLY_CONVEX,
    LocalStepsizeState,
    StepsizeParams,
    StepsizeState,
    curvature_global,
    curvature_local,
    curvature_guard,
    local_candidate_strongly_convex,
    local_min_consensus,
    local_tilde,
    select_alpha_convex,
    select_alpha_strongly_convex,
)
from .topology import GossipMatrix, graph_laplacian_sqrt

__all__ = [
    "AdolfState",
    "AdolfLocalState",
    "CondatVuState",
    "ExtraState",
    "FixedStepParams",
    "ExtraParams",
    "StopRule",
    "adolf_init",
    "adolf_step",
    "adolf_local_init",
    "adolf_local_step",
    "condat_vu_init",
    "condat_vu_step",
    "extra_init",
    "extra_step",
    "run",
    "extra_grid_search",
    "DIVERGENCE_NORM",
]

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class FixedStepParams:
    """Constant (alpha, sigma, gamma) for the oracle and constant-mode runs."""

    alpha: float
    sigma: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.sigma <= 0 or self.gamma <= 0:
            raise ParameterError("fixed alpha, sigma, gamma must all be positive")


@dataclass(frozen=True)
class ExtraParams:
    """Fixed stepsize for the EXTRA baseline."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"EXTRA stepsize must be positive, got {self.alpha}")


@dataclass(frozen=True)
class StopRule:
    """Iteration budget plus an optional metric threshold."""

    max_iter: int
    metric: str | None = None
    threshold: float | None = None
    cadence: int = 1

    def __post_init__(self):
        if self.max_iter < 0:
            raise ParameterError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.cadence < 1:
            raise ParameterError(f"stop cadence must be >= 1, got {self.cadence}")
        if (self.metric is None) != (self.threshold is None):
            raise ParameterError("metric and threshold must be given together")


def _check_stack(x, problem: ProblemInstance, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.m, problem.d):
        raise ShapeError(
            f"{name} must have shape ({problem.m}, {problem.d}), got {x.shape}"
        )
    return x


def _secant_strong_convexity(grad_now, grad_prev, x_now, x_prev) -> float | None:
    dx = x_now - x_prev
    denom = float(np.sum(dx * dx))
    if denom == 0.0:
        return None
    return float(np.sum((grad_now - grad_prev) * dx) / denom)


# ---------------------------------------------------------------------------
# shared-stepsize adaptive engine


@dataclass
class AdolfState:
    """Iterates, dual, gradient cache, and stepsize bookkeeping after k rounds."""

    x_now: np.ndarray
    x_prev: np.ndarray
    dual: np.ndarray
    grad_prev: np.ndarray  # gradient at x_prev, reused by the curvature proxy
    step: StepsizeState
    sigma_prev: float
    k: int
    comm_vector: int
    comm_scalar: int
    l_last: float | None = None
    mu_last: float | None = None


def adolf_init(
    problem: ProblemInstance,
    gossip: GossipMatrix,
    x0: np.ndarray,
    x_minus1: np.ndarray | None = None,
    alpha0: float = 1e-3,
    sigma0: float = 1.0,
    gamma0: float = 1.0,
) -> AdolfState:
    """Initialization round: one dual ramp-up and one primal step.

    The dual picks up sigma0 alpha0 (I - W) ((1 + gamma0) X0 - gamma0 X^-1)
    starting from zero, so its columns sum to zero from the first round.
    """
    x0 = _check_stack(x0, problem, "x0")
    x_minus1 = x0 if x_minus1 is None else _check_stack(x_minus1, problem, "x_minus1")
    if alpha0 <= 0 or sigma0 <= 0 or gamma0 <= 0:
        raise ParameterError("alpha0, sigma0, gamma0 must be positive")
    w = gossip.shifted
    mix = (1.0 + gamma0) * x0 - gamma0 * x_minus1
    dual = sigma0 * alpha0 * (mix - w @ mix)
    grad0 = problem.stacked_gradient(x0)
    x1 = x0 - alpha0 * (grad0 + dual)
    return AdolfState(
        x_now=x1,
        x_prev=x0,
        dual=dual,
        grad_prev=grad0,
        step=StepsizeState(alpha_prev=alpha0, gamma_prev=gamma0, k=1),
        sigma_prev=sigma0,
        k=1,
        comm_vector=1,
        comm_scalar=0,
    )


def adolf_step(
    state: AdolfState,
    problem: ProblemInstance,
    gossip: GossipMatrix,
    params: StepsizeParams | FixedStepParams,
) -> AdolfState:
    """One synchronous round: curvature average, selection, dual+primal update."""
    if state.k < 1:
        raise ParameterError("adolf_step needs an initialized state (k >= 1)")
    w = gossip.shifted
    grad_now = problem.stacked_gradient(state.x_now)
    l_k = curvature_global(grad_now, state.grad_prev, state.x_now, state.x_prev)
    mu_k = _secant_strong_convexity(grad_now, state.grad_prev, state.x_now, state.x_prev)

    if isinstance(params, FixedStepParams):
        alpha, gamma, sigma_k = params.alpha, params.gamma, params.sigma
        sigma_alpha = sigma_k * alpha
        scalar_rounds = 0  # selection disabled: no global average needed
    elif params.mode == MODE_CONVEX:
        sigma_k = params.sigma.sigma_bar
        alpha, gamma = select_alpha_convex(l_k, sigma_k, state.step, params)
        sigma_alpha = sigma_k * alpha
        scalar_rounds = 1
    elif params.mode == MODE_STRONGLY_CONVEX:
        alpha, gamma = select_alpha_strongly_convex(l_k, state.step, params)
        sigma_k = params.sigma.sigma / alpha**2
        sigma_alpha = params.sigma.sigma / alpha
        scalar_rounds = 1
    else:
        raise ConfigError(f"adolf_step cannot run in mode {params.mode!r}")

    mix = (1.0 + gamma) * state.x_now - gamma * state.x_prev
    dual = state.dual + sigma_alpha * (mix - w @ mix)
    x_next = state.x_now - alpha * (grad_now + dual)
    return AdolfState(
        x_now=x_next,
        x_prev=state.x_now,
        dual=dual,
        grad_prev=grad_now,
        step=StepsizeState(alpha_prev=alpha, gamma_prev=gamma, k=state.k + 1),
        sigma_prev=sigma_k,
        k=state.k + 1,
        comm_vector=state.comm_vector + 1,
        comm_scalar=state.comm_scalar + scalar_rounds,
        l_last=l_k,
        mu_last=mu_k,
    )


# ---------------------------------------------------------------------------
# per-agent adaptive engine


@dataclass
class AdolfLocalState:
    """Like AdolfState but with per-agent stepsize vectors."""

    x_now: np.ndarray
    x_prev: np.ndarray
    dual: np.ndarray
    grad_prev: np.ndarray
    local_step: LocalStepsizeState
    k: int
    comm_vector: int
    comm_scalar: int
    l_last: float | None = None
    mu_last: float | None = None
    l_local_last: np.ndarray | None = None


def _local_sigma_alpha(alpha_vec: np.ndarray, params: StepsizeParams) -> np.ndarray:
    """Row scaling sigma_i alpha_i of the dual increment."""
    if params.strongly_convex_sigma:
        return params.sigma.sigma / alpha_vec
    return params.sigma.sigma_bar * alpha_vec


def adolf_local_init(
    problem: ProblemInstance,
    gossip: GossipMatrix,
    x0: np.ndarray,
    x_minus1: np.ndarray | None = None,
    params: StepsizeParams | None = None,
) -> AdolfLocalState:
    """Initialization with uniform Lambda0 = alpha0 I and Gamma0 = I."""
    if params is None or params.mode != MODE_LOCAL:
        raise ConfigError("adolf_local_init needs StepsizeParams in local mode")
    x0 = _check_stack(x0, problem, "x0")
    x_minus1 = x0 if x_minus1 is None else _check_stack(x_minus1, problem, "x_minus1")
    w = gossip.shifted
    m = problem.m
    alpha_vec = np.full(m, params.alpha0)
    scaled = _local_sigma_alpha(alpha_vec, params)[:, None] * (2.0 * x0 - x_minus1)
    dual = scaled - w @ scaled
    grad0 = problem.stacked_gradient(x0)
    x1 = x0 - params.alpha0 * (grad0 + dual)
    return AdolfLocalState(
        x_now=x1,
        x_prev=x0,
        dual=dual,
        grad_prev=grad0,
        local_step=LocalStepsizeState.uniform(m, params.alpha0),
        k=1,
        comm_vector=1,
        comm_scalar=0,
    )


def adolf_local_step(
    state: AdolfLocalState,
    problem: ProblemInstance,
    gossip: GossipMatrix,
    params: StepsizeParams,
) -> AdolfLocalState:
    """One round: own-curvature candidates, decrease rule, min-consensus, update.

    The diagonal scaling Sigma_k Lambda_k applies before the mixing matrix,
    so each agent scales its own contribution and then gossips once.
    """
    if params.mode != MODE_LOCAL:
        raise ConfigError("adolf_local_step needs StepsizeParams in local mode")
    if state.k < 1:
        raise ParameterError("adolf_local_step needs an initialized state (k >= 1)")
    w = gossip.shifted
    grad_now = problem.stacked_gradient(state.x_now)
    l_vec = curvature_local(grad_now, state.grad_prev, state.x_now, state.x_prev)
    l_k = curvature_global(grad_now, state.grad_prev, state.x_now, state.x_prev)
    mu_k = _secant_strong_convexity(grad_now, state.grad_prev, state.x_now, state.x_prev)

    prev = state.local_step
    tilde = np.empty(problem.m)
    for i in range(problem.m):
        if params.strongly_convex_sigma:
            hat = local_candidate_strongly_convex(l_vec[i], params.sigma.sigma, params.c1)
        else:
            hat = curvature_guard(l_vec[i], params.sigma.sigma_bar, params.c1)
        tilde[i] = local_tilde(hat, prev.alpha_prev[i], prev.gamma_prev[i], params, state.k)
    alpha_vec, gamma_vec = local_min_consensus(tilde, gossip.neighbor_mask(), prev.alpha_prev)

    mix = (1.0 + gamma_vec)[:, None] * state.x_now - gamma_vec[:, None] * state.x_prev
    scaled = _local_sigma_alpha(alpha_vec, params)[:, None] * mix
    dual = state.dual + (scaled - w @ scaled)
    x_next = state.x_now - alpha_vec[:, None] * (grad_now + dual)
    return AdolfLocalState(
        x_now=x_next,
        x_prev=state.x_now,
        dual=dual,
        grad_prev=grad_now,
        local_step=LocalStepsizeState(alpha_prev=alpha_vec, gamma_prev=gamma_vec, k=state.k + 1),
        k=state.k + 1,
        comm_vector=state.comm_vector + 1,
        comm_scalar=state.comm_scalar + 1,
        l_last=l_k,
        mu_last=mu_k,
        l_local_last=l_vec,
    )


# ---------------------------------------------------------------------------
# fixed-parameter primal-dual oracle


@dataclass
class CondatVuState:
    """Oracle state; keeps the explicit dual Y and the operator sqrt(I - W)."""

    x_now: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    l_op: np.ndarray
    params: FixedStepParams
    k: int
    comm_vector: int


def condat_vu_init(
    problem: ProblemInstance,
    gossip: GossipMatrix,
    x0: np.ndarray,
    x_minus1: np.ndarray | None = None,
    params: FixedStepParams = FixedStepParams(alpha=1e-2),
) -> CondatVuState:
    """Run the first oracle iteration from Y0 = 0."""
    x0 = _check_stack(x0, problem, "x0")
    x_minus1 = x0 if x_minus1 is None else _check_stack(x_minus1, problem, "x_minus1")
    l_op = graph_laplacian_sqrt(gossip)
    state = CondatVuState(
        x_now=x0, x_prev=x_minus1, y=np.zeros_like(x0), l_op=l_op, params=params,
        k=0, comm_vector=0,
    )
    return condat_vu_step(state, problem)


def condat_vu_step(state: CondatVuState, problem: ProblemInstance) -> CondatVuState:
    """One oracle iteration; the conjugate prox of the {0}-indicator is identity."""
    p = state.params
    mix = (1.0 + p.gamma) * state.x_now - p.gamma * state.x_prev
    y_next = state.y + p.sigma * p.alpha * (state.l_op @ mix)
    grad_now = problem.stacked_gradient(state.x_now)
    x_next = state.x_now - p.alpha * (grad_now + state.l_op @ y_next)
    return CondatVuState(
        x_now=x_next,
        x_prev=state.x_now,
        y=y_next,
        l_op=state.l_op,
        params=p,
        k=state.k + 1,
        comm_vector=state.comm_vector + 1,
    )


# ---------------------------------------------------------------------------
# EXTRA baseline


@dataclass
class ExtraState:
    """Two-term recursion state; caches the mixed iterate to keep one gossip."""

    x_now: np.ndarray
    x_prev: np.ndarray
    grad_prev: np.ndarray
    w_x_prev: np.ndarray  # W @ x_prev from the previous round
    alpha: float
    k: int
    comm_vector: int
    l_last: float | None = None
    mu_last: float | None = None


def extra_init(
    problem: ProblemInstance,
    gossip: GossipMatrix,
    x0: np.ndarray,
    params: ExtraParams,
) -> ExtraState:
    """First round is mixed gradient descent: X1 = W X0 - alpha grad F(X0)."""
    x0 = _check_stack(x0, problem, "x0")
    wx0 = gossip.shifted @ x0
    grad0 = problem.stacked_gradient(x0)
    x1 = wx0 - params.alpha * grad0
    return ExtraState(
        x_now=x1, x_prev=x0, grad_prev=grad0, w_x_prev=wx0,
        alpha=params.alpha, k=1, comm_vector=1,
    )


def extra_step(state: ExtraState, problem: ProblemInstance, gossip: GossipMatrix) -> ExtraState:
    """X^{k+1} = (I + W) X^k - W_bar X^{k-1} - alpha (grad^k - grad^{k-1}).

    W_bar = (I + W) / 2 is the second mixing matrix; applying it to the
    cached W X^{k-1} keeps the round at a single gossip multiplication.
    """
    grad_now = problem.stacked_gradient(state.x_now)
    wx_now = gossip.shifted @ state.x_now
    l_k = curvature_global(grad_now, state.grad_prev, state.x_now, state.x_prev)
    mu_k = _secant_strong_convexity(grad_now, state.grad_prev, state.x_now, state.x_prev)
    x_next = (
        state.x_now
        + wx_now
        - 0.5 * (state.x_prev + state.w_x_prev)
        - state.alpha * (grad_now - state.grad_prev)
    )
    return ExtraState(
        x_now=x_next,
        x_prev=state.x_now,
        grad_prev=grad_now,
        w_x_prev=wx_now,
        alpha=state.alpha,
        k=state.k + 1,
        comm_vector=state.comm_vector + 1,
        l_last=l_k,
        mu_last=mu_k,
    )


# ---------------------------------------------------------------------------
# run loop


def _is_diverged(x: np.ndarray, dual: np.ndarray | None = None) -> bool:
    if not np.all(np.isfinite(x)):
        return True
    if np.linalg.norm(x) > DIVERGENCE_NORM:
        return True
    if dual is not None and not np.all(np.isfinite(dual)):
        return True
    return False


def _event_init(x0, x_minus1, x1, alpha, gamma, sigma, sigma_alpha, d1, y1=None) -> StepEvent:
    return StepEvent(
        k=0, x_k=x0, x_prev=x_minus1, x_next=x1,
        alpha=alpha, gamma=gamma, sigma=sigma, sigma_alpha=sigma_alpha,
        l_k=None, mu_k=None, comm_vector=0, comm_scalar=0, d_next=d1, y_next=y1,
    )


class _AdolfEngine:
    def __init__(self, problem, gossip, params, x0, x_minus1):
        self.problem, self.gossip, self.params = problem, gossip, params
        if isinstance(params, FixedStepParams):
            alpha0, sigma0, gamma0 = params.alpha, params.sigma, params.gamma
        else:
            if params.mode not in (MODE_CONVEX, MODE_STRONGLY_CONVEX):
                raise ConfigError(f"adolf engine cannot run in mode {params.mode!r}")
            alpha0, sigma0, gamma0 = params.alpha0, params.sigma0(), 1.0
        self.state = adolf_init(problem, gossip, x0, x_minus1, alpha0, sigma0, gamma0)
        self.init_event = _event_init(
            x0, x0 if x_minus1 is None else x_minus1, self.state.x_now,
            alpha=alpha0, gamma=gamma0, sigma=sigma0, sigma_alpha=sigma0 * alpha0,
            d1=self.state.dual,
        )

    def advance(self) -> StepEvent:
        old = self.state
        new = adolf_step(old, self.problem, self.gossip, self.params)
        self.state = new
        sigma_alpha = (
            self.params.sigma.sigma / new.step.alpha_prev
            if isinstance(self.params, StepsizeParams) and self.params.strongly_convex_sigma
            else new.sigma_prev * new.step.alpha_prev
        )
        return StepEvent(
            k=old.k, x_k=old.x_now, x_prev=old.x_prev, x_next=new.x_now,
            alpha=new.step.alpha_prev, gamma=new.step.gamma_prev, sigma=new.sigma_prev,
            sigma_alpha=sigma_alpha, l_k=new.l_last, mu_k=new.mu_last,
            comm_vector=old.comm_vector, comm_scalar=old.comm_scalar, d_next=new.dual,
        )


class _AdolfLocalEngine:
    def __init__(self, problem, gossip, params, x0, x_minus1):
        if not isinstance(params, StepsizeParams) or params.mode != MODE_LOCAL:
            raise ConfigError("adolf_local needs StepsizeParams in local mode")
        self.problem, self.gossip, self.params = problem, gossip, params
        self.state = adolf_local_init(problem, gossip, x0, x_minus1, params)
        sigma0_alpha0 = float(_local_sigma_alpha(np.array([params.alpha0]), params)[0])
        sigma0 = sigma0_alpha0 / params.alpha0
        self.init_event = _event_init(
            x0, x0 if x_minus1 is None else x_minus1, self.state.x_now,
            alpha=np.full(problem.m, params.alpha0), gamma=np.ones(problem.m),
            sigma=sigma0, sigma_alpha=np.full(problem.m, sigma0_alpha0),
            d1=self.state.dual,
        )

    def advance(self) -> StepEvent:
        old = self.state
        new = adolf_local_step(old, self.problem, self.gossip, self.params)
        self.state = new
        alpha_vec = new.local_step.alpha_prev
        return StepEvent(
            k=old.k, x_k=old.x_now, x_prev=old.x_prev, x_next=new.x_now,
            alpha=alpha_vec, gamma=new.local_step.gamma_prev, sigma=None,
            sigma_alpha=_local_sigma_alpha(alpha_vec, self.params),
            l_k=new.l_last, mu_k=new.mu_last,
            comm_vector=old.comm_vector, comm_scalar=old.comm_scalar, d_next=new.dual,
        )


class _CondatVuEngine:
    def __init__(self, problem, gossip, params, x0, x_minus1):
        if not isinstance(params, FixedStepParams):
            raise ConfigError("condat_vu needs FixedStepParams")
        self.problem = problem
        self.state = condat_vu_init(problem, gossip, x0, x_minus1, params)
        p = params
        self.init_event = _event_init(
            x0, x0 if x_minus1 is None else x_minus1, self.state.x_now,
            alpha=p.alpha, gamma=p.gamma, sigma=p.sigma, sigma_alpha=p.sigma * p.alpha,
            d1=None, y1=self.state.y,
        )

    def advance(self) -> StepEvent:
        old = self.state
        new = condat_vu_step(old, self.problem)
        self.state = new
        p = new.params
        return StepEvent(
            k=old.k, x_k=old.x_now, x_prev=old.x_prev, x_next=new.x_now,
            alpha=p.alpha, gamma=p.gamma, sigma=p.sigma, sigma_alpha=p.sigma * p.alpha,
            l_k=None, mu_k=None,
            comm_vector=old.comm_vector, comm_scalar=0, y_next=new.y,
        )


class _ExtraEngine:
    def __init__(self, problem, gossip, params, x0, x_minus1):
        if not isinstance(params, ExtraParams):
            raise ConfigError("extra needs ExtraParams")
        self.problem, self.gossip = problem, gossip
        self.state = extra_init(problem, gossip, x0, params)
        self.init_event = _event_init(
            x0, x0, self.state.x_now,
            alpha=params.alpha, gamma=1.0, sigma=None, sigma_alpha=None, d1=None,
        )

    def advance(self) -> StepEvent:
        old = self.state
        new = extra_step(old, self.problem, self.gossip)
        self.state = new
        return StepEvent(
            k=old.k, x_k=old.x_now, x_prev=old.x_prev, x_next=new.x_now,
            alpha=new.alpha, gamma=1.0, sigma=None, sigma_alpha=None,
            l_k=new.l_last, mu_k=new.mu_last,
            comm_vector=old.comm_vector, comm_scalar=0,
        )


_ENGINES = {
    "adolf": _AdolfEngine,
    "adolf_local": _AdolfLocalEngine,
    "condat_vu": _CondatVuEngine,
    "extra": _ExtraEngine,
}


def run(
    algorithm: str,
    problem: ProblemInstance,
    gossip: GossipMatrix,
    params,
    stop: StopRule,
    recorder: TraceRecorder,
    x0: np.ndarray,
    x_minus1: np.ndarray | None = None,
) -> Trace:
    """Drive one algorithm under a stop rule, recording diagnostics.

    Iteration 0 is the initialization update; the trace row at index k
    always describes the iterate after k communication rounds. Divergence
    (non-finite values or Frobenius norm above 1e12) ends the run with
    status "diverged" instead of raising.
    """
    if algorithm not in _ENGINES:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    x0 = _check_stack(x0, problem, "x0")
    if stop.metric is not None and recorder.metric_value(stop.metric, x0) is None:
        raise ConfigError(f"stop metric {stop.metric!r} needs saddle diagnostics")

    if stop.max_iter == 0:
        recorder.finalize(x0, k=0, comm_vector=0, comm_scalar=0)
        recorder.trace.status = "budget"
        return recorder.trace

    engine = _ENGINES[algorithm](problem, gossip, params, x0, x_minus1)
    recorder.observe(engine.init_event)
    status = "budget"

    def stopped(k: int) -> bool:
        if stop.metric is None:
            return False
        if k % stop.cadence != 0 and k != stop.max_iter:
            return False
        value = recorder.metric_value(stop.metric, engine.state.x_now)
        return value is not None and value <= stop.threshold

    state_dual = getattr(engine.state, "dual", None)
    if _is_diverged(engine.state.x_now, state_dual):
        status = "diverged"
    elif stopped(1):
        status = "converged"
    else:
        while engine.state.k < stop.max_iter:
            try:
                event = engine.advance()
            except NumericError:
                status = "diverged"
                break
            recorder.observe(event)
            dual = getattr(engine.state, "dual", None)
            if _is_diverged(engine.state.x_now, dual):
                status = "diverged"
                break
            if stopped(engine.state.k):
                status = "converged"
                break

    state = engine.state
    recorder.finalize(
        state.x_now, k=state.k, comm_vector=state.comm_vector,
        comm_scalar=getattr(state, "comm_scalar", 0),
    )
    recorder.trace.status = status
    return recorder.trace


def extra_grid_search(
    problem: ProblemInstance,
    gossip: GossipMatrix,
    grid,
    budget: int,
    recorder_factory,
    metric: str = "distance_sq",
    threshold: float | None = None,
    x0: np.ndarray | None = None,
) -> tuple[float, Trace]:
    """Run EXTRA at every grid stepsize; keep the best non-diverged run.

    "Best" means smallest terminal metric (ties go to the larger stepsize);
    a threshold, when given, lets runs stop early. recorder_factory must
    produce a fresh TraceRecorder per run.
    """
    grid = sorted(float(a) for a in grid)
    if not grid or any(a <= 0 for a in grid):
        raise ParameterError("grid must be a nonempty list of positive stepsizes")
    stop = StopRule(max_iter=budget, metric=metric if threshold is not None else None,
                    threshold=threshold, cadence=10 if threshold is not None else 1)
    if x0 is None:
        x0 = np.zeros((problem.m, problem.d))
    best: tuple[float, Trace] | None = None
    best_value = np.inf
    for alpha in grid:
        recorder = recorder_factory()
        trace = run("extra", problem, gossip, ExtraParams(alpha), stop, recorder, x0)
        if trace.status == "diverged":
            continue
        value = getattr(trace.final, metric)
        if value is None or not np.isfinite(value):
            continue
        if value <= best_value:
            best_value = value
            best = (alpha, trace)
    if best is None:
        raise NoConvergentStepsizeError(
            f"every stepsize in the grid of {len(grid)} diverged"
        )
    return best
