"""Optimality metrics, Lyapunov bookkeeping, and trace recording.

Everything here is anchored to a saddle point of the consensus Lagrangian
L(X, Y) = F(X) + <L_op X, Y>: the primal stack X* repeats the minimizer of
the averaged objective, and Y* is the minimum-norm solution of
L_op Y* = -grad F(X*). The primal gap, the merit function (primal gap plus
consensus penalty), and the trajectory Lyapunov function are all measured
against that anchor.

The trace recorder consumes per-iteration events emitted by the solvers,
integrates the shadow dual variable Y (so the Lyapunov value can be
evaluated without the solvers carrying Y themselves), accumulates the
gamma-weighted ergodic average, and writes one record per cadence tick.

Metric functions are pure and read-only over iterate snapshots; a recorder
instance belongs to exactly one run and is not safe to share across
concurrent runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientDataError, NumericError, ParameterError
from .objectives import ProblemInstance, centralized_minimize, ridge_exact_solution
from .objectives import RidgeObjective
from .topology import GossipMatrix, graph_laplacian_sqrt, laplacian_pinv_sqrt

__all__ = [
    "SaddlePoint",
    "compute_saddle",
    "primal_gap",
    "merit",
    "lyapunov",
    "descent_zeta",
    "ErgodicAccumulator",
    "ergodic_update",
    "RestrictedConstants",
    "classical_stepsize_bound",
    "RateFit",
    "rate_fit",
    "TraceRecord",
    "Trace",
    "StepEvent",
    "TraceRecorder",
    "CSV_HEADER",
]

CSV_HEADER = [
    "k",
    "comm_vector",
    "comm_scalar",
    "objective_gap",
    "distance_sq",
    "consensus_err",
    "merit_ergodic",
    "lyapunov",
    "alpha_min",
    "alpha_max",
    "gamma",
    "L_k",
]

DUAL_COLSUM_TOL = 1e-9
SHADOW_CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True)
class SaddlePoint:
    """Reference (X*, Y*) with cached quantities used by every metric."""

    x_star: np.ndarray  # minimizer of the averaged objective, (d,)
    f_star: float  # averaged objective at x_star
    x_stack: np.ndarray  # (m, d), every row x_star
    y_star: np.ndarray  # (m, d), minimum-norm dual
    d_star: np.ndarray  # L_op @ y_star
    stationarity_residual: float  # ||grad F(X*) + L_op Y*||_F

    @property
    def f_stack_star(self) -> float:
        """F(X*) = m * f(x*)."""
        return self.x_stack.shape[0] * self.f_star


def compute_saddle(
    problem: ProblemInstance, gossip: GossipMatrix, tol: float = 1e-12
) -> SaddlePoint:
    """Solve the averaged problem to high accuracy and lift to a saddle point.

    Ridge instances use the exact normal-equation solve; everything else runs
    the accelerated reference solver to gradient norm tol. The dual anchor is
    the minimum-norm Y* = -pinv(L_op) grad F(X*) after projecting the rows of
    the gradient stack off the consensus direction.
    """
    if all(isinstance(o, RidgeObjective) for o in problem.objectives):
        x_star = ridge_exact_solution(problem)
    else:
        x_star = centralized_minimize(problem, tol=tol)
    m = problem.m
    x_stack = np.tile(x_star, (m, 1))
    grad_stack = problem.stacked_gradient(x_stack)
    perp = grad_stack - grad_stack.mean(axis=0, keepdims=True)
    pinv = laplacian_pinv_sqrt(gossip)
    y_star = -pinv @ perp
    l_op = graph_laplacian_sqrt(gossip)
    d_star = l_op @ y_star
    residual = float(np.linalg.norm(grad_stack + d_star))
    if residual > max(1e-6, np.sqrt(m) * 10 * tol * (1.0 + np.linalg.norm(grad_stack))):
        raise NumericError(f"saddle stationarity residual too large: {residual:.3e}")
    return SaddlePoint(
        x_star=x_star,
        f_star=problem.average_value(x_star),
        x_stack=x_stack,
        y_star=y_star,
        d_star=d_star,
        stationarity_residual=residual,
    )


def primal_gap(problem: ProblemInstance, x_stack: np.ndarray, saddle: SaddlePoint) -> float:
    """Lagrangian gap F(X) - F(X*) + <L_op Y*, X - X*>, nonnegative by convexity."""
    diff = x_stack - saddle.x_stack
    return float(
        problem.stacked_value(x_stack) - saddle.f_stack_star + np.sum(saddle.d_star * diff)
    )


def merit(
    problem: ProblemInstance, x_stack: np.ndarray, saddle: SaddlePoint, l_op: np.ndarray
) -> float:
    """Primal gap plus consensus penalty ||L_op X||^2; zero exactly at solutions."""
    lx = l_op @ x_stack
    return primal_gap(problem, x_stack, saddle) + float(np.sum(lx * lx))


def lyapunov(
    problem: ProblemInstance,
    x_now: np.ndarray,
    x_prev: np.ndarray,
    y: np.ndarray,
    saddle: SaddlePoint,
    sigma_k: float,
    gamma_k: float,
    alpha_k: float,
) -> float:
    """Trajectory Lyapunov value at index k.

    Distance to the saddle in both variables, plus the momentum term
    ||X^k - X^{k-1}||^2 / 2, plus 2 gamma_k alpha_k times the primal gap at
    the previous iterate.
    """
    dx = x_now - saddle.x_stack
    dy = y - saddle.y_star
    return float(
        np.sum(dx * dx)
        + np.sum(dy * dy) / sigma_k
        + 0.5 * np.sum((x_now - x_prev) ** 2)
        + 2.0 * gamma_k * alpha_k * primal_gap(problem, x_prev, saddle)
    )


def descent_zeta(l_k: float, sigma_k: float, c1: float) -> float:
    """Coupling weight that makes the two curvature-guard terms coincide."""
    return 0.5 * (np.sqrt(l_k * l_k + 2.0 * sigma_k / c1) - l_k)


@dataclass(frozen=True)
class ErgodicAccumulator:
    """Running gamma-weighted average of iterates from a start index."""

    start_index: int = 0
    weighted_sum: np.ndarray | None = None
    theta: float = 0.0

    @property
    def average(self) -> np.ndarray:
        if self.theta <= 0.0 or self.weighted_sum is None:
            raise ParameterError("ergodic average undefined before any term is accumulated")
        return self.weighted_sum / self.theta


def ergodic_update(acc: ErgodicAccumulator, x_t: np.ndarray, gamma_t: float) -> ErgodicAccumulator:
    if gamma_t <= 0:
        raise ParameterError(f"ergodic weight must be positive, got {gamma_t}")
    ws = gamma_t * x_t if acc.weighted_sum is None else acc.weighted_sum + gamma_t * x_t
    return replace(acc, weighted_sum=ws, theta=acc.theta + gamma_t)


@dataclass
class RestrictedConstants:
    """Trajectory estimates of the restricted smoothness and convexity.

    l_tilde_hat is a lower estimate of the restricted Lipschitz constant
    (max observed secant), mu_tilde_hat an upper estimate of the restricted
    strong-convexity constant (min observed secant inner product ratio).
    """

    l_tilde_hat: float = 0.0
    mu_tilde_hat: float = np.inf

    def update(self, l_k: float | None, mu_k: float | None) -> None:
        if l_k is not None:
            self.l_tilde_hat = max(self.l_tilde_hat, l_k)
        if mu_k is not None:
            self.mu_tilde_hat = min(self.mu_tilde_hat, max(mu_k, 0.0))

    @property
    def defined(self) -> bool:
        return self.l_tilde_hat > 0.0 and np.isfinite(self.mu_tilde_hat)


def classical_stepsize_bound(l_const: float, sigma: float, w_tilde_norm: float) -> float:
    """Largest stepsize allowed by the network-coupled classical condition.

    Positive root of sigma * ||I - W_tilde|| * a^2 + (L/2) a - 1 = 0; kept
    for conservativeness comparisons against the network-free guard.
    """
    if l_const <= 0 or sigma <= 0:
        raise ParameterError("classical bound needs positive L and sigma")
    if not (0.0 < w_tilde_norm <= 2.0):
        raise ParameterError(f"||I - W_tilde|| must lie in (0, 2], got {w_tilde_norm}")
    q = sigma * w_tilde_norm
    return float((-l_const / 2.0 + np.sqrt(l_const**2 / 4.0 + 4.0 * q)) / (2.0 * q))


@dataclass(frozen=True)
class RateFit:
    """Log-linear and log-log fits of a metric tail."""

    kind: str  # "linear" (geometric) or "sublinear" (power)
    geometric_slope: float
    geometric_r2: float
    power_slope: float
    power_r2: float

    @property
    def coefficient(self) -> float:
        return self.geometric_slope if self.kind == "linear" else self.power_slope


def _least_squares_fit(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def rate_fit(trace: "Trace", metric: str, window: tuple[int, int]) -> RateFit:
    """Fit log(metric) against k and against log(k) over a window of iterations.

    Uses only records with k inside the window and a strictly positive
    metric value; needs at least three such points.
    """
    lo, hi = window
    ks, vals = [], []
    for rec in trace.records:
        v = getattr(rec, metric)
        if v is not None and lo <= rec.k <= hi and v > 0.0:
            ks.append(rec.k)
            vals.append(v)
    if len(ks) < 3:
        raise InsufficientDataError(
            f"need at least 3 positive {metric} points in [{lo}, {hi}], got {len(ks)}"
        )
    ks_arr = np.asarray(ks, dtype=float)
    log_vals = np.log(np.asarray(vals))
    geo_slope, geo_r2 = _least_squares_fit(ks_arr, log_vals)
    pos = ks_arr > 0
    if np.count_nonzero(pos) >= 3:
        pow_slope, pow_r2 = _least_squares_fit(np.log(ks_arr[pos]), log_vals[pos])
    else:
        pow_slope, pow_r2 = 0.0, -np.inf
    kind = "linear" if geo_r2 >= pow_r2 else "sublinear"
    return RateFit(kind, geo_slope, geo_r2, pow_slope, pow_r2)


@dataclass(frozen=True)
class TraceRecord:
    """One diagnostics row; None marks fields that were not computable."""

    k: int
    comm_vector: int
    comm_scalar: int
    objective_gap: float | None
    distance_sq: float | None
    consensus_err: float
    merit_ergodic: float | None
    lyapunov: float | None
    alpha_min: float | None
    alpha_max: float | None
    gamma: float | None
    L_k: float | None

    def csv_row(self) -> list[str]:
        out = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            out.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
        return out


@dataclass
class Trace:
    """Full run history plus run-level annotations."""

    records: list[TraceRecord] = field(default_factory=list)
    status: str = "budget"  # converged | budget | diverged
    consensus_iteration: int | None = None  # local runs: first k with equal stepsizes
    alpha_floor: float | None = None  # smallest per-agent stepsize seen
    dual_colsum_max: float = 0.0  # max relative column-sum drift of D
    shadow_residual_max: float = 0.0  # max relative ||L Y - D||
    restricted: RestrictedConstants = field(default_factory=RestrictedConstants)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(self.to_csv())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in self.records:
            writer.writerow(rec.csv_row())
        return buf.getvalue()


@dataclass(frozen=True)
class StepEvent:
    """What one solver iteration tells the recorder.

    Index k = 0 is the initialization update. x_k and x_prev are the
    iterates entering the update, x_next the produced one. alpha/gamma may
    be per-agent vectors; sigma is the scalar dual scale when one exists.
    sigma_alpha is the row scaling of the dual increment (sigma_k alpha_k,
    scalar or per-agent), used to integrate the shadow dual. comm counts are
    the rounds consumed to REACH x_k.
    """

    k: int
    x_k: np.ndarray
    x_prev: np.ndarray
    x_next: np.ndarray
    alpha: float | np.ndarray
    gamma: float | np.ndarray
    sigma: float | None
    sigma_alpha: float | np.ndarray | None
    l_k: float | None
    mu_k: float | None
    comm_vector: int
    comm_scalar: int
    d_next: np.ndarray | None = None
    y_next: np.ndarray | None = None  # exact dual from the oracle, if any

    @property
    def alpha_min(self) -> float:
        return float(np.min(self.alpha))

    @property
    def alpha_max(self) -> float:
        return float(np.max(self.alpha))

    @property
    def gamma_scalar(self) -> float:
        return float(np.min(self.gamma))


class TraceRecorder:
    """Accumulates a Trace from solver step events.

    Maintains the shadow dual Y integrated from the same increments as D
    (saddle-aware metrics need it), the ergodic average, per-agent stepsize
    consensus tracking, and the running dual-feasibility residuals.
    """

    def __init__(
        self,
        problem: ProblemInstance,
        l_op: np.ndarray,
        saddle: SaddlePoint | None = None,
        cadence: int = 1,
    ):
        if cadence < 1:
            raise ParameterError(f"diagnostics cadence must be >= 1, got {cadence}")
        self.problem = problem
        self.l_op = l_op
        self.saddle = saddle
        self.cadence = cadence
        self.trace = Trace()
        self._y = None  # shadow dual, lazily sized
        self._ergodic = ErgodicAccumulator()
        self._last_nonconsensual = -1
        self._saw_vector_alpha = False

    # -- metric helpers -------------------------------------------------

    def metric_value(self, name: str, x_stack: np.ndarray) -> float | None:
        if name == "consensus_err":
            lx = self.l_op @ x_stack
            return float(np.sum(lx * lx))
        if self.saddle is None:
            return None
        if name == "distance_sq":
            d = x_stack - self.saddle.x_stack
            return float(np.sum(d * d))
        if name == "objective_gap":
            return float(
                np.mean(self.problem.average_values_at_rows(x_stack)) - self.saddle.f_star
            )
        if name == "merit":
            return merit(self.problem, x_stack, self.saddle, self.l_op)
        raise ParameterError(f"unknown metric {name!r}")

    # -- event intake ----------------------------------------------------

    def observe(self, event: StepEvent) -> None:
        alpha = np.asarray(event.alpha, dtype=float)
        if alpha.ndim > 0:
            self._saw_vector_alpha = True
            spread = float(alpha.max() - alpha.min())
            if spread > 0.0:
                self._last_nonconsensual = event.k
        floor = float(np.min(alpha))
        if self.trace.alpha_floor is None or floor < self.trace.alpha_floor:
            self.trace.alpha_floor = floor
        self.trace.restricted.update(event.l_k, event.mu_k)

        record_now = event.k % self.cadence == 0
        if record_now:
            self._emit_row(event)
        self._advance_shadow(event)
        if event.d_next is not None:
            col = np.abs(event.d_next.sum(axis=0)).max()
            rel = col / (1.0 + np.linalg.norm(event.d_next))
            self.trace.dual_colsum_max = max(self.trace.dual_colsum_max, float(rel))
            if record_now and self._y is not None:
                resid = np.linalg.norm(self.l_op @ self._y - event.d_next)
                rel = resid / (1.0 + np.linalg.norm(event.d_next))
                self.trace.shadow_residual_max = max(self.trace.shadow_residual_max, float(rel))
        self._ergodic = ergodic_update(self._ergodic, event.x_k, event.gamma_scalar)

    def finalize(self, x_final: np.ndarray, k: int, comm_vector: int, comm_scalar: int) -> Trace:
        """Emit the terminal row (no iteration data) and close the trace."""
        self.trace.records.append(
            TraceRecord(
                k=k,
                comm_vector=comm_vector,
                comm_scalar=comm_scalar,
                objective_gap=self.metric_value("objective_gap", x_final),
                distance_sq=self.metric_value("distance_sq", x_final),
                consensus_err=self.metric_value("consensus_err", x_final),
                merit_ergodic=self._ergodic_merit(),
                lyapunov=None,
                alpha_min=None,
                alpha_max=None,
                gamma=None,
                L_k=None,
            )
        )
        if self._saw_vector_alpha:
            self.trace.consensus_iteration = self._last_nonconsensual + 1
        return self.trace

    # -- internals -------------------------------------------------------

    def _ergodic_merit(self) -> float | None:
        if self.saddle is None or self._ergodic.theta <= 0.0:
            return None
        return merit(self.problem, self._ergodic.average, self.saddle, self.l_op)

    def _emit_row(self, event: StepEvent) -> None:
        lyap = None
        if (
            self.saddle is not None
            and event.sigma is not None
            and np.asarray(event.alpha).ndim == 0
        ):
            y_k = self._y if self._y is not None else np.zeros_like(event.x_k)
            lyap = lyapunov(
                self.problem,
                event.x_k,
                event.x_prev,
                y_k,
                self.saddle,
                sigma_k=event.sigma,
                gamma_k=float(event.gamma),
                alpha_k=float(event.alpha),
            )
        self.trace.records.append(
            TraceRecord(
                k=event.k,
                comm_vector=event.comm_vector,
                comm_scalar=event.comm_scalar,
                objective_gap=self.metric_value("objective_gap", event.x_k),
                distance_sq=self.metric_value("distance_sq", event.x_k),
                consensus_err=self.metric_value("consensus_err", event.x_k),
                merit_ergodic=self._ergodic_merit(),
                lyapunov=lyap,
                alpha_min=event.alpha_min,
                alpha_max=event.alpha_max,
                gamma=event.gamma_scalar,
                L_k=event.l_k,
            )
        )

    def _advance_shadow(self, event: StepEvent) -> None:
        if event.y_next is not None:
            self._y = event.y_next.copy()
            return
        if event.sigma_alpha is None:
            return  # algorithm with no dual variable
        gamma = np.asarray(event.gamma, dtype=float)
        scale = np.asarray(event.sigma_alpha, dtype=float)
        if gamma.ndim == 0:
            mix = (1.0 + gamma) * event.x_k - gamma * event.x_prev
            increment = scale * (self.l_op @ mix)
        else:
            mix = (1.0 + gamma)[:, None] * event.x_k - gamma[:, None] * event.x_prev
            increment = self.l_op @ (scale[:, None] * mix)
        self._y = increment if self._y is None else self._y + increment
