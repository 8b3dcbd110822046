"""Local losses, stacked operators, data generation, and the reference solver.

Each agent i owns a private convex loss. The solvers work on the row-wise
stack X (one row per agent) through ``stacked_value``/``stacked_gradient``;
all optimality metrics are anchored to a high-accuracy minimizer of the
averaged objective computed by ``centralized_minimize``.

Homogeneous instances (all ridge or all logistic, same sample counts) get
vectorized batch evaluators; the per-objective loop remains the reference
implementation and the batch path is tested against it.

Objectives are immutable after construction (data arrays are marked
read-only), so value and gradient evaluation is safe from multiple threads.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import DataError, NotConvergedError, ParameterError, ShapeError

__all__ = [
    "LocalObjective",
    "RidgeObjective",
    "LogisticObjective",
    "ProblemInstance",
    "synth_ridge",
    "synth_logistic",
    "load_mnist_partition",
    "read_idx_images",
    "read_idx_labels",
    "centralized_minimize",
    "ridge_exact_solution",
    "save_instance",
    "load_instance",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


class LocalObjective(ABC):
    """Convex, continuously differentiable loss owned by one agent."""

    @property
    @abstractmethod
    def d(self) -> int:
        """Decision-variable dimension."""

    @property
    def mu_hint(self) -> float:
        """Known strong-convexity lower bound; 0 when unknown."""
        return 0.0

    @abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def _check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ShapeError(f"expected point of shape ({self.d},), got {x.shape}")
        return x


@dataclass(frozen=True)
class RidgeObjective(LocalObjective):
    """f(x) = (1/n) ||A x - b||^2 + (gamma/2) ||x||^2 with gamma > 0."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    gamma: float

    def __post_init__(self):
        a = np.asarray(self.a_mat, dtype=float)
        b = np.asarray(self.b_vec, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise ShapeError(f"incompatible ridge data shapes {a.shape}, {b.shape}")
        if self.gamma <= 0:
            raise ParameterError(f"ridge coefficient must be positive, got {self.gamma}")
        object.__setattr__(self, "a_mat", _frozen_array(a))
        object.__setattr__(self, "b_vec", _frozen_array(b))

    @property
    def n(self) -> int:
        return self.a_mat.shape[0]

    @property
    def d(self) -> int:
        return self.a_mat.shape[1]

    @property
    def mu_hint(self) -> float:
        return self.gamma

    def value(self, x):
        x = self._check_point(x)
        r = self.a_mat @ x - self.b_vec
        return float(r @ r / self.n + 0.5 * self.gamma * (x @ x))

    def gradient(self, x):
        x = self._check_point(x)
        return (2.0 / self.n) * (self.a_mat.T @ (self.a_mat @ x - self.b_vec)) + self.gamma * x


@dataclass(frozen=True)
class LogisticObjective(LocalObjective):
    """f(x) = (1/n) sum_j log(1 + exp(-b_j <x, a_j>)) with b_j in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.features, dtype=float)
        b = np.asarray(self.labels, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise ShapeError(f"incompatible logistic data shapes {a.shape}, {b.shape}")
        if not np.all(np.abs(b) == 1.0):
            raise ParameterError("logistic labels must be +1 or -1")
        object.__setattr__(self, "features", _frozen_array(a))
        object.__setattr__(self, "labels", _frozen_array(b))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def value(self, x):
        x = self._check_point(x)
        margins = self.labels * (self.features @ x)
        # log(1 + exp(-t)) computed as logaddexp(0, -t): no overflow for any t
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def gradient(self, x):
        x = self._check_point(x)
        margins = self.labels * (self.features @ x)
        weights = self.labels * expit(-margins)
        return -(self.features.T @ weights) / self.n


class _RidgeBatch:
    """Vectorized evaluators for m same-shape ridge objectives."""

    def __init__(self, objs):
        self.a = np.stack([o.a_mat for o in objs])  # (m, n, d)
        self.b = np.stack([o.b_vec for o in objs])  # (m, n)
        self.gammas = np.array([o.gamma for o in objs])  # (m,)
        self.n = self.a.shape[1]

    def stacked_gradient(self, x_rows):
        r = np.einsum("mnd,md->mn", self.a, x_rows) - self.b
        return (2.0 / self.n) * np.einsum("mnd,mn->md", self.a, r) + self.gammas[:, None] * x_rows

    def values_at_own_rows(self, x_rows):
        r = np.einsum("mnd,md->mn", self.a, x_rows) - self.b
        return np.einsum("mn,mn->m", r, r) / self.n + 0.5 * self.gammas * np.einsum(
            "md,md->m", x_rows, x_rows
        )

    def cross_values(self, x_rows):
        """value[i, j] = f_j evaluated at row i."""
        z = np.einsum("jnd,id->ijn", self.a, x_rows) - self.b[None, :, :]
        sq = np.einsum("id,id->i", x_rows, x_rows)
        return np.einsum("ijn,ijn->ij", z, z) / self.n + 0.5 * self.gammas[None, :] * sq[:, None]

    def average_value(self, x):
        z = np.einsum("mnd,d->mn", self.a, x) - self.b
        return float(np.mean(np.einsum("mn,mn->m", z, z)) / self.n + 0.5 * np.mean(self.gammas) * (x @ x))

    def average_gradient(self, x):
        z = np.einsum("mnd,d->mn", self.a, x) - self.b
        m = self.a.shape[0]
        return (2.0 / (self.n * m)) * np.einsum("mnd,mn->d", self.a, z) + np.mean(self.gammas) * x


class _LogisticBatch:
    """Vectorized evaluators for m same-shape logistic objectives."""

    def __init__(self, objs):
        self.a = np.stack([o.features for o in objs])  # (m, n, d)
        self.b = np.stack([o.labels for o in objs])  # (m, n)
        self.n = self.a.shape[1]

    def stacked_gradient(self, x_rows):
        margins = self.b * np.einsum("mnd,md->mn", self.a, x_rows)
        weights = self.b * expit(-margins)
        return -np.einsum("mnd,mn->md", self.a, weights) / self.n

    def values_at_own_rows(self, x_rows):
        margins = self.b * np.einsum("mnd,md->mn", self.a, x_rows)
        return np.mean(np.logaddexp(0.0, -margins), axis=1)

    def cross_values(self, x_rows):
        margins = self.b[None, :, :] * np.einsum("jnd,id->ijn", self.a, x_rows)
        return np.mean(np.logaddexp(0.0, -margins), axis=2)

    def average_value(self, x):
        margins = self.b * np.einsum("mnd,d->mn", self.a, x)
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def average_gradient(self, x):
        margins = self.b * np.einsum("mnd,d->mn", self.a, x)
        weights = self.b * expit(-margins)
        m = self.a.shape[0]
        return -np.einsum("mnd,mn->d", self.a, weights) / (self.n * m)


@dataclass(frozen=True)
class ProblemInstance:
    """m local objectives sharing one decision dimension d."""

    objectives: tuple[LocalObjective, ...]
    d: int

    def __post_init__(self):
        objs = tuple(self.objectives)
        if not objs:
            raise ParameterError("a problem needs at least one objective")
        if any(o.d != self.d for o in objs):
            raise ShapeError("all objectives must share the problem dimension")
        object.__setattr__(self, "objectives", objs)

    @property
    def m(self) -> int:
        return len(self.objectives)

    @cached_property
    def _batch(self):
        objs = self.objectives
        if all(isinstance(o, RidgeObjective) for o in objs):
            if len({(o.n, o.d) for o in objs}) == 1:
                return _RidgeBatch(objs)
        if all(isinstance(o, LogisticObjective) for o in objs):
            if len({(o.n, o.d) for o in objs}) == 1:
                return _LogisticBatch(objs)
        return None

    def _check_stack(self, x_stack):
        x_stack = np.asarray(x_stack, dtype=float)
        if x_stack.shape != (self.m, self.d):
            raise ShapeError(f"expected stack of shape ({self.m}, {self.d}), got {x_stack.shape}")
        return x_stack

    def stacked_value(self, x_stack) -> float:
        """F(X) = sum_i f_i(x_i)."""
        x_stack = self._check_stack(x_stack)
        if self._batch is not None:
            return float(np.sum(self._batch.values_at_own_rows(x_stack)))
        return float(sum(o.value(x) for o, x in zip(self.objectives, x_stack)))

    def stacked_gradient(self, x_stack) -> np.ndarray:
        """Row i holds the gradient of f_i at row i of the stack."""
        x_stack = self._check_stack(x_stack)
        if self._batch is not None:
            return self._batch.stacked_gradient(x_stack)
        return np.stack([o.gradient(x) for o, x in zip(self.objectives, x_stack)])

    def average_value(self, x) -> float:
        """f(x) = (1/m) sum_i f_i(x) at a single shared point."""
        x = np.asarray(x, dtype=float)
        if self._batch is not None:
            return self._batch.average_value(x)
        return float(sum(o.value(x) for o in self.objectives)) / self.m

    def average_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._batch is not None:
            return self._batch.average_gradient(x)
        g = np.zeros(self.d)
        for o in self.objectives:
            g += o.gradient(x)
        return g / self.m

    def average_values_at_rows(self, x_stack) -> np.ndarray:
        """Vector of f(x_i) for every row, f being the averaged objective."""
        x_stack = self._check_stack(x_stack)
        if self._batch is not None:
            return np.mean(self._batch.cross_values(x_stack), axis=1)
        return np.array([self.average_value(x) for x in x_stack])


def synth_ridge(m: int, n: int, d: int, seed: int) -> ProblemInstance:
    """Standard-normal ridge data; agent i gets coefficient 0.1 * i (1-indexed)."""
    if min(m, n, d) < 1:
        raise ParameterError("m, n, d must all be >= 1")
    rng = np.random.default_rng(seed)
    objs = []
    for i in range(1, m + 1):
        a = rng.standard_normal((n, d))
        b = rng.standard_normal(n)
        objs.append(RidgeObjective(a, b, gamma=0.1 + (i - 1) * 0.1))
    return ProblemInstance(tuple(objs), d)


def synth_logistic(m: int, n: int, d: int, seed: int, noise: float = 0.1) -> ProblemInstance:
    """Gaussian features with a planted separator and label-flip noise.

    The flip noise makes the data non-separable, so the minimizer is finite
    and the reference solver can locate it to near machine precision.
    """
    if min(m, n, d) < 1:
        raise ParameterError("m, n, d must all be >= 1")
    if not (0.0 <= noise < 0.5):
        raise ParameterError(f"label noise must lie in [0, 0.5), got {noise}")
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal(d) / np.sqrt(d)
    objs = []
    for _ in range(m):
        a = rng.standard_normal((n, d))
        b = np.where(a @ planted >= 0.0, 1.0, -1.0)
        flips = rng.random(n) < noise
        b[flips] *= -1.0
        objs.append(LogisticObjective(a, b))
    return ProblemInstance(tuple(objs), d)


def _read_be_u32(f, path) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise DataError(f"truncated IDX file {path}")
    return struct.unpack(">I", raw)[0]


def read_idx_images(path) -> np.ndarray:
    """Parse a big-endian IDX image file into a (count, rows*cols) float array."""
    with open(path, "rb") as f:
        magic = _read_be_u32(f, path)
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"bad magic 0x{magic:08x} in image file {path}")
        count = _read_be_u32(f, path)
        rows = _read_be_u32(f, path)
        cols = _read_be_u32(f, path)
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise DataError(f"truncated pixel data in {path}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols).astype(float)


def read_idx_labels(path) -> np.ndarray:
    """Parse a big-endian IDX label file into a (count,) integer array."""
    with open(path, "rb") as f:
        magic = _read_be_u32(f, path)
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"bad magic 0x{magic:08x} in label file {path}")
        count = _read_be_u32(f, path)
        raw = f.read(count)
        if len(raw) != count:
            raise DataError(f"truncated label data in {path}")
    return np.frombuffer(raw, dtype=np.uint8).astype(int)


def load_mnist_partition(
    images_path,
    labels_path,
    m: int,
    digit_pair: tuple[int, int] = (0, 1),
    seed: int = 0,
) -> ProblemInstance:
    """Binary logistic instance from an MNIST-style IDX pair.

    Keeps samples labeled with either digit, maps the first digit to +1 and
    the second to -1, scales pixels to [0, 1], shuffles with the seed, and
    partitions equally among m agents (remainder dropped so every agent has
    the same sample count).
    """
    p, q = digit_pair
    if p == q:
        raise ParameterError(f"digit pair must be distinct, got {digit_pair}")
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}"
        )
    keep = (labels == p) | (labels == q)
    feats = images[keep] / 255.0
    signs = np.where(labels[keep] == p, 1.0, -1.0)
    if feats.shape[0] < m:
        raise DataError(f"only {feats.shape[0]} samples for {m} agents")
    rng = np.random.default_rng(seed)
    order = rng.permutation(feats.shape[0])
    feats, signs = feats[order], signs[order]
    n = feats.shape[0] // m
    objs = tuple(
        LogisticObjective(feats[i * n : (i + 1) * n], signs[i * n : (i + 1) * n])
        for i in range(m)
    )
    return ProblemInstance(objs, feats.shape[1])


def ridge_exact_solution(problem: ProblemInstance) -> np.ndarray:
    """Minimizer of the averaged ridge objective via the normal equations.

    Solves sum_i [(2/n_i) A_i^T A_i + gamma_i I] x = sum_i (2/n_i) A_i^T b_i,
    then applies one step of iterative refinement to clean up the residual.
    """
    if not all(isinstance(o, RidgeObjective) for o in problem.objectives):
        raise ParameterError("exact solve only applies to all-ridge instances")
    d = problem.d
    h = np.zeros((d, d))
    rhs = np.zeros(d)
    for o in problem.objectives:
        h += (2.0 / o.n) * (o.a_mat.T @ o.a_mat) + o.gamma * np.eye(d)
        rhs += (2.0 / o.n) * (o.a_mat.T @ o.b_vec)
    x = np.linalg.solve(h, rhs)
    x -= np.linalg.solve(h, h @ x - rhs)
    return x


def centralized_minimize(
    problem: ProblemInstance,
    tol: float = 1e-10,
    max_iter: int = 500_000,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """High-accuracy minimizer of f = (1/m) sum f_i by accelerated descent.

    Nesterov-accelerated gradient steps with a curvature-estimated inverse
    stepsize: the estimate starts from a secant probe, is re-doubled when the
    quadratic upper bound fails, and relaxes geometrically otherwise. The
    momentum restarts whenever it points uphill. Stops at ||grad f|| <= tol.
    """
    if tol <= 0:
        raise ParameterError(f"tolerance must be positive, got {tol}")
    d = problem.d
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    g = problem.average_gradient(x)
    if np.linalg.norm(g) <= tol:
        return x

    # secant probe along the gradient for an initial curvature estimate
    probe = x - 1e-3 * g / max(np.linalg.norm(g), 1.0)
    g_probe = problem.average_gradient(probe)
    denom = np.linalg.norm(x - probe)
    lip = max(np.linalg.norm(g - g_probe) / denom, 1e-12) if denom > 0 else 1.0

    y = x.copy()
    g_y = g
    f_y = problem.average_value(y)
    t = 1.0
    best_x, best_norm = x.copy(), np.linalg.norm(g)
    for _ in range(max_iter):
        while True:
            x_new = y - g_y / lip
            f_new = problem.average_value(x_new)
            gap = f_new - (f_y + g_y @ (x_new - y) + 0.5 * lip * np.sum((x_new - y) ** 2))
            if gap <= 1e-12 * (1.0 + abs(f_new)):
                break
            lip *= 2.0
        g_new = problem.average_gradient(x_new)
        norm = np.linalg.norm(g_new)
        if norm < best_norm:
            best_x, best_norm = x_new.copy(), norm
        if norm <= tol:
            return x_new
        step = np.linalg.norm(x_new - y)
        if step > 0:
            lip = max(np.linalg.norm(g_new - g_y) / step, lip * 0.9)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_new
        y_next = x_new + momentum * (x_new - x)
        if g_new @ (x_new - x) > 0.0:  # restart: momentum points uphill
            y_next = x_new
            t_new = 1.0
        x, y, t = x_new, y_next, t_new
        g_y = problem.average_gradient(y) if not np.array_equal(y, x_new) else g_new
        f_y = problem.average_value(y) if not np.array_equal(y, x_new) else f_new
    raise NotConvergedError(
        f"centralized solve stalled at ||grad|| = {best_norm:.3e} (target {tol:.1e})",
        best_x=best_x,
        grad_norm=best_norm,
    )


def save_instance(problem: ProblemInstance, path) -> None:
    """Snapshot an instance to a .npz archive for reproducibility."""
    arrays = {}
    kinds = []
    for idx, o in enumerate(problem.objectives):
        if isinstance(o, RidgeObjective):
            kinds.append("ridge")
            arrays[f"a_{idx}"] = o.a_mat
            arrays[f"b_{idx}"] = o.b_vec
            arrays[f"g_{idx}"] = np.array(o.gamma)
        elif isinstance(o, LogisticObjective):
            kinds.append("logistic")
            arrays[f"a_{idx}"] = o.features
            arrays[f"b_{idx}"] = o.labels
        else:
            raise ParameterError(f"cannot serialize objective type {type(o).__name__}")
    np.savez_compressed(path, kinds=np.array(kinds), d=np.array(problem.d), **arrays)


def load_instance(path) -> ProblemInstance:
    """Inverse of save_instance."""
    with np.load(path) as data:
        kinds = [str(k) for k in data["kinds"]]
        d = int(data["d"])
        objs: list[LocalObjective] = []
        for idx, kind in enumerate(kinds):
            if kind == "ridge":
                objs.append(
                    RidgeObjective(data[f"a_{idx}"], data[f"b_{idx}"], float(data[f"g_{idx}"]))
                )
            else:
                objs.append(LogisticObjective(data[f"a_{idx}"], data[f"b_{idx}"]))
    return ProblemInstance(tuple(objs), d)
