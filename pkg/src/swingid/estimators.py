"""Inertia and damping estimators.

Three structure-preserving routes work directly on the descriptor model and
never invert ``E``:

* :func:`estimate_unconstrained` - least squares on the stacked data matrix;
* :func:`estimate_per_node` - the same solution in closed form, node by node;
* :func:`estimate_constrained` - zero inertia at droop nodes and box bounds
  on damping, solved by an active-set method.

:func:`estimate_naive` is the baseline that first identifies the state-space
matrix ``I + ts E^{-1} A`` and then reads the parameters back out of it.

Node numbers in this module are 1-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg

from .dynamics import Trajectory
from .errors import (
    DegenerateNode,
    DimensionMismatch,
    DivergedTrajectory,
    ExtractionUnstable,
    InvalidParameters,
    RankDeficient,
)
from .netmodel import Laplacian

METHODS = ("unconstrained", "constrained", "per_node", "naive")


@dataclass(frozen=True)
class DataMatrixPair:
    """Stacked regression ``w @ [m; d] ~ target``.

    Block row ``k`` (rows ``k*N .. k*N+N-1``) is
    ``[Diag(omega[k+1] - omega[k]) | ts * Diag(omega[k])]`` and the matching
    slice of ``target`` is ``-ts * H @ delta[k]``.
    """

    w: np.ndarray
    target: np.ndarray
    n_nodes: int
    ts: float
    meta: dict = field(default_factory=dict)

    @property
    def blocks(self) -> int:
        return self.w.shape[0] // self.n_nodes


@dataclass
class EstimationResult:
    m_hat: np.ndarray
    d_hat: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)
    trajectory_meta: dict = field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.m_hat, self.d_hat])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "m_hat": self.m_hat.tolist(),
            "d_hat": self.d_hat.tolist(),
            "diagnostics": _jsonable(self.diagnostics),
            "trajectory": dict(self.trajectory_meta),
        }


def _meta(trajectory: Trajectory) -> dict:
    return {"T": trajectory.steps, "ts": trajectory.ts, "seed": trajectory.seed}


def _check_dims(trajectory: Trajectory, laplacian: Laplacian):
    if trajectory.size != laplacian.size:
        raise DimensionMismatch(f"trajectory has {trajectory.size} nodes, Laplacian has {laplacian.size}")
    if trajectory.steps < 2:
        raise DimensionMismatch("trajectory needs at least two samples")
    if not (np.all(np.isfinite(trajectory.delta)) and np.all(np.isfinite(trajectory.omega))):
        raise DivergedTrajectory("trajectory contains non-finite samples (the recursion overflowed)")


def _pow2_scale(*arrays) -> float:
    """Power of two bringing the largest magnitude near 1; rescaling by it is exact."""
    peak = max(float(np.max(np.abs(a), initial=0.0)) for a in arrays)
    if peak == 0.0:
        return 1.0
    return math.ldexp(1.0, -math.frexp(peak)[1])


def build_data_matrix(trajectory: Trajectory, laplacian: Laplacian) -> DataMatrixPair:
    _check_dims(trajectory, laplacian)
    ts = trajectory.ts
    omega, delta = trajectory.omega, trajectory.delta
    t, n = omega.shape
    blocks = t - 1
    rows = np.arange(blocks * n)
    cols = np.tile(np.arange(n), blocks)
    w = np.zeros((blocks * n, 2 * n))
    w[rows, cols] = np.diff(omega, axis=0).ravel()
    w[rows, cols + n] = ts * omega[:-1].ravel()
    target = -ts * (delta[:-1] @ laplacian.matrix.T).ravel()
    return DataMatrixPair(w, target, n, ts, _meta(trajectory))


def _rank_tolerance(r_diag: np.ndarray, shape) -> float:
    return max(shape) * np.finfo(float).eps * float(np.max(np.abs(r_diag), initial=0.0))


def _qr_lstsq(a: np.ndarray, b: np.ndarray):
    """Least squares by column-pivoted Householder QR.

    Returns ``(x, rank)``; ``x`` is only meaningful at full column rank.
    """
    q, r, perm = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > _rank_tolerance(diag, a.shape))) if diag.size else 0
    if rank < a.shape[1]:
        return None, rank
    x = np.empty(a.shape[1])
    x[perm] = scipy.linalg.solve_triangular(r, q.T @ b)
    return x, rank


def _residual_norm(w, theta, target) -> float:
    res = w @ theta - target
    scale = _pow2_scale(res)
    return float(np.linalg.norm(res * scale)) / scale


def estimate_unconstrained(pair: DataMatrixPair) -> EstimationResult:
    """Unconstrained least-squares estimate, ``-ts W^+ (I kron H) delta``."""
    n = pair.n_nodes
    theta, rank = _qr_lstsq(pair.w, pair.target)
    if theta is None:
        raise RankDeficient(
            f"data matrix has numerical rank {rank} < {2 * n}; the trajectory is not exciting enough",
            rank=rank,
            required=2 * n,
        )
    rnorm = _residual_norm(pair.w, theta, pair.target)
    return EstimationResult(
        theta[:n],
        theta[n:],
        "unconstrained",
        {"objective": rnorm * rnorm, "residual_norm": rnorm, "rank": rank, "full_rank": True, "active_set": []},
        dict(pair.meta),
    )


def per_node_moments(trajectory: Trajectory, node: int) -> tuple[float, float, float, float]:
    """``(c0, c1, c2, c3)`` for a 1-based node, summed over ``k = 0..T-2``.

    The frequencies are first rescaled by a power of two so the sums cannot
    overflow on fast-growing trajectories; the ratios used by
    :func:`estimate_per_node` are unaffected.
    """
    i = node - 1
    omega = trajectory.omega[:, i] * _pow2_scale(trajectory.omega[:, i])
    w = omega[:-1]
    dw = np.diff(omega)
    c0 = float(dw @ dw)
    c1 = float(dw @ w)
    c2 = float(w @ w)
    return c0, c1, c2, c0 * c2 - c1 * c1


def estimate_per_node(trajectory: Trajectory, laplacian: Laplacian, node: int) -> tuple[float, float]:
    """Closed-form unconstrained estimate ``(m_hat, d_hat)`` at one node.

    With ``dw[k] = omega_i[k+1] - omega_i[k]`` and ``c0 = sum dw**2``,
    ``c1 = sum dw*omega_i``, ``c2 = sum omega_i**2``, ``c3 = c0*c2 - c1**2``::

        m_hat = -ts * sum_j H_ij sum_k (c2/c3 dw[k] - c1/c3 omega_i[k]) delta_j[k]
        d_hat =     - sum_j H_ij sum_k (c0/c3 omega_i[k] - c1/c3 dw[k]) delta_j[k]

    For ``ts = 1`` these are the textbook per-node normal equations; a general
    ``ts`` only rescales the inertia term.
    """
    _check_dims(trajectory, laplacian)
    n = trajectory.size
    if not 1 <= node <= n:
        raise InvalidParameters(f"node {node} outside 1..{n}")
    i = node - 1
    # Both estimates are homogeneous of degree zero in (delta, omega).
    scale = _pow2_scale(trajectory.delta, trajectory.omega)
    omega = trajectory.omega[:, i] * scale
    delta = trajectory.delta[:-1] * scale
    w = omega[:-1]
    dw = np.diff(omega)
    c0, c1, c2 = float(dw @ dw), float(dw @ w), float(w @ w)
    c3 = c0 * c2 - c1 * c1
    if abs(c3) <= 1e-14 * c0 * c2:
        raise DegenerateNode(f"node {node}: frequency and its increment are collinear (c3={c3:.3g})", node=node)
    h_row = laplacian.matrix[i]
    m_weights = (c2 / c3) * dw - (c1 / c3) * w
    d_weights = (c0 / c3) * w - (c1 / c3) * dw
    m_hat = -trajectory.ts * float(h_row @ (delta.T @ m_weights))
    d_hat = -float(h_row @ (delta.T @ d_weights))
    return m_hat, d_hat


def estimate_all_nodes(trajectory: Trajectory, laplacian: Laplacian) -> EstimationResult:
    pairs = [estimate_per_node(trajectory, laplacian, i) for i in range(1, trajectory.size + 1)]
    m_hat, d_hat = (np.array(v) for v in zip(*pairs))
    return EstimationResult(m_hat, d_hat, "per_node", {"active_set": []}, _meta(trajectory))


def bounded_lstsq(a, b, lower, upper, max_iter=None):
    """Minimize ``||a x - b||^2`` subject to ``lower <= x <= upper``.

    Infinite bounds mark free directions. Primal active-set method: variables
    pinned at a bound are held fixed while the rest are solved by QR; a pinned
    variable is released when its multiplier has the wrong sign, and a step is
    shortened whenever it would leave the box.

    Returns ``(x, active)`` where ``active`` maps each pinned index to
    ``"lower"`` or ``"upper"``. ``a`` must have full column rank.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = a.shape[1]
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (p,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (p,))
    if np.any(lower > upper):
        raise InvalidParameters("lower bound exceeds upper bound")
    max_iter = max_iter or 10 * (p + 1) ** 2

    # Start from the projected unconstrained solution; fixed at a bound = active.
    x0, rank = _qr_lstsq(a, b)
    if x0 is None:
        raise RankDeficient(f"bounded least squares needs full column rank, got {rank} < {p}", rank=rank, required=p)
    x = np.clip(x0, lower, upper)
    at_lower = (x <= lower) & np.isfinite(lower)
    at_upper = (x >= upper) & np.isfinite(upper) & ~at_lower
    x[at_lower] = lower[at_lower]
    x[at_upper] = upper[at_upper]

    scale = max(1.0, float(np.linalg.norm(a.T @ b, np.inf)))
    kkt_tol = 1e3 * np.finfo(float).eps * scale * max(a.shape)

    for _ in range(max_iter):
        free = ~(at_lower | at_upper)
        if free.any():
            rhs = b - a[:, ~free] @ x[~free]
            s_free, _ = _qr_lstsq(a[:, free], rhs)
            s = x.copy()
            s[free] = s_free
        else:
            s = x.copy()

        lo_viol = free & (s < lower)
        up_viol = free & (s > upper)
        if lo_viol.any() or up_viol.any():
            # Largest feasible step toward s; the blocking variables become active.
            step = s - x
            alphas = np.ones(p)
            alphas[lo_viol] = (lower[lo_viol] - x[lo_viol]) / step[lo_viol]
            alphas[up_viol] = (upper[up_viol] - x[up_viol]) / step[up_viol]
            alpha = float(np.clip(np.min(alphas), 0.0, 1.0))
            x = x + alpha * step
            hit_lo = lo_viol & (alphas <= alpha)
            hit_up = up_viol & (alphas <= alpha)
            x[hit_lo] = lower[hit_lo]
            x[hit_up] = upper[hit_up]
            at_lower |= hit_lo
            at_upper |= hit_up
            continue

        x = s
        grad = a.T @ (a @ x - b)
        # Multiplier sign: at a lower bound the objective must not decrease upward.
        wrong = np.where(at_lower, -grad, 0.0) + np.where(at_upper, grad, 0.0)
        j = int(np.argmax(wrong))
        if wrong[j] <= kkt_tol:
            active = {int(i): "lower" for i in np.flatnonzero(at_lower)}
            active.update({int(i): "upper" for i in np.flatnonzero(at_upper)})
            return x, active
        at_lower[j] = at_upper[j] = False
    raise RuntimeError("active-set iteration limit reached")


def estimate_constrained(
    pair: DataMatrixPair, droop_set: Iterable[int] = (), d_max: float = math.inf
) -> EstimationResult:
    """Least squares with ``m_i = 0`` on ``droop_set`` and ``0 <= d <= d_max``.

    The equality constraints are imposed by deleting the droop inertia
    columns, so the returned ``m_hat`` is exactly zero there.
    """
    n = pair.n_nodes
    droop = sorted({int(i) for i in droop_set})
    if any(not 1 <= i <= n for i in droop):
        raise InvalidParameters(f"droop_set {droop} must lie within 1..{n}")
    d_max = float(d_max)
    if not d_max > 0:
        raise InvalidParameters(f"d_max must be positive, got {d_max}")

    droop_cols = {i - 1 for i in droop}
    keep = [c for c in range(2 * n) if c not in droop_cols]
    # A common power-of-two scale leaves the minimizer unchanged and keeps
    # products such as w.T @ target finite on fast-growing trajectories.
    scale = _pow2_scale(pair.w, pair.target)
    w_full = pair.w * scale
    target = pair.target * scale
    w = w_full[:, keep]
    n_m = n - len(droop)
    lower = np.r_[np.full(n_m, -np.inf), np.zeros(n)]
    upper = np.r_[np.full(n_m, np.inf), np.full(n, d_max)]
    try:
        x, active = bounded_lstsq(w, target, lower, upper)
    except RankDeficient as exc:
        raise RankDeficient(
            f"reduced data matrix has rank {exc.rank} < {exc.required}", rank=exc.rank, required=exc.required
        ) from None
    theta = np.zeros(2 * n)
    theta[keep] = x
    active_nodes = sorted((keep[j] - n + 1, side) for j, side in active.items())
    grad = w_full.T @ (w_full @ theta - target)
    with np.errstate(over="ignore"):
        grad = grad / scale / scale
    rnorm = _residual_norm(pair.w, theta, pair.target)
    return EstimationResult(
        theta[:n],
        theta[n:],
        "constrained",
        {
            "objective": rnorm * rnorm,
            "residual_norm": rnorm,
            "full_rank": True,
            "droop_set": droop,
            "d_max": d_max,
            "active_set": [{"node": node, "bound": side} for node, side in active_nodes],
            "gradient": grad,
        },
        dict(pair.meta),
    )


def estimate_naive(trajectory: Trajectory, laplacian: Laplacian) -> EstimationResult:
    """Identify ``A_d = I + ts E^{-1} A`` by least squares, then extract ``m, d``.

    ``A_d`` minimizes ``sum_k ||z[k+1] - A_d z[k]||^2``. Its lower-left block
    should equal ``-ts M^{-1} H``; the slope of row ``i`` against
    ``-ts H[i]`` is ``1 / m_i``. The lower-right diagonal
    ``1 - ts d_i / m_i`` then gives ``d_i``.
    """
    _check_dims(trajectory, laplacian)
    n = trajectory.size
    ts = trajectory.ts
    z = np.hstack([trajectory.delta, trajectory.omega])
    z0, z1 = z[:-1], z[1:]
    if z0.shape[0] < 2 * n:
        raise RankDeficient(
            f"{z0.shape[0]} transitions cannot identify a {2 * n}-state model", rank=z0.shape[0], required=2 * n
        )
    q, r, perm = scipy.linalg.qr(z0, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > _rank_tolerance(diag, z0.shape)))
    if rank < 2 * n:
        raise RankDeficient(f"state regression has rank {rank} < {2 * n}", rank=rank, required=2 * n)
    sol = np.empty((2 * n, 2 * n))
    sol[perm] = scipy.linalg.solve_triangular(r, q.T @ z1)
    a_d = sol.T

    H = laplacian.matrix
    lower_left = a_d[n:, :n]
    m_hat = np.empty(n)
    d_hat = np.empty(n)
    fit_residuals = np.empty(n)
    slopes = np.empty(n)
    for i in range(n):
        basis = -ts * H[i]
        denom = float(basis @ basis)
        slope = float(lower_left[i] @ basis) / denom if denom > 0 else 0.0
        if abs(slope) < 1e-12:
            raise ExtractionUnstable(f"node {i + 1}: fitted inverse inertia {slope:.3g} is numerically zero", node=i + 1)
        m_hat[i] = 1.0 / slope
        d_hat[i] = (1.0 - a_d[n + i, n + i]) * m_hat[i] / ts
        fit_residuals[i] = float(np.linalg.norm(lower_left[i] - slope * basis))
        slopes[i] = slope
    return EstimationResult(
        m_hat,
        d_hat,
        "naive",
        {"rank": rank, "full_rank": True, "fit_residuals": fit_residuals, "inverse_inertia": slopes, "a_d": a_d},
        _meta(trajectory),
    )


def estimate(trajectory: Trajectory, laplacian: Laplacian, method: str, droop_set=(), d_max=math.inf) -> EstimationResult:
    """Dispatch by method name (``per-node`` is accepted for ``per_node``)."""
    method = method.replace("-", "_")
    if method == "unconstrained":
        return estimate_unconstrained(build_data_matrix(trajectory, laplacian))
    if method == "constrained":
        return estimate_constrained(build_data_matrix(trajectory, laplacian), droop_set, d_max)
    if method == "per_node":
        return estimate_all_nodes(trajectory, laplacian)
    if method == "naive":
        return estimate_naive(trajectory, laplacian)
    raise InvalidParameters(f"unknown method {method!r}; expected one of {METHODS}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
