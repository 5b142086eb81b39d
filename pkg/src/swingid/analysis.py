"""Error metrics, estimator covariance and the Monte Carlo harness."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .dynamics import GeneratorParams, make_rng
from .errors import DimensionMismatch, InvalidParameters, NotPSD, NumericalError, RankDeficient, ZeroTruth
from .estimators import DataMatrixPair, EstimationResult, _rank_tolerance, estimate


def _check_sizes(result: EstimationResult, truth: GeneratorParams):
    if result.m_hat.shape != truth.m.shape or result.d_hat.shape != truth.d.shape:
        raise DimensionMismatch(f"estimate has {result.m_hat.size} nodes, truth has {truth.size}")


def error_metrics(result: EstimationResult, truth: GeneratorParams) -> tuple[float, float]:
    """Mean squared inertia and damping errors ``(E_int, D_int)`` over the N nodes."""
    _check_sizes(result, truth)
    e_int = float(np.mean((result.m_hat - truth.m) ** 2))
    d_int = float(np.mean((result.d_hat - truth.d) ** 2))
    return e_int, d_int


def relative_errors(result: EstimationResult, truth: GeneratorParams, skip_zero: bool = False) -> np.ndarray:
    """Signed relative inertia errors ``(m_hat - m) / m``.

    Zero-inertia nodes have no relative error. They raise :class:`ZeroTruth`
    unless ``skip_zero`` is set, in which case they are reported as NaN.
    """
    _check_sizes(result, truth)
    zero = truth.m == 0
    if zero.any() and not skip_zero:
        nodes = tuple(int(i) + 1 for i in np.flatnonzero(zero))
        raise ZeroTruth(f"true inertia is zero at nodes {list(nodes)}", nodes=nodes)
    safe = np.where(zero, 1.0, truth.m)
    return np.where(zero, np.nan, (result.m_hat - truth.m) / safe)


def _pseudo_inverse(w: np.ndarray) -> np.ndarray:
    """``W^+`` of a full-column-rank matrix via pivoted QR."""
    q, r, perm = scipy.linalg.qr(w, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > _rank_tolerance(diag, w.shape)))
    if rank < w.shape[1]:
        raise RankDeficient(f"data matrix has rank {rank} < {w.shape[1]}", rank=rank, required=w.shape[1])
    pinv = np.empty((w.shape[1], w.shape[0]))
    pinv[perm] = scipy.linalg.solve_triangular(r, q.T)
    return pinv


def _assert_psd(mat: np.ndarray, what: str, exc=NotPSD):
    trace = float(np.trace(mat))
    floor = -1e-10 * max(abs(trace), np.finfo(float).tiny)
    smallest = float(np.linalg.eigvalsh(mat)[0]) if mat.size else 0.0
    if smallest < floor:
        raise exc(f"{what} is not positive semidefinite (smallest eigenvalue {smallest:.3g})")


def predicted_covariance(pair: DataMatrixPair, sigma_zeta, ts: float) -> np.ndarray:
    """Gaussian covariance ``ts**2 W^+ Sigma_zeta W^+.T`` of the estimate.

    ``sigma_zeta`` is the covariance of the stacked equation error. It may be
    a full matrix, a vector (the diagonal) or a scalar (a multiple of the
    identity); the last two never materialize the large matrix. Treating
    ``W`` as deterministic is an approximation, since it is built from the
    same noisy trajectory.
    """
    w = pair.w
    rows = w.shape[0]
    sz = np.asarray(sigma_zeta, dtype=float)
    if sz.ndim == 2:
        if sz.shape != (rows, rows):
            raise DimensionMismatch(f"sigma_zeta has shape {sz.shape}, expected {(rows, rows)}")
        if not np.allclose(sz, sz.T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(sz))))):
            raise NotPSD("sigma_zeta is not symmetric")
        _assert_psd(sz, "sigma_zeta")
    elif sz.ndim == 1:
        if sz.shape != (rows,):
            raise DimensionMismatch(f"sigma_zeta diagonal has length {sz.size}, expected {rows}")
        if np.any(sz < 0):
            raise NotPSD("sigma_zeta has negative diagonal entries")
    elif sz.ndim == 0:
        if sz < 0:
            raise NotPSD("sigma_zeta scale must be nonnegative")
    else:
        raise DimensionMismatch("sigma_zeta must be a scalar, vector or matrix")

    pinv = _pseudo_inverse(w)
    if sz.ndim == 2:
        cov = pinv @ sz @ pinv.T
    elif sz.ndim == 1:
        cov = (pinv * sz) @ pinv.T
    else:
        cov = float(sz) * (pinv @ pinv.T)
    cov = ts**2 * 0.5 * (cov + cov.T)
    _assert_psd(cov, "predicted covariance", exc=NumericalError)
    return cov


def trial_seed(master_seed: int, horizon: int, trial: int) -> int:
    """Seed of one Monte Carlo trial.

    Derived with :class:`numpy.random.SeedSequence` from ``master_seed`` and
    the spawn key ``(horizon, trial)``, so it is platform independent and
    adding horizons or trials leaves existing seeds unchanged.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(horizon), int(trial)))
    return int(seq.generate_state(1, np.uint64)[0])


def _method_for(config, method):
    method = method or config.estimator.method
    return "unconstrained" if method == "all" else method.replace("-", "_")


def _run_trial(config, method: str, steps: int, seed: int) -> np.ndarray | None:
    """Estimated ``[m_hat; d_hat]`` for one seed, or None if the estimator fails."""
    traj = config.simulate(seed=seed, steps=steps)
    try:
        result = estimate(traj, config.laplacian, method, config.estimator.droop_set, config.estimator.d_max)
    except NumericalError:
        return None
    return result.theta


def _run_trials(config, method, steps, seeds, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_trial, config, method, steps, s) for s in seeds]
            return [f.result() for f in futures]
    return [_run_trial(config, method, steps, s) for s in seeds]


@dataclass
class CovarianceEstimate:
    mean: np.ndarray
    cov: np.ndarray
    samples: np.ndarray
    failed: int


def empirical_estimator_covariance(config, trials: int, seed: int, method: str | None = None, workers: int = 1):
    """Sample mean and covariance of ``[m_hat; d_hat]`` over independent runs.

    Trial ``i`` uses :func:`trial_seed` ``(seed, config.horizon, i)``, so two
    configurations that differ only in ``sigma`` share their random numbers.
    Failed trials are dropped and counted.
    """
    if trials < 2:
        raise InvalidParameters(f"a covariance needs at least 2 trials, got {trials}")
    method = _method_for(config, method)
    seeds = [trial_seed(seed, config.horizon, i) for i in range(trials)]
    thetas = _run_trials(config, method, config.horizon, seeds, workers)
    good = [t for t in thetas if t is not None]
    failed = trials - len(good)
    if len(good) < 2:
        raise RankDeficient(f"only {len(good)} of {trials} trials produced an estimate")
    samples = np.array(good)
    return CovarianceEstimate(samples.mean(axis=0), np.cov(samples, rowvar=False), samples, failed)


def covariance_scaling(samples_a, samples_b, factor: float = 4.0, n_boot: int = 1000, seed: int = 0, paired: bool = False):
    """Compare ``Cov(b)`` with ``factor * Cov(a)`` entrywise.

    Returns ``(diff, se)`` where ``diff = Cov(b) - factor * Cov(a)`` and
    ``se`` is its bootstrap standard error. With ``paired=True`` the rows of
    the two sample sets come from common random numbers and are resampled
    together; otherwise each set is resampled independently.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"sample sets must be 2-D with equal widths, got {a.shape} and {b.shape}")
    if paired and a.shape != b.shape:
        raise DimensionMismatch(f"paired samples must have equal shapes, got {a.shape} and {b.shape}")
    diff = np.cov(b, rowvar=False) - factor * np.cov(a, rowvar=False)
    rng = make_rng(seed)
    boots = np.empty((n_boot,) + diff.shape)
    for j in range(n_boot):
        ia = rng.integers(0, a.shape[0], a.shape[0])
        ib = ia if paired else rng.integers(0, b.shape[0], b.shape[0])
        boots[j] = np.cov(b[ib], rowvar=False) - factor * np.cov(a[ia], rowvar=False)
    return diff, boots.std(axis=0, ddof=1)


def histogram_edges(samples) -> np.ndarray:
    """Fixed-width bin edges: ``ceil(sqrt(n))`` bins over the finite sample range."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        return np.array([])
    bins = math.ceil(math.sqrt(x.size))
    return np.histogram_bin_edges(x, bins=bins, range=(float(x.min()), float(x.max())))


@dataclass
class MonteCarloReport:
    """Per-horizon error statistics over independent trials.

    ``m_errors`` and ``d_errors`` have shape ``(len(grid), trials, N)`` and
    hold signed errors ``m_hat - m``; failed trials are NaN rows and are
    left out of the means and standard deviations.
    """

    trials: int
    horizon_grid: list[int]
    e_int_mean: np.ndarray
    e_int_std: np.ndarray
    d_int_mean: np.ndarray
    d_int_std: np.ndarray
    m_errors: np.ndarray
    d_errors: np.ndarray
    failures: np.ndarray
    method: str
    config_fingerprint: str
    master_seed: int
    extra: dict = field(default_factory=dict)

    @property
    def per_node_errors(self) -> np.ndarray:
        return self.m_errors

    def node_std(self, node: int) -> np.ndarray:
        """Sample standard deviation of the inertia error at a 1-based node, per horizon."""
        return np.array([_std(e[:, node - 1]) for e in self.m_errors])


def _mean(x) -> float:
    x = x[np.isfinite(x)]
    return float(x.mean()) if x.size else math.nan


def _std(x) -> float:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def run_monte_carlo(
    config,
    horizon_grid: Sequence[int],
    trials: int,
    master_seed: int,
    method: str | None = None,
    workers: int = 1,
) -> MonteCarloReport:
    """Simulate, estimate and score ``trials`` runs at every horizon in the grid.

    The estimator defaults to the one named in the configuration (``all``
    falls back to unconstrained). Seeds come from :func:`trial_seed`, so the
    report does not depend on ``workers``.
    """
    grid = [int(t) for t in horizon_grid]
    if not grid:
        raise InvalidParameters("horizon grid is empty")
    if any(t < 2 for t in grid):
        raise InvalidParameters(f"every horizon must be at least 2, got {grid}")
    if trials < 1:
        raise InvalidParameters(f"trials must be positive, got {trials}")
    method = _method_for(config, method)
    n = config.size
    truth = config.params
    m_err = np.full((len(grid), trials, n), np.nan)
    d_err = np.full((len(grid), trials, n), np.nan)
    failures = np.zeros(len(grid), dtype=int)
    for g, steps in enumerate(grid):
        seeds = [trial_seed(master_seed, steps, i) for i in range(trials)]
        for i, theta in enumerate(_run_trials(config, method, steps, seeds, workers)):
            if theta is None:
                failures[g] += 1
                continue
            m_err[g, i] = theta[:n] - truth.m
            d_err[g, i] = theta[n:] - truth.d
    e_int = np.mean(m_err**2, axis=2)
    d_int = np.mean(d_err**2, axis=2)
    return MonteCarloReport(
        trials=trials,
        horizon_grid=grid,
        e_int_mean=np.array([_mean(x) for x in e_int]),
        e_int_std=np.array([_std(x) for x in e_int]),
        d_int_mean=np.array([_mean(x) for x in d_int]),
        d_int_std=np.array([_std(x) for x in d_int]),
        m_errors=m_err,
        d_errors=d_err,
        failures=failures,
        method=method,
        config_fingerprint=config.fingerprint,
        master_seed=int(master_seed),
    )
