"""Descriptor-form swing dynamics and their Euler-Maruyama simulation.

The model for ``N`` generators is::

    E (z[k+1] - z[k]) = ts * A z[k] + [0; r[k]],   z = [delta; omega]
    E = blockdiag(I, M),   A = [[0, I], [-H, -D]]

with ``r[k] ~ N(0, ts * diag(sigma**2))``. Zero-inertia (droop) generators
make ``E`` singular; their frequency rows are algebraic and are solved at
every step instead of being integrated.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidParameters, NonpositiveDamping
from .netmodel import Laplacian


class GeneratorKind(str, enum.Enum):
    SYNCHRONOUS = "synchronous"
    VSM = "vsm"
    DROOP = "droop"


@dataclass(frozen=True)
class GeneratorParams:
    """Per-generator inertia ``m``, damping ``d`` and kind.

    ``m[i] == 0`` exactly when ``kind[i]`` is droop, and every ``d[i] > 0``.
    """

    m: np.ndarray
    d: np.ndarray
    kind: tuple[GeneratorKind, ...]

    def __init__(self, m, d, kind=None):
        m = _frozen_vector(m, "m")
        d = _frozen_vector(d, "d")
        if kind is None:
            kind = [GeneratorKind.DROOP if x == 0 else GeneratorKind.SYNCHRONOUS for x in m]
        kind = tuple(GeneratorKind(k) for k in kind)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "kind", kind)
        self.validate()

    def validate(self):
        n = self.m.size
        if self.d.size != n or len(self.kind) != n:
            raise DimensionMismatch(f"m, d and kind lengths differ: {n}, {self.d.size}, {len(self.kind)}")
        if np.any(self.m < 0):
            raise InvalidParameters(f"inertia must be nonnegative, got {self.m.tolist()}")
        for i, (mi, ki) in enumerate(zip(self.m, self.kind), start=1):
            if (mi == 0) != (ki is GeneratorKind.DROOP):
                raise InvalidParameters(f"generator {i}: m={mi} is inconsistent with kind={ki.value}")
        bad = [i for i, di in enumerate(self.d, start=1) if not di > 0]
        if bad:
            raise NonpositiveDamping(f"damping must be positive; generators {bad} violate this")

    @property
    def size(self) -> int:
        return self.m.size

    @property
    def droop_nodes(self) -> tuple[int, ...]:
        """1-based numbers of the zero-inertia generators."""
        return tuple(i for i, k in enumerate(self.kind, start=1) if k is GeneratorKind.DROOP)


@dataclass(frozen=True)
class DescriptorSystem:
    laplacian: Laplacian
    params: GeneratorParams
    sigma: np.ndarray
    ts: float

    @property
    def size(self) -> int:
        return self.params.size

    @property
    def E(self) -> np.ndarray:
        n = self.size
        return np.diag(np.concatenate([np.ones(n), self.params.m]))

    @property
    def A(self) -> np.ndarray:
        n = self.size
        return np.block(
            [
                [np.zeros((n, n)), np.eye(n)],
                [-self.laplacian.matrix, -np.diag(self.params.d)],
            ]
        )

    @property
    def noise_cov(self) -> np.ndarray:
        return self.ts * np.diag(self.sigma**2)

    @property
    def is_singular(self) -> bool:
        return bool(np.any(self.params.m == 0))


def assemble_descriptor(laplacian: Laplacian, params: GeneratorParams, sigma, ts: float) -> DescriptorSystem:
    """Validate the pieces of the model and bundle them.

    ``sigma`` may be a scalar (same noise level at every bus) or a length-N
    vector.
    """
    params.validate()
    n = params.size
    if laplacian.size != n:
        raise DimensionMismatch(f"Laplacian is {laplacian.size}x{laplacian.size} but there are {n} generators")
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = np.full(n, float(sigma))
    if sigma.shape != (n,):
        raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected ({n},)")
    if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise InvalidParameters("sigma must be finite and nonnegative")
    ts = float(ts)
    if not ts > 0:
        raise InvalidParameters(f"sampling period must be positive, got {ts}")
    sigma.setflags(write=False)
    return DescriptorSystem(laplacian, params, sigma, ts)


@dataclass(frozen=True)
class Trajectory:
    """Sampled angles and frequencies, shape ``(T, N)``, plus the realized noise.

    ``noise[k]`` is the discrete disturbance ``r[k]`` that drove the step from
    ``k`` to ``k + 1``; it has ``T - 1`` rows.
    """

    delta: np.ndarray
    omega: np.ndarray
    noise: np.ndarray
    ts: float
    seed: int | None = None

    def __post_init__(self):
        for name in ("delta", "omega", "noise"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.delta.ndim != 2 or self.delta.shape != self.omega.shape:
            raise DimensionMismatch(f"delta {self.delta.shape} and omega {self.omega.shape} must be equal 2-D shapes")
        t, n = self.delta.shape
        if self.noise.shape != (max(t - 1, 0), n):
            raise DimensionMismatch(f"noise has shape {self.noise.shape}, expected {(t - 1, n)}")

    @property
    def steps(self) -> int:
        return self.delta.shape[0]

    @property
    def size(self) -> int:
        return self.delta.shape[1]


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox stream; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(seed))


def simulate(system: DescriptorSystem, delta0=None, omega0=None, steps: int = 1000, seed: int = 0) -> Trajectory:
    """Run the discrete model for ``steps`` samples (including the initial one).

    Inertial generators follow::

        omega[k+1] = omega[k] + (ts * (-(H delta[k]) - d omega[k]) + r[k]) / m

    For droop generators the frequency row has no left-hand side, so
    ``omega[k] = (r[k] / ts - (H delta[k])) / d`` is evaluated before the angle
    update; their entries of ``omega0`` are ignored. A ``T``-th noise row is
    drawn only to close the algebraic equations at the final sample and is not
    part of ``Trajectory.noise``.
    """
    n = system.size
    steps = int(steps)
    if steps < 2:
        raise InvalidParameters(f"steps must be at least 2, got {steps}")
    delta0 = np.zeros(n) if delta0 is None else np.asarray(delta0, dtype=float)
    omega0 = np.zeros(n) if omega0 is None else np.asarray(omega0, dtype=float)
    if delta0.shape != (n,) or omega0.shape != (n,):
        raise DimensionMismatch(f"initial state must have length {n}")

    ts = system.ts
    H = system.laplacian.matrix
    m, d = system.params.m, system.params.d
    droop = m == 0
    inertial = ~droop
    m_in, d_in = m[inertial], d[inertial]

    noise = make_rng(seed).standard_normal((steps, n)) * (np.sqrt(ts) * system.sigma)
    delta = np.empty((steps, n))
    omega = np.empty((steps, n))
    delta[0] = delta0
    omega[0] = omega0
    for k in range(steps):
        h_delta = H @ delta[k]
        if droop.any():
            omega[k, droop] = (noise[k, droop] / ts - h_delta[droop]) / d[droop]
        if k + 1 == steps:
            break
        delta[k + 1] = delta[k] + ts * omega[k]
        w = omega[k, inertial]
        omega[k + 1, inertial] = w + (ts * (-h_delta[inertial] - d_in * w) + noise[k, inertial]) / m_in
    return Trajectory(delta, omega, noise[:-1], ts, seed)


def residual(system: DescriptorSystem, trajectory: Trajectory) -> np.ndarray:
    """Bottom block of ``E(z[k+1] - z[k]) - ts A z[k]`` for ``k = 0..T-2``."""
    _check_match(system, trajectory)
    ts = system.ts
    delta, omega = trajectory.delta, trajectory.omega
    return (
        system.params.m * np.diff(omega, axis=0)
        + ts * delta[:-1] @ system.laplacian.matrix.T
        + ts * system.params.d * omega[:-1]
    )


def _check_match(system: DescriptorSystem, trajectory: Trajectory):
    if trajectory.size != system.size:
        raise DimensionMismatch(f"trajectory has {trajectory.size} nodes, system has {system.size}")


def _frozen_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr
