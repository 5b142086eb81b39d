"""Network susceptance Laplacians and Kron reduction.

Bus labels are 1-based everywhere they cross an API boundary. Internally the
Laplacian is a dense ``(N, N)`` array whose row ``r`` belongs to bus
``node_labels[r]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidTopology, SingularInteriorBlock

# Condition number beyond which the eliminated block is treated as singular.
MAX_INTERIOR_CONDITION = 1e12


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    beta: float


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected transmission graph with positive susceptance weights.

    Parameters
    ----------
    n_buses : int
        Number of buses, labelled ``1..n_buses``.
    edges : sequence of (i, j, beta)
        Lines between buses ``i`` and ``j`` with weight ``beta > 0``.
    generator_buses : sequence of int
        Buses hosting a generator, in the order used for the reduced model.
    """

    n_buses: int
    edges: tuple[Edge, ...]
    generator_buses: tuple[int, ...]

    def __init__(self, n_buses, edges, generator_buses):
        object.__setattr__(self, "n_buses", int(n_buses))
        object.__setattr__(
            self, "edges", tuple(e if isinstance(e, Edge) else Edge(int(e[0]), int(e[1]), float(e[2])) for e in edges)
        )
        object.__setattr__(self, "generator_buses", tuple(int(g) for g in generator_buses))
        self.validate()

    def validate(self):
        if self.n_buses < 1:
            raise InvalidTopology(f"n_buses must be positive, got {self.n_buses}")
        seen = set()
        for edge in self.edges:
            for end in (edge.i, edge.j):
                if not 1 <= end <= self.n_buses:
                    raise InvalidTopology(f"edge {edge} references bus {end} outside 1..{self.n_buses}", edge)
            if edge.i == edge.j:
                raise InvalidTopology(f"edge {edge} is a self-loop", edge)
            if not (np.isfinite(edge.beta) and edge.beta > 0):
                raise InvalidTopology(f"edge {edge} has nonpositive susceptance", edge)
            key = frozenset((edge.i, edge.j))
            if key in seen:
                raise InvalidTopology(f"edge {edge} duplicates an earlier line", edge)
            seen.add(key)
        if not self.generator_buses:
            raise InvalidTopology("generator_buses is empty")
        if len(set(self.generator_buses)) != len(self.generator_buses):
            raise InvalidTopology(f"generator_buses has duplicates: {list(self.generator_buses)}")
        for g in self.generator_buses:
            if not 1 <= g <= self.n_buses:
                raise InvalidTopology(f"generator bus {g} outside 1..{self.n_buses}")


@dataclass(frozen=True)
class Laplacian:
    """Symmetric weighted Laplacian with zero row sums.

    ``node_labels`` defaults to ``1..N``.
    """

    matrix: np.ndarray
    node_labels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"Laplacian must be square, got shape {mat.shape}")
        labels = tuple(int(x) for x in self.node_labels) or tuple(range(1, mat.shape[0] + 1))
        if len(labels) != mat.shape[0]:
            raise DimensionMismatch(f"{len(labels)} labels for a {mat.shape[0]}x{mat.shape[0]} Laplacian")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "node_labels", labels)
        check_laplacian(mat)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index_of(self, labels: Iterable[int]) -> list[int]:
        pos = {lab: r for r, lab in enumerate(self.node_labels)}
        try:
            return [pos[int(lab)] for lab in labels]
        except KeyError as exc:
            raise InvalidTopology(f"bus {exc.args[0]} is not a node of this Laplacian") from None


def check_laplacian(mat, tol=1e-9):
    """Raise ``InvalidTopology`` unless ``mat`` is a valid Laplacian.

    Tolerances scale with the largest entry so that per-unit data of any
    magnitude is judged alike.
    """
    scale = max(1.0, float(np.max(np.abs(mat), initial=0.0)))
    if not np.all(np.isfinite(mat)):
        raise InvalidTopology("Laplacian has non-finite entries")
    if np.max(np.abs(mat - mat.T), initial=0.0) > tol * scale:
        raise InvalidTopology("Laplacian is not symmetric")
    if np.max(np.abs(mat.sum(axis=1)), initial=0.0) > tol * scale:
        raise InvalidTopology("Laplacian rows do not sum to zero")
    off = mat - np.diag(np.diag(mat))
    if np.max(off, initial=0.0) > 1e-12 * scale:
        raise InvalidTopology("Laplacian has positive off-diagonal entries")


def build_laplacian(topology: NetworkTopology) -> Laplacian:
    """Assemble the bus Laplacian of ``topology``.

    ``[H]_ij = -beta_ij`` on lines, ``[H]_ii`` the total susceptance at bus i.

    >>> build_laplacian(NetworkTopology(2, [(1, 2, 1.0)], [1])).matrix
    array([[ 1., -1.],
           [-1.,  1.]])
    """
    topology.validate()
    n = topology.n_buses
    mat = np.zeros((n, n))
    for e in topology.edges:
        a, b = e.i - 1, e.j - 1
        mat[a, b] -= e.beta
        mat[b, a] -= e.beta
        mat[a, a] += e.beta
        mat[b, b] += e.beta
    return Laplacian(mat, tuple(range(1, n + 1)))


def kron_reduce(lap: Laplacian, keep: Sequence[int]) -> Laplacian:
    """Eliminate every bus not in ``keep`` by a Schur complement.

    Returns ``H_kk - H_ke H_ee^{-1} H_ek`` labelled by ``keep`` (in the order
    given). Raises ``SingularInteriorBlock`` when the eliminated buses contain
    a component with no path to a kept bus.
    """
    keep = [int(k) for k in keep]
    if not keep:
        raise InvalidTopology("keep must be non-empty")
    if len(set(keep)) != len(keep):
        raise InvalidTopology(f"keep has duplicates: {keep}")
    k_idx = lap.index_of(keep)
    kept = set(k_idx)
    e_idx = [r for r in range(lap.size) if r not in kept]
    H = lap.matrix
    H_kk = H[np.ix_(k_idx, k_idx)]
    if not e_idx:
        return Laplacian(H_kk, tuple(keep))
    H_ee = H[np.ix_(e_idx, e_idx)]
    H_ke = H[np.ix_(k_idx, e_idx)]
    cond = np.linalg.cond(H_ee)
    if not np.isfinite(cond) or cond > MAX_INTERIOR_CONDITION:
        eliminated = [lap.node_labels[r] for r in e_idx]
        raise SingularInteriorBlock(
            f"block over eliminated buses {eliminated} is singular (condition {cond:.3g}); "
            "some eliminated component is not connected to a kept bus"
        )
    reduced = H_kk - H_ke @ np.linalg.solve(H_ee, H_ke.T)
    reduced = 0.5 * (reduced + reduced.T)
    return Laplacian(reduced, tuple(keep))


def generator_laplacian(topology: NetworkTopology) -> Laplacian:
    """Kron-reduce the full bus Laplacian onto the generator buses."""
    return kron_reduce(build_laplacian(topology), topology.generator_buses)
