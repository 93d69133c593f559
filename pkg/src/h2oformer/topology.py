"""Static hypergraph structure over skeleton joints.

Vertices are joints, hyperedges are body-part groups.  Everything here is
built once per dataset and treated as read-only afterwards.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

BUILTIN_TOPOLOGIES = ("imigue22", "smg25", "micro6")


class TopologyError(ValueError):
    """Invalid graph, partition, or topology file."""


@dataclass(frozen=True)
class JointGraph:
    num_vertices: int
    adjacency: np.ndarray
    joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        a = self.adjacency
        if a.shape != (self.num_vertices, self.num_vertices):
            raise TopologyError(f"adjacency shape {a.shape} does not match {self.num_vertices} vertices")
        if not np.array_equal(a, a.T):
            raise TopologyError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise TopologyError(f"adjacency has a self loop at vertex {int(np.flatnonzero(np.diag(a))[0])}")
        if self.joint_names is not None and len(self.joint_names) != self.num_vertices:
            raise TopologyError(f"{len(self.joint_names)} joint names for {self.num_vertices} vertices")
        a.setflags(write=False)

    @classmethod
    def from_bones(cls, num_vertices: int, bones: Sequence[Sequence[int]],
                   joint_names: Sequence[str] | None = None) -> "JointGraph":
        adj = np.zeros((num_vertices, num_vertices), dtype=np.int8)
        for k, bone in enumerate(bones):
            if len(bone) != 2:
                raise TopologyError(f"bone #{k} {list(bone)} must have exactly two endpoints")
            i, j = (int(b) for b in bone)
            for end in (i, j):
                if not 0 <= end < num_vertices:
                    raise TopologyError(f"bone #{k} {[i, j]} references vertex {end} outside [0, {num_vertices})")
            if i == j:
                raise TopologyError(f"bone #{k} {[i, j]} is a self loop")
            adj[i, j] = adj[j, i] = 1
        return cls(num_vertices, adj, tuple(joint_names) if joint_names is not None else None)


@dataclass(frozen=True)
class HyperedgePartition:
    num_hyperedges: int
    assignment: tuple[int, ...]
    incidence: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.assignment)

    def members(self, e: int) -> np.ndarray:
        return np.flatnonzero(self.incidence[:, e])


@dataclass(frozen=True)
class DegreeMatrices:
    vertex: np.ndarray
    hyperedge: np.ndarray


@dataclass(frozen=True)
class HopTable:
    hops: np.ndarray
    m: int


def build_incidence(assignment: Mapping[int, int] | Sequence[int], num_hyperedges: int) -> HyperedgePartition:
    """Binary incidence matrix with ``H[v, e] = 1`` iff vertex ``v`` is in hyperedge ``e``."""
    if isinstance(assignment, Mapping):
        n = max(assignment.keys(), default=-1) + 1
        for v in range(n):
            if v not in assignment:
                raise TopologyError(f"vertex {v} is not assigned to any hyperedge")
        seq = [assignment[v] for v in range(n)]
    else:
        seq = list(assignment)
    if not seq:
        raise TopologyError("assignment is empty")
    H = np.zeros((len(seq), num_hyperedges), dtype=np.int8)
    for v, e in enumerate(seq):
        if e is None:
            raise TopologyError(f"vertex {v} is not assigned to any hyperedge")
        e = int(e)
        if not 0 <= e < num_hyperedges:
            raise TopologyError(f"vertex {v} assigned to hyperedge {e} outside [0, {num_hyperedges})")
        H[v, e] = 1
    sizes = H.sum(axis=0)
    for e in range(num_hyperedges):
        if sizes[e] == 0:
            raise TopologyError(f"hyperedge {e} has no member vertices")
    H.setflags(write=False)
    return HyperedgePartition(num_hyperedges, tuple(int(e) for e in seq), H)


def compute_degrees(partition: HyperedgePartition) -> DegreeMatrices:
    H = partition.incidence.astype(np.float64)
    dv = np.diag(H.sum(axis=1))
    de = np.diag(H.sum(axis=0))
    return DegreeMatrices(dv, de)


def hop_distances(graph: JointGraph) -> HopTable:
    """Breadth-first shortest-path lengths between all joint pairs."""
    n = graph.num_vertices
    neighbors = [np.flatnonzero(graph.adjacency[i]) for i in range(n)]
    hops = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        hops[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for w in neighbors[u]:
                if hops[src, w] < 0:
                    hops[src, w] = hops[src, u] + 1
                    queue.append(w)
        missing = np.flatnonzero(hops[src] < 0)
        if missing.size:
            raise TopologyError(f"graph is disconnected: vertex {int(missing[0])} unreachable from vertex {src}")
    hops.setflags(write=False)
    return HopTable(hops, int(hops.max()) + 1)


def pooling_matrix(partition: HyperedgePartition, degrees: DegreeMatrices | None = None) -> np.ndarray:
    """``H D_e^{-1} H^T``: replaces each vertex row by the mean of its hyperedge."""
    degrees = degrees or compute_degrees(partition)
    H = partition.incidence.astype(np.float64)
    return H @ np.diag(1.0 / np.diag(degrees.hyperedge)) @ H.T


def hyperedge_pool(X: np.ndarray, partition: HyperedgePartition, degrees: DegreeMatrices,
                   W_e: np.ndarray) -> np.ndarray:
    """Per-hyperedge mean of member features, projected by ``W_e``: ``D_e^{-1} H^T X W_e``."""
    H = partition.incidence.astype(X.dtype)
    if X.ndim != 2 or X.shape[0] != H.shape[0]:
        raise TopologyError(f"hyperedge_pool: X has shape {X.shape}, expected ({H.shape[0]}, D)")
    if W_e.ndim != 2 or W_e.shape[0] != X.shape[1]:
        raise TopologyError(f"hyperedge_pool: W_e has shape {W_e.shape}, expected ({X.shape[1]}, D')")
    inv_de = (1.0 / np.diag(degrees.hyperedge)).astype(X.dtype)
    return (inv_de[:, None] * (H.T @ X)) @ W_e


def gather_relpos(hops: HopTable | np.ndarray, R):
    """``R_phi[i, j] = R[hops[i, j]]``.  Accepts an array or a tape Tensor for ``R``."""
    h = hops.hops if isinstance(hops, HopTable) else np.asarray(hops)
    m = R.shape[0]
    if h.max() >= m:
        raise TopologyError(f"relative-position table has {m} rows but hop distances reach {int(h.max())}")
    from .numerics import Tensor, ops
    if isinstance(R, Tensor):
        return ops.gather_rows(R, h)
    return np.asarray(R)[h]


@dataclass(frozen=True)
class Topology:
    """Graph, partition, and the derived constants a HET block consumes."""

    name: str
    graph: JointGraph
    partition: HyperedgePartition
    root: int = 0
    hyperedge_names: tuple[str, ...] | None = None
    degrees: DegreeMatrices = field(init=False)
    hop_table: HopTable = field(init=False)
    pool: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.partition.num_vertices != self.graph.num_vertices:
            raise TopologyError(f"partition covers {self.partition.num_vertices} vertices, "
                                f"graph has {self.graph.num_vertices}")
        if not 0 <= self.root < self.graph.num_vertices:
            raise TopologyError(f"root joint {self.root} outside [0, {self.graph.num_vertices})")
        degrees = compute_degrees(self.partition)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "hop_table", hop_distances(self.graph))
        pool = pooling_matrix(self.partition, degrees)
        pool.setflags(write=False)
        object.__setattr__(self, "pool", pool)

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    @property
    def num_hyperedges(self) -> int:
        return self.partition.num_hyperedges

    @property
    def hops(self) -> np.ndarray:
        return self.hop_table.hops

    def to_dict(self) -> dict:
        groups = [self.partition.members(e).tolist() for e in range(self.num_hyperedges)]
        a = self.graph.adjacency
        bones = [[int(i), int(j)] for i, j in zip(*np.nonzero(np.triu(a)))]
        out = {"name": self.name, "num_vertices": self.num_vertices, "bones": bones,
               "hyperedges": groups, "root": self.root}
        if self.graph.joint_names is not None:
            out["joint_names"] = list(self.graph.joint_names)
        if self.hyperedge_names is not None:
            out["hyperedge_names"] = list(self.hyperedge_names)
        return out


def topology_from_dict(spec: Mapping, name: str | None = None) -> Topology:
    for key in ("num_vertices", "bones", "hyperedges"):
        if key not in spec:
            raise TopologyError(f"topology is missing required key {key!r}")
    n = spec["num_vertices"]
    if not isinstance(n, int) or n < 1:
        raise TopologyError(f"num_vertices must be a positive integer, got {n!r}")
    graph = JointGraph.from_bones(n, spec["bones"], spec.get("joint_names"))
    assignment: list[int | None] = [None] * n
    for e, group in enumerate(spec["hyperedges"]):
        if not group:
            raise TopologyError(f"hyperedge {e} has no member vertices")
        for v in group:
            if not isinstance(v, int) or not 0 <= v < n:
                raise TopologyError(f"hyperedge {e} lists vertex {v!r} outside [0, {n})")
            if assignment[v] is not None:
                raise TopologyError(f"vertex {v} appears in hyperedges {assignment[v]} and {e}")
            assignment[v] = e
    for v, e in enumerate(assignment):
        if e is None:
            raise TopologyError(f"vertex {v} is not assigned to any hyperedge")
    partition = build_incidence(assignment, len(spec["hyperedges"]))
    names = spec.get("hyperedge_names")
    return Topology(
        name=name or spec.get("name", "custom"),
        graph=graph,
        partition=partition,
        root=int(spec.get("root", 0)),
        hyperedge_names=tuple(names) if names is not None else None,
    )


def load_topology(source: str | Path) -> Topology:
    """Load a built-in topology by name or a topology JSON file by path."""
    if isinstance(source, str) and source in BUILTIN_TOPOLOGIES:
        text = resources.files("h2oformer.topologies").joinpath(f"{source}.json").read_text("utf-8")
        return topology_from_dict(json.loads(text), name=source)
    path = Path(source)
    if not path.exists():
        raise TopologyError(f"topology {str(source)!r} is neither a built-in {BUILTIN_TOPOLOGIES} nor a file")
    try:
        spec = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: invalid JSON ({exc})") from None
    return topology_from_dict(spec, name=spec.get("name", path.stem))
