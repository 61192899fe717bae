"""Graph actions, feature aggregation, permutations, and synthetic domains.

A graph is an undirected adjacency structure plus a real feature vector per
node.  The object every kernel and network in this package actually consumes
is the aggregated form: each node's feature summed with its neighbors'
(self included) and normalized to unit length.  Nodes appended by
:func:`pad_to` carry no features and are masked out of aggregation and of
all downstream node averages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, ShrinkNotAllowed, ZeroAggregateNorm
from .ioutil import dumps_json
from .rng import keyed_rng

ZERO_NORM_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Graph:
    """Undirected graph with node features.

    ``adjacency`` is symmetric boolean with a zero diagonal; the node itself
    is always part of its own neighborhood implicitly.  ``node_mask`` marks
    effective nodes; padded auxiliary nodes are False.
    """

    adjacency: np.ndarray
    features: np.ndarray
    node_mask: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        feats = np.asarray(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        n = adj.shape[0]
        if n < 1:
            raise ValueError("graph needs at least one node")
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError("features must be (num_nodes, d)")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("self-loops must not be stored explicitly")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        mask = self.node_mask
        mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError("node_mask must be (num_nodes,)")
        if not mask.any():
            raise ValueError("at least one effective node required")
        object.__setattr__(self, "adjacency", _frozen(adj))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "node_mask", _frozen(mask))

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_effective(self) -> int:
        return int(self.node_mask.sum())

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())


@dataclass(frozen=True)
class AggregatedGraph:
    """Unit-norm aggregated node features, one row per effective node."""

    hbar: np.ndarray

    def __post_init__(self):
        hbar = np.asarray(self.hbar, dtype=np.float64)
        if hbar.ndim != 2 or hbar.shape[0] < 1:
            raise ValueError("hbar must be a nonempty matrix")
        norms = np.linalg.norm(hbar, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("every aggregated row must be unit-norm")
        object.__setattr__(self, "hbar", _frozen(hbar))

    @property
    def num_nodes(self) -> int:
        return self.hbar.shape[0]

    @property
    def dim(self) -> int:
        return self.hbar.shape[1]


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0..N-1}; entry j is the source index c(j)."""

    mapping: np.ndarray

    def __post_init__(self):
        mapping = np.asarray(self.mapping, dtype=np.intp)
        if mapping.ndim != 1:
            raise ValueError("mapping must be one-dimensional")
        n = mapping.shape[0]
        if not np.array_equal(np.sort(mapping), np.arange(n)):
            raise ValueError("mapping must be a bijection on 0..N-1")
        object.__setattr__(self, "mapping", _frozen(mapping))

    def __len__(self) -> int:
        return self.mapping.shape[0]

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(len(self))
        return Permutation(inv)

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n))

    @staticmethod
    def random(n: int, seed: int, index: int = 0) -> "Permutation":
        return Permutation(keyed_rng(seed, "permutation", index).permutation(n))


@dataclass(frozen=True)
class GraphDomain:
    """Finite ordered action set of graphs sharing node count and dimension."""

    graphs: tuple
    edge_prob: float = None  # type: ignore[assignment]
    seed: int = None  # type: ignore[assignment]

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("domain must be nonempty")
        n, d = graphs[0].num_nodes, graphs[0].dim
        for g in graphs:
            if g.num_nodes != n or g.dim != d:
                raise ValueError("all graphs must share node count and dimension")
        object.__setattr__(self, "graphs", graphs)

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def num_nodes(self) -> int:
        return self.graphs[0].num_nodes

    @property
    def dim(self) -> int:
        return self.graphs[0].dim


def aggregate(g: Graph) -> AggregatedGraph:
    """Aggregated features: normalized neighborhood sums over effective nodes.

    Raises ZeroAggregateNorm if any effective node's neighborhood feature sum
    has norm below 1e-12; padded (masked) nodes are excluded from both the
    sums and the output rows.
    """
    mask = g.node_mask
    include = g.adjacency | np.eye(g.num_nodes, dtype=bool)
    include = include & mask[None, :]  # padded nodes contribute nothing
    sums = include.astype(np.float64) @ g.features
    sums = sums[mask]
    norms = np.linalg.norm(sums, axis=1)
    bad = np.nonzero(norms < ZERO_NORM_TOL)[0]
    if bad.size:
        effective_idx = np.nonzero(mask)[0]
        raise ZeroAggregateNorm(int(effective_idx[bad[0]]))
    return AggregatedGraph(sums / norms[:, None])


def permute(g: Graph, c: Permutation) -> Graph:
    """Relabel nodes so output row j holds input row c(j)."""
    if len(c) != g.num_nodes:
        raise LengthMismatch(f"permutation length {len(c)} != {g.num_nodes} nodes")
    m = c.mapping
    return Graph(
        adjacency=g.adjacency[np.ix_(m, m)],
        features=g.features[m],
        node_mask=g.node_mask[m],
    )


def pad_to(g: Graph, n_target: int) -> Graph:
    """Append disconnected zero-feature nodes, masked out of aggregation."""
    n = g.num_nodes
    if n_target < n:
        raise ShrinkNotAllowed(f"cannot shrink {n} nodes to {n_target}")
    if n_target == n:
        return g
    extra = n_target - n
    adj = np.zeros((n_target, n_target), dtype=bool)
    adj[:n, :n] = g.adjacency
    feats = np.zeros((n_target, g.dim))
    feats[:n] = g.features
    mask = np.zeros(n_target, dtype=bool)
    mask[:n] = g.node_mask
    return Graph(adjacency=adj, features=feats, node_mask=mask)


def gen_erdos_renyi(count: int, n_nodes: int, p: float, d: int, seed: int) -> GraphDomain:
    """Domain of Erdos-Renyi graphs with i.i.d. standard Gaussian node features.

    Each unordered node pair is joined independently with probability ``p``.
    Generation is keyed per graph index, so the result is identical no matter
    how the work is scheduled.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {p}")
    if count < 1 or n_nodes < 1 or d < 1:
        raise ValueError("count, nodes and dim must be positive")
    iu, ju = np.triu_indices(n_nodes, k=1)
    graphs = []
    for i in range(count):
        rng = keyed_rng(seed, "erdos-renyi", i)
        edge_draw = rng.random(iu.shape[0]) < p
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        adj[iu[edge_draw], ju[edge_draw]] = True
        adj |= adj.T
        feats = rng.standard_normal((n_nodes, d))
        graphs.append(Graph(adjacency=adj, features=feats))
    return GraphDomain(tuple(graphs), edge_prob=p, seed=seed)


def aggregate_domain(domain: GraphDomain) -> list:
    """Aggregated form of every graph, in domain order."""
    return [aggregate(g) for g in domain.graphs]


# ---------------------------------------------------------------------------
# serialization


def domain_to_json(domain: GraphDomain) -> str:
    meta = {
        "N": domain.num_nodes,
        "d": domain.dim,
        "p": domain.edge_prob,
        "seed": domain.seed,
        "count": len(domain),
    }
    graphs = []
    for g in domain.graphs:
        iu, ju = np.nonzero(np.triu(g.adjacency, 1))
        edges = [[int(a), int(b)] for a, b in zip(iu, ju)]
        graphs.append({"edges": edges, "features": g.features})
    return dumps_json({"meta": meta, "graphs": graphs})


def domain_from_json(text: str) -> GraphDomain:
    """Inverse of domain_to_json.

    A node with an all-zero feature row and no incident edges is read back as
    a padded (masked) node; generated domains never contain such nodes.
    """
    doc = json.loads(text)
    meta = doc["meta"]
    n, d = int(meta["N"]), int(meta["d"])
    graphs = []
    for entry in doc["graphs"]:
        adj = np.zeros((n, n), dtype=bool)
        for a, b in entry["edges"]:
            adj[a, b] = adj[b, a] = True
        feats = np.asarray(entry["features"], dtype=np.float64)
        if feats.shape != (n, d):
            raise ValueError("feature block shape does not match meta")
        isolated_zero = ~adj.any(axis=1) & ~feats.any(axis=1)
        mask = ~isolated_zero if isolated_zero.any() else None
        graphs.append(Graph(adjacency=adj, features=feats, node_mask=mask))
    p = meta.get("p")
    seed = meta.get("seed")
    return GraphDomain(
        tuple(graphs),
        edge_prob=None if p is None else float(p),
        seed=None if seed is None else int(seed),
    )


def save_domain(domain: GraphDomain, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(domain_to_json(domain) + "\n")


def load_domain(path) -> GraphDomain:
    with open(path, "r", encoding="utf-8") as fh:
        return domain_from_json(fh.read())
