"""Core graph representation, adjacency construction, and dataset statistics.

Graphs are undirected and immutable: features are a dense float64 matrix,
edges a canonical (u < v, sorted, duplicate-free) integer array. All
operations here are pure functions, safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DensityUndefinedError,
    EmptyScopeError,
    GraphValidationError,
    ShapeError,
)

MASK_NAMES = ("train", "val", "test")


def canonical_edges(edges) -> np.ndarray:
    """Return edges as an (m, 2) int64 array with u < v, sorted, deduplicated.

    Self-pairs are rejected; orientation is normalized (v < u is flipped).
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(arr[:, 0] == arr[:, 1]):
        raise GraphValidationError("self-pairs are not allowed in the edge list")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    arr = np.stack([lo, hi], axis=1)
    arr = np.unique(arr, axis=0)
    return arr


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph.

    labels may contain -1 as the "unlabeled" sentinel; labeled entries must
    lie in [0, num_classes). Masks, when present, are boolean per-node
    vectors; "train"/"val"/"test" must be pairwise disjoint.
    """

    num_nodes: int
    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise GraphValidationError(
                f"features must be (num_nodes, d); got {feats.shape} for "
                f"{self.num_nodes} nodes"
            )
        edges = canonical_edges(self.edges)
        if edges.size and (edges.min() < 0 or edges.max() >= self.num_nodes):
            raise GraphValidationError(
                f"edge endpoint out of range [0, {self.num_nodes})"
            )
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (self.num_nodes,):
                raise GraphValidationError("labels must be one entry per node")
            if self.num_classes is None:
                raise GraphValidationError("labels present but num_classes missing")
            if np.any(labels >= self.num_classes) or np.any(labels < -1):
                raise GraphValidationError(
                    f"labels must lie in [-1, {self.num_classes})"
                )
        masks = {}
        for name, m in self.masks.items():
            m = np.asarray(m, dtype=bool)
            if m.shape != (self.num_nodes,):
                raise GraphValidationError(f"mask {name!r} has wrong length")
            masks[name] = m
        for i, a in enumerate(MASK_NAMES):
            for b in MASK_NAMES[i + 1 :]:
                if a in masks and b in masks and np.any(masks[a] & masks[b]):
                    raise GraphValidationError(f"masks {a!r} and {b!r} overlap")
        for arr in (feats, edges, labels, *masks.values()):
            if arr is not None:
                arr.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "masks", masks)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def mask(self, name: str) -> np.ndarray:
        if name not in self.masks:
            raise GraphValidationError(f"graph has no {name!r} mask")
        return self.masks[name]

    def with_masks(self, masks: dict[str, np.ndarray]) -> "Graph":
        return Graph(
            num_nodes=self.num_nodes,
            features=self.features,
            edges=self.edges,
            labels=self.labels,
            num_classes=self.num_classes,
            masks=masks,
        )


@dataclass(frozen=True)
class CsrAdjacency:
    """Symmetric sparse adjacency in CSR form.

    Within each row col_indices are strictly increasing; the matrix is
    symmetric as stored (entry (i, j) present iff (j, i) present, equal value).
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Product with a dense (num_nodes, d) matrix."""
        if dense.shape[0] != self.num_nodes:
            raise ShapeError(
                f"adjacency is {self.num_nodes}x{self.num_nodes}, "
                f"operand has {dense.shape[0]} rows"
            )
        return self.to_scipy() @ dense

    def degrees(self) -> np.ndarray:
        """Row sums (weighted degrees)."""
        out = np.zeros(self.num_nodes)
        np.add.at(out, _row_index(self), self.values)
        return out


def _row_index(adj: CsrAdjacency) -> np.ndarray:
    counts = np.diff(adj.row_offsets)
    return np.repeat(np.arange(adj.num_nodes), counts)


def _csr_from_coo(num_nodes, rows, cols, vals) -> CsrAdjacency:
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(num_nodes, num_nodes))
    mat.sum_duplicates()
    mat.sort_indices()
    return CsrAdjacency(
        num_nodes=num_nodes,
        row_offsets=np.asarray(mat.indptr, dtype=np.int64),
        col_indices=np.asarray(mat.indices, dtype=np.int64),
        values=np.asarray(mat.data, dtype=np.float64),
    )


def build_adjacency(graph: Graph, add_self_loops: bool = True) -> CsrAdjacency:
    """Binary symmetric adjacency; with add_self_loops the diagonal is 1."""
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    if add_self_loops:
        diag = np.arange(graph.num_nodes)
        rows = np.concatenate([rows, diag])
        cols = np.concatenate([cols, diag])
    vals = np.ones(rows.shape[0])
    return _csr_from_coo(graph.num_nodes, rows, cols, vals)


def symmetric_normalize(adj: CsrAdjacency) -> CsrAdjacency:
    """Rescale entry (i, j) to a_ij / sqrt(deg_i * deg_j).

    Degrees are the row sums of ``adj``. A zero-degree node keeps an all-zero
    row/column; with self-loops added beforehand this never happens.
    """
    deg = adj.degrees()
    with np.errstate(divide="ignore"):
        dinv = 1.0 / np.sqrt(deg)
    dinv[~np.isfinite(dinv)] = 0.0
    rows = _row_index(adj)
    vals = adj.values * dinv[rows] * dinv[adj.col_indices]
    return CsrAdjacency(
        num_nodes=adj.num_nodes,
        row_offsets=adj.row_offsets,
        col_indices=adj.col_indices,
        values=vals,
    )


def edge_density(num_nodes: int, num_edges: int) -> float:
    """Undirected edge density 2|E| / (n(n-1)); undefined for n < 2."""
    if num_nodes < 2:
        raise DensityUndefinedError(
            f"edge density undefined for {num_nodes} node(s)"
        )
    return 2.0 * num_edges / (num_nodes * (num_nodes - 1))


@dataclass(frozen=True)
class DatasetStats:
    """Average size/density plus feature mean and covariance of a dataset.

    sigma_node is the population covariance: a (d, d) matrix in "full" mode
    or the (d,) per-dimension variance vector in "diagonal" mode.
    """

    n_bar: float
    d_bar: float
    mu_node: np.ndarray
    sigma_node: np.ndarray
    source_node_count: int
    covariance_mode: str = "full"

    def __post_init__(self):
        if not 0.0 <= self.d_bar <= 1.0:
            raise GraphValidationError(f"d_bar must lie in [0, 1], got {self.d_bar}")
        if self.covariance_mode not in ("full", "diagonal"):
            raise GraphValidationError(
                f"unknown covariance mode {self.covariance_mode!r}"
            )


def compute_dataset_stats(
    graph: Graph,
    scope: str = "all_nodes",
    covariance_mode: str = "full",
) -> DatasetStats:
    """Extract n_bar, d_bar and the feature mean/covariance from one graph.

    scope "all_nodes" uses every node; "train_mask" restricts to the train
    mask and the induced subgraph (both edge endpoints in scope). Covariance
    is population (divide by the node count).
    """
    if scope == "all_nodes":
        idx = np.arange(graph.num_nodes)
    elif scope == "train_mask":
        idx = np.flatnonzero(graph.mask("train"))
    else:
        raise GraphValidationError(f"unknown scope {scope!r}")
    n = idx.shape[0]
    if n == 0:
        raise EmptyScopeError(f"scope {scope!r} selects no nodes")
    if n < 2:
        raise DensityUndefinedError("need at least 2 in-scope nodes for density")

    in_scope = np.zeros(graph.num_nodes, dtype=bool)
    in_scope[idx] = True
    keep = in_scope[graph.edges[:, 0]] & in_scope[graph.edges[:, 1]]
    m = int(np.count_nonzero(keep))

    x = graph.features[idx]
    mu = x.mean(axis=0)
    centered = x - mu
    if covariance_mode == "diagonal":
        sigma = np.mean(centered * centered, axis=0)
    else:
        sigma = centered.T @ centered / n

    return DatasetStats(
        n_bar=float(n),
        d_bar=edge_density(n, m),
        mu_node=mu,
        sigma_node=sigma,
        source_node_count=n,
        covariance_mode=covariance_mode,
    )
