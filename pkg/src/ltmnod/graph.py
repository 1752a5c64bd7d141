"""Weighted directed graphs, their text/JSON formats, and spectral quantities.

Orientation: ``weights[i, j]`` is the influence node ``j`` exerts on node ``i``,
so ``(A @ z)[i]`` aggregates the in-neighbours of ``i``.  An edge-list line
``src dst w`` therefore sets ``weights[dst, src] = w``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

DENSE_LIMIT = 4096
SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 100_000


class GraphError(ValueError):
    """Invalid graph data (negative weights, self-loops, duplicates...)."""


class GraphParseError(GraphError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpectralError(RuntimeError):
    def __init__(self, message, last_iterates):
        super().__init__(f"{message}; last two estimates: {last_iterates}")
        self.last_iterates = last_iterates


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Nonnegative weighted adjacency with zero diagonal.

    Stored dense up to ``DENSE_LIMIT`` nodes and as CSR beyond.  Instances are
    immutable; the dense array is marked read-only.
    """

    n: int
    weights: np.ndarray | sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        w = self.weights
        if w.shape != (self.n, self.n):
            raise GraphError(f"weights shape {w.shape} does not match n={self.n}")
        if sparse.issparse(w):
            w = sparse.csr_matrix(w, dtype=float)
            w.eliminate_zeros()
            w.sort_indices()
            vals, diag = w.data, w.diagonal()
        else:
            w = np.array(w, dtype=float)
            vals, diag = w, np.diag(w)
        if not np.all(np.isfinite(vals)):
            raise GraphError("weights must be finite")
        if np.any(vals < 0):
            raise GraphError("weights must be nonnegative")
        if np.any(diag != 0):
            i = int(np.flatnonzero(diag)[0])
            raise GraphError(f"self-loop with nonzero weight at node {i}")
        if not sparse.issparse(w):
            w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n, edges):
        """Build from ``(src, dst, weight)`` triples; duplicates are rejected."""
        seen = set()
        rows, cols, vals = [], [], []
        for src, dst, w in edges:
            src, dst, w = int(src), int(dst), float(w)
            if not (0 <= src < n and 0 <= dst < n):
                raise GraphError(f"edge ({src}, {dst}) out of range for n={n}")
            if (src, dst) in seen:
                raise GraphError(f"duplicate edge ({src}, {dst})")
            if w < 0:
                raise GraphError(f"negative weight {w} on edge ({src}, {dst})")
            if src == dst and w != 0:
                raise GraphError(f"self-loop with nonzero weight at node {src}")
            seen.add((src, dst))
            rows.append(dst)
            cols.append(src)
            vals.append(w)
        if n > DENSE_LIMIT:
            mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        else:
            mat = np.zeros((n, n))
            mat[rows, cols] = vals
        return cls(n, mat)

    @property
    def is_sparse(self):
        return sparse.issparse(self.weights)

    def dense(self):
        return self.weights.toarray() if self.is_sparse else np.asarray(self.weights)

    @cached_property
    def csr(self):
        """``(indptr, indices, data)`` arrays used by the integration kernels."""
        m = self.weights if self.is_sparse else sparse.csr_matrix(self.weights)
        return (
            np.ascontiguousarray(m.indptr, dtype=np.int64),
            np.ascontiguousarray(m.indices, dtype=np.int64),
            np.ascontiguousarray(m.data, dtype=np.float64),
        )

    def matvec(self, z):
        return self.weights @ z

    def row_sums(self):
        return np.asarray(self.weights.sum(axis=1)).ravel()

    def in_neighbors(self, i):
        indptr, indices, data = self.csr
        sl = slice(indptr[i], indptr[i + 1])
        return indices[sl], data[sl]

    def edges(self):
        """``(src, dst, weight)`` triples in row-major order of ``weights``."""
        indptr, indices, data = self.csr
        out = []
        for dst in range(self.n):
            for p in range(indptr[dst], indptr[dst + 1]):
                out.append((int(indices[p]), dst, float(data[p])))
        return out


def _parse_edge_list(text):
    triples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphParseError(f"expected 'src dst weight', got {raw!r}", lineno)
        try:
            src, dst, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise GraphParseError(f"cannot parse {raw!r}", lineno) from None
        if src < 0 or dst < 0:
            raise GraphParseError("node indices must be nonnegative", lineno)
        triples.append((src, dst, w, lineno))
    if not triples:
        raise GraphParseError("empty edge list: node count cannot be inferred")
    n = 1 + max(max(s, d) for s, d, _, _ in triples)
    seen = set()
    for src, dst, w, lineno in triples:
        if (src, dst) in seen:
            raise GraphError(f"line {lineno}: duplicate edge ({src}, {dst})")
        seen.add((src, dst))
        if w < 0:
            raise GraphError(f"line {lineno}: negative weight {w}")
        if src == dst and w != 0:
            raise GraphError(f"line {lineno}: self-loop with nonzero weight")
    return WeightedDigraph.from_edges(n, [(s, d, w) for s, d, w, _ in triples])


def parse_instance_json(obj):
    """Return ``(graph, tau_or_None, obj)`` from a decoded JSON instance."""
    if not isinstance(obj, dict) or "n" not in obj:
        raise GraphParseError("JSON instance must be an object with an 'n' field")
    n = obj["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise GraphParseError("'n' must be an integer")
    edges = obj.get("edges", [])
    for e in edges:
        if len(e) != 3:
            raise GraphParseError(f"edge {e!r} is not [src, dst, weight]")
    g = WeightedDigraph.from_edges(n, edges)
    tau = obj.get("tau")
    if tau is not None:
        tau = np.array(tau, dtype=float)
    return g, tau, obj


def load_graph(source):
    """Parse an edge list or a JSON instance into a :class:`WeightedDigraph`."""
    text = source.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        return parse_instance_json(obj)[0]
    return _parse_edge_list(source)


def graph_to_json_obj(g, tau=None):
    obj = {"n": g.n, "edges": [list(e) for e in g.edges()]}
    if tau is not None:
        obj["tau"] = [float(t) for t in tau]
    return obj


def serialize(g, tau=None):
    return json.dumps(graph_to_json_obj(g, tau))


def inf_norm(g):
    """Maximum row sum, i.e. the largest total in-weight of any node."""
    return float(g.row_sums().max())


def _reach(adj_indptr, adj_indices, start, n):
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj_indices[adj_indptr[u]:adj_indptr[u + 1]]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_strongly_connected(g):
    """Forward and backward reachability from node 0 along positive weights.

    A single node with no edges counts as strongly connected.
    """
    if g.n == 1:
        return True
    m = sparse.csr_matrix(g.weights)
    m.eliminate_zeros()
    # row i of weights lists in-neighbours, so the CSR of weights walks edges
    # backwards and its transpose walks them forwards
    back = _reach(m.indptr, m.indices, 0, g.n)
    fwd_m = m.T.tocsr()
    fwd = _reach(fwd_m.indptr, fwd_m.indices, 0, g.n)
    return bool(back.all() and fwd.all())


def _irreducible_radius(block, tol, max_iter):
    # shifted power iteration on B + sI (primitive for irreducible B), stopped
    # by the Collatz-Wielandt bracket min(Bx/x) <= rho <= max(Bx/x)
    s = float(np.asarray(block.sum(axis=1)).max())
    x = np.ones(block.shape[0])
    prev = (np.nan, np.nan)
    for _ in range(max_iter):
        y = block @ x + s * x
        ratio = y / x
        lo, hi = ratio.min() - s, ratio.max() - s
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi)
        x = y / y.max()
        prev = (float(lo), float(hi))
    raise SpectralError("power iteration did not converge", prev)


def spectral_radius(g, tol=SPECTRAL_TOL, max_iter=SPECTRAL_MAX_ITER):
    """Dominant (Perron) eigenvalue of the nonnegative weight matrix.

    Reducible matrices are split into strongly connected components; the
    radius is the largest radius among the irreducible diagonal blocks.
    """
    m = sparse.csr_matrix(g.weights)
    m.eliminate_zeros()
    if m.nnz == 0:
        return 0.0
    ncomp, labels = connected_components(m, directed=True, connection="strong")
    best = 0.0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            continue
        block = m[idx][:, idx]
        if block.nnz == 0:
            continue
        if idx.size <= DENSE_LIMIT:
            block = block.toarray()
        best = max(best, _irreducible_radius(block, tol, max_iter))
    return float(best)


def fcm_thresholds(g, frac):
    """Fractional-contagion thresholds ``frac * row_sum``."""
    if not (0 < frac <= 1):
        raise ValueError(f"frac must lie in (0, 1], got {frac}")
    rs = g.row_sums()
    zero = np.flatnonzero(rs <= 0)
    if zero.size:
        raise GraphError(f"nodes {zero.tolist()} have zero in-weight; FCM threshold would be 0")
    return frac * rs
