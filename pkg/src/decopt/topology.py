"""Communication graphs and doubly stochastic mixing matrices.

Nodes are 0-based. A directed edge (i, r) means node i sends to node r, so
the mixing entry w[r, i] may be positive: row r of W weights the values node
r receives. Adjacency-list files use 1-based ids and are converted on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAPH_KINDS = ("ring", "directed-exponential", "complete", "custom")
WEIGHTINGS = ("metropolis", "uniform-out", "laplacian")

# Below this threshold a vector is treated as zero rather than normalized.
NORM_FLOOR = 1e-30

# Doubly stochastic row/column sums must hold to this absolute tolerance.
STOCHASTIC_TOL = 1e-12


class NonPrimitiveError(ValueError):
    """Mixing matrix does not contract disagreement (spectral gap >= 1)."""


@dataclass(frozen=True)
class Graph:
    """Directed communication graph on nodes 0..n-1 without self-loops."""

    n: int
    edges: frozenset[tuple[int, int]]
    kind: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        for i, r in self.edges:
            if not (0 <= i < self.n and 0 <= r < self.n):
                raise ValueError(f"edge ({i}, {r}) outside node range 0..{self.n - 1}")
            if i == r:
                raise ValueError(f"self-loop ({i}, {i}) not allowed")

    def out_neighbors(self, i: int) -> list[int]:
        return sorted(r for (s, r) in self.edges if s == i)

    def in_neighbors(self, i: int) -> list[int]:
        return sorted(s for (s, r) in self.edges if r == i)

    def out_degree(self, i: int) -> int:
        return sum(1 for (s, _) in self.edges if s == i)

    def in_degree(self, i: int) -> int:
        return sum(1 for (_, r) in self.edges if r == i)

    def is_symmetric(self) -> bool:
        return all((r, i) in self.edges for (i, r) in self.edges)


def build_graph(kind: str, n: int) -> Graph:
    """Build a named topology on n nodes.

    ring: i <-> i +/- 1 (mod n), bidirectional.
    directed-exponential: i -> i + 2^k (mod n) for every 2^k < n.
    complete: every ordered pair.
    """
    if n < 2:
        raise ValueError(f"topology needs n >= 2 nodes, got {n}")
    edges: set[tuple[int, int]] = set()
    if kind == "ring":
        for i in range(n):
            edges.add((i, (i + 1) % n))
            edges.add((i, (i - 1) % n))
    elif kind == "directed-exponential":
        hop = 1
        while hop < n:
            for i in range(n):
                edges.add((i, (i + hop) % n))
            hop *= 2
    elif kind == "complete":
        for i in range(n):
            for r in range(n):
                if i != r:
                    edges.add((i, r))
    else:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS[:3]}")
    return Graph(n=n, edges=frozenset(edges), kind=kind)


def load_graph(path: str, n: int) -> Graph:
    """Parse a 1-based `i r` adjacency-list file; `#` starts a comment line."""
    edges: set[tuple[int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i r', got {raw.strip()!r}")
            try:
                i, r = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {raw.strip()!r}") from exc
            if not (1 <= i <= n and 1 <= r <= n):
                raise ValueError(f"{path}:{lineno}: node id outside 1..{n}")
            if i == r:
                raise ValueError(f"{path}:{lineno}: self-loop {i} -> {r} not allowed")
            edges.add((i - 1, r - 1))
    return Graph(n=n, edges=frozenset(edges), kind="custom")


@dataclass(frozen=True)
class MixingMatrix:
    """Doubly stochastic weights with support matching the graph, plus its gap.

    lam is ||W - (1/n) 11^T||_2, the contraction factor of the disagreement
    component; valid matrices have lam < 1.
    """

    w: np.ndarray
    lam: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"mixing matrix must be square, got shape {w.shape}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        _check_doubly_stochastic(w)
        if np.isnan(self.lam):
            object.__setattr__(self, "lam", spectral_gap(w))
        if self.lam >= 1.0 - 1e-9:
            raise NonPrimitiveError(
                f"spectral gap {self.lam:.12f} >= 1: weights do not contract disagreement "
                "(disconnected or periodic graph)"
            )

    @property
    def n(self) -> int:
        return self.w.shape[0]


def _check_doubly_stochastic(w: np.ndarray) -> None:
    if np.any(w < 0):
        raise ValueError("mixing weights must be nonnegative")
    rows = w.sum(axis=1)
    cols = w.sum(axis=0)
    if np.max(np.abs(rows - 1.0)) > STOCHASTIC_TOL:
        raise ValueError(f"row sums deviate from 1 by {np.max(np.abs(rows - 1.0)):.3e}")
    if np.max(np.abs(cols - 1.0)) > STOCHASTIC_TOL:
        raise ValueError(f"column sums deviate from 1 by {np.max(np.abs(cols - 1.0)):.3e}")


def _check_support(w: np.ndarray, g: Graph) -> None:
    # w[i, r] > 0 exactly when r sends to i, or i == r.
    for i in range(g.n):
        for r in range(g.n):
            allowed = i == r or (r, i) in g.edges
            if (w[i, r] > 0) != allowed:
                raise ValueError(f"support violation at w[{i}, {r}]")


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Symmetric weights w_ir = 1 / (1 + max(deg_i, deg_r)) on an undirected graph."""
    if not g.is_symmetric():
        raise ValueError("metropolis weighting needs a symmetric (undirected) graph")
    deg = [g.out_degree(i) for i in range(g.n)]
    w = np.zeros((g.n, g.n))
    for (i, r) in g.edges:
        w[r, i] = 1.0 / (1.0 + max(deg[i], deg[r]))
    for i in range(g.n):
        w[i, i] = 1.0 - np.sum(w[i])
    m = MixingMatrix(w)
    _check_support(m.w, g)
    return m


def uniform_out_weights(g: Graph) -> MixingMatrix:
    """Weights 1/(d+1) on in-edges and self, for d-regular weight-balanced digraphs."""
    out = [g.out_degree(i) for i in range(g.n)]
    inn = [g.in_degree(i) for i in range(g.n)]
    d = out[0]
    if any(o != d for o in out) or any(k != d for k in inn):
        raise ValueError("uniform-out weighting needs equal in- and out-degree d at every node")
    w = np.zeros((g.n, g.n))
    share = 1.0 / (d + 1)
    for (r, i) in g.edges:
        w[i, r] = share
    for i in range(g.n):
        w[i, i] = share
    m = MixingMatrix(w)
    _check_support(m.w, g)
    return m


def laplacian_weights(g: Graph) -> MixingMatrix:
    """W = I - L/n for an undirected graph with Laplacian L = D - A."""
    if not g.is_symmetric():
        raise ValueError("laplacian weighting needs a symmetric (undirected) graph")
    n = g.n
    w = np.zeros((n, n))
    for (i, r) in g.edges:
        w[r, i] = 1.0 / n
    deg = [g.out_degree(i) for i in range(n)]
    for i in range(n):
        w[i, i] = 1.0 - deg[i] / n
    m = MixingMatrix(w)
    _check_support(m.w, g)
    return m


def make_weights(g: Graph, weighting: str) -> MixingMatrix:
    if weighting == "metropolis":
        return metropolis_weights(g)
    if weighting == "uniform-out":
        return uniform_out_weights(g)
    if weighting == "laplacian":
        return laplacian_weights(g)
    raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")


def spectral_gap(w: np.ndarray | MixingMatrix, rel_tol: float = 1e-10) -> float:
    """Largest singular value of W - (1/n) 11^T by power iteration on its Gram matrix.

    The all-ones vector is in the kernel of the deflated matrix, so the top
    singular pair lives in the disagreement subspace. Convergence is on the
    Rayleigh quotient, which settles even when the top singular value has
    multiplicity > 1 (circulant topologies).
    """
    if isinstance(w, MixingMatrix):
        return w.lam
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if n == 1:
        return 0.0
    dev = w - np.full((n, n), 1.0 / n)
    gram = dev.T @ dev
    # Deterministic start with components in every direction.
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = None
    prev_diff = None
    for _ in range(200_000):
        u = gram @ v
        est = float(v @ u)
        norm = np.linalg.norm(u)
        if norm < NORM_FLOOR:
            return 0.0
        v = u / norm
        if prev is not None:
            diff = abs(est - prev)
            if diff == 0.0:
                return float(np.sqrt(max(est, 0.0)))
            # Successive differences alone understate the error when the two
            # leading singular values nearly coincide, so bound the geometric
            # tail: remaining error ~ diff * r / (1 - r) with r the decay rate.
            if prev_diff is not None and diff < prev_diff:
                r = diff / prev_diff
                tail = diff * r / (1.0 - r)
                if tail <= rel_tol * max(abs(est), NORM_FLOOR):
                    return float(np.sqrt(max(est, 0.0)))
            prev_diff = diff
        prev = est
    return float(np.sqrt(max(prev, 0.0)))
