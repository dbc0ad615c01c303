"""Local objectives: robust regression on synthetic token counts, and scalar
quadratics for the heterogeneous lower-bound construction.

The global objective is always the uniform average of the node-local ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import PURPOSE_BATCH, PURPOSE_DATASET, NoiseSpec, RngStream, gaussian_pairs, sample
from .topology import MixingMatrix

# Default saturation point of the redescending loss (95% normal efficiency).
TUKEY_C = 4.6851


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, noiseless targets, and the planted parameter vector."""

    x: np.ndarray
    y: np.ndarray
    w_star: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x", "y", "w_star"):
            a = getattr(self, name)
            a = np.asarray(a, dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.x.shape}")
        n, d = self.x.shape
        if self.y.shape != (n,):
            raise ValueError(f"targets shape {self.y.shape} does not match {n} samples")
        if self.w_star.shape != (d,):
            raise ValueError(f"parameter shape {self.w_star.shape} does not match {d} features")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def generate_token_dataset(n_samples: int = 1000, dim: int = 20, seed: int = 0) -> Dataset:
    """Binary feature rows with two common, two medium, and dim-4 rare columns.

    Targets are exactly X @ w_star with a standard normal w_star, so the
    planted vector is the unique zero-residual point.
    """
    if n_samples < 1 or dim < 4:
        raise ValueError(f"need n_samples >= 1 and dim >= 4, got {n_samples}, {dim}")
    stream = RngStream(seed, node=0, purpose=PURPOSE_DATASET)
    probs = np.full(dim, 0.1)
    probs[0:2] = 0.9
    probs[2:4] = 0.5
    u = stream.uniform(n_samples * dim).reshape(n_samples, dim)
    x = (u < probs).astype(float)
    w_star = gaussian_pairs(stream, dim)
    y = x @ w_star
    return Dataset(x=x, y=y, w_star=w_star)


def partition(n_samples: int, n_nodes: int) -> list[np.ndarray]:
    """Contiguous index shards; the first n_samples % n_nodes shards get one extra."""
    if n_nodes < 1:
        raise ValueError(f"need at least one node, got {n_nodes}")
    if n_nodes > n_samples:
        raise ValueError(f"cannot split {n_samples} samples over {n_nodes} nodes")
    base, extra = divmod(n_samples, n_nodes)
    shards = []
    start = 0
    for i in range(n_nodes):
        size = base + (1 if i < extra else 0)
        shards.append(np.arange(start, start + size))
        start += size
    return shards


def tukey_loss(r: np.ndarray | float, c: float = TUKEY_C) -> np.ndarray | float:
    """Redescending loss: (c^2/6)(1 - (1 - (r/c)^2)^3) inside |r| <= c, flat c^2/6 outside."""
    if c <= 0:
        raise ValueError(f"saturation point must be positive, got {c}")
    r = np.asarray(r, dtype=float)
    z = np.clip(r / c, -1.0, 1.0)
    out = (c * c / 6.0) * (1.0 - (1.0 - z * z) ** 3)
    return out if out.ndim else float(out)


def tukey_grad(r: np.ndarray | float, c: float = TUKEY_C) -> np.ndarray | float:
    """Derivative of tukey_loss in the residual: r (1 - (r/c)^2)^2 inside, 0 outside."""
    if c <= 0:
        raise ValueError(f"saturation point must be positive, got {c}")
    r = np.asarray(r, dtype=float)
    z = r / c
    inside = np.abs(r) <= c
    out = np.where(inside, r * (1.0 - z * z) ** 2, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TukeyObjective:
    """Average redescending-loss regression over one node's shard."""

    x: np.ndarray
    y: np.ndarray
    c: float = TUKEY_C

    def __post_init__(self) -> None:
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError("shard features and targets do not align")
        if self.x.shape[0] == 0:
            raise ValueError("empty shard")

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def loss(self, w: np.ndarray) -> float:
        res = self.y - self.x @ w
        return float(np.mean(tukey_loss(res, self.c)))

    def gradient(self, w: np.ndarray, indices: np.ndarray | None = None) -> np.ndarray:
        """Average of -x_k * loss'(y_k - x_k @ w) over the (sub)shard."""
        x, y = self.x, self.y
        if indices is not None:
            if len(indices) == 0:
                raise ValueError("empty batch")
            x, y = x[indices], y[indices]
        res = y - x @ w
        return -(x.T @ tukey_grad(res, self.c)) / x.shape[0]


@dataclass(frozen=True)
class QuadraticObjective:
    """Scalar objective 0.5 (x - a)^2 embedded as a 1-D vector problem."""

    a: float

    @property
    def dim(self) -> int:
        return 1

    def loss(self, w: np.ndarray) -> float:
        return float(0.5 * (w[0] - self.a) ** 2)

    def gradient(self, w: np.ndarray, indices: np.ndarray | None = None) -> np.ndarray:
        return np.asarray(w, dtype=float) - self.a


@dataclass
class GlobalObjective:
    """Uniform average of the node-local objectives; exact, for metrics only."""

    locals: list

    def gradient(self, w: np.ndarray) -> np.ndarray:
        total = np.zeros_like(np.asarray(w, dtype=float))
        for obj in self.locals:
            total = total + obj.gradient(w)
        return total / len(self.locals)

    def loss(self, w: np.ndarray) -> float:
        return float(np.mean([obj.loss(w) for obj in self.locals]))


@dataclass
class Oracle:
    """Stochastic first-order access for one node.

    Default mode: exact shard gradient plus one fresh noise draw. With
    batch > 0, a uniform minibatch of the shard replaces the exact gradient.
    """

    objective: TukeyObjective | QuadraticObjective
    noise: NoiseSpec
    stream: RngStream
    batch: int = 0
    batch_stream: RngStream | None = field(default=None)

    def __post_init__(self) -> None:
        if self.noise.dim != self.objective.dim:
            raise ValueError(
                f"noise dimension {self.noise.dim} != objective dimension {self.objective.dim}"
            )
        if self.batch < 0:
            raise ValueError(f"batch size must be >= 0, got {self.batch}")
        if self.batch > 0 and self.batch_stream is None:
            self.batch_stream = RngStream(
                self.stream.seed, self.stream.node, purpose=PURPOSE_BATCH, repeat=self.stream.repeat
            )

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """One stochastic gradient: shard (or minibatch) gradient plus noise."""
        if self.batch > 0:
            n_shard = self.objective.x.shape[0]
            idx = self.batch_stream.integers(0, n_shard, self.batch)
            exact = self.objective.gradient(w, indices=idx)
        else:
            exact = self.objective.gradient(w)
        return exact + sample(self.noise, self.stream)


def build_local_objectives(ds: Dataset, n_nodes: int, c: float = TUKEY_C) -> list[TukeyObjective]:
    shards = partition(ds.n_samples, n_nodes)
    return [TukeyObjective(x=ds.x[idx], y=ds.y[idx], c=c) for idx in shards]


def claim1_instance(n: int, gap: float) -> tuple[list[QuadraticObjective], MixingMatrix, float]:
    """Two-cluster quadratic means on a complete graph, with a stationarity floor.

    Half the nodes hold target a = 0, half hold b = 2*gap + 1.5. Started from
    a + 0.5, the global gradient magnitude at the start is gap + 0.25 >= gap,
    and the construction keeps sign-based consensus steps perfectly balanced.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError(f"need an even number of nodes >= 2, got {n}")
    if gap < 1.0:
        raise ValueError(f"gradient floor must be >= 1, got {gap}")
    a = 0.0
    b = 2.0 * gap + 1.5
    objectives = [QuadraticObjective(a=a if i < n // 2 else b) for i in range(n)]
    w = MixingMatrix(np.full((n, n), 1.0 / n))
    x0 = a + 0.5
    return objectives, w, x0


def _sidecar_path(path: str) -> str:
    stem, dot, ext = str(path).rpartition(".")
    return f"{stem}.wstar.{ext}" if dot else f"{path}.wstar"


def dataset_to_csv(ds: Dataset, path: str, sidecar: str | None = None) -> None:
    """Write features and targets with header x1..xd,y; w_star goes to a sidecar."""
    d = ds.dim
    header = ",".join([f"x{j + 1}" for j in range(d)] + ["y"])
    table = np.column_stack([ds.x, ds.y])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
    if sidecar is None:
        sidecar = _sidecar_path(path)
    np.savetxt(sidecar, ds.w_star, delimiter=",", header="w_star", comments="", fmt="%.17g")


def dataset_from_csv(path: str, sidecar: str | None = None) -> Dataset:
    if sidecar is None:
        sidecar = _sidecar_path(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    w_star = np.loadtxt(sidecar, delimiter=",", skiprows=1, ndmin=1)
    return Dataset(x=table[:, :-1], y=table[:, -1], w_star=w_star)
