"""Seeded per-node random streams and heavy-tailed gradient-noise samplers.

Streams are counter-based (Philox) and keyed by (master seed, purpose,
repeat, node), so every node draws an independent, replayable sequence that
does not depend on scheduling or on how other nodes interleave their draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_FAMILIES = ("none", "gaussian", "student-t", "alpha-stable")

# Purpose tags keep unrelated consumers of the same master seed apart.
PURPOSE_NOISE = 0
PURPOSE_DATASET = 1
PURPOSE_BATCH = 2


class RngStream:
    """Replayable uniform stream for one (seed, node) pair.

    The same (seed, purpose, repeat, node) always yields the same sequence;
    distinct keys yield independent sequences. `draws` counts scalar values
    handed out so far.
    """

    def __init__(self, seed: int, node: int, purpose: int = PURPOSE_NOISE, repeat: int = 0):
        if not (0 <= node < 2**32):
            raise ValueError(f"node id out of range: {node}")
        if not (0 <= repeat < 2**16):
            raise ValueError(f"repeat index out of range: {repeat}")
        self.seed = int(seed)
        self.node = int(node)
        self.purpose = int(purpose)
        self.repeat = int(repeat)
        key = (self.purpose << 48) | (self.repeat << 32) | self.node
        self._gen = np.random.Generator(np.random.Philox(key=[self.seed % 2**64, key]))
        self.draws = 0

    def uniform(self, size: int) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        self.draws += size
        return self._gen.random(size)

    def exponential(self, size: int) -> np.ndarray:
        """Unit-rate exponential draws, derived as -log(1 - U)."""
        return -np.log1p(-self.uniform(size))

    def chisquare(self, dof: float, size: int) -> np.ndarray:
        self.draws += size
        return self._gen.chisquare(dof, size)

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        self.draws += size
        return self._gen.integers(low, high, size)


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of one additive-noise family, applied per gradient coordinate.

    family "gaussian" uses `variance`; "student-t" uses `dof` and `scale`;
    "alpha-stable" uses `alpha` (tail index), `skew`, `scale`, and a final
    `multiplier` applied to the zero-mean sample. family "none" draws nothing.
    """

    family: str
    dim: int
    variance: float = 3.0
    dof: float = 1.5
    scale: float = 1.0
    alpha: float = 1.5
    skew: float = 0.5
    multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        if self.dim < 1:
            raise ValueError(f"noise dimension must be >= 1, got {self.dim}")
        if self.family == "gaussian" and self.variance < 0:
            raise ValueError(f"gaussian variance must be >= 0, got {self.variance}")
        if self.family == "student-t":
            if self.dof <= 1.0:
                raise ValueError(f"student-t needs dof > 1 for a finite mean, got {self.dof}")
            if self.scale < 0:
                raise ValueError(f"student-t scale must be >= 0, got {self.scale}")
        if self.family == "alpha-stable":
            if not (1.0 < self.alpha <= 2.0):
                raise ValueError(f"stable tail index must lie in (1, 2] for a zero mean, got {self.alpha}")
            if not (-1.0 <= self.skew <= 1.0):
                raise ValueError(f"stable skew must lie in [-1, 1], got {self.skew}")
            if self.scale <= 0:
                raise ValueError(f"stable scale must be positive, got {self.scale}")


def gaussian_pairs(stream: RngStream, count: int) -> np.ndarray:
    """`count` standard normals via the Box-Muller transform on stream uniforms."""
    half = (count + 1) // 2
    u1 = 1.0 - stream.uniform(half)  # (0, 1]: keeps the log finite
    u2 = stream.uniform(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:count]


def sample_gaussian(spec: NoiseSpec, stream: RngStream) -> np.ndarray:
    """One N(0, variance * I_dim) draw."""
    return np.sqrt(spec.variance) * gaussian_pairs(stream, spec.dim)


def sample_student_t(spec: NoiseSpec, stream: RngStream) -> np.ndarray:
    """One draw of scale * Z / sqrt(V / dof), Z normal, V chi-square(dof)."""
    z = gaussian_pairs(stream, spec.dim)
    v = stream.chisquare(spec.dof, spec.dim)
    return spec.scale * z / np.sqrt(v / spec.dof)


def cms_transform(
    u: np.ndarray, e: np.ndarray, alpha: float, skew: float, scale: float
) -> np.ndarray:
    """Stable draw from angle u ~ Unif(-pi/2, pi/2) and unit exponential e.

    Standard 1-parameterization with zero location, so the result has zero
    mean whenever alpha > 1. At alpha = 2 the law is N(0, 2 * scale^2).
    """
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    if alpha == 2.0:
        # tan(pi * alpha / 2) = 0: the general branch collapses to this.
        return scale * 2.0 * np.sin(u) * np.sqrt(e)
    shift = np.arctan(skew * np.tan(np.pi * alpha / 2.0)) / alpha
    amp = scale * (1.0 + skew**2 * np.tan(np.pi * alpha / 2.0) ** 2) ** (1.0 / (2.0 * alpha))
    core = np.sin(alpha * (u + shift)) / np.cos(u) ** (1.0 / alpha)
    tail = (np.cos(u - alpha * (u + shift)) / e) ** ((1.0 - alpha) / alpha)
    return amp * core * tail


def sample_alpha_stable(spec: NoiseSpec, stream: RngStream) -> np.ndarray:
    """One skewed alpha-stable draw per coordinate, times the final multiplier."""
    u = np.pi * (stream.uniform(spec.dim) - 0.5)
    e = stream.exponential(spec.dim)
    return spec.multiplier * cms_transform(u, e, spec.alpha, spec.skew, spec.scale)


def sample(spec: NoiseSpec, stream: RngStream) -> np.ndarray:
    """One noise vector; family "none" returns zeros without consuming draws."""
    if spec.family == "none":
        return np.zeros(spec.dim)
    if spec.family == "gaussian":
        return sample_gaussian(spec, stream)
    if spec.family == "student-t":
        return sample_student_t(spec, stream)
    return sample_alpha_stable(spec, stream)


def empirical_moment(samples: np.ndarray, p: float) -> float:
    """(mean of |sample|^p)^(1/p); rows of a 2-D input are vectors (l2 norm)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empirical moment of an empty sample")
    if p <= 0:
        raise ValueError(f"moment order must be positive, got {p}")
    mags = np.abs(samples) if samples.ndim == 1 else np.linalg.norm(samples, axis=1)
    return float(np.mean(mags**p) ** (1.0 / p))


def tail_slope(samples: np.ndarray, top_frac: float = 0.01) -> float:
    """Least-squares slope of log-survival vs log-magnitude over the largest draws.

    For a power-law tail P(|X| > x) ~ x^(-a) the slope estimates -a.
    """
    mags = np.sort(np.abs(np.asarray(samples, dtype=float).ravel()))
    m = mags.size
    k = int(np.floor(top_frac * m))
    if k < 3:
        raise ValueError(f"tail fraction {top_frac} of {m} samples leaves under 3 fit points")
    top = mags[m - k :]
    if top[0] <= 0 or top[0] == top[-1]:
        raise ValueError("tail magnitudes must be positive with nonzero spread")
    # Survival at the j-th largest value (ascending index) is (k - j) / m.
    surv = (np.arange(k, 0, -1)) / m
    slope, _ = np.polyfit(np.log(top), np.log(surv), 1)
    return float(slope)


def robust_mean(samples: np.ndarray, n_blocks: int = 100) -> tuple[float, float]:
    """Median-of-means location estimate plus a robust SE for the sample mean.

    Block means tame heavy tails.  The returned scale is the MAD-based
    standard error of an average of n_blocks block means, i.e. of the plain
    sample mean; zero-mean checks compare samples.mean() against it.  The
    median-of-means location is reported for display but is biased for
    skewed inputs, so it is not the statistic those checks should use.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < n_blocks:
        raise ValueError(f"need at least {n_blocks} samples, got {x.size}")
    usable = (x.size // n_blocks) * n_blocks
    blocks = x[:usable].reshape(n_blocks, -1)
    means = blocks.mean(axis=1)
    center = float(np.median(means))
    mad = float(np.median(np.abs(means - center)))
    se = 1.4826 * mad / np.sqrt(n_blocks)
    return center, float(se)
