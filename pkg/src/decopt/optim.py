"""Synchronous-round decentralized optimization methods.

All methods share the same engine shell: per round, every node draws one
stochastic gradient at its current iterate, then the round advances in
phases (gradient/momentum, tracker mix, iterate mix), each phase reading
only the previous phase's snapshot. Mixing sums and network averages are
accumulated in ascending node order with pairwise summation, so a trace
depends only on the seed, never on scheduling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import metrics
from .topology import MixingMatrix

METHODS = (
    "gt-nsgdm",
    "dsgd",
    "gt-dsgd",
    "dsgd-clip",
    "dsgd-gclip",
    "dsgd-cclip",
    "sclip-ef",
    "gt-adam",
    "qg-dsgdm",
    "vn-dsgd",
)

# Below this norm a vector is treated as zero by safe_normalize.
NORM_FLOOR = 1e-30


@dataclass(frozen=True)
class Hyper:
    """Per-method hyperparameters; unused fields are ignored by each method.

    alpha: step size (all methods).
    beta: momentum / tracker coefficient (gt-nsgdm, sclip-ef, qg-dsgdm).
    tau: clipping level (dsgd-clip family, sclip-ef).
    beta1, beta2, cap, eps: first/second-moment coefficients, second-moment
      ceiling, and stabilizer (gt-adam).
    eta: step size of qg-dsgdm (its alpha analogue).
    mu: slow-buffer coefficient (qg-dsgdm).
    c_phi: smooth-clip amplitude (sclip-ef).
    """

    alpha: float = 0.1
    beta: float = 0.0
    tau: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    cap: float = 1e8
    eps: float = 1e-8
    eta: float = 0.1
    mu: float = 0.9
    c_phi: float = 1.0

    def validate_for(self, method: str) -> None:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        if self.alpha <= 0:
            raise ValueError(f"hyper.alpha must be positive, got {self.alpha}")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError(f"hyper.beta must lie in [0, 1), got {self.beta}")
        if method in ("dsgd-clip", "dsgd-gclip", "dsgd-cclip", "sclip-ef") and self.tau <= 0:
            raise ValueError(f"hyper.tau must be positive, got {self.tau}")
        if method == "sclip-ef" and self.c_phi <= 0:
            raise ValueError(f"hyper.c_phi must be positive, got {self.c_phi}")
        if method == "gt-adam":
            if self.cap <= 0:
                raise ValueError(f"hyper.cap must be positive, got {self.cap}")
            if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
                raise ValueError("hyper.beta1 and hyper.beta2 must lie in [0, 1)")
            if self.eps <= 0:
                raise ValueError(f"hyper.eps must be positive, got {self.eps}")
        if method == "qg-dsgdm":
            if self.eta <= 0:
                raise ValueError(f"hyper.eta must be positive, got {self.eta}")
            if not (0.0 <= self.mu <= 1.0):
                raise ValueError(f"hyper.mu must lie in [0, 1], got {self.mu}")


def safe_normalize(u: np.ndarray) -> np.ndarray:
    """u / ||u||, or the zero vector when ||u|| <= 1e-30."""
    norm = np.linalg.norm(u)
    if norm <= NORM_FLOOR:
        return np.zeros_like(u)
    return u / norm


def l2_clip(g: np.ndarray, tau: float) -> np.ndarray:
    """Scale g onto the l2 ball of radius tau; identity inside the ball."""
    if tau <= 0:
        raise ValueError(f"clipping level must be positive, got {tau}")
    norm = np.linalg.norm(g)
    if norm <= tau:
        return np.asarray(g, dtype=float).copy()
    return g * (tau / norm)


def coordinate_clip(g: np.ndarray, tau: float) -> np.ndarray:
    """Clamp every coordinate of g to [-tau, tau]."""
    if tau <= 0:
        raise ValueError(f"clipping level must be positive, got {tau}")
    return np.clip(g, -tau, tau)


def smooth_clip(y: np.ndarray, t: int, c_phi: float, tau: float) -> np.ndarray:
    """Component-wise (c_phi/sqrt(t+1)) * y / sqrt(y^2 + tau (t+1)^(3/5))."""
    if tau <= 0 or c_phi <= 0:
        raise ValueError("smooth-clip parameters must be positive")
    y = np.asarray(y, dtype=float)
    return (c_phi / np.sqrt(t + 1.0)) * y / np.sqrt(y * y + tau * (t + 1.0) ** 0.6)


def mix(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Rows of W times the node-stacked array z: out[i] = sum_r w[i, r] z[r].

    The reduction runs over ascending node index with numpy's pairwise
    summation, keeping results independent of thread count.
    """
    return np.stack([np.sum(w[i][:, None] * z, axis=0) for i in range(w.shape[0])])


def network_mean(z: np.ndarray) -> np.ndarray:
    """Average over nodes (axis 0), ascending index, pairwise summation."""
    return np.sum(z, axis=0) / z.shape[0]


class RoundEngine:
    """Lockstep simulator of one method on one mixing matrix.

    State arrays are stacked node-major: x, v, y have shape (n, d). Method-
    specific buffers live in `aux`. Diagnostics (step lengths, tracking gap,
    divergence) are updated every round regardless of probe cadence.
    """

    def __init__(
        self,
        mixing: MixingMatrix,
        oracles: list,
        method: str,
        hyper: Hyper,
        x0: np.ndarray,
    ):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        hyper.validate_for(method)
        n = mixing.n
        if len(oracles) != n:
            raise ValueError(f"{len(oracles)} oracles for {n} nodes")
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        for o in oracles:
            if o.objective.dim != x0.size:
                raise ValueError("objective dimension does not match x0")
        self.mixing = mixing
        self.w = mixing.w
        self.oracles = oracles
        self.method = method
        self.hyper = hyper
        self.n = n
        self.d = x0.size
        self.x = np.tile(x0, (n, 1))
        self.v = np.zeros((n, self.d))
        self.y = np.zeros((n, self.d))
        self.aux: dict[str, np.ndarray] = {}
        self.t = 0
        self.diverged = False
        self.diverged_at = -1
        self.last_step_len = 0.0
        self.max_step_len = 0.0
        self.max_step_equality_gap = 0.0
        self.max_tracking_gap_rel = 0.0
        self.tracking_gap = 0.0
        self._step_fn = _STEPS[method]

    def draw_gradients(self, points: np.ndarray) -> np.ndarray:
        """One stochastic gradient per node at the given per-node points."""
        return np.stack([self.oracles[i].gradient(points[i]) for i in range(self.n)])

    def exact_gradients(self, points: np.ndarray) -> np.ndarray:
        return np.stack([self.oracles[i].objective.gradient(points[i]) for i in range(self.n)])

    def step(self) -> None:
        """Advance one synchronous round; no-op once diverged."""
        if self.diverged:
            return
        old_mean = network_mean(self.x)
        # Overflow to inf is the divergence signal itself, checked right below.
        with np.errstate(over="ignore", invalid="ignore"):
            self._step_fn(self)
            self.t += 1
            new_mean = network_mean(self.x)
            self.last_step_len = float(np.linalg.norm(new_mean - old_mean))
        state_finite = np.isfinite(self.x).all() and np.isfinite(self.v).all() and np.isfinite(self.y).all()
        if not (state_finite and np.isfinite(self.last_step_len)):
            self.diverged = True
            self.diverged_at = self.t
            return
        self.max_step_len = max(self.max_step_len, self.last_step_len)
        if self.method == "gt-nsgdm":
            y_mean = network_mean(self.y)
            v_mean = network_mean(self.v)
            self.tracking_gap = float(np.linalg.norm(y_mean - v_mean))
            rel = self.tracking_gap / (1.0 + float(np.linalg.norm(v_mean)))
            self.max_tracking_gap_rel = max(self.max_tracking_gap_rel, rel)
            if self.n == 1 and float(np.linalg.norm(self.y[0])) > NORM_FLOOR:
                self.max_step_equality_gap = max(
                    self.max_step_equality_gap, abs(self.last_step_len - self.hyper.alpha)
                )


def gt_nsgdm_step(engine: RoundEngine) -> None:
    """Momentum estimator, tracker mix, then normalized iterate mix."""
    h = engine.hyper
    g = engine.draw_gradients(engine.x)
    v_new = h.beta * engine.v + (1.0 - h.beta) * g
    y_new = mix(engine.w, engine.y + v_new - engine.v)
    directions = np.stack([safe_normalize(y_new[i]) for i in range(engine.n)])
    x_new = mix(engine.w, engine.x - h.alpha * directions)
    engine.v = v_new
    engine.y = y_new
    engine.x = x_new


def dsgd_step(engine: RoundEngine) -> None:
    h = engine.hyper
    g = engine.draw_gradients(engine.x)
    engine.x = mix(engine.w, engine.x - h.alpha * g)


def gt_dsgd_step(engine: RoundEngine) -> None:
    """Tracker driven by consecutive raw gradients; both mixes read peers."""
    h = engine.hyper
    g = engine.draw_gradients(engine.x)
    g_prev = engine.aux.setdefault("g_prev", np.zeros_like(g))
    y_new = mix(engine.w, engine.y + g - g_prev)
    x_new = mix(engine.w, engine.x - h.alpha * y_new)
    engine.aux["g_prev"] = g
    engine.y = y_new
    engine.x = x_new


def dsgd_clip_step(engine: RoundEngine) -> None:
    """Decaying step, growing l2 clip level; own clipped gradient, unmixed."""
    h = engine.hyper
    t = engine.t
    alpha_t = h.alpha / (t + 1.0)
    tau_t = h.tau * (t + 1.0) ** 0.4
    g = engine.draw_gradients(engine.x)
    clipped = np.stack([l2_clip(g[i], tau_t) for i in range(engine.n)])
    engine.x = mix(engine.w, engine.x) - alpha_t * clipped


def dsgd_gclip_step(engine: RoundEngine) -> None:
    h = engine.hyper
    g = engine.draw_gradients(engine.x)
    clipped = np.stack([l2_clip(g[i], h.tau) for i in range(engine.n)])
    engine.x = mix(engine.w, engine.x) - h.alpha * clipped


def dsgd_cclip_step(engine: RoundEngine) -> None:
    h = engine.hyper
    g = engine.draw_gradients(engine.x)
    engine.x = mix(engine.w, engine.x) - h.alpha * coordinate_clip(g, h.tau)


def sclip_ef_step(engine: RoundEngine) -> None:
    """Error-feedback momentum passed through a shrinking smooth clip."""
    h = engine.hyper
    t = engine.t
    alpha_t = h.alpha / (t + 1.0) ** 0.2
    beta_t = h.beta / np.sqrt(t + 1.0)
    m = engine.aux.setdefault("m", np.zeros_like(engine.x))
    g = engine.draw_gradients(engine.x)
    m_new = beta_t * m + (1.0 - beta_t) * smooth_clip(g - m, t, h.c_phi, h.tau)
    engine.x = mix(engine.w, engine.x - alpha_t * m_new)
    engine.aux["m"] = m_new


def gt_adam_step(engine: RoundEngine) -> None:
    """Adam moments on a gradient-tracking surrogate with a capped second moment."""
    h = engine.hyper
    if "s" not in engine.aux:
        g0 = engine.draw_gradients(engine.x)
        engine.aux["s"] = g0
        engine.aux["g"] = g0
        engine.aux["m"] = np.zeros_like(g0)
        engine.aux["vhat"] = np.zeros_like(g0)
    s, g = engine.aux["s"], engine.aux["g"]
    m = h.beta1 * engine.aux["m"] + (1.0 - h.beta1) * s
    vhat = np.minimum(h.beta2 * engine.aux["vhat"] + (1.0 - h.beta2) * s * s, h.cap)
    x_new = mix(engine.w, engine.x) - h.alpha * m / np.sqrt(vhat + h.eps)
    g_new = engine.draw_gradients(x_new)
    s_new = mix(engine.w, s) + g_new - g
    engine.aux.update(s=s_new, g=g_new, m=m, vhat=vhat)
    engine.x = x_new


def qg_dsgdm_step(engine: RoundEngine) -> None:
    """Momentum from a slow buffer that tracks the realized iterate velocity."""
    h = engine.hyper
    m_hat = engine.aux.setdefault("m_hat", np.zeros_like(engine.x))
    g = engine.draw_gradients(engine.x)
    m = h.beta * m_hat + g
    x_new = mix(engine.w, engine.x - h.eta * m)
    d = (x_new - engine.x) / h.eta
    engine.aux["m_hat"] = h.mu * m_hat + (1.0 - h.mu) * d
    engine.x = x_new


def vn_dsgd_step(engine: RoundEngine) -> None:
    """Normalized descent on exact local gradients, no noise injected."""
    h = engine.hyper
    g = engine.exact_gradients(engine.x)
    directions = np.stack([safe_normalize(g[i]) for i in range(engine.n)])
    engine.x = mix(engine.w, engine.x - h.alpha * directions)


_STEPS = {
    "gt-nsgdm": gt_nsgdm_step,
    "dsgd": dsgd_step,
    "gt-dsgd": gt_dsgd_step,
    "dsgd-clip": dsgd_clip_step,
    "dsgd-gclip": dsgd_gclip_step,
    "dsgd-cclip": dsgd_cclip_step,
    "sclip-ef": sclip_ef_step,
    "gt-adam": gt_adam_step,
    "qg-dsgdm": qg_dsgdm_step,
    "vn-dsgd": vn_dsgd_step,
}


def _schedule_alpha(delta0: float, smoothness: float, lam: float, n: int, horizon: int, beta: float) -> float:
    terms = (
        1.0,
        np.sqrt(delta0 * (1.0 - beta) * (1.0 - lam) / (4.0 * smoothness * horizon)),
        np.sqrt(delta0 * (1.0 - lam) / (3.5 * smoothness * horizon)),
        np.sqrt((1.0 - lam) ** 2 * delta0 / (2.0 * np.sqrt(n) * smoothness * horizon)),
    )
    return float(min(terms))


def _check_schedule_inputs(delta0: float, smoothness: float, lam: float, n: int, horizon: int) -> None:
    if delta0 <= 0 or smoothness <= 0:
        raise ValueError("delta0 and smoothness must be positive")
    if not (0.0 <= lam < 1.0):
        raise ValueError(f"lam must lie in [0, 1), got {lam}")
    if n < 1 or horizon < 1:
        raise ValueError("n and horizon must be >= 1")


def theorem1_hyper(
    delta0: float, smoothness: float, lam: float, n: int, horizon: int, p: float
) -> tuple[float, float]:
    """Step size and momentum tuned to the tail index p of the noise."""
    _check_schedule_inputs(delta0, smoothness, lam, n, horizon)
    if not (1.0 < p <= 2.0):
        raise ValueError(f"tail index p must lie in (1, 2], got {p}")
    beta = 1.0 - float(horizon) ** (-p / (3.0 * p - 2.0))
    if beta < 0.1:
        warnings.warn(f"momentum beta = {beta:.4f} < 0.1; horizon too short for the schedule")
    return _schedule_alpha(delta0, smoothness, lam, n, horizon, beta), beta


def theorem2_hyper(
    delta0: float, smoothness: float, lam: float, n: int, horizon: int
) -> tuple[float, float]:
    """Tail-agnostic schedule: 1 - beta = 1/sqrt(horizon)."""
    _check_schedule_inputs(delta0, smoothness, lam, n, horizon)
    beta = 1.0 - float(horizon) ** (-0.5)
    if beta < 0.1:
        warnings.warn(f"momentum beta = {beta:.4f} < 0.1; horizon too short for the schedule")
    return _schedule_alpha(delta0, smoothness, lam, n, horizon, beta), beta


def rate_exponent(p: float, schedule: str) -> float:
    """Theoretical decay exponent of the time-averaged gradient norm."""
    if not (1.0 < p <= 2.0):
        raise ValueError(f"tail index p must lie in (1, 2], got {p}")
    if schedule == "theorem1":
        return -(p - 1.0) / (3.0 * p - 2.0)
    if schedule == "theorem2":
        return -(p - 1.0) / (2.0 * p)
    raise ValueError(f"unknown schedule {schedule!r}")


def run(
    engine: RoundEngine,
    horizon: int,
    probe_every: int = 10,
    w_star: np.ndarray | None = None,
    global_objective=None,
) -> "metrics.MetricsTrace":
    """Execute `horizon` rounds, probing metrics at the given cadence.

    Probes land at t = 0, every probe_every rounds, and the final round. A
    non-finite state stops the run; the offending round is probed with its
    diverged flag set and all earlier rows stay finite.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if probe_every < 1:
        raise ValueError(f"probe cadence must be >= 1, got {probe_every}")
    rows: list[list] = []
    # Row t's step_len is the mean-iterate displacement of the step LEAVING t,
    # so each probed row waits for the following step to fill it in; the final
    # row has no successor and keeps 0.0, as does a row whose successor blew up.
    awaiting_step: list[int] = []

    def probe() -> None:
        x = engine.x
        with np.errstate(over="ignore", invalid="ignore"):
            grad = (
                metrics.avg_grad_norm(x, global_objective) if global_objective is not None else 0.0
            )
            err = metrics.estimation_error(x, w_star) if w_star is not None else 0.0
            rows.append(
                [
                    engine.t,
                    grad,
                    err,
                    metrics.consensus_spread(x),
                    metrics.consensus_spread(engine.y),
                    engine.tracking_gap,
                    0.0,
                    1 if engine.diverged else 0,
                ]
            )
        awaiting_step.append(len(rows) - 1)

    probe()
    for t in range(1, horizon + 1):
        engine.step()
        if awaiting_step and not engine.diverged:
            rows[awaiting_step.pop()][6] = engine.last_step_len
        if engine.diverged:
            awaiting_step.clear()
            probe()
            break
        if t % probe_every == 0 or t == horizon:
            probe()
    cols = list(zip(*rows))
    return metrics.MetricsTrace(
        t=np.array(cols[0], dtype=int),
        avg_grad_norm=np.array(cols[1]),
        estimation_error=np.array(cols[2]),
        consensus_x=np.array(cols[3]),
        consensus_y=np.array(cols[4]),
        tracking_gap=np.array(cols[5]),
        step_len=np.array(cols[6]),
        diverged=np.array(cols[7], dtype=int),
        max_step_len=engine.max_step_len,
        max_step_equality_gap=engine.max_step_equality_gap,
        max_tracking_gap_rel=engine.max_tracking_gap_rel,
        alpha=engine.hyper.alpha,
    )

