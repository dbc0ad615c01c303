"""Evaluation quantities, trace container, and CSV serialization.

Every metric is a pure function of the state it is handed; avg_grad_norm
always evaluates exact gradients, even when the run that produced the states
was noisy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = (
    "t",
    "avg_grad_norm",
    "estimation_error",
    "consensus_x",
    "consensus_y",
    "tracking_gap",
    "step_len",
    "diverged",
)


def avg_grad_norm(states: np.ndarray, global_objective) -> float:
    """(1/n) sum_i ||grad f(x_i)|| with f the exact network-average objective."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    norms = [float(np.linalg.norm(global_objective.gradient(x))) for x in states]
    return float(np.sum(norms) / len(norms))


def estimation_error(states: np.ndarray, w_star: np.ndarray) -> float:
    """Mean l2 distance of the node iterates to the planted parameter."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    w_star = np.asarray(w_star, dtype=float)
    if states.shape[1] != w_star.size:
        raise ValueError(
            f"state dimension {states.shape[1]} does not match w_star dimension {w_star.size}"
        )
    return float(np.sum(np.linalg.norm(states - w_star, axis=1)) / states.shape[0])


def consensus_spread(states: np.ndarray) -> float:
    """(1/n) sum_i ||z_i - mean z||."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    center = np.sum(states, axis=0) / states.shape[0]
    return float(np.sum(np.linalg.norm(states - center, axis=1)) / states.shape[0])


def fit_rate(points: list[tuple[float, float]]) -> float:
    """Least-squares slope of log(value) against log(T)."""
    if len(points) < 3:
        raise ValueError(f"need at least 3 points to fit a rate, got {len(points)}")
    horizons = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    if np.any(horizons <= 0) or np.any(values <= 0):
        raise ValueError("rate fits need positive horizons and values")
    slope, _ = np.polyfit(np.log(horizons), np.log(values), 1)
    return float(slope)


@dataclass
class MetricsTrace:
    """Probe rows from one run plus run-level diagnostics.

    Rows are parallel arrays in probe order. `diverged` marks rows at and
    after a non-finite state; earlier rows stay finite. The run-level maxima
    are updated every round, not only at probe rounds.
    """

    t: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    avg_grad_norm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    estimation_error: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consensus_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consensus_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tracking_gap: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_len: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diverged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    max_step_len: float = 0.0
    max_step_equality_gap: float = 0.0
    max_tracking_gap_rel: float = 0.0
    alpha: float = float("nan")

    @property
    def n_rows(self) -> int:
        return self.t.size

    @property
    def has_diverged(self) -> bool:
        return bool(self.diverged.any())

    def row(self, k: int) -> dict:
        return {name: getattr(self, name)[k] for name in TRACE_COLUMNS}

    def final(self, column: str) -> float:
        if self.n_rows == 0:
            raise ValueError("empty trace")
        return float(getattr(self, column)[-1])

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for k in range(self.n_rows):
                cells = [str(int(self.t[k]))]
                for name in TRACE_COLUMNS[1:-1]:
                    cells.append(format(float(getattr(self, name)[k]), ".17g"))
                cells.append(str(int(self.diverged[k])))
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "MetricsTrace":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != ",".join(TRACE_COLUMNS):
                raise ValueError(f"unexpected trace header in {path}: {header!r}")
            cols: list[list[float]] = [[] for _ in TRACE_COLUMNS]
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != len(TRACE_COLUMNS):
                    raise ValueError(f"malformed trace row in {path}: {line!r}")
                for col, cell in zip(cols, parts):
                    col.append(float(cell))
        return cls(
            t=np.array(cols[0], dtype=int),
            avg_grad_norm=np.array(cols[1]),
            estimation_error=np.array(cols[2]),
            consensus_x=np.array(cols[3]),
            consensus_y=np.array(cols[4]),
            tracking_gap=np.array(cols[5]),
            step_len=np.array(cols[6]),
            diverged=np.array(cols[7], dtype=int),
        )


def aggregate_traces(traces: list[MetricsTrace]) -> dict[str, np.ndarray]:
    """Mean and sample standard deviation per probe row across seeds.

    Traces are aligned on probe index; a diverged trace contributes only the
    rows it produced. Columns come back as `<name>_mean` / `<name>_std`.
    """
    if not traces:
        raise ValueError("no traces to aggregate")
    n_rows = max(tr.n_rows for tr in traces)
    out: dict[str, np.ndarray] = {"t": np.zeros(n_rows, dtype=int), "runs": np.zeros(n_rows, dtype=int)}
    longest = max(traces, key=lambda tr: tr.n_rows)
    out["t"] = longest.t.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for name in TRACE_COLUMNS[1:-1]:
            mean = np.zeros(n_rows)
            std = np.zeros(n_rows)
            for k in range(n_rows):
                vals = [getattr(tr, name)[k] for tr in traces if tr.n_rows > k]
                mean[k] = np.mean(vals)
                std[k] = np.std(vals, ddof=1) if len(vals) > 1 else 0.0
            out[f"{name}_mean"] = mean
            out[f"{name}_std"] = std
    out["runs"] = np.array([sum(1 for tr in traces if tr.n_rows > k) for k in range(n_rows)], dtype=int)
    return out


def aggregate_to_csv(agg: dict[str, np.ndarray], path: str) -> None:
    names = list(agg.keys())
    n_rows = agg["t"].size
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for k in range(n_rows):
            cells = []
            for name in names:
                val = agg[name][k]
                if name in ("t", "runs"):
                    cells.append(str(int(val)))
                else:
                    cells.append(format(float(val), ".17g"))
            fh.write(",".join(cells) + "\n")
