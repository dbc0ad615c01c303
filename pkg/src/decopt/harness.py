"""Assemble configs into runs and drive run sets, sweeps, and grid searches.

A repeat k of a config reruns the same problem with noise streams keyed by
(seed, repeat=k); the dataset is keyed by its own seed and shared across
repeats. Worker threads only ever parallelize independent runs, so results
are identical for any thread count.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import tomli

from . import metrics, noise, objective, optim, topology
from .config import ConfigError, ExperimentConfig

# Grid-search defaults per method; alpha is shared by all of them.
GRID_ALPHAS = (1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1.0, 5.0, 10.0)
GRID_TAUS = (1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 0.5, 1.0, 5.0, 10.0, 50.0, 1e2)
GRID_BETAS = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
DEFAULT_GRIDS: dict[str, dict[str, tuple[float, ...]]] = {
    "dsgd": {"alpha": GRID_ALPHAS},
    "gt-dsgd": {"alpha": GRID_ALPHAS},
    "vn-dsgd": {"alpha": GRID_ALPHAS},
    "gt-nsgdm": {"alpha": GRID_ALPHAS, "beta": GRID_BETAS},
    "dsgd-clip": {"alpha": GRID_ALPHAS, "tau": GRID_TAUS},
    "dsgd-gclip": {"alpha": GRID_ALPHAS, "tau": GRID_TAUS},
    "dsgd-cclip": {"alpha": GRID_ALPHAS, "tau": GRID_TAUS},
    "sclip-ef": {
        "alpha": (1e-3, 1e-2, 0.1, 1.0, 10.0, 30.0),
        "beta": (1e-2, 0.1, 0.5, 0.8, 0.99),
        "c_phi": (1.0, 5.0, 10.0, 20.0, 30.0, 50.0),
        "tau": (0.1, 1.0, 10.0, 50.0, 100.0),
    },
    "qg-dsgdm": {"eta": GRID_ALPHAS, "beta": GRID_BETAS},
    "gt-adam": {"alpha": GRID_ALPHAS},
}


def build_mixing(cfg: ExperimentConfig) -> topology.MixingMatrix:
    top = cfg.topology
    if top.n == 1:
        # Single node: the only doubly stochastic 1x1 matrix.
        return topology.MixingMatrix(np.ones((1, 1)))
    if top.kind == "custom":
        graph = topology.load_graph(top.file, top.n)
    else:
        graph = topology.build_graph(top.kind, top.n)
    return topology.make_weights(graph, top.weighting)


def build_problem(cfg: ExperimentConfig):
    """Local objectives, exact global objective, planted parameter, start point."""
    obj = cfg.objective
    n = cfg.topology.n
    if obj.kind == "tukey-regression":
        ds = objective.generate_token_dataset(obj.n_samples, obj.dim, obj.dataset_seed)
        locals_ = objective.build_local_objectives(ds, n, c=obj.c)
        w_star = ds.w_star
        x0 = np.array(obj.init, dtype=float) if obj.init else np.zeros(obj.dim)
    else:
        locals_ = [objective.QuadraticObjective(a=a) for a in obj.offsets]
        w_star = None
        x0 = np.array(obj.init, dtype=float) if obj.init else np.zeros(1)
    return locals_, objective.GlobalObjective(locals_), w_star, x0


def resolve_hyper(cfg: ExperimentConfig, lam: float) -> optim.Hyper:
    """Literal hyperparameters, or the theorem schedule evaluated for this run."""
    hyp = cfg.hyper
    base = optim.Hyper(
        alpha=hyp.alpha,
        beta=hyp.beta,
        tau=hyp.tau,
        beta1=hyp.beta1,
        beta2=hyp.beta2,
        cap=hyp.cap,
        eps=hyp.eps,
        eta=hyp.eta,
        mu=hyp.mu,
        c_phi=hyp.c_phi,
    )
    if not hyp.schedule:
        return base
    horizon = max(cfg.rounds, 1)
    if hyp.schedule == "theorem1":
        alpha, beta = optim.theorem1_hyper(
            hyp.delta0, hyp.smoothness, lam, cfg.topology.n, horizon, hyp.p
        )
    else:
        alpha, beta = optim.theorem2_hyper(
            hyp.delta0, hyp.smoothness, lam, cfg.topology.n, horizon
        )
    return replace(base, alpha=alpha, beta=beta)


def build_engine(cfg: ExperimentConfig, repeat: int):
    """Engine plus the metric context (planted parameter, global objective)."""
    mixing = build_mixing(cfg)
    locals_, global_obj, w_star, x0 = build_problem(cfg)
    spec = noise.NoiseSpec(
        family=cfg.noise.family,
        dim=x0.size,
        variance=cfg.noise.variance,
        dof=cfg.noise.dof,
        scale=cfg.noise.scale,
        alpha=cfg.noise.alpha,
        skew=cfg.noise.skew,
        multiplier=cfg.noise.multiplier,
    )
    oracles = [
        objective.Oracle(
            objective=locals_[i],
            noise=spec,
            stream=noise.RngStream(cfg.seed, node=i, repeat=repeat),
            batch=cfg.objective.batch,
        )
        for i in range(len(locals_))
    ]
    hyper = resolve_hyper(cfg, mixing.lam)
    engine = optim.RoundEngine(mixing, oracles, cfg.method, hyper, x0)
    return engine, global_obj, w_star


def run_single(cfg: ExperimentConfig, repeat: int, probe_every: int | None = None) -> metrics.MetricsTrace:
    engine, global_obj, w_star = build_engine(cfg, repeat)
    return optim.run(
        engine,
        cfg.rounds,
        probe_every=probe_every if probe_every is not None else cfg.probe_every,
        w_star=w_star,
        global_objective=global_obj,
    )


def run_repeats(cfg: ExperimentConfig, threads: int = 1) -> list[metrics.MetricsTrace]:
    """All repeats of one config, in repeat order regardless of scheduling."""
    if threads <= 1 or cfg.repeats == 1:
        return [run_single(cfg, k) for k in range(cfg.repeats)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_single, cfg, k) for k in range(cfg.repeats)]
        return [f.result() for f in futures]


def cmd_run(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Write one trace CSV per repeat plus the cross-seed aggregate CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = run_repeats(cfg, threads)
    paths = []
    for k, trace in enumerate(traces):
        path = out / f"trace_seed{k}.csv"
        trace.to_csv(str(path))
        paths.append(str(path))
    agg = metrics.aggregate_traces(traces)
    agg_path = out / "aggregate.csv"
    metrics.aggregate_to_csv(agg, str(agg_path))
    return {
        "traces": paths,
        "aggregate": str(agg_path),
        "diverged": any(tr.has_diverged for tr in traces),
        "trace_objects": traces,
    }


def _sweep_value_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "lambda":
        if not isinstance(value, str) or value not in ("ring", "directed-exponential", "complete"):
            raise ConfigError(f"sweep value {value!r}: lambda axis takes topology kind names")
        weighting = "uniform-out" if value == "directed-exponential" else cfg.topology.weighting
        out = replace(cfg, topology=replace(cfg.topology, kind=value, weighting=weighting))
    elif axis == "sigma":
        scale = float(value)
        if scale <= 0:
            raise ConfigError(f"sweep value {value!r}: scale must be positive")
        if cfg.noise.family == "gaussian":
            out = replace(cfg, noise=replace(cfg.noise, variance=scale))
        elif cfg.noise.family in ("student-t", "alpha-stable"):
            out = replace(cfg, noise=replace(cfg.noise, scale=scale))
        else:
            raise ConfigError("sigma sweep needs a noisy base config")
    elif axis == "n":
        n = int(value)
        if n < 1:
            raise ConfigError(f"sweep value {value!r}: node count must be >= 1")
        out = replace(cfg, topology=replace(cfg.topology, n=n))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected lambda, sigma, or n")
    return out


def final_error(traces: list[metrics.MetricsTrace], column: str) -> tuple[float, float]:
    finals = [tr.final(column) for tr in traces]
    mean = float(np.mean(finals))
    std = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
    return mean, std


def cmd_sweep(cfg: ExperimentConfig, axis: str, values: list, out_dir, threads: int = 1) -> dict:
    """One run set per axis value; summary CSV of final estimation errors."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = [_sweep_value_config(cfg, axis, v) for v in values]
    jobs = [(i, k) for i in range(len(configs)) for k in range(configs[i].repeats)]
    results: dict[tuple[int, int], metrics.MetricsTrace] = {}
    if threads <= 1:
        for i, k in jobs:
            results[(i, k)] = run_single(configs[i], k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {(i, k): pool.submit(run_single, configs[i], k) for i, k in jobs}
            results = {key: fut.result() for key, fut in futures.items()}
    column = "estimation_error" if cfg.objective.kind == "tukey-regression" else "avg_grad_norm"
    rows = []
    for i, value in enumerate(values):
        traces = [results[(i, k)] for k in range(configs[i].repeats)]
        mean, std = final_error(traces, column)
        lam = build_mixing(configs[i]).lam
        diverged = sum(1 for tr in traces if tr.has_diverged)
        rows.append((value, lam, mean, std, diverged))
    path = out / f"sweep_{axis}.csv"
    value_col = "topology" if axis == "lambda" else axis
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{value_col},lambda,final_{column}_mean,final_{column}_std,diverged_runs\n")
        for value, lam, mean, std, diverged in rows:
            fh.write(
                f"{value},{format(lam, '.17g')},{format(mean, '.17g')},"
                f"{format(std, '.17g')},{diverged}\n"
            )
    return {"summary": str(path), "rows": rows, "column": column}


def _parse_grid_file(path: str, method: str) -> dict[str, tuple[float, ...]]:
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    grid = data.get("grid", data)
    if not isinstance(grid, dict) or not grid:
        raise ConfigError(f"{path}: empty grid")
    hyper_fields = {
        "alpha", "beta", "tau", "beta1", "beta2", "cap", "eps", "eta", "mu", "c_phi"
    }
    out = {}
    for key, values in grid.items():
        if key not in hyper_fields:
            raise ConfigError(f"grid.{key}: not a hyperparameter")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key}: expected a non-empty value list")
        out[key] = tuple(float(v) for v in values)
    return out


def cmd_grid(
    cfg: ExperimentConfig, out_dir, grid_file: str | None = None, threads: int = 1
) -> dict:
    """Cartesian hyperparameter search ranked by final aggregate error."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _parse_grid_file(grid_file, cfg.method) if grid_file else DEFAULT_GRIDS[cfg.method]
    names = sorted(grid)
    combos = list(itertools.product(*(grid[name] for name in names)))
    configs = []
    for combo in combos:
        hyper = replace(cfg.hyper, schedule="", **dict(zip(names, combo)))
        configs.append(replace(cfg, hyper=hyper))
    column = "estimation_error" if cfg.objective.kind == "tukey-regression" else "avg_grad_norm"

    def evaluate(c: ExperimentConfig) -> tuple[float, float, int]:
        traces = [run_single(c, k) for k in range(c.repeats)]
        mean, std = final_error(traces, column)
        return mean, std, sum(1 for tr in traces if tr.has_diverged)

    if threads <= 1:
        evals = [evaluate(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evals = list(pool.map(evaluate, configs))
    order = sorted(
        range(len(combos)),
        key=lambda i: (np.isnan(evals[i][0]) or np.isinf(evals[i][0]), evals[i][0]),
    )
    path = out / "grid.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + f",final_{column}_mean,final_{column}_std,diverged_runs\n")
        for i in order:
            mean, std, diverged = evals[i]
            cells = [format(v, ".17g") for v in combos[i]]
            cells += [format(mean, ".17g"), format(std, ".17g"), str(diverged)]
            fh.write(",".join(cells) + "\n")
    best = order[0]
    return {
        "ranked": str(path),
        "n_rows": len(combos),
        "best": dict(zip(names, combos[best])),
        "best_score": evals[best][0],
        "column": column,
    }


def cmd_claim1(n: int, floor: float, horizon: int, alpha: float = 0.25) -> dict:
    """Contrast plain normalized descent against tracking on the two-cluster toy.

    The dyadic default alpha keeps every iterate quantity exactly
    representable, so the fixed-point claim can be checked bit-for-bit.
    """
    objectives, mixing, x0 = objective.claim1_instance(n, floor)
    global_obj = objective.GlobalObjective(objectives)
    spec = noise.NoiseSpec(family="none", dim=1)

    def make_engine(method: str, hyper: optim.Hyper) -> optim.RoundEngine:
        oracles = [
            objective.Oracle(objective=objectives[i], noise=spec, stream=noise.RngStream(0, node=i))
            for i in range(n)
        ]
        return optim.RoundEngine(mixing, oracles, method, hyper, np.array([x0]))

    vn_engine = make_engine("vn-dsgd", optim.Hyper(alpha=alpha))
    vn_grad_sum = metrics.avg_grad_norm(vn_engine.x, global_obj)
    vn_bit_constant = True
    x0_bits = vn_engine.x.copy()
    for _ in range(horizon):
        vn_engine.step()
        if not np.array_equal(vn_engine.x, x0_bits):
            vn_bit_constant = False
        vn_grad_sum += metrics.avg_grad_norm(vn_engine.x, global_obj)
    vn_time_avg = vn_grad_sum / (horizon + 1)

    gt_engine = make_engine("gt-nsgdm", optim.Hyper(alpha=alpha, beta=0.0))
    gt_final = metrics.avg_grad_norm(gt_engine.x, global_obj)
    rounds_to_band = None
    for t in range(1, horizon + 1):
        gt_engine.step()
        gt_final = metrics.avg_grad_norm(gt_engine.x, global_obj)
        if rounds_to_band is None and gt_final < 2.0 * alpha:
            rounds_to_band = t
    return {
        "n": n,
        "floor": floor,
        "alpha": alpha,
        "vn_time_avg_grad": vn_time_avg,
        "vn_bit_constant": vn_bit_constant,
        "vn_holds": vn_time_avg >= floor and vn_bit_constant,
        "gt_final_grad": gt_final,
        "gt_rounds_to_band": rounds_to_band,
    }


def cmd_rate_check(cfg: ExperimentConfig, horizons: list[int], threads: int = 1) -> dict:
    """Fit the empirical decay of the time-averaged gradient norm against T."""
    if len(horizons) < 3:
        raise ConfigError(f"rate check needs >= 3 horizons, got {len(horizons)}")
    if not cfg.hyper.schedule:
        raise ConfigError("hyper.schedule: rate check needs theorem1 or theorem2")
    points = []
    for horizon in sorted(horizons):
        sub = replace(cfg, rounds=int(horizon))
        trace = run_single(sub, repeat=0, probe_every=1)
        if trace.has_diverged:
            warnings.warn(f"horizon {horizon} diverged; excluded from the fit")
            continue
        time_avg = float(np.mean(trace.avg_grad_norm))
        points.append((float(horizon), time_avg))
    if len(points) < 3:
        raise ConfigError(f"only {len(points)} horizons survived; need >= 3 to fit")
    slope = metrics.fit_rate(points)
    theory = optim.rate_exponent(cfg.hyper.p, cfg.hyper.schedule)
    return {"points": points, "fitted": slope, "theoretical": theory}


def cmd_topo_info(cfg: ExperimentConfig) -> dict:
    mixing = build_mixing(cfg)
    return {
        "kind": cfg.topology.kind,
        "n": mixing.n,
        "weighting": cfg.topology.weighting,
        "lambda": mixing.lam,
    }


def cmd_noise_diag(cfg: ExperimentConfig, out_dir, n_draws: int = 10**6) -> dict:
    """Empirical diagnostics of the configured noise family."""
    if cfg.noise.family == "none":
        raise ConfigError("noise.family: nothing to diagnose for noiseless configs")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = noise.NoiseSpec(
        family=cfg.noise.family,
        dim=1,
        variance=cfg.noise.variance,
        dof=cfg.noise.dof,
        scale=cfg.noise.scale,
        alpha=cfg.noise.alpha,
        skew=cfg.noise.skew,
        multiplier=cfg.noise.multiplier,
    )
    stream = noise.RngStream(cfg.seed, node=0)
    draws = _bulk_draws(spec, stream, n_draws)
    center, se = noise.robust_mean(draws)
    mean = float(draws.mean())
    report = {
        "family": cfg.noise.family,
        "n_draws": int(draws.size),
        "sample_mean": mean,
        "robust_mean": center,
        "robust_se": se,
        "mean_within_3se": bool(abs(mean) <= 3.0 * se),
        "moment_p1_2": noise.empirical_moment(draws, 1.2),
    }
    if cfg.noise.family == "alpha-stable":
        report["tail_slope"] = noise.tail_slope(draws)
        report["tail_slope_expected"] = -cfg.noise.alpha
    hist, edges = np.histogram(draws, bins=200)
    hist_path = out / "noise_hist.csv"
    with open(hist_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_left,bin_right,count\n")
        for j in range(hist.size):
            fh.write(
                f"{format(edges[j], '.17g')},{format(edges[j + 1], '.17g')},{hist[j]}\n"
            )
    report["histogram"] = str(hist_path)
    return report


def _bulk_draws(spec: noise.NoiseSpec, stream: noise.RngStream, count: int) -> np.ndarray:
    wide = replace(spec, dim=count)
    return noise.sample(wide, stream)
