"""Seeded end-to-end runs, error metrics and the probe-strength sweep."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .filtering import Dynamics, PosteriorTrace
from .markov import HmmSpec, TruthTrajectory
from .model import DetuningGrid, ModelParams, default_params
from .retro import run_pqs
from .truthsim import HomodyneRecord, generate

log = logging.getLogger(__name__)

DEFAULT_BETAS = (0.1, 0.2, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0)


@dataclass
class ExperimentConfig:
    params: ModelParams = field(default_factory=default_params)
    hmm: HmmSpec = field(default_factory=HmmSpec)
    duration: float = 2e4
    dt: float = 0.01
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    betas: tuple[float, ...] = DEFAULT_BETAS
    stride: int = 10
    burn_in: float = 100.0
    out_dir: str = "out"
    workers: int = 1
    write_traces: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps) or round(steps) < 1:
            raise ValueError(f"duration {self.duration} is not a positive whole number of steps dt={self.dt}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if any(b <= 0 for b in self.betas):
            raise ValueError("sweep values must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


_MODEL_KEYS = set(ModelParams.field_names())


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(s: str, conv) -> tuple:
    return tuple(conv(x) for x in s.replace(",", " ").split())


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value

    model = {k: float(raw.pop(k)) for k in list(raw) if k in _MODEL_KEYS}
    params = default_params(model.get("gamma", 1.0)).with_(**model)

    n_fleas = int(raw.pop("n_fleas", 24))
    lo = float(raw.pop("grid_min", -2.0))
    hi = float(raw.pop("grid_max", 2.0))
    hmm = HmmSpec(
        n_fleas=n_fleas,
        flea_rate=float(raw.pop("flea_rate", 0.02)),
        grid=DetuningGrid.uniform(lo, hi, n_fleas + 1),
    )
    kw: dict = {}
    for name, conv in (("duration", float), ("dt", float), ("burn_in", float), ("stride", int), ("workers", int)):
        if name in raw:
            kw[name] = conv(raw.pop(name))
    if "seeds" in raw:
        kw["seeds"] = _parse_list(raw.pop("seeds"), int)
    if "betas" in raw:
        kw["betas"] = _parse_list(raw.pop("betas"), float)
    if "out_dir" in raw:
        kw["out_dir"] = raw.pop("out_dir")
    if "write_traces" in raw:
        kw["write_traces"] = _parse_bool(raw.pop("write_traces"))
    if raw:
        raise ValueError(f"unknown config keys: {sorted(raw)}")
    return ExperimentConfig(params=params, hmm=hmm, **kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = [f"{k} = {float(v)!r}" for k, v in asdict(cfg.params).items()]
    g = cfg.hmm.grid.values
    lines += [
        f"n_fleas = {cfg.hmm.n_fleas}",
        f"flea_rate = {cfg.hmm.flea_rate!r}",
        f"grid_min = {float(g[0])!r}",
        f"grid_max = {float(g[-1])!r}",
        f"duration = {cfg.duration!r}",
        f"dt = {cfg.dt!r}",
        f"seeds = {', '.join(map(str, cfg.seeds))}",
        f"betas = {', '.join(repr(float(b)) for b in cfg.betas)}",
        f"stride = {cfg.stride}",
        f"burn_in = {cfg.burn_in!r}",
        f"out_dir = {cfg.out_dir}",
        f"workers = {cfg.workers}",
        f"write_traces = {cfg.write_traces}",
    ]
    return "\n".join(lines) + "\n"


@dataclass
class RunMetrics:
    seed: int
    beta: float
    rmse_map_forward: float
    rmse_map_pqs: float
    mean_post_std_forward: float
    mean_post_std_pqs: float

    METRICS = ("rmse_map_forward", "rmse_map_pqs", "mean_post_std_forward", "mean_post_std_pqs")


def metrics(truth_delta: np.ndarray, trace: PosteriorTrace, burn_in: float = 100.0) -> tuple[float, float]:
    """``(rmse_map, mean_post_std)`` over checkpoints at or after ``burn_in``."""
    truth_delta = np.asarray(truth_delta, dtype=float)
    if truth_delta.shape != trace.times.shape:
        raise ValueError(f"truth has {truth_delta.size} points, trace has {trace.times.size}")
    keep = trace.times >= burn_in
    if not keep.any():
        raise ValueError("burn-in window covers the whole trace")
    err = trace.map_delta[keep] - truth_delta[keep]
    return math.sqrt(np.mean(err**2)), math.sqrt(np.mean(trace.var[keep]))


def aggregate(rows: list[RunMetrics]) -> dict[str, float]:
    """Quadratic mean of each metric over seeds."""
    return {m: math.sqrt(np.mean([getattr(r, m) ** 2 for r in rows])) for m in RunMetrics.METRICS}


def truth_on_checkpoints(truth: TruthTrajectory, grid: DetuningGrid, stride: int) -> np.ndarray:
    return grid.values[truth.states[::stride]]


def estimate(cfg: ExperimentConfig, record: HomodyneRecord, params: ModelParams | None = None):
    p = params or cfg.params
    dyn = Dynamics.build(cfg.hmm, p, record.dt)
    return run_pqs(record, cfg.hmm, stride=cfg.stride, dyn=dyn)


def run_one(cfg: ExperimentConfig, seed: int, out_dir=None, params: ModelParams | None = None) -> RunMetrics:
    """Generate, filter, smooth and score one seeded trajectory."""
    p = params or cfg.params
    truth, record, _ = generate(cfg.hmm, p, cfg.steps, cfg.dt, seed, stride=cfg.stride)
    fwd, smooth = estimate(cfg, record, p)
    td = truth_on_checkpoints(truth, cfg.hmm.grid, cfg.stride)
    rf, sf = metrics(td, fwd, cfg.burn_in)
    rp, sp = metrics(td, smooth, cfg.burn_in)
    result = RunMetrics(seed, p.beta_drive, rf, rp, sf, sp)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        if cfg.write_traces:
            truth.to_csv(d / "truth.csv", cfg.hmm.grid, stride=cfg.stride)
            record.save(d / "record.npz")
            fwd.to_csv(d / "forward.csv")
            smooth.to_csv(d / "pqs.csv")
            (d / "trace.gp").write_text(GNUPLOT_TRACE.format(trace="pqs.csv"))
        write_metrics_csv(d / "metrics.csv", [result])
    return result


def write_metrics_csv(path, rows: list[RunMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "seed", *RunMetrics.METRICS])
        for r in rows:
            w.writerow([f"{r.beta:.9g}", r.seed, *(f"{getattr(r, m):.9g}" for m in RunMetrics.METRICS)])


def _sweep_item(args):
    cfg, beta, seed = args
    p = cfg.params.with_(beta_drive=beta * math.sqrt(cfg.params.gamma))
    out = None
    if cfg.write_traces:
        out = Path(cfg.out_dir) / f"beta_{beta:g}" / f"seed_{seed}"
    return run_one(cfg, seed, out_dir=out, params=p)


def beta_sweep(cfg: ExperimentConfig, out_dir=None) -> tuple[list[RunMetrics], dict[float, dict[str, float]]]:
    """Run every (beta, seed) pair; returns per-run rows and per-beta aggregates.

    Sweep values are in units of sqrt(gamma). Failed items are logged and
    skipped; everything that finished is still written.
    """
    items = [(cfg, b, s) for b in cfg.betas for s in cfg.seeds]
    rows: list[RunMetrics] = []
    failed: list[tuple[float, int, str]] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_sweep_item, it) for it in items]
            for it, fut in zip(items, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:  # keep the rest of the sweep
                    log.error("beta=%g seed=%d failed: %s", it[1], it[2], exc)
                    failed.append((it[1], it[2], str(exc)))
    else:
        for it in items:
            try:
                rows.append(_sweep_item(it))
            except Exception as exc:
                log.error("beta=%g seed=%d failed: %s", it[1], it[2], exc)
                failed.append((it[1], it[2], str(exc)))
            else:
                r = rows[-1]
                log.info(
                    "beta=%g seed=%d fwd=%.3f pqs=%.3f", it[1], it[2], r.rmse_map_forward, r.rmse_map_pqs
                )

    summary: dict[float, dict[str, float]] = {}
    for b in cfg.betas:
        sel = [r for r in rows if math.isclose(r.beta, b * math.sqrt(cfg.params.gamma))]
        if sel:
            summary[b] = aggregate(sel)

    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(d / "sweep_runs.csv", rows)
        with open(d / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", *RunMetrics.METRICS])
            for b, agg in summary.items():
                w.writerow([f"{b:.9g}", *(f"{agg[m]:.9g}" for m in RunMetrics.METRICS)])
        if failed:
            with open(d / "sweep_failures.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["beta", "seed", "error"])
                w.writerows(failed)
        (d / "sweep.gp").write_text(GNUPLOT_SWEEP)
    return rows, summary


GNUPLOT_SWEEP = """\
set datafile separator ','
set key autotitle columnhead
set xlabel 'beta / sqrt(gamma)'
set ylabel 'error / gamma'
set logscale x
plot 'sweep.csv' using 1:4 with lines title 'forward posterior std', \\
     'sweep.csv' using 1:5 with lines title 'smoothed posterior std', \\
     'sweep.csv' using 1:2 with points pt 7 title 'forward MAP rmse', \\
     'sweep.csv' using 1:3 with points pt 5 title 'smoothed MAP rmse'
"""

GNUPLOT_TRACE = """\
set datafile separator ','
set xlabel 'gamma t'
set ylabel 'detuning / gamma'
plot '{trace}' using 1:(column('mean_delta')-sqrt(column('var_delta'))):(column('mean_delta')+sqrt(column('var_delta'))) with filledcurves fs transparent solid 0.3 title 'posterior +- std', \\
     '{trace}' using 1:(column('map_delta')) with lines lc 'green' title 'MAP', \\
     'truth.csv' using 1:3 with steps lc 'red' title 'truth'
"""
