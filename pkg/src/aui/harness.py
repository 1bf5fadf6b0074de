"""Experiment drivers: pre-training, error-vs-step analysis, policy sweeps, online runs.

Every driver writes CSV into ``cfg.output_dir`` and also returns its rows.
Evaluation run ``r`` of any setting uses ``default_rng([seed, r])`` so all
policies face the same start states.
"""

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .agent import error_model_from_buffer, pretrain, run_aui, run_online_skipping
from .checkpoint import load_checkpoint, save_checkpoint
from .core import ReplayBuffer
from .skip import SkipPolicyConfig

log = logging.getLogger(__name__)


@dataclass
class ResultRow:
    method: str
    kind: str
    param: float
    Rw: float
    RwSTD: float
    Rc: float
    RcSTD: float
    Sx: float
    SxSTD: float
    RwMin: float
    RwMax: float
    Err: float
    ErrSTD: float
    RwNorm: float = 0.0
    RwMaxNorm: float = 0.0


RESULT_COLUMNS = [f.name for f in fields(ResultRow)]
ERROR_COLUMNS = ["n", "step", "mean", "std", "min", "max", "count"]
ONLINE_COLUMNS = [
    "method", "c", "iteration", "wall_seconds", "reward_mean", "reward_min", "reward_max",
    "recalc_pct", "recalc_count", "err_mean", "err_std",
]


# --------------------------------------------------------------------------
# CSV


def write_csv(path, columns, rows, comment=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            d = asdict(row) if hasattr(row, "__dataclass_fields__") else row
            w.writerow([_fmt(d[c]) for c in columns])
    return path


def _fmt(v):
    # repr keeps every bit of a float, so re-parsing is exact
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _parse(v):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts; ``#`` lines are skipped."""
    with Path(path).open(newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: _parse(v) for k, v in row.items()} for row in reader]


def read_results(path):
    out = []
    for d in read_csv(path):
        d["method"] = str(d["method"])
        d["kind"] = str(d["kind"])
        out.append(ResultRow(**{k: (float(v) if k not in ("method", "kind") else v) for k, v in d.items()}))
    return out


# --------------------------------------------------------------------------
# evaluation


def _std(values):
    values = np.asarray(values, dtype=np.float64)
    # identical values: report an exact zero rather than round-off from the mean
    if len(values) < 2 or np.all(values == values[0]):
        return 0.0
    return float(values.std(ddof=1))


def _eval_cell(args):
    agent_cfg, skip, model, err_model, run = args
    cfg = replace(agent_cfg, skip=skip, n_iterations=1, train_model=False)
    spec = cfg.env_spec()
    rng = np.random.default_rng([agent_cfg.seed, run])
    buf = ReplayBuffer(spec.d_s, spec.d_a)
    _, _, records = run_aui(cfg, model, buf, err_model, rng)
    return records[0]


def _map(fn, cells, workers):
    if workers <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def evaluate(agent_cfg, skip, model, err_model=None, runs=10, workers=1):
    """``runs`` seeded single-episode evaluations of a frozen model under ``skip``."""
    cells = [(agent_cfg, skip, model, err_model, r) for r in range(runs)]
    return _map(_eval_cell, cells, workers)


def summarize(skip, records):
    rewards = [r.total_reward for r in records]
    rc = [r.recalc_count for r in records]
    sx = [r.sx for r in records]
    err = [r.mean_error for r in records]
    param = float(skip.n) if skip.kind == "nskip" else float(skip.c)
    return ResultRow(
        method=skip.label, kind=skip.kind, param=param,
        Rw=float(np.mean(rewards)), RwSTD=_std(rewards),
        Rc=float(np.mean(rc)), RcSTD=_std(rc),
        Sx=float(np.mean(sx)), SxSTD=_std(sx),
        RwMin=float(np.min(rewards)), RwMax=float(np.max(rewards)),
        Err=float(np.mean(err)), ErrSTD=_std(err),
    )


def normalize_rewards(rows):
    """Min-max scale Rw and RwMax over all rows (one environment) into [0, 1]."""
    for attr, target in (("Rw", "RwNorm"), ("RwMax", "RwMaxNorm")):
        vals = [getattr(r, attr) for r in rows]
        lo, hi = min(vals), max(vals)
        for r in rows:
            setattr(r, target, (getattr(r, attr) - lo) / (hi - lo) if hi > lo else 0.0)
    return rows


def sweep_settings(grid):
    """Baseline first, then every nskip n > 0, every FSA c and every CB c."""
    settings = [SkipPolicyConfig("nskip", 0)]
    settings += [SkipPolicyConfig("nskip", int(n)) for n in grid.n if n > 0]
    settings += [SkipPolicyConfig("fsa", c=float(c)) for c in grid.fsa_c]
    settings += [SkipPolicyConfig("cb", c=float(c)) for c in grid.cb_c]
    return settings


def _load(cfg, model, buf):
    if model is None:
        model, buf = load_checkpoint(cfg.checkpoint_path)
    return model, buf


def run_sweep(cfg, model=None, buf=None, settings=None):
    """One :class:`ResultRow` per policy setting; writes ``sweep.csv``."""
    model, buf = _load(cfg, model, buf)
    settings = sweep_settings(cfg.sweep) if settings is None else settings
    err_model = None
    if any(s.kind == "fsa" for s in settings):
        err_model = error_model_from_buffer(model, buf)
    rows = []
    for skip in settings:
        records = evaluate(cfg.agent, skip, model, err_model, cfg.runs_per_setting, cfg.workers)
        row = summarize(skip, records)
        log.info("%s Rw %.3f Rc %.2f Sx %.3f", row.method, row.Rw, row.Rc, row.Sx)
        rows.append(row)
    normalize_rewards(rows)
    comment = (
        f"env={cfg.agent.env} runs_per_setting={cfg.runs_per_setting} seed={cfg.seed}\n"
        "RwNorm and RwMaxNorm are min-max normalised over all rows of this environment"
    )
    write_csv(Path(cfg.output_dir) / "sweep.csv", RESULT_COLUMNS, rows, comment)
    return rows


def error_by_step(records):
    """Pool per-step errors by steps-since-recalculation: ``{step: [eps, ...]}``."""
    bins = {}
    for rec in records:
        for depth, eps in zip(rec.steps_since_recalc, rec.step_errors):
            bins.setdefault(depth, []).append(eps)
    return dict(sorted(bins.items()))


def error_rows(n, records):
    rows = []
    for step, errs in error_by_step(records).items():
        e = np.asarray(errs)
        rows.append({
            "n": n, "step": step, "mean": float(e.mean()), "std": float(e.std()),
            "min": float(e.min()), "max": float(e.max()), "count": len(e),
        })
    return rows


def run_error_analysis(cfg, model=None, buf=None):
    """Error statistics per (n, step) for nskip runs; writes ``error_analysis.csv``.

    Returns ``(rows, records_by_n)``.
    """
    model, buf = _load(cfg, model, buf)
    rows, by_n = [], {}
    for n in cfg.sweep.n:
        records = evaluate(cfg.agent, SkipPolicyConfig("nskip", int(n)), model, None,
                           cfg.runs_per_setting, cfg.workers)
        by_n[int(n)] = records
        rows += error_rows(int(n), records)
    write_csv(Path(cfg.output_dir) / "error_analysis.csv", ERROR_COLUMNS, rows,
              f"env={cfg.agent.env} runs_per_setting={cfg.runs_per_setting} seed={cfg.seed}")
    return rows, by_n


def _online_cell(args):
    agent_cfg, skip, run = args
    cfg = replace(agent_cfg, skip=skip, train_model=True)
    return run_online_skipping(cfg, np.random.default_rng([agent_cfg.seed, run]))


def run_online(cfg):
    """Train from scratch while skipping; baseline plus every CB c. Writes ``online.csv``."""
    settings = [SkipPolicyConfig("never")] + [SkipPolicyConfig("cb", c=float(c)) for c in cfg.sweep.cb_c]
    rows = []
    for skip in settings:
        cells = [(cfg.agent, skip, r) for r in range(cfg.runs_per_setting)]
        runs = _map(_online_cell, cells, cfg.workers)
        for it in range(cfg.agent.n_iterations):
            per = [series[it] for series in runs]
            rewards = [p["reward"] for p in per]
            rows.append({
                "method": skip.label,
                "c": float(skip.c),
                "iteration": it,
                "wall_seconds": float(np.mean([p["wall_seconds"] for p in per])),
                "reward_mean": float(np.mean(rewards)),
                "reward_min": float(np.min(rewards)),
                "reward_max": float(np.max(rewards)),
                "recalc_pct": float(np.mean([p["recalc_pct"] for p in per])),
                "recalc_count": float(np.mean([p["recalc_count"] for p in per])),
                "err_mean": float(np.mean([p["err_mean"] for p in per])),
                "err_std": float(np.mean([p["err_std"] for p in per])),
            })
        log.info("online %s final reward %.3f", skip.label, rows[-1]["reward_mean"])
    write_csv(Path(cfg.output_dir) / "online.csv", ONLINE_COLUMNS, rows,
              f"env={cfg.agent.env} runs_per_setting={cfg.runs_per_setting} seed={cfg.seed}")
    return rows


def run_pretrain(cfg):
    """Pre-train, keep the best run, save the checkpoint and the step-0 error model.

    Returns ``(model, buffer, final_rewards)``.
    """
    seeds = range(cfg.seed, cfg.seed + cfg.pretrain_runs)
    model, buf, finals = pretrain(cfg.agent, runs=cfg.pretrain_runs, seeds=seeds)
    out = Path(cfg.output_dir)
    save_checkpoint(model, buf, cfg.checkpoint_path)
    best = int(np.argmax(finals))
    write_csv(out / "pretrain.csv", ["seed", "final_reward", "chosen"], [
        {"seed": s, "final_reward": float(r), "chosen": int(i == best)}
        for i, (s, r) in enumerate(zip(seeds, finals))
    ])
    err = error_model_from_buffer(model, buf)
    write_csv(out / "error_model.csv", ["e0_errors"], [{"e0_errors": e} for e in err.to_list()],
              f"significance={err.significance} is_normal={err.is_normal}")
    return model, buf, finals


def spearman_step_trend(rows, n, max_step=10):
    """Spearman correlation of mean error against step (0..max_step) for one n."""
    sel = [r for r in rows if r["n"] == n and r["step"] <= max_step]
    rho = spearmanr([r["step"] for r in sel], [r["mean"] for r in sel]).statistic
    return float(rho) if not math.isnan(rho) else 0.0
