"""Control loops: per-step replanning, skipping, and skipping with online training."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import ReplayBuffer, Transition, euclidean_error
from .dynamics import Adam, EnsembleModel, train_model
from .envs import Env, make_spec
from .errors import InvalidConfigError
from .planner import CemConfig, compute_optimal_trajectory
from .skip import SkipPolicyConfig, build_error_model, should_skip

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    n_members: int = 5
    hidden: int = 64
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    logvar_min: float = -10.0
    logvar_max: float = 0.5


@dataclass(frozen=True)
class AgentConfig:
    env: str = "cartpole"
    planner: CemConfig = field(default_factory=CemConfig)
    skip: SkipPolicyConfig = field(default_factory=SkipPolicyConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    n_iterations: int = 1
    train_model: bool = False
    seed: int = 0
    task_horizon: int = None

    def __post_init__(self):
        if self.n_iterations < 1:
            raise InvalidConfigError("n_iterations must be >= 1")

    def env_spec(self):
        if self.task_horizon is None:
            return make_spec(self.env)
        return make_spec(self.env, task_horizon=self.task_horizon)


@dataclass
class EpisodeRecord:
    """Per-episode trace.

    ``skip_depths`` holds, for every replan, how many steps of the previous
    trajectory were executed past its first action (0 for the first replan
    of the episode); its mean is the Sx statistic.  ``steps_since_recalc``
    holds the same counter for every executed step.
    """

    seed: int
    total_reward: float = 0.0
    recalc_count: int = 0
    skip_depths: list = field(default_factory=list)
    steps_since_recalc: list = field(default_factory=list)
    step_errors: list = field(default_factory=list)
    per_step_rewards: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def steps(self):
        return len(self.per_step_rewards)

    @property
    def sx(self):
        return float(np.mean(self.skip_depths)) if self.skip_depths else 0.0

    @property
    def mean_error(self):
        return float(np.mean(self.step_errors)) if self.step_errors else 0.0

    @property
    def recalc_rate(self):
        return self.recalc_count / self.steps if self.steps else 0.0


def new_model(spec, mcfg, rng):
    return EnsembleModel(
        spec.d_s, spec.d_a, mcfg.n_members, mcfg.hidden, rng=rng,
        logvar_min=mcfg.logvar_min, logvar_max=mcfg.logvar_max, angle_dims=spec.angle_dims,
    )


def random_episode(spec, buf, rng):
    """Fill ``buf`` with one episode of uniformly random actions."""
    env = Env(spec)
    s = env.reset(int(rng.integers(2**31)))
    total = 0.0
    while not env.done:
        a = rng.uniform(spec.low, spec.high)
        s_next, r = env.step(a)
        buf.push(Transition(s, a, s_next, r))
        total += r
        s = s_next
    return total


def _start(cfg, spec, model, buf, rng):
    if model is None:
        model = new_model(spec, cfg.model, rng)
    if buf is None:
        buf = ReplayBuffer(spec.d_s, spec.d_a)
        random_episode(spec, buf, rng)
    return model, buf


def _train(cfg, model, buf, opt, rng):
    if opt is None:
        opt = Adam(model.params, lr=cfg.model.lr)
    train_model(model, buf, rng, cfg.model.epochs, cfg.model.batch_size, opt)
    return opt


def run_mbrl(cfg, model=None, buf=None, rng=None, on_episode=None):
    """Plan at every step and execute only the first planned action."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    spec = cfg.env_spec()
    model, buf = _start(cfg, spec, model, buf, rng)
    opt = None
    records = []
    for it in range(cfg.n_iterations):
        if cfg.train_model:
            opt = _train(cfg, model, buf, opt, rng)
        env = Env(spec)
        seed = int(rng.integers(2**31))
        s = env.reset(seed)
        rec = EpisodeRecord(seed)
        t0 = time.perf_counter()
        while not env.done:
            traj = compute_optimal_trajectory(s, model, spec, cfg.planner, rng)
            rec.recalc_count += 1
            rec.skip_depths.append(0)
            a, s_pred, _ = traj.advance()
            s_next, r = env.step(a)
            buf.push(Transition(s, a, s_next, r))
            rec.steps_since_recalc.append(0)
            rec.step_errors.append(euclidean_error(s_next, s_pred))
            rec.per_step_rewards.append(r)
            s = s_next
        rec.total_reward = float(np.sum(rec.per_step_rewards))
        rec.wall_seconds = time.perf_counter() - t0
        records.append(rec)
        log.info("mbrl iter %d reward %.3f", it, rec.total_reward)
        if on_episode is not None:
            on_episode(it, rec)
    return model, buf, records


def run_aui(cfg, model=None, buf=None, err_model=None, rng=None, on_episode=None):
    """Act upon the imagined trajectory until the skip policy asks for a replan.

    A replan is also forced once every action of the trajectory was used.
    """
    if cfg.skip.kind == "fsa" and err_model is None:
        raise InvalidConfigError("the fsa policy needs an error model")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    spec = cfg.env_spec()
    if cfg.skip.kind == "nskip" and cfg.skip.n >= spec.plan_horizon:
        raise InvalidConfigError(f"n={cfg.skip.n} must be smaller than H={spec.plan_horizon}")
    model, buf = _start(cfg, spec, model, buf, rng)
    opt = None
    records = []
    for it in range(cfg.n_iterations):
        if cfg.train_model:
            opt = _train(cfg, model, buf, opt, rng)
        env = Env(spec)
        seed = int(rng.integers(2**31))
        s = env.reset(seed)
        rec = EpisodeRecord(seed)
        t0 = time.perf_counter()
        traj = None
        skip = False
        depth = 0
        while not env.done:
            if traj is None or not skip or traj.exhausted:
                rec.skip_depths.append(depth)
                traj = compute_optimal_trajectory(s, model, spec, cfg.planner, rng)
                rec.recalc_count += 1
                depth = 0
            else:
                depth += 1
            a, s_pred, sigma = traj.advance()
            s_next, r = env.step(a)
            buf.push(Transition(s, a, s_next, r))
            eps = euclidean_error(s_next, s_pred)
            rec.steps_since_recalc.append(depth)
            rec.step_errors.append(eps)
            rec.per_step_rewards.append(r)
            skip = should_skip(
                cfg.skip, depth=depth, s_actual=s_next, s_pred=s_pred, sigma=sigma,
                eps=eps, err_model=err_model, horizon=spec.plan_horizon,
            )
            s = s_next
        rec.total_reward = float(np.sum(rec.per_step_rewards))
        rec.wall_seconds = time.perf_counter() - t0
        records.append(rec)
        log.info(
            "aui %s iter %d reward %.3f Rc %d",
            cfg.skip.label, it, rec.total_reward, rec.recalc_count,
        )
        if on_episode is not None:
            on_episode(it, rec)
    return model, buf, records


def run_online_skipping(cfg, rng=None):
    """Train from scratch while skipping with the confidence-bound policy.

    Returns one dict per iteration with reward, recalculation percentage,
    prediction-error statistics and cumulative wall time.
    """
    if not cfg.train_model or cfg.skip.kind not in ("cb", "never"):
        raise InvalidConfigError("online skipping needs train_model and the cb policy")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    series = []
    t0 = time.perf_counter()

    def record(it, rec):
        series.append({
            "iteration": it,
            "wall_seconds": time.perf_counter() - t0,
            "reward": rec.total_reward,
            "recalc_pct": 100.0 * rec.recalc_count / rec.steps,
            "recalc_count": rec.recalc_count,
            "err_mean": rec.mean_error,
            "err_std": float(np.std(rec.step_errors)),
        })

    run_aui(cfg, rng=rng, on_episode=record)
    return series


def step0_errors(model, buf):
    """Prediction error of the ensemble-mean model on every recorded transition."""
    s, a, s_next, _ = buf.arrays()
    pred = model.predict_mean(s.astype(np.float64), a.astype(np.float64))
    return np.linalg.norm(s_next.astype(np.float64) - pred, axis=1)


def error_model_from_buffer(model, buf, significance=0.05):
    return build_error_model(step0_errors(model, buf), significance)


def pretrain(cfg, runs=5, seeds=None):
    """Run per-step MBRL from scratch ``runs`` times; keep the best final episode.

    Returns ``(model, buffer, final_rewards)`` for the winning run.
    """
    seeds = list(range(runs)) if seeds is None else list(seeds)
    best = None
    finals = []
    for seed in seeds:
        run_cfg = AgentConfig(
            env=cfg.env, planner=cfg.planner, skip=SkipPolicyConfig("never"),
            model=cfg.model, n_iterations=cfg.n_iterations, train_model=True,
            seed=seed, task_horizon=cfg.task_horizon,
        )
        model, buf, records = run_mbrl(run_cfg)
        final = records[-1].total_reward
        finals.append(final)
        log.info("pretrain seed %d final reward %.3f", seed, final)
        if best is None or final > best[2]:
            best = (model, buf, final)
    return best[0], best[1], finals
