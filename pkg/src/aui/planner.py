"""Cross-entropy-method trajectory optimiser scored by ensemble particle rollouts."""

from dataclasses import dataclass

import numpy as np

from .core import ImaginedTrajectory
from .errors import InvalidArgumentError, InvalidConfigError


@dataclass(frozen=True)
class CemConfig:
    population: int = 200
    elite_count: int = 20
    iterations: int = 5
    init_std_fraction: float = 0.25
    min_std: float = 1e-3
    alpha: float = 0.1
    n_particles: int = 20
    gamma: float = 1.0

    def __post_init__(self):
        if not 1 <= self.elite_count <= self.population:
            raise InvalidConfigError("need 1 <= elite_count <= population")
        if self.iterations < 1:
            raise InvalidConfigError("iterations must be >= 1")
        if self.min_std <= 0:
            raise InvalidConfigError("min_std must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfigError("alpha must lie in [0, 1]")
        if self.n_particles < 1:
            raise InvalidConfigError("n_particles must be >= 1")


@dataclass
class ActionDistribution:
    mean: np.ndarray
    std: np.ndarray


def rollout(s_init, actions, model, reward_fn, noise, gamma=1.0, with_stats=False):
    """Score ``K`` action sequences with TS-infinity particle propagation.

    ``actions``: ``(K, H, d_a)``; ``noise``: ``(K, H, P, d_s)`` standard
    normal draws.  Particle ``p`` of every candidate stays bound to member
    ``p // (P / B)`` for the whole horizon.  Reward at step ``t`` is
    ``r(s_t, a_t)`` averaged over particles, so the first term uses the
    (shared) initial state.

    Returns the scores ``(K,)`` and, with ``with_stats``, per-step particle
    means/stds ``(K, H, d_s)`` and mean rewards ``(K, H)``.
    """
    K, H, _ = actions.shape
    P, d_s = noise.shape[2], noise.shape[3]
    B = model.n_members
    if P % B:
        raise InvalidArgumentError("particle count must be a multiple of the member count")
    per = P // B
    # (B, K, per, d_s): member axis first so each member sees one contiguous batch
    state = np.broadcast_to(np.asarray(s_init, np.float64), (B, K, per, d_s)).copy()
    scores = np.zeros(K)
    if with_stats:
        means = np.empty((K, H, d_s))
        stds = np.empty((K, H, d_s))
        rewards = np.empty((K, H))
    for t in range(H):
        a_t = np.broadcast_to(actions[:, t, None, :], (B, K, per, actions.shape[2]))
        r = reward_fn(state, a_t).mean(axis=(0, 2))
        scores += gamma**t * r
        mu, var = model.predict_grouped(state.reshape(B, K * per, d_s), a_t.reshape(B, K * per, -1))
        eps = noise[:, t].reshape(K, B, per, d_s).transpose(1, 0, 2, 3)
        state = state + mu.reshape(B, K, per, d_s) + np.sqrt(var).reshape(B, K, per, d_s) * eps
        if with_stats:
            flat = state.transpose(1, 0, 2, 3).reshape(K, P, d_s)
            means[:, t] = flat.mean(axis=1)
            stds[:, t] = flat.std(axis=1)
            rewards[:, t] = r
    if with_stats:
        return scores, means, stds, rewards
    return scores


def score_action_sequence(s_init, A, model, spec, rng, n_particles=20, gamma=1.0):
    """Score one action sequence.

    Particle noise is drawn from ``rng`` as one ``(H, P, d_s)`` block.
    Returns ``(score, pred_states, pred_sigmas, pred_rewards)``.
    """
    A = np.asarray(A, dtype=np.float64).reshape(-1, spec.d_a)
    noise = rng.standard_normal((len(A), n_particles, spec.d_s))
    scores, means, stds, rewards = rollout(
        s_init, A[None], model, spec.reward_fn, noise[None], gamma, with_stats=True
    )
    return float(scores[0]), means[0], stds[0], rewards[0]


def cem_update(dist, samples, scores, cfg):
    """Refit the sampling distribution to the top ``elite_count`` samples.

    Ties in score go to the lower sample index.
    """
    samples = np.asarray(samples, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if len(samples) != len(scores):
        raise InvalidArgumentError("one score per sample is required")
    order = np.argsort(-scores, kind="stable")
    elites = samples[order[:cfg.elite_count]]
    mean = cfg.alpha * dist.mean + (1.0 - cfg.alpha) * elites.mean(axis=0)
    std = cfg.alpha * dist.std + (1.0 - cfg.alpha) * elites.std(axis=0)
    return ActionDistribution(mean, np.maximum(std, cfg.min_std))


def candidate_noise(seed, iteration, k, H, d_a, P, d_s):
    """Draws for candidate ``k`` at ``iteration``; independent of evaluation order."""
    g = np.random.default_rng([seed, iteration, k])
    return g.standard_normal((H, d_a)), g.standard_normal((H, P, d_s))


def draw_population(seed, iteration, K, H, d_a, P, d_s):
    za = np.empty((K, H, d_a))
    zp = np.empty((K, H, P, d_s))
    for k in range(K):
        za[k], zp[k] = candidate_noise(seed, iteration, k, H, d_a, P, d_s)
    return za, zp


def compute_optimal_trajectory(s_init, model, spec, cfg, rng, warm_start=None, history=None):
    """Run CEM from ``s_init`` and return the imagined trajectory of the final mean.

    ``history``, when a list, receives ``(scores, elite_scores)`` per iteration.
    """
    s_init = np.asarray(s_init, dtype=np.float64)
    if not np.all(np.isfinite(s_init)):
        raise InvalidArgumentError("non-finite initial state")
    H, d_a, d_s = spec.plan_horizon, spec.d_a, spec.d_s
    K, P = cfg.population, cfg.n_particles
    low, high = spec.low, spec.high
    seed = int(rng.integers(2**63))

    if warm_start is None:
        mean = np.tile((low + high) / 2.0, (H, 1))
    else:
        mean = np.clip(np.asarray(warm_start, dtype=np.float64).reshape(H, d_a), low, high)
    std = np.tile(cfg.init_std_fraction * (high - low), (H, 1))
    dist = ActionDistribution(mean, np.maximum(std, cfg.min_std))

    for i in range(cfg.iterations):
        za, zp = draw_population(seed, i, K, H, d_a, P, d_s)
        samples = np.clip(dist.mean + dist.std * za, low, high)
        scores = rollout(s_init, samples, model, spec.reward_fn, zp, cfg.gamma)
        if history is not None:
            elite = np.sort(scores)[::-1][:cfg.elite_count]
            history.append((scores, elite))
        dist = cem_update(dist, samples, scores, cfg)

    best = np.clip(dist.mean, low, high)
    _, zp = candidate_noise(seed, cfg.iterations, 0, H, d_a, P, d_s)
    _, means, stds, rewards = rollout(
        s_init, best[None], model, spec.reward_fn, zp[None], cfg.gamma, with_stats=True
    )
    return ImaginedTrajectory(s_init.copy(), best, means[0], stds[0], rewards[0])
