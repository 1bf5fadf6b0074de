"""Small hand-built models shared by the test modules."""

import numpy as np

from aui.dynamics import EnsembleModel, init_params
from aui.envs import EnvSpec


def constant_model(deltas, logvar=-30.0, d_a=1):
    """Ensemble whose member ``b`` always predicts ``deltas[b]`` with negligible variance."""
    deltas = np.asarray(deltas, dtype=np.float32)
    B, d_s = deltas.shape
    sizes = [d_s + d_a, 4, 4, 2 * d_s]
    params = [(np.zeros_like(W), np.zeros_like(b)) for W, b in init_params(sizes, np.random.default_rng(0), B)]
    params[-1][1][:, 0, :d_s] = deltas
    params[-1][1][:, 0, d_s:] = logvar
    return EnsembleModel(d_s, d_a, B, params=params, logvar_min=logvar, logvar_max=logvar)


def identity_model(d_s, d_a, n_members=5):
    return constant_model(np.zeros((n_members, d_s)), d_a=d_a)


def toy_spec(reward_fn, d_s=1, d_a=1, H=5, low=-1.0, high=1.0, task_horizon=50):
    return EnvSpec(
        name="toy", d_s=d_s, d_a=d_a, task_horizon=task_horizon, plan_horizon=H,
        action_low=(low,) * d_a, action_high=(high,) * d_a, dt=1.0,
        nominal_start=(0.0,) * d_s, reward_fn=reward_fn,
        step_fn=lambda s, a, dt: np.asarray(s, dtype=np.float64).copy(),
    )
