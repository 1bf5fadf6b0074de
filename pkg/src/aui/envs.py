"""Analytic control tasks integrated with fixed-step RK4.

Three tasks are provided:

* ``cartpole``: swing-up, state ``(x, x_dot, theta, theta_dot)`` with
  ``theta = 0`` hanging down and ``theta = pi`` upright.
* ``pendulum``: torque-limited swing-up, exposed state
  ``(cos theta, sin theta, theta_dot)`` with ``theta = 0`` upright.
* ``reacher2``: planar two-link arm, state ``(q1, q2, q1_dot, q2_dot, gx, gy)``.

Reward functions are vectorised over leading axes so the planner can score
whole particle clouds at once.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EpisodeFinishedError, InvalidArgumentError, InvalidConfigError

log = logging.getLogger(__name__)

GRAVITY = 9.81

# cartpole
CART_MASS = 0.1
POLE_MASS = 0.1
POLE_LENGTH = 0.6

# pendulum (uniform rod about its end)
PEND_MASS = 1.0
PEND_LENGTH = 1.0

# reacher2 (uniform rods, horizontal plane)
LINK_LENGTHS = (0.1, 0.1)
LINK_MASSES = (1.0, 1.0)
JOINT_DAMPING = 0.05


def rk4_step(f, y, u, dt):
    k1 = f(y, u)
    k2 = f(y + 0.5 * dt * k1, u)
    k3 = f(y + 0.5 * dt * k2, u)
    k4 = f(y + dt * k3, u)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def wrap_angle(theta):
    return (theta + np.pi) % (2.0 * np.pi) - np.pi


# --------------------------------------------------------------------------
# cartpole

def cartpole_derivs(y, u):
    x, xd, th, thd = y
    f = u[0]
    s, c = np.sin(th), np.cos(th)
    den = CART_MASS + POLE_MASS * s * s
    xdd = (f + POLE_MASS * s * (POLE_LENGTH * thd * thd + GRAVITY * c)) / den
    thdd = (
        -f * c
        - POLE_MASS * POLE_LENGTH * thd * thd * c * s
        - (CART_MASS + POLE_MASS) * GRAVITY * s
    ) / (POLE_LENGTH * den)
    return np.array([xd, xdd, thd, thdd])


def cartpole_tip(s):
    s = np.asarray(s)
    x, th = s[..., 0], s[..., 2]
    return np.stack([x + POLE_LENGTH * np.sin(th), -POLE_LENGTH * np.cos(th)], axis=-1)


def cartpole_reward(s, a):
    goal = np.array([0.0, POLE_LENGTH])
    d2 = np.sum((cartpole_tip(s) - goal) ** 2, axis=-1)
    return np.exp(-d2 / POLE_LENGTH**2) - 0.01 * np.sum(np.asarray(a) ** 2, axis=-1)


def cartpole_step(s, a, dt):
    return rk4_step(cartpole_derivs, np.asarray(s, dtype=np.float64), a, dt)


# --------------------------------------------------------------------------
# pendulum

def pendulum_derivs(y, u):
    th, thd = y
    thdd = 3.0 * GRAVITY / (2.0 * PEND_LENGTH) * np.sin(th) + 3.0 / (PEND_MASS * PEND_LENGTH**2) * u[0]
    return np.array([thd, thdd])


def pendulum_energy(theta, theta_dot):
    """Mechanical energy per unit rotational inertia of the unforced pendulum."""
    return 0.5 * theta_dot**2 + 3.0 * GRAVITY / (2.0 * PEND_LENGTH) * np.cos(theta)


def pendulum_observe(theta, theta_dot):
    return np.array([np.cos(theta), np.sin(theta), theta_dot])


def pendulum_reward(s, a):
    s = np.asarray(s)
    th = np.arctan2(s[..., 1], s[..., 0])
    a = np.asarray(a)
    return -(th**2 + 0.1 * s[..., 2] ** 2 + 0.001 * np.sum(a**2, axis=-1))


def pendulum_step(s, a, dt):
    th = np.arctan2(s[1], s[0])
    th, thd = rk4_step(pendulum_derivs, np.array([th, s[2]], dtype=np.float64), a, dt)
    return pendulum_observe(th, thd)


# --------------------------------------------------------------------------
# two-link reacher

def _reacher_mass_matrix(q2):
    (l1, l2), (m1, m2) = LINK_LENGTHS, LINK_MASSES
    lc1, lc2 = l1 / 2, l2 / 2
    i1, i2 = m1 * l1**2 / 12, m2 * l2**2 / 12
    c2 = np.cos(q2)
    m11 = i1 + i2 + m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * c2)
    m12 = i2 + m2 * (lc2**2 + l1 * lc2 * c2)
    m22 = i2 + m2 * lc2**2
    return np.array([[m11, m12], [m12, m22]])


def reacher_derivs(y, u):
    q1, q2, q1d, q2d = y
    l1, m2 = LINK_LENGTHS[0], LINK_MASSES[1]
    h = m2 * l1 * (LINK_LENGTHS[1] / 2) * np.sin(q2)
    coriolis = np.array([-h * (2 * q1d * q2d + q2d**2), h * q1d**2])
    tau = np.asarray(u, dtype=np.float64) - JOINT_DAMPING * np.array([q1d, q2d])
    qdd = np.linalg.solve(_reacher_mass_matrix(q2), tau - coriolis)
    return np.array([q1d, q2d, qdd[0], qdd[1]])


def reacher_fingertip(s):
    s = np.asarray(s)
    q1, q2 = s[..., 0], s[..., 1]
    l1, l2 = LINK_LENGTHS
    return np.stack(
        [l1 * np.cos(q1) + l2 * np.cos(q1 + q2), l1 * np.sin(q1) + l2 * np.sin(q1 + q2)],
        axis=-1,
    )


def reacher_reward(s, a):
    s = np.asarray(s)
    dist = np.linalg.norm(reacher_fingertip(s) - s[..., 4:6], axis=-1)
    return -dist - 0.01 * np.sum(np.asarray(a) ** 2, axis=-1)


def reacher_step(s, a, dt):
    s = np.asarray(s, dtype=np.float64)
    joints = rk4_step(reacher_derivs, s[:4], a, dt)
    return np.concatenate([joints, s[4:]])


# --------------------------------------------------------------------------


def _perturb_flat(nominal, rng, width):
    return nominal + rng.uniform(-width, width, size=nominal.shape)


def _perturb_pendulum(nominal, rng, width):
    # perturb the hidden angle so the exposed (cos, sin) pair stays on the circle
    th = np.arctan2(nominal[1], nominal[0]) + rng.uniform(-width, width)
    thd = nominal[2] + rng.uniform(-width, width)
    return pendulum_observe(th, thd)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    d_s: int
    d_a: int
    task_horizon: int
    plan_horizon: int
    action_low: tuple
    action_high: tuple
    dt: float
    nominal_start: tuple
    reward_fn: Callable = field(repr=False)
    step_fn: Callable = field(repr=False)
    perturb_fn: Callable = field(default=_perturb_flat, repr=False)
    reset_width: float = 0.05
    angle_dims: tuple = ()

    def __post_init__(self):
        if self.d_s < 1 or self.d_a < 1:
            raise InvalidConfigError("state and action dimensions must be >= 1")
        if self.plan_horizon > self.task_horizon:
            raise InvalidConfigError("plan horizon exceeds task horizon")
        if len(self.action_low) != self.d_a or len(self.action_high) != self.d_a:
            raise InvalidConfigError("action bounds must match d_a")

    @property
    def low(self):
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def high(self):
        return np.asarray(self.action_high, dtype=np.float64)

    def clip_action(self, a):
        return np.clip(a, self.low, self.high)


def reward_fn(spec, s, a):
    return spec.reward_fn(s, a)


def cartpole_spec(**overrides):
    kw = dict(
        name="cartpole", d_s=4, d_a=1, task_horizon=200, plan_horizon=25,
        action_low=(-3.0,), action_high=(3.0,), dt=0.05,
        nominal_start=(0.0, 0.0, 0.0, 0.0),
        reward_fn=cartpole_reward, step_fn=cartpole_step, angle_dims=(2,),
    )
    kw.update(overrides)
    return EnvSpec(**kw)


def pendulum_spec(**overrides):
    kw = dict(
        name="pendulum", d_s=3, d_a=1, task_horizon=200, plan_horizon=25,
        action_low=(-2.0,), action_high=(2.0,), dt=0.05,
        nominal_start=(-1.0, 0.0, 0.0),
        reward_fn=pendulum_reward, step_fn=pendulum_step, perturb_fn=_perturb_pendulum,
    )
    kw.update(overrides)
    return EnvSpec(**kw)


def reacher2_spec(**overrides):
    kw = dict(
        name="reacher2", d_s=6, d_a=2, task_horizon=150, plan_horizon=25,
        action_low=(-0.2, -0.2), action_high=(0.2, 0.2), dt=0.02,
        nominal_start=(0.0, 0.0, 0.0, 0.0, 0.1, 0.1),
        reward_fn=reacher_reward, step_fn=reacher_step, angle_dims=(0, 1),
    )
    kw.update(overrides)
    return EnvSpec(**kw)


SPECS = {"cartpole": cartpole_spec, "pendulum": pendulum_spec, "reacher2": reacher2_spec}


def make_spec(name, **overrides):
    try:
        return SPECS[name](**overrides)
    except KeyError:
        raise InvalidConfigError(f"unknown environment {name!r}; choose from {sorted(SPECS)}") from None


class Env:
    """Stateful episode wrapper around an :class:`EnvSpec`."""

    def __init__(self, spec):
        self.spec = spec
        self.state = np.asarray(spec.nominal_start, dtype=np.float64)
        self.step_count = 0
        self.clamp_count = 0

    def reset(self, seed=None, width=None):
        width = self.spec.reset_width if width is None else width
        nominal = np.asarray(self.spec.nominal_start, dtype=np.float64)
        if width == 0:
            self.state = nominal.copy()
        else:
            rng = np.random.default_rng(seed)
            self.state = np.asarray(self.spec.perturb_fn(nominal, rng, width), dtype=np.float64)
        self.step_count = 0
        return self.state.copy()

    def step(self, a):
        spec = self.spec
        if self.step_count >= spec.task_horizon:
            raise EpisodeFinishedError(f"episode already ran {spec.task_horizon} steps")
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if a.shape != (spec.d_a,):
            raise InvalidArgumentError(f"action must have {spec.d_a} entries")
        clipped = spec.clip_action(a)
        if not np.array_equal(clipped, a):
            self.clamp_count += 1
            log.debug("action %s clamped to bounds", a)
        r = float(spec.reward_fn(self.state, clipped))
        self.state = np.asarray(spec.step_fn(self.state, clipped, spec.dt), dtype=np.float64)
        self.step_count += 1
        return self.state.copy(), r

    @property
    def done(self):
        return self.step_count >= self.spec.task_horizon


def env_reset(env, seed=None):
    return env.reset(seed)


def env_step(env, a):
    return env.step(a)
