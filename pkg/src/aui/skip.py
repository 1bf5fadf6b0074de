"""Decide whether the agent may keep executing its current imagined trajectory.

Three policies are available:

* ``nskip``: replan every ``n + 1`` steps regardless of what is observed.
* ``fsa`` (first-step-alike): keep going while the observed prediction error
  looks like the errors seen right after a replan.
* ``cb`` (confidence bound): keep going while the observed state stays
  inside ``prediction +/- c * sigma`` in every dimension.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidConfigError

MIN_NORMALITY_SAMPLES = 20


@dataclass(frozen=True)
class SkipPolicyConfig:
    kind: str = "nskip"
    n: int = 0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("nskip", "fsa", "cb", "never"):
            raise InvalidConfigError(f"unknown skip policy {self.kind!r}")
        if self.kind == "nskip" and self.n < 0:
            raise InvalidConfigError("n must be >= 0")
        if self.kind == "fsa" and not 0.0 < self.c < 1.0:
            raise InvalidConfigError("fsa percentile c must lie in (0, 1)")
        if self.kind == "cb" and self.c < 0:
            raise InvalidConfigError("cb multiplier c must be >= 0")

    @property
    def label(self):
        if self.kind == "nskip":
            return "Baseline" if self.n == 0 else f"NSKIP{self.n}"
        if self.kind == "never":
            return "Baseline"
        return f"{self.kind.upper()}{self.c:.3g}"


def nskip_should_skip(steps_since_recalc, n, horizon=None):
    """Skip while fewer than ``n`` steps were executed past the replan step.

    ``steps_since_recalc`` is 0 right after the first action of a fresh
    trajectory, so a replan happens every ``n + 1`` steps.
    """
    if horizon is not None and n >= horizon:
        raise InvalidConfigError(f"n={n} must be smaller than the plan horizon {horizon}")
    if steps_since_recalc < 0:
        raise InvalidArgumentError("negative step counter")
    return steps_since_recalc < n


# --------------------------------------------------------------------------
# normality test


def _skew_z(b1, n):
    y = b1 * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    if y == 0:
        y = 1.0
    return delta * math.asinh(y / alpha)


def _kurtosis_z(b2, n):
    mean = 3.0 * (n - 1) / (n + 1)
    var = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) ** 2 * (n + 3) * (n + 5))
    x = (b2 - mean) / math.sqrt(var)
    sqrt_beta1 = (
        6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9))
        * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)))
    )
    A = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    term1 = 1.0 - 2.0 / (9.0 * A)
    denom = 1.0 + x * math.sqrt(2.0 / (A - 4.0))
    if denom == 0:
        term2 = math.inf
    else:
        term2 = math.copysign(abs((1.0 - 2.0 / A) / denom) ** (1.0 / 3.0), denom)
    return (term1 - term2) / math.sqrt(2.0 / (9.0 * A))


def dagostino_pearson(samples):
    """Omnibus K^2 normality test; returns ``(k2, p_value)``.

    Combines the skewness and kurtosis z-scores; under normality K^2 is
    chi-squared with two degrees of freedom, whose survival function is
    ``exp(-k2 / 2)``.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    n = len(x)
    if n < MIN_NORMALITY_SAMPLES:
        raise InvalidArgumentError(f"need at least {MIN_NORMALITY_SAMPLES} samples, got {n}")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        raise InvalidArgumentError("zero-variance sample")
    b1 = np.mean(d**3) / m2**1.5
    b2 = np.mean(d**4) / m2**2
    k2 = _skew_z(b1, n) ** 2 + _kurtosis_z(b2, n) ** 2
    return k2, math.exp(-0.5 * k2)


# --------------------------------------------------------------------------
# error model


@dataclass(frozen=True)
class ErrorModel:
    errors: np.ndarray
    mu0: float
    theta0: float
    is_normal: bool
    significance: float = 0.05

    def to_list(self):
        return [float(v) for v in self.errors]


def build_error_model(errors, significance=0.05):
    errors = np.sort(np.asarray(errors, dtype=np.float64).reshape(-1))
    if len(errors) < MIN_NORMALITY_SAMPLES:
        raise InvalidArgumentError(f"need at least {MIN_NORMALITY_SAMPLES} errors")
    if np.any(errors < 0) or not np.all(np.isfinite(errors)):
        raise InvalidArgumentError("errors must be finite and non-negative")
    mu0 = float(errors.mean())
    theta0 = float(errors.std()) if errors[-1] > errors[0] else 0.0
    if theta0 == 0:
        is_normal = False
    else:
        _, p = dagostino_pearson(errors)
        is_normal = p >= significance
    errors.setflags(write=False)
    return ErrorModel(errors, mu0, theta0, bool(is_normal), significance)


def nearest_rank(c, m):
    """1-based nearest rank: the smallest ``k`` with ``k / m >= c``."""
    k = max(1, math.ceil(c * m))
    while k > 1 and (k - 1) / m >= c:
        k -= 1
    while k < m and k / m < c:
        k += 1
    return k


def percentile_threshold(model, c):
    if not 0.0 < c < 1.0:
        raise InvalidConfigError("percentile c must lie in (0, 1)")
    return float(model.errors[nearest_rank(c, len(model.errors)) - 1])


def fsa_should_skip(model, eps, c):
    if model.is_normal and model.theta0 > 0:
        return bool(eps <= model.mu0 + c * model.theta0)
    return bool(eps <= percentile_threshold(model, c))


def cb_should_skip(s_actual, s_pred, sigma, c):
    """True iff ``s_pred - c*sigma <= s_actual <= s_pred + c*sigma`` in every dimension."""
    s_actual = np.asarray(s_actual, dtype=np.float64)
    s_pred = np.asarray(s_pred, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if not (s_actual.shape == s_pred.shape == sigma.shape):
        raise InvalidArgumentError("state, prediction and sigma must share a shape")
    lo = s_pred - c * sigma
    hi = s_pred + c * sigma
    return bool(np.all((lo <= s_actual) & (s_actual <= hi)))


def should_skip(cfg, *, depth, s_actual, s_pred, sigma, eps, err_model=None, horizon=None):
    """Dispatch to the configured policy after an action was executed."""
    if cfg.kind == "never":
        return False
    if cfg.kind == "nskip":
        return nskip_should_skip(depth, cfg.n, horizon)
    if cfg.kind == "fsa":
        if err_model is None:
            raise InvalidConfigError("fsa needs an error model")
        return fsa_should_skip(err_model, eps, cfg.c)
    return cb_should_skip(s_actual, s_pred, sigma, cfg.c)
