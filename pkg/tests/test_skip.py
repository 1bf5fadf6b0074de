import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from aui.errors import InvalidArgumentError, InvalidConfigError
from aui.skip import (
    ErrorModel,
    SkipPolicyConfig,
    build_error_model,
    cb_should_skip,
    dagostino_pearson,
    fsa_should_skip,
    nearest_rank,
    nskip_should_skip,
    percentile_threshold,
    should_skip,
)


def replan_count(n, task_h):
    """Direct simulation of the counter: replan whenever the policy declines to skip."""
    count, depth, skip = 0, 0, False
    for _ in range(task_h):
        if not skip:
            count += 1
            depth = 0
        else:
            depth += 1
        skip = nskip_should_skip(depth, n)
    return count


@pytest.mark.parametrize("n,task_h,rc", [
    (0, 200, 200), (1, 200, 100), (2, 200, 67), (3, 200, 50), (4, 150, 30), (5, 150, 25), (9, 150, 15),
])
def test_nskip_replan_counts(n, task_h, rc):
    assert replan_count(n, task_h) == rc == math.ceil(task_h / (n + 1))


def test_nskip_examples_and_validation():
    assert nskip_should_skip(0, 1) and not nskip_should_skip(1, 1)
    assert not nskip_should_skip(0, 0)
    with pytest.raises(InvalidConfigError):
        nskip_should_skip(0, 25, horizon=25)
    with pytest.raises(InvalidArgumentError):
        nskip_should_skip(-1, 2)


def test_labels_and_validation():
    assert SkipPolicyConfig("nskip", 0).label == "Baseline"
    assert SkipPolicyConfig("nskip", 3).label == "NSKIP3"
    assert SkipPolicyConfig("cb", c=0.5).label == "CB0.5"
    assert SkipPolicyConfig("fsa", c=0.95).label == "FSA0.95"
    with pytest.raises(InvalidConfigError):
        SkipPolicyConfig("fsa", c=1.0)
    with pytest.raises(InvalidConfigError):
        SkipPolicyConfig("sometimes")


@pytest.mark.parametrize("seed", range(5))
def test_dagostino_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    for x in (rng.normal(size=200), rng.exponential(size=60), rng.uniform(size=1000), rng.standard_t(3, 500)):
        k2, p = dagostino_pearson(x)
        ref = stats.normaltest(x)
        assert k2 == pytest.approx(ref.statistic, rel=1e-9)
        assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)


def test_dagostino_validation():
    with pytest.raises(InvalidArgumentError):
        dagostino_pearson(np.arange(19.0))
    with pytest.raises(InvalidArgumentError):
        dagostino_pearson(np.ones(50))


def test_dagostino_calibration():
    rejects_uniform = sum(dagostino_pearson(np.random.default_rng(s).uniform(size=1000))[1] < 0.05
                          for s in range(100))
    accepts_normal = sum(dagostino_pearson(np.random.default_rng(s).normal(size=1000))[1] >= 0.05
                         for s in range(100))
    assert rejects_uniform >= 95
    assert accepts_normal >= 95


def test_dagostino_type_one_error_rate():
    # the false-rejection rate under normality stays within 3 binomial SE of 0.05
    m = 2000
    rejects = sum(dagostino_pearson(np.random.default_rng(10_000 + s).normal(size=200))[1] < 0.05
                  for s in range(m))
    assert abs(rejects / m - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / m)


def test_error_model_construction():
    rng = np.random.default_rng(0)
    normal = build_error_model(np.abs(5 + rng.normal(size=500)))
    assert normal.is_normal
    assert normal.mu0 == pytest.approx(np.mean(normal.errors))
    assert normal.theta0 == pytest.approx(np.std(normal.errors))
    skewed = build_error_model(rng.exponential(size=500))
    assert not skewed.is_normal
    flat = build_error_model(np.full(30, 0.2))
    assert not flat.is_normal and flat.theta0 == 0.0
    assert list(flat.errors) == flat.to_list()
    with pytest.raises(InvalidArgumentError):
        build_error_model(np.ones(5))
    with pytest.raises(InvalidArgumentError):
        build_error_model(-np.ones(30))


def sort_oracle(errors, c):
    ordered = sorted(errors)
    m = len(ordered)
    for k in range(1, m + 1):
        if k / m >= c:
            return ordered[k - 1]


@settings(max_examples=200)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=20, max_size=80),
       st.floats(0.001, 0.999))
def test_percentile_matches_sort_oracle(errors, c):
    model = build_error_model(errors)
    assert percentile_threshold(model, c) == sort_oracle(errors, c)


def test_nearest_rank_examples():
    assert nearest_rank(0.95, 1000) == 950
    assert nearest_rank(0.5, 3) == 2
    assert nearest_rank(0.001, 10) == 1
    assert nearest_rank(0.999, 10) == 10


def frozen(errors, normal):
    errors = np.sort(np.asarray(errors, float))
    return ErrorModel(errors, float(errors.mean()), float(errors.std()), normal)


def test_fsa_examples():
    model = frozen(np.arange(1.0, 21.0), normal=False)
    assert fsa_should_skip(model, 10.0, 0.5)
    assert not fsa_should_skip(model, 10.5, 0.5)
    sigma_rule = frozen([1.0, 3.0] * 10, normal=True)
    # mu0 = 2, theta0 = 1
    assert fsa_should_skip(sigma_rule, 3.0, 1.0)
    assert not fsa_should_skip(sigma_rule, 3.01, 1.0)
    degenerate = ErrorModel(np.full(20, 0.5), 0.5, 0.0, True)
    assert fsa_should_skip(degenerate, 0.5, 0.3) and not fsa_should_skip(degenerate, 0.51, 0.3)


@settings(max_examples=50)
@given(st.floats(0, 5), st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_fsa_monotone(eps, c, dc):
    model = frozen(np.random.default_rng(0).exponential(size=200), normal=False)
    if fsa_should_skip(model, eps, c):
        assert fsa_should_skip(model, eps, c + dc)
        assert fsa_should_skip(model, eps * 0.5, c)


@pytest.mark.parametrize("c", [0.25, 0.5, 0.95])
def test_fsa_calibration(c):
    rng = np.random.default_rng(11)
    model = frozen(rng.exponential(size=1000), normal=False)
    draws = rng.choice(model.errors, size=10_000)
    freq = np.mean([fsa_should_skip(model, e, c) for e in draws])
    se = math.sqrt(c * (1 - c) / 10_000)
    assert abs(freq - c) <= 3 * se


def test_cb_examples():
    assert cb_should_skip([1.0, 2.0], [1.0, 2.0], [0.0, 0.0], 0.0)
    assert cb_should_skip([1.5, 2.0], [1.0, 2.0], [0.5, 0.1], 1.0)
    assert not cb_should_skip([1.5, 2.2], [1.0, 2.0], [0.5, 0.1], 1.0)
    assert not cb_should_skip([1.0 + 1e-12], [1.0], [0.0], 10.0)
    with pytest.raises(InvalidArgumentError):
        cb_should_skip([1.0], [1.0, 2.0], [1.0, 1.0], 1.0)


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.floats(0, 3))
def test_cb_permutation_invariant_and_monotone(seed, c):
    rng = np.random.default_rng(seed)
    s, p, sig = rng.normal(size=4), rng.normal(size=4), rng.uniform(0, 2, 4)
    perm = rng.permutation(4)
    base = cb_should_skip(s, p, sig, c)
    assert base == cb_should_skip(s[perm], p[perm], sig[perm], c)
    if base:
        assert cb_should_skip(s, p, sig, c + 0.5)


def test_should_skip_dispatch():
    kw = dict(s_actual=np.zeros(2), s_pred=np.ones(2), sigma=np.ones(2), eps=0.1, horizon=25)
    assert not should_skip(SkipPolicyConfig("never"), depth=0, **kw)
    assert should_skip(SkipPolicyConfig("nskip", 2), depth=1, **kw)
    assert should_skip(SkipPolicyConfig("cb", c=1.0), depth=0, **kw)
    assert not should_skip(SkipPolicyConfig("cb", c=0.5), depth=0, **kw)
    with pytest.raises(InvalidConfigError):
        should_skip(SkipPolicyConfig("fsa", c=0.5), depth=0, **kw)
    model = frozen(np.linspace(0, 1, 21), normal=False)
    assert should_skip(SkipPolicyConfig("fsa", c=0.5), depth=0, err_model=model, **kw)
