"""Probabilistic ensemble dynamics model.

Every member is an MLP ``[d_s + d_a, hidden, hidden, 2 * d_s]`` with swish
activations whose output is split into the mean and log-variance of a
diagonal Gaussian over the state delta ``s_next - s``.  Members are stored
stacked along a leading axis so that all of them run in one batched matmul.

Network maths is written as free functions over a parameter list
``[(W0, b0), (W1, b1), ...]``.  The same functions serve a single network
(``W: (n_in, n_out)``) and the whole ensemble (``W: (B, n_in, n_out)``).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 0.5


def swish(x):
    return x * _sigmoid(x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def soft_clamp(raw, lo, hi):
    """Smoothly squash ``raw`` into ``[lo, hi]``; returns (value, d value / d raw)."""
    upper = hi - _softplus(hi - raw)
    out = lo + _softplus(upper - lo)
    grad = _sigmoid(hi - raw) * _sigmoid(upper - lo)
    return out, grad


def mlp_forward(params, x, lo=LOGVAR_MIN, hi=LOGVAR_MAX):
    """Forward pass on normalised inputs.

    Returns ``(mean, logvar, cache)``; ``cache`` feeds :func:`mlp_backward`.
    """
    acts = [x]
    pre = []
    h = x
    for W, b in params[:-1]:
        z = h @ W + b
        pre.append(z)
        h = swish(z)
        acts.append(h)
    W, b = params[-1]
    out = h @ W + b
    d = out.shape[-1] // 2
    mean = out[..., :d]
    logvar, dclamp = soft_clamp(out[..., d:], lo, hi)
    return mean, logvar, (acts, pre, dclamp)


def mlp_backward(params, cache, dmean, dlogvar):
    acts, pre, dclamp = cache
    dout = np.concatenate([dmean, dlogvar * dclamp], axis=-1)
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        h = acts[i]
        gW = np.swapaxes(h, -1, -2) @ dout
        gb = dout.sum(axis=-2, keepdims=True)
        grads[i] = (gW, gb)
        if i == 0:
            break
        dh = dout @ np.swapaxes(W, -1, -2)
        z = pre[i - 1]
        sig = _sigmoid(z)
        dout = dh * (sig * (1.0 + z * (1.0 - sig)))
    return grads


def nll_loss(mu, var, target):
    """Gaussian negative log-likelihood without the constant term, summed over dims."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if mu.shape != var.shape or mu.shape != target.shape:
        raise InvalidArgumentError("mean, variance and target must share a shape")
    if np.any(var <= 0):
        raise InvalidArgumentError("variance must be strictly positive")
    return 0.5 * np.sum(np.log(var) + (target - mu) ** 2 / var, axis=-1)


def nll_loss_and_grads(params, x, y, lo=LOGVAR_MIN, hi=LOGVAR_MAX):
    """Mean NLL over the batch axis and its gradient w.r.t. every parameter.

    With stacked ensemble parameters the returned loss has one entry per
    member and each member's gradient only depends on its own loss.
    """
    mean, logvar, cache = mlp_forward(params, x, lo, hi)
    n = x.shape[-2]
    inv_var = np.exp(-logvar)
    resid = mean - y
    loss = 0.5 * np.sum(logvar + resid**2 * inv_var, axis=-1).mean(axis=-1)
    dmean = resid * inv_var / n
    dlogvar = 0.5 * (1.0 - resid**2 * inv_var) / n
    return loss, mlp_backward(params, cache, dmean, dlogvar)


def init_params(layer_sizes, rng, n_members=None, dtype=np.float32):
    lead = () if n_members is None else (n_members,)
    params = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W = rng.standard_normal(lead + (n_in, n_out)) / np.sqrt(n_in)
        b = np.zeros(lead + (1, n_out))
        params.append((W.astype(dtype), b.astype(dtype)))
    return params


@dataclass
class Normalizer:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    @classmethod
    def identity(cls, d_in, d_out):
        return cls(
            np.zeros(d_in, np.float32), np.ones(d_in, np.float32),
            np.zeros(d_out, np.float32), np.ones(d_out, np.float32),
        )

    @classmethod
    def fit(cls, inputs, targets):
        def stats(v):
            mean = v.mean(axis=0)
            std = v.std(axis=0)
            std = np.where(std < 1e-6, 1.0, std)
            return mean.astype(np.float32), std.astype(np.float32)

        return cls(*stats(np.asarray(inputs, np.float64)), *stats(np.asarray(targets, np.float64)))


def encode_inputs(states, actions, angle_dims=()):
    """Network input: non-angle state entries, sin and cos of each angle entry, then actions.

    Angles enter through their sine and cosine so that a pole that spun
    several revolutions looks the same to the network as one that did not.
    """
    states = np.asarray(states)
    actions = np.asarray(actions)
    if not angle_dims:
        return np.concatenate([states, actions], axis=-1)
    angle_dims = list(angle_dims)
    keep = [i for i in range(states.shape[-1]) if i not in angle_dims]
    ang = states[..., angle_dims]
    return np.concatenate([states[..., keep], np.sin(ang), np.cos(ang), actions], axis=-1)


class GaussianNet:
    """One ensemble member: a view on the stacked parameters."""

    def __init__(self, params, norm, logvar_min=LOGVAR_MIN, logvar_max=LOGVAR_MAX, angle_dims=()):
        self.params = params
        self.norm = norm
        self.logvar_min = logvar_min
        self.logvar_max = logvar_max
        self.angle_dims = tuple(angle_dims)

    @property
    def layer_sizes(self):
        return [self.params[0][0].shape[-2]] + [W.shape[-1] for W, _ in self.params]


def net_forward(net, s, a):
    """Mean state delta and its variance, in raw (unnormalised) units."""
    x = encode_inputs(np.asarray(s, np.float64).reshape(-1), np.asarray(a, np.float64).reshape(-1),
                      net.angle_dims)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("non-finite network input")
    norm = net.norm
    xn = (x - norm.in_mean) / norm.in_std
    params = [(W.astype(np.float64), b.astype(np.float64)) for W, b in net.params]
    mean, logvar, _ = mlp_forward(params, xn[None, :], net.logvar_min, net.logvar_max)
    mu = norm.out_mean + norm.out_std * mean[0]
    var = norm.out_std.astype(np.float64) ** 2 * np.exp(logvar[0])
    return mu, var


class EnsembleModel:
    """B Gaussian MLPs with identical architecture and distinct initial weights.

    ``angle_dims`` lists state entries that are angles; see :func:`encode_inputs`.
    """

    def __init__(self, d_s, d_a, n_members=5, hidden=64, rng=None,
                 logvar_min=LOGVAR_MIN, logvar_max=LOGVAR_MAX, params=None, norm=None, angle_dims=()):
        if n_members < 2:
            raise InvalidArgumentError("an ensemble needs at least two members")
        angle_dims = tuple(int(i) for i in angle_dims)
        if any(not 0 <= i < d_s for i in angle_dims) or len(set(angle_dims)) != len(angle_dims):
            raise InvalidArgumentError("angle_dims must be distinct state indices")
        self.d_s = d_s
        self.d_a = d_a
        self.n_members = n_members
        self.logvar_min = logvar_min
        self.logvar_max = logvar_max
        self.angle_dims = angle_dims
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = init_params([self.d_in, hidden, hidden, 2 * d_s], rng, n_members)
        self.params = params
        self.norm = norm if norm is not None else Normalizer.identity(self.d_in, d_s)

    @property
    def d_in(self):
        return self.d_s + len(self.angle_dims) + self.d_a

    @property
    def layer_sizes(self):
        return [self.params[0][0].shape[-2]] + [W.shape[-1] for W, _ in self.params]

    def member(self, b):
        return GaussianNet(
            [(W[b], bias[b]) for W, bias in self.params], self.norm,
            self.logvar_min, self.logvar_max, self.angle_dims,
        )

    def copy(self):
        return EnsembleModel(
            self.d_s, self.d_a, self.n_members,
            logvar_min=self.logvar_min, logvar_max=self.logvar_max,
            params=[(W.copy(), b.copy()) for W, b in self.params],
            norm=Normalizer(*(v.copy() for v in (self.norm.in_mean, self.norm.in_std,
                                                 self.norm.out_mean, self.norm.out_std))),
            angle_dims=self.angle_dims,
        )

    def predict_grouped(self, states, actions, members=None):
        """Delta mean and variance for inputs grouped by member.

        ``states``: ``(B, N, d_s)``, ``actions``: ``(B, N, d_a)``; row ``b``
        is evaluated by member ``b`` (or by ``members[b]`` when given).
        Computation runs in float32.
        """
        norm = self.norm
        params = self.params
        if members is not None:
            idx = np.asarray(members)
            params = [(W[idx], b[idx]) for W, b in params]
        x = encode_inputs(states, actions, self.angle_dims).astype(np.float32)
        if x.shape[0] != params[0][0].shape[0]:
            raise InvalidArgumentError("leading axis must match the number of members")
        x = (x - norm.in_mean) / norm.in_std
        mean, logvar, _ = mlp_forward(params, x, self.logvar_min, self.logvar_max)
        mu = norm.out_mean + norm.out_std * mean
        var = norm.out_std**2 * np.exp(logvar)
        return mu, var

    def predict_mean(self, states, actions):
        """Ensemble-average next-state prediction for ``(N, d_s)`` inputs."""
        B = self.n_members
        s = np.broadcast_to(states, (B,) + states.shape)
        a = np.broadcast_to(actions, (B,) + actions.shape)
        mu, _ = self.predict_grouped(s, a)
        return np.asarray(states, np.float64) + mu.astype(np.float64).mean(axis=0)


class Adam:
    """Per-parameter adaptive moment optimizer."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            for j in range(2):
                m = self.m[i][j]
                v = self.v[i][j]
                m *= self.beta1
                m += (1.0 - self.beta1) * g[j]
                v *= self.beta2
                v += (1.0 - self.beta2) * g[j] ** 2
                p[j][...] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p[j].dtype)


def training_arrays(buf, angle_dims=()):
    """Network inputs and state-delta targets, computed in float64."""
    s, a, s_next, _ = (v.astype(np.float64) for v in buf.arrays())
    return encode_inputs(s, a, angle_dims), s_next - s


def fit_normalization(model, buf):
    x, y = training_arrays(buf, model.angle_dims)
    model.norm = Normalizer.fit(x, y)


def train_epoch(model, buf, opt, rng, batch_size=32):
    """One pass over a fresh bootstrap resample per member.

    Returns the mean minibatch NLL of each member (normalised units).
    """
    n = len(buf)
    if n < batch_size:
        raise InsufficientDataError(f"need at least {batch_size} transitions, have {n}")
    x, y = training_arrays(buf, model.angle_dims)
    norm = model.norm
    xn = ((x - norm.in_mean) / norm.in_std).astype(np.float32)
    yn = ((y - norm.out_mean) / norm.out_std).astype(np.float32)
    idx = np.stack([buf.bootstrap_indices(rng, n) for _ in range(model.n_members)])
    losses = []
    for start in range(0, n, batch_size):
        batch = idx[:, start:start + batch_size]
        loss, grads = nll_loss_and_grads(
            model.params, xn[batch], yn[batch], model.logvar_min, model.logvar_max
        )
        opt.step(model.params, grads)
        losses.append(loss)
    return np.mean(losses, axis=0)


def train_model(model, buf, rng, epochs=5, batch_size=32, opt=None):
    """Refit normalisation on ``buf`` then run ``epochs`` bootstrap epochs."""
    fit_normalization(model, buf)
    opt = Adam(model.params) if opt is None else opt
    history = [train_epoch(model, buf, opt, rng, batch_size) for _ in range(epochs)]
    return np.array(history)


# --------------------------------------------------------------------------
# particles


@dataclass
class ParticleSet:
    particles: np.ndarray
    assignment: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=np.float64)
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.particles.ndim != 2 or len(self.particles) != len(self.assignment):
            raise InvalidArgumentError("one bootstrap index is needed per particle")

    @classmethod
    def from_state(cls, state, n_particles, n_members):
        if n_particles % n_members:
            raise InvalidArgumentError("particle count must be a multiple of the member count")
        state = np.asarray(state, dtype=np.float64).reshape(-1)
        return cls(np.tile(state, (n_particles, 1)), block_assignment(n_particles, n_members))


def block_assignment(n_particles, n_members):
    """Particle ``p`` belongs to member ``p // (P / B)``."""
    return np.repeat(np.arange(n_members), n_particles // n_members)


def particle_propagate(ps, a, model, rng=None, noise=None):
    """Sample one step for every particle through its own bootstrap member.

    ``noise`` (shape ``(P, d_s)``) may be supplied instead of ``rng``.
    """
    P, d_s = ps.particles.shape
    if noise is None:
        noise = rng.standard_normal((P, d_s))
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    out = np.empty_like(ps.particles)
    for b in range(model.n_members):
        rows = np.flatnonzero(ps.assignment == b)
        if len(rows) == 0:
            continue
        s = ps.particles[rows]
        mu, var = model.predict_grouped(s[None], np.tile(a, (len(rows), 1))[None], members=[b])
        out[rows] = s + mu[0] + np.sqrt(var[0]) * noise[rows]
    return ParticleSet(out, ps.assignment.copy())


def variance_decompose(ps):
    """Split particle variance into (aleatoric, epistemic) parts, per dimension.

    Aleatoric: mean over bootstraps of the within-bootstrap variance.
    Epistemic: variance over bootstraps of the per-bootstrap means.
    """
    groups = np.unique(ps.assignment)
    if len(groups) < 2:
        raise InvalidArgumentError("need particles from at least two bootstraps")
    within, means = [], []
    for b in groups:
        p = ps.particles[ps.assignment == b]
        if len(p) < 2:
            raise InvalidArgumentError("need at least two particles per bootstrap")
        within.append(p.var(axis=0))
        means.append(p.mean(axis=0))
    return np.mean(within, axis=0), np.var(means, axis=0)


def aggregate_confidence(ps):
    """Pooled particle mean and standard deviation (both uncertainty kinds)."""
    return ps.particles.mean(axis=0), ps.particles.std(axis=0)
