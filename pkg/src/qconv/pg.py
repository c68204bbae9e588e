"""Deterministic-policy gradient checks on small feed-forward networks.

J(theta) = sum_i w_i Q(x_i, pi_theta(x_i)) over a weighted state batch, and

    grad J = sum_i w_i  d pi(x_i) / d theta ^T  grad_a Q(x_i, a) |_{a = pi(x_i)}.

The analytic side uses reverse accumulation through hand-written layers;
the oracle is central finite differences on J. A stochastic-output critic
Z(s, a, omega) replaces grad_a Q by the Monte-Carlo mean of its pathwise
derivative.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonSmoothAtPoint

KINK_TOL = 1e-7
LEAKY_SLOPE = 0.01
SWISH_LIPSCHITZ = 1.1  # max |d/dx x sigmoid(x)| = 1.0998 at x ~ 2.40


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


ACTIVATIONS = {
    # name: (f, f', Lipschitz constant, has kink at 0)
    "identity": (lambda x: x, lambda x: np.ones_like(x), 1.0, False),
    "sigmoid": (_sigmoid, lambda x: _sigmoid(x) * (1.0 - _sigmoid(x)), 0.25, False),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(float), 1.0, True),
    "leaky_relu": (
        lambda x: np.where(x > 0, x, LEAKY_SLOPE * x),
        lambda x: np.where(x > 0, 1.0, LEAKY_SLOPE),
        1.0,
        True,
    ),
    "swish": (
        lambda x: x * _sigmoid(x),
        lambda x: _sigmoid(x) * (1.0 + x * (1.0 - _sigmoid(x))),
        SWISH_LIPSCHITZ,
        False,
    ),
}


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        w = np.atleast_2d(np.asarray(self.weight, dtype=float))
        b = np.atleast_1d(np.asarray(self.bias, dtype=float))
        if b.shape != (w.shape[0],):
            raise DimensionMismatch(f"bias shape {b.shape} does not match weight {w.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


class SmallNet:
    """Stack of dense layers; parameters flatten as [W1, b1, W2, b2, ...]."""

    def __init__(self, layers):
        layers = tuple(layers)
        if not layers:
            raise ValueError("need at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise DimensionMismatch(
                    f"layer widths do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        self.layers = layers

    @classmethod
    def random(cls, sizes, activations, rng: np.random.Generator, scale: float = 1.0):
        """Gaussian weights N(0, scale^2 / fan_in), zero-mean Gaussian biases."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            w = rng.normal(0.0, scale / math.sqrt(n_in), (n_out, n_in))
            layers.append(Layer(w, rng.normal(0.0, scale, n_out), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def n_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def params(self) -> np.ndarray:
        return np.concatenate([np.r_[l.weight.ravel(), l.bias] for l in self.layers])

    def with_params(self, theta: np.ndarray) -> "SmallNet":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DimensionMismatch(f"expected {self.n_params} parameters, got {theta.shape}")
        layers, i = [], 0
        for l in self.layers:
            nw, nb = l.weight.size, l.bias.size
            layers.append(Layer(theta[i : i + nw].reshape(l.weight.shape), theta[i + nw : i + nw + nb], l.activation))
            i += nw + nb
        return SmallNet(layers)

    def _input(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"input width {x.shape[-1]} != {self.in_dim}")
        return x

    def __call__(self, x) -> np.ndarray:
        """Forward pass on one input (in,) or a batch (n, in)."""
        h = self._input(x)
        for l in self.layers:
            h = ACTIVATIONS[l.activation][0](h @ l.weight.T + l.bias)
        return h

    def pre_activations(self, x) -> list[np.ndarray]:
        h = self._input(x)
        pres = []
        for l in self.layers:
            z = l.weight @ h + l.bias
            pres.append(z)
            h = ACTIVATIONS[l.activation][0](z)
        return pres

    def vjp(self, x, g) -> tuple[np.ndarray, np.ndarray]:
        """Reverse pass at one input: (g^T d out / d theta, g^T d out / d x)."""
        h = self._input(x)
        g = np.atleast_1d(np.asarray(g, dtype=float))
        inputs, pres = [], []
        for l in self.layers:
            inputs.append(h)
            z = l.weight @ h + l.bias
            pres.append(z)
            h = ACTIVATIONS[l.activation][0](z)
        grads = []
        for l, h_in, z in zip(reversed(self.layers), reversed(inputs), reversed(pres)):
            dz = g * ACTIVATIONS[l.activation][1](z)
            grads.append(np.r_[np.outer(dz, h_in).ravel(), dz])
            g = l.weight.T @ dz
        return np.concatenate(grads[::-1]), g

    def near_kink(self, x, tol: float = KINK_TOL) -> bool:
        return any(
            ACTIVATIONS[l.activation][3] and np.any(np.abs(z) < tol)
            for l, z in zip(self.layers, self.pre_activations(x))
        )


# --------------------------------------------------------------------------
# state batches and critics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StateBatch:
    """Finite weighted set of states standing in for the state distribution."""

    states: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (s.shape[0],):
            raise DimensionMismatch("one weight per state required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, states) -> "StateBatch":
        s = np.asarray(states, dtype=float)
        return cls(s, np.full(s.shape[0], 1.0 / s.shape[0]))

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class QuadraticCritic:
    """Q(s, a) = -scale * |a - (T s + offset)|^2; T defaults to the identity."""

    target: np.ndarray | None = None
    offset: float | np.ndarray = 0.0
    scale: float = 1.0

    def _goal(self, s):
        s = np.atleast_1d(s)
        return (s if self.target is None else np.asarray(self.target) @ s) + self.offset

    def value(self, s, a) -> float:
        d = np.atleast_1d(a) - self._goal(s)
        return float(-self.scale * d @ d)

    def grad_a(self, s, a) -> np.ndarray:
        return -2.0 * self.scale * (np.atleast_1d(a) - self._goal(s))


@dataclass(frozen=True)
class ZeroCritic:
    def value(self, s, a) -> float:
        return 0.0

    def grad_a(self, s, a) -> np.ndarray:
        return np.zeros_like(np.atleast_1d(np.asarray(a, dtype=float)))


@dataclass(frozen=True)
class ScaledCritic:
    base: object
    factor: float

    def value(self, s, a):
        return self.factor * self.base.value(s, a)

    def grad_a(self, s, a):
        return self.factor * self.base.grad_a(s, a)


class NetCritic:
    """Q(s, a) = net([s, a]) with a scalar-output network."""

    def __init__(self, net: SmallNet, state_dim: int):
        if net.out_dim != 1:
            raise DimensionMismatch("critic network must have a scalar output")
        self.net, self.state_dim = net, state_dim

    def value(self, s, a):
        return float(self.net(np.r_[np.atleast_1d(s), np.atleast_1d(a)])[0])

    def grad_a(self, s, a):
        _, gx = self.net.vjp(np.r_[np.atleast_1d(s), np.atleast_1d(a)], [1.0])
        return gx[self.state_dim :]


# --------------------------------------------------------------------------
# stochastic-output critics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdditiveNoiseZ:
    """Z = Q(s, a) + sigma omega (``on="output"``) or Z = Q(s, a + sigma omega) (``on="action"``)."""

    critic: object
    sigma: float
    on: str = "output"

    def grad_a(self, s, a, omega) -> np.ndarray:
        a = np.atleast_1d(a)
        if self.on == "output":
            return self.critic.grad_a(s, a)
        return self.critic.grad_a(s, a + self.sigma * np.atleast_1d(omega))


@dataclass(frozen=True)
class MultiplicativeNoiseZ:
    """Z = (1 + sigma omega) Q(s, a); E[grad_a Z] = grad_a Q."""

    critic: object
    sigma: float

    def grad_a(self, s, a, omega) -> np.ndarray:
        return (1.0 + self.sigma * float(np.atleast_1d(omega)[0])) * self.critic.grad_a(s, a)


class ZNet:
    """Z(s, a, omega) = net([s, a, omega]): a network with a noise input channel."""

    def __init__(self, net: SmallNet, state_dim: int, action_dim: int, noise_dim: int = 1):
        if net.in_dim != state_dim + action_dim + noise_dim or net.out_dim != 1:
            raise DimensionMismatch("network must map [s, a, omega] to a scalar")
        self.net, self.state_dim, self.action_dim, self.noise_dim = net, state_dim, action_dim, noise_dim

    def grad_a(self, s, a, omega):
        x = np.r_[np.atleast_1d(s), np.atleast_1d(a), np.atleast_1d(omega)]
        _, gx = self.net.vjp(x, [1.0])
        return gx[self.state_dim : self.state_dim + self.action_dim]


# --------------------------------------------------------------------------
# value and gradients
# --------------------------------------------------------------------------


def _check(policy: SmallNet, rho: StateBatch) -> None:
    if rho.states.shape[1] != policy.in_dim:
        raise DimensionMismatch(f"states have width {rho.states.shape[1]}, policy expects {policy.in_dim}")


def policy_value(policy: SmallNet, critic, rho: StateBatch) -> float:
    """J = sum_i w_i Q(x_i, pi(x_i))."""
    _check(policy, rho)
    return math.fsum(w * critic.value(x, policy(x)) for x, w in zip(rho.states, rho.weights))


def _probe(policy: SmallNet, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    tries = 0
    while policy.near_kink(x):
        if tries == 0:
            warnings.warn(f"pre-activation at a kink for state {x}; jittering the probe", NonSmoothAtPoint)
        x = x + rng.normal(0.0, 1e-6, x.shape)
        tries += 1
    return x


def policy_grad_analytic(policy: SmallNet, critic, rho: StateBatch, seed: int = 0) -> np.ndarray:
    """Chain rule: sum_i w_i (d pi / d theta)^T grad_a Q at a = pi(x_i)."""
    _check(policy, rho)
    rng = np.random.default_rng(seed)
    total = np.zeros(policy.n_params)
    for x, w in zip(rho.states, rho.weights):
        x = _probe(policy, x, rng)
        gp, _ = policy.vjp(x, critic.grad_a(x, policy(x)))
        total += w * gp
    return total


def policy_grad_fd(policy: SmallNet, critic, rho: StateBatch, h: float = 1e-5) -> np.ndarray:
    """Central differences (J(theta + h e_i) - J(theta - h e_i)) / 2h."""
    if not h > 0:
        raise ValueError("h must be positive")
    theta = policy.params()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        grad[i] = (policy_value(policy.with_params(tp), critic, rho)
                   - policy_value(policy.with_params(tm), critic, rho)) / (2.0 * h)
    return grad


def distributional_samples(znet, policy: SmallNet, rho: StateBatch, n_samples: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Per-sample gradients G_k (n_samples, n_params).

    Each sample draws an independent omega per state and forms
    G_k = sum_i w_i (d pi / d theta)^T grad_a Z(x_i, pi(x_i), omega_ik).
    """
    _check(policy, rho)
    if n_samples < 2:
        raise ValueError("need at least two samples")
    noise_dim = getattr(znet, "noise_dim", 1)
    G = np.zeros((n_samples, policy.n_params))
    for x, w in zip(rho.states, rho.weights):
        a = policy(x)
        omegas = rng.standard_normal((n_samples, noise_dim))
        ga = np.array([znet.grad_a(x, a, om) for om in omegas])  # (n, action_dim)
        # the policy Jacobian is linear in the cotangent: one VJP per action coordinate
        J = np.array([policy.vjp(x, e)[0] for e in np.eye(policy.out_dim)])  # (action_dim, P)
        G += w * ga @ J
    return G


def distributional_grad(znet, policy: SmallNet, rho: StateBatch, n_samples: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo chain rule with E[grad_a Z]; returns (mean, standard error)."""
    G = distributional_samples(znet, policy, rho, n_samples, rng)
    return G.mean(axis=0), G.std(axis=0, ddof=1) / math.sqrt(n_samples)


@dataclass(frozen=True)
class DistributionalCheck:
    z_score: float  # deviation along the reference gradient, in standard errors
    coord_fraction: float  # share of coordinates within 3 standard errors
    max_coord_z: float

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= 3.0


def distributional_check(znet, policy: SmallNet, rho: StateBatch, reference: np.ndarray,
                         n_samples: int, rng: np.random.Generator) -> DistributionalCheck:
    """Compare the Monte-Carlo gradient with ``reference`` (the gradient of E[Z]).

    The pass criterion is a single 3-SE test on the projection onto the
    reference direction; the per-coordinate picture is reported alongside.
    """
    G = distributional_samples(znet, policy, rho, n_samples, rng)
    mean = G.mean(axis=0)
    se = G.std(axis=0, ddof=1) / math.sqrt(n_samples)
    u = reference / np.linalg.norm(reference)
    proj = G @ u
    proj_se = proj.std(ddof=1) / math.sqrt(n_samples)
    dev = float(proj.mean() - reference @ u)
    z = dev / proj_se if proj_se > 0 else (0.0 if dev == 0 else math.inf)
    cz = np.abs(mean - reference) / np.maximum(se, np.finfo(float).tiny)
    return DistributionalCheck(float(z), float(np.mean(cz <= 3.0)), float(cz.max()))


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    finite_difference: np.ndarray
    max_rel_error: float
    table: list = field(default_factory=list)  # (index, analytic, fd, rel_error)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol

    def to_json(self) -> str:
        return json.dumps(
            {
                "analytic": self.analytic.tolist(),
                "finite_difference": self.finite_difference.tolist(),
                "max_rel_error": self.max_rel_error,
                "table": [list(r) for r in self.table],
            },
            indent=2,
        )


def relative_errors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(policy: SmallNet, critic, rho: StateBatch, h: float = 1e-5) -> GradCheckReport:
    ga = policy_grad_analytic(policy, critic, rho)
    gf = policy_grad_fd(policy, critic, rho, h)
    rel = relative_errors(ga, gf)
    table = [(i, float(ga[i]), float(gf[i]), float(rel[i])) for i in range(ga.size)]
    return GradCheckReport(ga, gf, float(rel.max()), table)


# --------------------------------------------------------------------------
# Lipschitz constants
# --------------------------------------------------------------------------


def operator_norm(W: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on W^T W (relative tolerance ``tol``)."""
    W = np.atleast_2d(W)
    if not np.any(W):
        return 0.0
    v = np.ones(W.shape[1]) / math.sqrt(W.shape[1]) + 1e-3 * np.arange(W.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = W.T @ (W @ v)
        n = np.linalg.norm(u)
        if n == 0.0:
            # start vector in the null space; restart from a deterministic random one
            v = np.random.default_rng(0).standard_normal(W.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = u / n
        new = math.sqrt(n)
        if abs(new - est) <= tol * new:
            # the Rayleigh estimate approaches sigma_max from below
            return float(np.linalg.norm(W @ v)) * (1.0 + tol)
        est = new
    return float(np.linalg.norm(W @ v)) * (1.0 + tol)


def lipschitz_bound(net: SmallNet) -> float:
    """Product over layers of operator norm times activation Lipschitz constant."""
    return math.prod(operator_norm(l.weight) * ACTIVATIONS[l.activation][2] for l in net.layers)


def empirical_lipschitz(net: SmallNet, n_pairs: int, rng: np.random.Generator, scale: float = 2.0) -> float:
    """Largest |f(x) - f(y)| / |x - y| over random Gaussian input pairs."""
    x = rng.normal(0.0, scale, (n_pairs, net.in_dim))
    y = x + rng.normal(0.0, scale, (n_pairs, net.in_dim)) * rng.uniform(1e-3, 1.0, (n_pairs, 1))
    num = np.linalg.norm(net(x) - net(y), axis=1)
    den = np.linalg.norm(x - y, axis=1)
    return float(np.max(num / den))
