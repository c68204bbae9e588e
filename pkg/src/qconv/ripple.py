"""Q-learning on a continuous state domain with a ripple (spreading) weight.

One observed transition at grid point x_t updates every grid point x with
coefficient f(x, x_t) * alpha, where f(x, x) = 1 and 0 <= f <= 1. Actions
stay discrete and never share updates. The learner runs on the finite MDP
induced by a cell-centered lattice of [0, 1]^d, through the same kernel as
the tabular learners, so an Indicator(0) weight reproduces tabular
Q-learning bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigError, DimensionMismatch, OutOfDomain, UnsupportedTransition
from .learn import LearnConfig, RunDiagnostics, drive, write_csv
from .mdp import Gaussian, PointMass, ValidatedMdp, make_mdp

MAX_GRID = 4096
QUAD_TOL = 1e-10


# --------------------------------------------------------------------------
# ripple kernels
# --------------------------------------------------------------------------


class RippleKernel:
    family: str
    continuous = True

    def weight(self, d: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        return ripple_eval(self, x, y)


@dataclass(frozen=True)
class GaussianRBF(RippleKernel):
    sigma: float
    family = "gaussian_rbf"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")

    def weight(self, d):
        return np.exp(-(d * d) / (2.0 * self.sigma * self.sigma))


@dataclass(frozen=True)
class Triangular(RippleKernel):
    radius: float
    family = "triangular"

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("radius must be positive")

    def weight(self, d):
        return np.maximum(0.0, 1.0 - d / self.radius)


@dataclass(frozen=True)
class Indicator(RippleKernel):
    """1 within ``radius`` and 0 outside. Discontinuous; radius 0 is the tabular case."""

    radius: float = 0.0
    family = "indicator"
    continuous = False

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("radius must be non-negative")

    def weight(self, d):
        return (d <= self.radius).astype(float)


KERNELS = {"gaussian_rbf": GaussianRBF, "triangular": Triangular, "indicator": Indicator}


def kernel_from_dict(d) -> RippleKernel:
    d = dict(d)
    name = d.pop("family", None)
    if name not in KERNELS:
        raise ConfigError(f"unknown ripple kernel {name!r}; expected one of {sorted(KERNELS)}")
    try:
        return KERNELS[name](**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ConfigError(f"bad kernel parameters: {exc}") from None


def _as_point(x) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise OutOfDomain(f"point {x!r} is not in the unit cube")
    return p


def ripple_eval(kernel: RippleKernel, x, y) -> float:
    """f(x, y) for two points of [0, 1]^d (Euclidean distance)."""
    px, py = _as_point(x), _as_point(y)
    if px.shape != py.shape:
        raise DimensionMismatch(f"points of different dimension: {px.shape} vs {py.shape}")
    if np.array_equal(px, py):
        return 1.0
    return float(kernel.weight(np.array(np.linalg.norm(px - py))))


# --------------------------------------------------------------------------
# continuous MDP family with a closed-form optimum
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    """mu(s) = intercept + coef . s"""

    coef: tuple = (0.0,)
    intercept: float = 0.0

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(s)
        return self.intercept + s @ np.asarray(self.coef, dtype=float)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.coef))


@dataclass(frozen=True)
class Sine:
    """mu(s) = amplitude * sin(frequency * pi * s[axis])"""

    amplitude: float = 1.0
    frequency: float = 1.0
    axis: int = 0

    def __call__(self, s):
        s = np.atleast_2d(s)
        return self.amplitude * np.sin(self.frequency * math.pi * s[:, self.axis])

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude * self.frequency) * math.pi


def Zero(dim: int = 1) -> Affine:
    return Affine(coef=(0.0,) * dim, intercept=0.0)


MEANS = {"affine": Affine, "sine": Sine}


def mean_from_dict(d):
    d = dict(d)
    name = d.pop("family", None)
    if name == "zero":
        return Zero(int(d.get("dim", 1)))
    if name not in MEANS:
        raise ConfigError(f"unknown mean function {name!r}")
    if "coef" in d:
        d["coef"] = tuple(float(c) for c in np.atleast_1d(d["coef"]))
    return MEANS[name](**d)


@dataclass(frozen=True)
class ContinuousMdp:
    """State domain [0, 1]^dim, finite actions, Gaussian reward noise.

    ``means[a]`` is the mean reward of action a as a function of the state.
    Only the state-independent uniform transition is supported.
    """

    means: tuple
    gamma: float
    noise_sd: float = 1.0
    dim: int = 1
    transition: str = "uniform"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be non-negative")
        if len(self.means) < 1:
            raise ConfigError("need at least one action")

    @property
    def n_actions(self) -> int:
        return len(self.means)

    def mean(self, s: np.ndarray) -> np.ndarray:
        """(n, A) mean rewards at points s (n, dim)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return np.column_stack([m(s) for m in self.means])

    @property
    def lipschitz(self) -> float:
        return max(m.lipschitz for m in self.means)


def _require_uniform(cmdp: ContinuousMdp) -> None:
    if cmdp.transition != "uniform":
        raise UnsupportedTransition(f"transition {cmdp.transition!r} has no closed-form optimum")


def _mean_max_closed(cmdp: ContinuousMdp) -> float | None:
    """Exact integral of max_a mu(s, a) over [0, 1] for the families that have one."""
    if cmdp.dim != 1:
        return None
    if all(isinstance(m, Affine) for m in cmdp.means):
        # Upper envelope of lines is piecewise linear: trapezoid rule on the
        # breakpoints is exact.
        lines = [(float(m.coef[0]), float(m.intercept)) for m in cmdp.means]
        knots = {0.0, 1.0}
        for (k1, b1), (k2, b2) in itertools.combinations(lines, 2):
            if k1 != k2:
                s = (b2 - b1) / (k1 - k2)
                if 0.0 < s < 1.0:
                    knots.add(s)
        xs = np.array(sorted(knots))
        ys = np.max([k * xs + b for k, b in lines], axis=0)
        return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))
    if len(cmdp.means) == 1 and isinstance(cmdp.means[0], Sine):
        m = cmdp.means[0]
        w = m.frequency * math.pi
        return m.amplitude * (1.0 - math.cos(w)) / w
    return None


@dataclass
class ContinuousQStar:
    cmdp: ContinuousMdp
    vbar: float  # integral of max_b Q*(s', b) ds' = mean_max / (1 - gamma)
    mean_max: float  # integral of max_b mu(s', b) ds'
    mean_max_closed: float | None

    def __call__(self, s, a: int | None = None):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        q = self.cmdp.mean(s) + self.cmdp.gamma * self.vbar
        return q if a is None else q[:, a]

    def on_grid(self, grid: "GridQ") -> np.ndarray:
        return self(grid.points)


def _integrate_max(cmdp: ContinuousMdp, fn) -> float:
    if cmdp.dim == 1:
        val, _ = integrate.quad(lambda x: float(fn(np.array([[x]]))), 0.0, 1.0,
                                epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500)
    else:
        val, _ = integrate.dblquad(lambda y, x: float(fn(np.array([[x, y]]))), 0.0, 1.0, 0.0, 1.0,
                                   epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return float(val)


def continuous_qstar(cmdp: ContinuousMdp) -> ContinuousQStar:
    """Q*(s, a) = mu(s, a) + gamma Vbar, Vbar = integral of max_b mu / (1 - gamma)."""
    _require_uniform(cmdp)
    mm = _integrate_max(cmdp, lambda s: cmdp.mean(s).max(axis=1)[0])
    closed = _mean_max_closed(cmdp)
    if closed is not None and abs(closed - mm) > 1e-8:
        raise ArithmeticError(f"quadrature {mm!r} disagrees with closed form {closed!r}")
    best = closed if closed is not None else mm
    return ContinuousQStar(cmdp=cmdp, vbar=best / (1.0 - cmdp.gamma), mean_max=mm, mean_max_closed=closed)


def bellman_residual(qstar: ContinuousQStar, probes: np.ndarray) -> float:
    """max |Q*(s, a) - mu(s, a) - gamma * integral of max_b Q*(s', b)| over probe points."""
    cmdp = qstar.cmdp
    future = _integrate_max(cmdp, lambda s: qstar(s).max(axis=1)[0])
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[1] != cmdp.dim:
        probes = probes.reshape(-1, cmdp.dim)
    resid = qstar(probes) - cmdp.mean(probes) - cmdp.gamma * future
    return float(np.abs(resid).max())


# --------------------------------------------------------------------------
# grid and learner
# --------------------------------------------------------------------------


@dataclass
class GridQ:
    """Cell-centered lattice with ``n`` points per axis; mesh h = 1/n."""

    n: int
    dim: int = 1
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if self.n < 1 or self.n**self.dim > MAX_GRID:
            raise ConfigError(f"grid must have between 1 and {MAX_GRID} points")
        if self.values is not None and not np.all(np.isfinite(self.values)):
            raise ConfigError("grid values must be finite")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def points(self) -> np.ndarray:
        axis = (np.arange(self.n) + 0.5) / self.n
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def to_csv(self, path, qstar: np.ndarray | None = None) -> None:
        pts = self.points
        cols = [f"x{i}" for i in range(self.dim)] + ["action", "q"] + (["qstar"] if qstar is not None else [])
        rows = []
        for i, p in enumerate(pts):
            for a in range(self.values.shape[1]):
                row = [float(c) for c in p] + [a, float(self.values[i, a])]
                if qstar is not None:
                    row.append(float(qstar[i, a]))
                rows.append(row)
        write_csv(path, cols, rows)


def spread_matrix(kernel: RippleKernel, grid: GridQ) -> np.ndarray:
    """W[j, i] = f(x_j, x_i), with exact ones on the diagonal."""
    pts = grid.points
    diff = pts[:, None, :] - pts[None, :, :]
    W = kernel.weight(np.sqrt(np.sum(diff * diff, axis=2)))
    np.fill_diagonal(W, 1.0)
    return np.ascontiguousarray(W)


def induced_mdp(cmdp: ContinuousMdp, grid: GridQ) -> ValidatedMdp:
    """Finite MDP on the grid: uniform next grid point, Gaussian rewards around mu."""
    _require_uniform(cmdp)
    if grid.dim != cmdp.dim:
        raise DimensionMismatch(f"grid dim {grid.dim} != domain dim {cmdp.dim}")
    N, A = grid.size, cmdp.n_actions
    mu = cmdp.mean(grid.points)
    trans = np.full((N, A, N), 1.0 / N)
    if cmdp.noise_sd > 0:
        rewards = [[Gaussian(float(mu[i, a]), cmdp.noise_sd) for a in range(A)] for i in range(N)]
    else:
        rewards = [[PointMass(float(mu[i, a])) for a in range(A)] for i in range(N)]
    return make_mdp(trans, rewards, cmdp.gamma)


def ripple_q_run(cmdp: ContinuousMdp, kernel: RippleKernel, grid: GridQ, cfg: LearnConfig,
                 kernel_module=None) -> RunDiagnostics:
    """Ripple Q-learning; errors are measured on the grid against the exact Q*.

    Per-cell step sizes are indexed by accumulated ripple mass (sum of
    f(x, x_t) over past steps) instead of visit counts. The final table is
    stored in ``grid.values``.
    """
    mdp = induced_mdp(cmdp, grid)
    qstar = continuous_qstar(cmdp).on_grid(grid)
    diag = drive(mdp, qstar, cfg, spread=spread_matrix(kernel, grid), kernel_module=kernel_module)
    grid.values = diag.q.copy()
    return diag


def discrete_lipschitz(grid: GridQ, values: np.ndarray) -> float:
    """Largest |Q(x, a) - Q(y, a)| / |x - y| over lattice neighbours."""
    v = values.reshape((grid.n,) * grid.dim + (values.shape[1],))
    best = 0.0
    for ax in range(grid.dim):
        d = np.abs(np.diff(v, axis=ax)) / grid.h
        best = max(best, float(d.max()) if d.size else 0.0)
    return best


def smoothness_check(cmdp: ContinuousMdp, grid: GridQ, slack: float = 0.5) -> tuple[float, float, bool]:
    """(discrete Lipschitz of the learned table, Lip(mu) + slack, within)."""
    if grid.values is None:
        raise ValueError("grid has no learned values")
    lip = discrete_lipschitz(grid, grid.values)
    bound = cmdp.lipschitz + slack
    return lip, bound, lip <= bound


def refinement_check(cmdp: ContinuousMdp, kernel: RippleKernel, n: int, cfg: LearnConfig,
                     seeds, factor: float = 2.0) -> tuple[float, float, bool]:
    """Median final sup error on an n-grid and a 2n-grid; refined must be <= factor * coarse."""
    from dataclasses import replace

    med = []
    for m in (n, 2 * n):
        errs = [ripple_q_run(cmdp, kernel, GridQ(m, cmdp.dim), replace(cfg, seed=s)).final_error
                for s in seeds]
        med.append(float(np.median(errs)))
    return med[0], med[1], med[1] <= factor * med[0]
