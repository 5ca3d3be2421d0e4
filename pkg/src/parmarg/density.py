"""SDE model, linearly implicit Euler potential and unnormalized path densities.

All densities are returned as logs and are never normalized: every consumer in
this package works with ratios, so the constants cancel.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEGENERATE_TOL = 1e-12


class DegenerateStepError(ArithmeticError):
    """Raised when ``1 - dt * f'(x)`` vanishes in the implicit update."""


class MeshMismatchError(ValueError):
    pass


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class DriftModel:
    """Scalar SDE ``dZ = f(Z) dt + sigma(Z) dW``.

    The three callables must accept both floats and numpy arrays, and should
    be simple enough for numba to compile (plain arithmetic). Models that numba
    cannot compile still work, only the per-site sweeps fall back to Python.
    """

    f: Callable
    f_prime: Callable
    sigma: Callable
    name: str = "custom"
    _jit: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def jitted(self):
        """Return numba-compiled ``(f, f_prime, sigma)`` or ``None``."""
        if "fns" not in self._jit:
            self._jit["fns"] = _try_jit(self.f, self.f_prime, self.sigma)
        return self._jit["fns"]


def double_well() -> DriftModel:
    """Drift ``-4x(x^2 - 1)`` with unit diffusion."""
    return DriftModel(
        f=lambda x: -4.0 * x * (x * x - 1.0),
        f_prime=lambda x: 4.0 - 12.0 * x * x,
        sigma=lambda x: 1.0 + 0.0 * x,
        name="double_well",
    )


def brownian() -> DriftModel:
    return DriftModel(
        f=lambda x: 0.0 * x,
        f_prime=lambda x: 0.0 * x,
        sigma=lambda x: 1.0 + 0.0 * x,
        name="brownian",
    )


def ornstein_uhlenbeck(theta: float, sigma: float = 1.0) -> DriftModel:
    th, sg = float(theta), float(sigma)
    return DriftModel(
        f=lambda x: -th * x,
        f_prime=lambda x: -th + 0.0 * x,
        sigma=lambda x: sg + 0.0 * x,
        name=f"ou({th:g},{sg:g})",
    )


@dataclass(frozen=True)
class ObservationModel:
    """Noisy observations ``h(j) = r(x(s_j)) + noise`` on the fine mesh.

    ``times`` are fine-mesh indices. The observation term is evaluated as
    ``noise_log_density(x(s_j) - link(h(j)))``.
    """

    times: tuple[int, ...]
    values: tuple[float, ...]
    link: Callable = lambda h: h
    noise_log_density: Callable = lambda d: -0.5 * d * d / 0.01
    initial_log_density: Callable = lambda x: -((x * x - 1.0) ** 2)
    _jit: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if len(times) != len(values):
            raise ValueError("times and values must have the same length")
        if len(times) < 2 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def targets(self) -> np.ndarray:
        """``r(h(j))`` for every observation."""
        return np.array([float(self.link(h)) for h in self.values])

    def jitted(self):
        if "fns" not in self._jit:
            self._jit["fns"] = _try_jit(self.noise_log_density, self.initial_log_density)
        return self._jit["fns"]


def gaussian_noise(variance: float) -> Callable:
    var = float(variance)
    return lambda d: -0.5 * d * d / var


def quartic_well_log_density(x):
    return -((x * x - 1.0) ** 2)


class ProblemKind(enum.Enum):
    BRIDGE = "bridge"
    SMOOTHING = "smoothing"


@dataclass(frozen=True)
class ProblemSpec:
    """A discretized conditional path-sampling problem on ``N + 1`` mesh points.

    ``N`` only has to be divisible by ``2**L`` for the hierarchy depth in use;
    the check happens when a hierarchy is built.
    """

    kind: ProblemKind
    model: DriftModel
    T: float
    N: int
    z_minus: float = 0.0
    z_plus: float = 0.0
    observations: ObservationModel | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.kind is ProblemKind.SMOOTHING:
            obs = self.observations
            if obs is None:
                raise ValueError("smoothing problems need an ObservationModel")
            if obs.times[0] != 0 or obs.times[-1] != self.N:
                raise ValueError("observation times must start at 0 and end at N")

    @property
    def delta(self) -> float:
        return self.T / self.N

    @classmethod
    def bridge(cls, model: DriftModel, T: float, N: int, z_minus=0.0, z_plus=0.0):
        return cls(ProblemKind.BRIDGE, model, float(T), int(N), float(z_minus), float(z_plus))

    @classmethod
    def smoothing(cls, model: DriftModel, T: float, N: int, observations: ObservationModel):
        return cls(ProblemKind.SMOOTHING, model, float(T), int(N), observations=observations)

    def n_points(self, level: int) -> int:
        return self.N // 2**level + 1

    def spacing(self, level: int) -> float:
        return 2**level * self.delta

    def free_slice(self, level: int) -> slice:
        """Positions of a level vector that the sampler may move."""
        if self.kind is ProblemKind.BRIDGE:
            return slice(1, self.n_points(level) - 1)
        return slice(0, self.n_points(level))

    def observation_positions(self, level: int) -> np.ndarray:
        """Level-mesh positions of the observations (smoothing only)."""
        step = 2**level
        times = np.asarray(self.observations.times)
        if np.any(times % step):
            raise ValueError(f"observations are not all on the level-{level} mesh")
        return times // step


def double_well_bridge(N: int = 10240, T: float = 10.0) -> ProblemSpec:
    """Double-well bridge from 0 to 0, T = 10, spacing 2**-10."""
    return ProblemSpec.bridge(double_well(), T, N, 0.0, 0.0)


def double_well_smoothing(N: int = 10240, T: float = 10.0) -> ProblemSpec:
    """Double-well smoothing with observations -1 at t = 0..5 and +1 at t = 6..10."""
    n_obs = int(round(T)) + 1
    step = N // int(round(T))
    obs = ObservationModel(
        times=tuple(j * step for j in range(n_obs)),
        values=tuple(-1.0 if j <= 5 else 1.0 for j in range(n_obs)),
        link=lambda h: h,
        noise_log_density=gaussian_noise(0.01),
        initial_log_density=quartic_well_log_density,
    )
    return ProblemSpec.smoothing(double_well(), T, N, obs)


def lie_step(x: float, xi: float, dt: float, model: DriftModel) -> float:
    """One linearly implicit Euler step solved for ``X(n+1)``."""
    denom = 1.0 - dt * model.f_prime(x)
    if abs(denom) < DEGENERATE_TOL:
        raise DegenerateStepError(
            f"1 - dt*f'(x) = {denom:.3e} at x={x}, dt={dt}; step size too large for this model"
        )
    return x + (model.f(x) * dt + model.sigma(x) * np.sqrt(dt) * xi) / denom


def v_potential(x, y, dt: float, model: DriftModel):
    """Negative log transition weight of the implicit Euler step from x to y.

    The residual ``(1 - dt f'(x))(y - x) - dt f(x)`` equals ``sigma(x) sqrt(dt) xi``
    for the step taken by :func:`lie_step`. Works elementwise on arrays.
    """
    r = (1.0 - dt * model.f_prime(x)) * (y - x) - dt * model.f(x)
    s = model.sigma(x)
    return r * r / (2.0 * s * s * dt)


def path_potential(values: np.ndarray, dt: float, model: DriftModel) -> np.ndarray:
    """Sum of ``v_potential`` along the last axis (batched over leading axes)."""
    x = values[..., :-1]
    y = values[..., 1:]
    return v_potential(x, y, dt, model).sum(axis=-1)


def log_density_values(values: np.ndarray, level: int, spec: ProblemSpec) -> np.ndarray | float:
    """Unnormalized level-``level`` log density of raw mesh values.

    ``values`` has shape ``(..., N/2**level + 1)``; leading axes are a batch.
    No boundary check is made here (see :func:`log_level_density`).
    """
    values = np.asarray(values, dtype=float)
    n = spec.n_points(level)
    if values.shape[-1] != n:
        raise MeshMismatchError(
            f"level {level} path needs {n} points, got {values.shape[-1]}"
        )
    logp = -path_potential(values, spec.spacing(level), spec.model)
    if spec.kind is ProblemKind.SMOOTHING:
        obs = spec.observations
        pos = spec.observation_positions(level)
        logp = logp + obs.initial_log_density(values[..., 0])
        d = values[..., pos] - obs.targets()
        logp = logp + np.sum(obs.noise_log_density(d), axis=-1)
    return logp


def log_level_density(path, spec: ProblemSpec) -> float:
    """Unnormalized log density of a :class:`~parmarg.hierarchy.LevelPath`.

    The normalization constant of each level is never computed; only
    differences of this quantity are meaningful.
    """
    values = np.asarray(path.values, dtype=float)
    if values.ndim != 1 or values.size != spec.n_points(path.level):
        raise MeshMismatchError(
            f"level {path.level} path needs {spec.n_points(path.level)} points, got {values.size}"
        )
    if spec.kind is ProblemKind.BRIDGE and (
        values[0] != spec.z_minus or values[-1] != spec.z_plus
    ):
        raise BoundaryError(
            f"bridge endpoints must be ({spec.z_minus}, {spec.z_plus}), "
            f"got ({values[0]}, {values[-1]})"
        )
    return float(log_density_values(values, path.level, spec))


def _try_jit(*fns):
    try:
        import numba

        jitted = tuple(numba.njit(fn) for fn in fns)
        for fn in jitted:
            fn(0.5)
        return jitted
    except Exception:
        return None
