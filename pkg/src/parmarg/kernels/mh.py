"""Single-site random-walk Metropolis sweeps on one level."""
from __future__ import annotations

import functools

import numba
import numpy as np

from ..density import ProblemKind, ProblemSpec
from ..hierarchy import LevelPath
from ..rng import counter_normals, counter_uniform, draw_key


@numba.njit(cache=True)
def _zero(x):
    return 0.0 * x


def _make_sweep(f, fp, sg, rho, mu, use_rho, jit=True):
    """Build a sweep kernel with the model functions baked in (inlined by numba)."""
    deco = numba.njit if jit else (lambda fn: fn)
    uniform = counter_uniform if jit else counter_uniform.py_func
    normals = counter_normals if jit else counter_normals.py_func

    @deco
    def v(x, y, dt):
        r = (1.0 - dt * fp(x)) * (y - x) - dt * f(x)
        s = sg(x)
        return r * r / (2.0 * s * s * dt)

    @deco
    def local_delta(x, k, old, new, dt, target):
        """Log density change when site ``k`` moves from ``old`` to ``new``."""
        n = x.size
        d = 0.0
        if k > 0:
            a = x[k - 1]
            d += v(a, old, dt) - v(a, new, dt)
        if k < n - 1:
            b = x[k + 1]
            d += v(old, b, dt) - v(new, b, dt)
        if use_rho:
            if not np.isnan(target[k]):
                d += mu(new - target[k]) - mu(old - target[k])
            if k == 0:
                d += rho(new) - rho(old)
        return d

    @deco
    def sweep(x, dt, lo, hi, target, step, key):
        # counter layout: [0, m) shuffle, [m, 2m) acceptance, [2m, 4m) proposal normals
        m = hi - lo
        xi = normals(key, 2 * m, m)
        order = np.arange(lo, hi)
        for i in range(m - 1, 0, -1):
            j = int(uniform(key, i) * (i + 1))
            t = order[i]
            order[i] = order[j]
            order[j] = t
        accepted = 0
        for i in range(m):
            k = order[i]
            old = x[k]
            new = old + step * xi[i]
            d = local_delta(x, k, old, new, dt, target)
            if d >= 0.0 or uniform(key, m + i) < np.exp(d):
                x[k] = new
                accepted += 1
        return accepted

    return sweep, local_delta


@functools.lru_cache(maxsize=256)
def _level_setup(spec: ProblemSpec, level: int):
    n = spec.n_points(level)
    target = np.full(n, np.nan)
    if spec.kind is ProblemKind.SMOOTHING:
        target[spec.observation_positions(level)] = spec.observations.targets()
    free = spec.free_slice(level)
    lo, hi, _ = free.indices(n)
    return target, lo, hi


_KERNELS: dict = {}


def _kernel(spec: ProblemSpec):
    """Sweep kernel for the model and observation functions of ``spec`` (compiled once)."""
    obs = spec.observations
    smoothing = spec.kind is ProblemKind.SMOOTHING
    key = (spec.model, obs if smoothing else None)
    if key not in _KERNELS:
        fns = spec.model.jitted()
        ofns = obs.jitted() if smoothing else (_zero, _zero)
        if fns is not None and ofns is not None:
            _KERNELS[key] = _make_sweep(*fns, ofns[1], ofns[0], smoothing)
        else:
            m = spec.model
            py = (obs.initial_log_density, obs.noise_log_density) if smoothing else (_zero.py_func,) * 2
            _KERNELS[key] = _make_sweep(m.f, m.f_prime, m.sigma, *py, smoothing, jit=False)
    return _KERNELS[key]


def site_log_ratio(values: np.ndarray, level: int, spec: ProblemSpec, k: int, new: float) -> float:
    """Log density change of moving site ``k`` to ``new``, as used by the sweep."""
    target, _, _ = _level_setup(spec, level)
    x = np.asarray(values, dtype=float)
    return float(_kernel(spec)[1](x, int(k), float(x[k]), float(new), spec.spacing(level), target))


def sweep_inplace(values: np.ndarray, level: int, spec: ProblemSpec, step_scale: float,
                  rng: np.random.Generator) -> tuple[int, int]:
    """Sweep ``values`` in place; returns ``(accepted, proposed)``."""
    target, lo, hi = _level_setup(spec, level)
    with np.errstate(over="ignore"):  # uint64 wraparound in the uncompiled fallback
        acc = _kernel(spec)[0](values, spec.spacing(level), lo, hi, target, float(step_scale), draw_key(rng))
    m = hi - lo
    return int(acc), m


def mh_sweep(path: LevelPath, spec: ProblemSpec, step_scale: float,
             rng: np.random.Generator) -> tuple[LevelPath, int]:
    """One random-order sweep of single-site Gaussian random-walk Metropolis updates.

    Returns a new path and the number of accepted moves.
    """
    if step_scale < 0:
        raise ValueError("step_scale must be non-negative")
    out = path.copy()
    acc, _ = sweep_inplace(out.values, path.level, spec, step_scale, rng)
    return out, acc


def default_step_scale(spec: ProblemSpec, level: int) -> float:
    return 1.5 * np.sqrt(spec.spacing(level))
