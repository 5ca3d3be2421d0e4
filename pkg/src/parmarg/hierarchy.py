"""Dyadic level meshes, hat/tilde splitting and the multi-level chain state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import ProblemKind, ProblemSpec


class DivisibilityError(ValueError):
    pass


@dataclass
class LevelPath:
    """Values of one chain on the level mesh ``{0, 2**l, 2*2**l, ..., N}``."""

    level: int
    values: np.ndarray
    spacing: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def copy(self) -> "LevelPath":
        return LevelPath(self.level, self.values.copy(), self.spacing)

    def global_indices(self) -> np.ndarray:
        """Fine-mesh index of every entry of ``values``."""
        return np.arange(self.values.size) * 2**self.level

    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.spacing


def split_level(path: LevelPath) -> tuple[np.ndarray, np.ndarray]:
    """Split a level path into the coarse-mesh (hat) and in-between (tilde) values."""
    v = path.values
    return v[0::2].copy(), v[1::2].copy()


def merge_level(hat, tilde, l: int, spacing: float | None = None) -> LevelPath:
    """Interleave hat and tilde values back into a level-``l`` path."""
    return LevelPath(l, interleave(hat, tilde), np.nan if spacing is None else spacing)


def interleave(hat, tilde) -> np.ndarray:
    """Interleave along the last axis; leading axes of ``tilde`` may be a batch."""
    hat = np.asarray(hat, dtype=float)
    tilde = np.asarray(tilde, dtype=float)
    if hat.shape[-1] != tilde.shape[-1] + 1:
        raise ValueError(
            f"hat must have exactly one more point than tilde, got {hat.shape[-1]} and {tilde.shape[-1]}"
        )
    batch = np.broadcast_shapes(hat.shape[:-1], tilde.shape[:-1])
    out = np.empty(batch + (hat.shape[-1] + tilde.shape[-1],))
    out[..., 0::2] = hat
    out[..., 1::2] = tilde
    return out


def check_depth(spec: ProblemSpec, L: int) -> None:
    if L < 1:
        raise DivisibilityError(f"need at least two levels, got L={L}")
    if spec.N % 2**L:
        raise DivisibilityError(f"2**L = {2**L} does not divide N = {spec.N}")
    if spec.N // 2**L < 2:
        raise DivisibilityError(f"coarsest level needs >= 2 intervals, N/2**L = {spec.N // 2**L}")
    if spec.kind is ProblemKind.SMOOTHING:
        bad = [t for t in spec.observations.times if t % 2**L]
        if bad:
            raise DivisibilityError(f"observation indices {bad} are not divisible by 2**L = {2**L}")


@dataclass
class HierarchyState:
    """One path per level, ``levels[0]`` on the fine mesh."""

    levels: list[LevelPath]
    spec: ProblemSpec

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def copy(self) -> "HierarchyState":
        return HierarchyState([p.copy() for p in self.levels], self.spec)

    def validate(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is broken."""
        spec = self.spec
        check_depth(spec, self.L)
        for l, p in enumerate(self.levels):
            assert p.level == l, f"levels[{l}] has level {p.level}"
            assert p.values.shape == (spec.n_points(l),), f"level {l} has shape {p.values.shape}"
            assert np.isclose(p.spacing, spec.spacing(l)), f"level {l} spacing {p.spacing}"
            assert np.all(np.isfinite(p.values)), f"level {l} has non-finite values"
            if spec.kind is ProblemKind.BRIDGE:
                assert p.values[0] == spec.z_minus and p.values[-1] == spec.z_plus, (
                    f"level {l} endpoints moved"
                )
            if l < self.L:
                assert p.values[0::2].size == spec.n_points(l + 1)


def initial_guess(spec: ProblemSpec, level: int) -> np.ndarray:
    """Deterministic starting path: linear between bridge ends or through the observations."""
    t = np.arange(spec.n_points(level)) * 2**level
    if spec.kind is ProblemKind.BRIDGE:
        return spec.z_minus + (spec.z_plus - spec.z_minus) * t / spec.N
    obs = spec.observations
    return np.interp(t, obs.times, obs.targets())


def init_hierarchy(
    spec: ProblemSpec,
    L: int,
    rng: np.random.Generator | None = None,
    perturbation_variance: float | None = None,
) -> HierarchyState:
    """Independent per-level starting paths.

    Each free point is perturbed by ``N(0, 2**(l-1) * delta)`` unless
    ``perturbation_variance`` overrides that variance (0 gives exact interpolation).
    """
    check_depth(spec, L)
    if rng is None:
        rng = np.random.default_rng()
    levels = []
    for l in range(L + 1):
        x = initial_guess(spec, l)
        free = spec.free_slice(l)
        var = 2.0 ** (l - 1) * spec.delta if perturbation_variance is None else perturbation_variance
        if var > 0:
            x[free] += np.sqrt(var) * rng.standard_normal(x[free].size)
        levels.append(LevelPath(l, x, spec.spacing(l)))
    return HierarchyState(levels, spec)
