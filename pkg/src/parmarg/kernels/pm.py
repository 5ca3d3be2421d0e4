"""The parallel marginalization transition: an optional swap followed by sweeps on every level."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..diagnostics import SwapRateTable as SwapCounter  # noqa: F401  (re-export)
from ..hierarchy import HierarchyState
from ..rng import Role, StreamBank
from .mh import default_step_scale, sweep_inplace
from .reference import MidpointGaussian, autoregressive_family
from .swap import SwapOutcome, swap_bridge_simplified, swap_pm1, swap_pm2


class Variant(str, enum.Enum):
    PM1 = "pm1"
    PM2 = "pm2"
    SIMPLIFIED = "simplified"


def linear_schedule(l: int) -> int:
    return l + 1


def dyadic_schedule(l: int) -> int:
    return 2**l


def constant_schedule(c: int) -> Callable[[int], int]:
    return lambda l: int(c)


@dataclass
class StepRecord:
    swap_level: int | None
    outcome: SwapOutcome | None
    sweep_accepts: np.ndarray
    sweep_proposals: np.ndarray


@dataclass
class ParallelMarginalization:
    """Configured transition rule; ``step`` advances a :class:`HierarchyState` in place.

    ``family_factory(spec, level)`` builds the sequential kernel family used by
    the ``pm2`` variant (Gaussian AR(1) moves by default).
    """

    L: int
    streams: StreamBank
    alpha: float = 0.5
    m_schedule: Callable[[int], int] = linear_schedule
    variant: Variant = Variant.SIMPLIFIED
    step_scales: Callable[[int], float] | None = None
    strict: bool = False
    family_factory: Callable | None = None
    sweep: bool = True
    _families: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        self.variant = Variant(self.variant)

    def scale(self, state: HierarchyState, l: int) -> float:
        if self.step_scales is None:
            return default_step_scale(state.spec, l)
        return float(self.step_scales(l))

    def family(self, state: HierarchyState, l: int):
        if l not in self._families:
            factory = self.family_factory or (lambda spec, lev: autoregressive_family(MidpointGaussian(spec, lev), 0.5))
            self._families[l] = factory(state.spec, l)
        return self._families[l]

    def swap(self, state: HierarchyState, l: int) -> SwapOutcome:
        rng = self.streams.get(Role.SWAP, l)
        M = int(self.m_schedule(l))
        if self.variant is Variant.PM1:
            _, out = swap_pm1(state, l, M, rng, strict=self.strict)
        elif self.variant is Variant.PM2:
            _, out = swap_pm2(state, l, M, self.family(state, l), rng, strict=self.strict)
        else:
            _, out = swap_bridge_simplified(state, l, M, rng, strict=self.strict)
        return out

    def step(self, state: HierarchyState) -> StepRecord:
        sched = self.streams.get(Role.SCHEDULE)
        u, pick = sched.random(2)
        level = outcome = None
        if self.alpha > 0 and u < self.alpha:
            level = min(int(pick * self.L), self.L - 1)
            outcome = self.swap(state, level)
        accepts = np.zeros(self.L + 1, dtype=np.int64)
        proposals = np.zeros(self.L + 1, dtype=np.int64)
        if self.sweep:
            for l, path in enumerate(state.levels):
                accepts[l], proposals[l] = sweep_inplace(
                    path.values, l, state.spec, self.scale(state, l), self.streams.get(Role.SWEEP, l)
                )
        return StepRecord(level, outcome, accepts, proposals)


def pm_step(state: HierarchyState, alpha: float, m_schedule: Callable[[int], int], variant,
            step_scales: Callable[[int], float] | None, streams: StreamBank,
            strict: bool = False) -> tuple[HierarchyState, StepRecord]:
    """Functional form of :meth:`ParallelMarginalization.step`."""
    sampler = ParallelMarginalization(state.L, streams, alpha, m_schedule, Variant(variant), step_scales, strict)
    rec = sampler.step(state)
    return state, rec
