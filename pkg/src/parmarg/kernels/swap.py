"""Swap moves between adjacent levels.

A swap between levels ``l`` and ``l + 1`` hands the hat block of level ``l`` to
level ``l + 1`` and rebuilds level ``l`` from the old level ``l + 1`` values
plus freshly drawn tilde values. The acceptance test uses importance-weighted
estimates of the level-``l`` marginal built from ``M`` reference draws.

States are updated in place; every function returns the (same) state object
together with a :class:`SwapOutcome`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from ..density import ProblemSpec, log_density_values
from ..hierarchy import HierarchyState, interleave
from .reference import MidpointGaussian, SequentialKernelFamily


class AllZeroWeightError(FloatingPointError):
    """Every forward weight vanished: the reference does not cover the target."""


class OracleUnavailableError(RuntimeError):
    pass


@dataclass
class SwapOutcome:
    level_pair: tuple[int, int]
    log_weights_u: np.ndarray
    log_weights_v: np.ndarray
    selected_index: int  # 1-based, as J in {1..M}
    acceptance: float
    accepted: bool
    degenerate: bool = False

    @property
    def weights_u(self) -> np.ndarray:
        return np.exp(self.log_weights_u)

    @property
    def weights_v(self) -> np.ndarray:
        return np.exp(self.log_weights_v)


def _default_log_density(spec: ProblemSpec) -> Callable:
    return lambda values, level: log_density_values(values, level, spec)


def acceptance_probability(log_coarse_xhat, log_coarse_next, log_wu, log_wv) -> float:
    """``min{1, pi_{l+1}(xhat) sum W_U / (pi_{l+1}(x_{l+1}) sum W_V)}`` from logs."""
    log_r = (log_coarse_xhat - log_coarse_next) + (np.logaddexp.reduce(log_wu) - np.logaddexp.reduce(log_wv))
    if np.isnan(log_r):
        return 0.0
    return float(np.exp(min(0.0, log_r)))


def _select(log_w: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn proportionally to ``exp(log_w)`` by the Gumbel-max trick."""
    return int(np.argmax(log_w + rng.gumbel(size=log_w.size)))


def _degenerate(state, l, log_wu, strict):
    if strict:
        raise AllZeroWeightError(f"all forward weights are zero for the swap at levels {l}/{l + 1}")
    return state, SwapOutcome((l, l + 1), log_wu, np.full_like(log_wu, -np.inf), 0, 0.0, False, True)


def _finish(state, l, x_next, xhat, new_tilde, log_wu, log_wv, J, log_density, rng):
    lp_coarse_xhat = float(log_density(xhat, l + 1))
    lp_coarse_next = float(log_density(x_next, l + 1))
    a = acceptance_probability(lp_coarse_xhat, lp_coarse_next, log_wu, log_wv)
    accepted = bool(rng.random() < a)
    if accepted:
        state.levels[l].values = interleave(x_next, new_tilde)
        state.levels[l + 1].values = xhat
    return state, SwapOutcome((l, l + 1), log_wu, log_wv, J + 1, a, accepted)


def _check(state, l, M):
    if not 0 <= l < state.L:
        raise ValueError(f"swap level {l} outside [0, {state.L - 1}]")
    if M < 1:
        raise ValueError("M must be >= 1")


def swap_pm1(state: HierarchyState, l: int, M: int, rng: np.random.Generator, *,
             reference=None, log_density: Callable | None = None,
             strict: bool = False) -> tuple[HierarchyState, SwapOutcome]:
    """Swap with ``M`` independent reference draws on each side."""
    _check(state, l, M)
    spec = state.spec
    ref = MidpointGaussian(spec, l) if reference is None else reference
    log_density = _default_log_density(spec) if log_density is None else log_density
    x = state.levels[l].values
    xhat, xtilde = x[0::2].copy(), x[1::2].copy()
    x_next = state.levels[l + 1].values.copy()

    U = ref.sample(x_next, M, rng)
    log_wu = np.asarray(log_density(interleave(x_next, U), l), dtype=float) - ref.log_prob(U, x_next)
    if not np.any(np.isfinite(log_wu)):
        return _degenerate(state, l, log_wu, strict)
    J = _select(log_wu, rng)

    V = np.empty_like(U)
    if M > 1:
        V[np.arange(M) != J] = ref.sample(xhat, M - 1, rng)
    V[J] = xtilde
    log_wv = np.asarray(log_density(interleave(xhat, V), l), dtype=float) - ref.log_prob(V, xhat)
    return _finish(state, l, x_next, xhat, U[J], log_wu, log_wv, J, log_density, rng)


def swap_bridge_simplified(state: HierarchyState, l: int, M: int, rng: np.random.Generator, *,
                           log_density: Callable | None = None, strict: bool = False,
                           noise: np.ndarray | None = None) -> tuple[HierarchyState, SwapOutcome]:
    """Independent-sample swap where the ``U`` and ``V`` draws share their Gaussian noise.

    ``noise`` (shape ``(M, n_tilde)``) replaces the drawn noise paths; tests use it.
    """
    _check(state, l, M)
    spec = state.spec
    ref = MidpointGaussian(spec, l)
    log_density = _default_log_density(spec) if log_density is None else log_density
    x = state.levels[l].values
    xhat, xtilde = x[0::2].copy(), x[1::2].copy()
    x_next = state.levels[l + 1].values.copy()

    zeta = ref.noise(M, xtilde.size, rng) if noise is None else np.asarray(noise, dtype=float)
    U = zeta + ref.mean(x_next)
    log_wu = np.asarray(log_density(interleave(x_next, U), l), dtype=float) - ref.log_prob_noise(zeta)
    if not np.any(np.isfinite(log_wu)):
        return _degenerate(state, l, log_wu, strict)
    J = _select(log_wu, rng)

    V = zeta + ref.mean(xhat)
    V[J] = xtilde
    log_wv = np.asarray(log_density(interleave(xhat, V), l), dtype=float) - ref.log_prob(V, xhat)
    return _finish(state, l, x_next, xhat, U[J], log_wu, log_wv, J, log_density, rng)


def _sequence_log_weights(seq, cond_fwd, cond_rev, l, family, log_density):
    """Weights ``W^j`` for ``j = 1..M`` along one sequence ``seq = (u^0, ..., u^M)``.

    ``cond_fwd`` is the hat block the draws were made around (it enters the
    target density), ``cond_rev`` conditions the reversed kernel product.
    """
    M = len(seq) - 1
    log_pi = np.asarray(log_density(interleave(cond_fwd, seq[1:]), l), dtype=float)
    out = np.empty(M)
    for j in range(1, M + 1):
        prefix = seq[: j + 1]
        out[j - 1] = (log_pi[j - 1]
                      + family.chain_log_density(prefix[::-1], cond_rev)
                      + family.log_lambda(prefix, cond_rev, cond_fwd))
    return out


def swap_pm2(state: HierarchyState, l: int, M: int, family: SequentialKernelFamily,
             rng: np.random.Generator, *, log_density: Callable | None = None,
             strict: bool = False) -> tuple[HierarchyState, SwapOutcome]:
    """Swap with correlated reference draws generated by a sequential kernel family."""
    _check(state, l, M)
    spec = state.spec
    log_density = _default_log_density(spec) if log_density is None else log_density
    x = state.levels[l].values
    xhat, xtilde = x[0::2].copy(), x[1::2].copy()
    x_next = state.levels[l + 1].values.copy()

    su = np.empty((M + 1, xtilde.size))
    su[0] = xtilde
    for j in range(1, M + 1):
        su[j] = family.sample_step(su[:j], x_next, rng)
    log_wu = _sequence_log_weights(su, x_next, xhat, l, family, log_density)
    if not np.any(np.isfinite(log_wu)):
        return _degenerate(state, l, log_wu, strict)
    J = _select(log_wu, rng) + 1  # position in su

    sv = np.empty_like(su)
    sv[: J + 1] = su[J::-1]
    for j in range(J + 1, M + 1):
        sv[j] = family.sample_step(sv[:j], xhat, rng)
    log_wv = _sequence_log_weights(sv, xhat, x_next, l, family, log_density)
    return _finish(state, l, x_next, xhat, su[J], log_wu, log_wv, J - 1, log_density, rng)


# ---------------------------------------------------------------------------
# exact marginals (analytic or numerical) for the exact acceptance test


def _tilde_energy(spec: ProblemSpec, l: int, hat: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Negative log of all factors that involve each tilde site, with the site set to ``u``."""
    dt = spec.spacing(l)
    a, b = hat[..., :-1], hat[..., 1:]
    from ..density import v_potential

    e = v_potential(a, u, dt, spec.model) + v_potential(u, b, dt, spec.model)
    if spec.observations is not None:
        pos = spec.observation_positions(l)
        odd = pos[pos % 2 == 1]
        if odd.size:
            targets = spec.observations.targets()[pos % 2 == 1]
            e = np.array(e, dtype=float, copy=True)
            e[..., (odd - 1) // 2] -= spec.observations.noise_log_density(u[..., (odd - 1) // 2] - targets)
    return e


def _hat_only_terms(spec: ProblemSpec, l: int, hat: np.ndarray) -> float:
    if spec.observations is None:
        return 0.0
    obs = spec.observations
    pos = spec.observation_positions(l)
    even = pos % 2 == 0
    total = float(obs.initial_log_density(hat[0]))
    total += float(np.sum(obs.noise_log_density(hat[pos[even] // 2] - obs.targets()[even])))
    return total


class GaussianMarginal:
    """Exact level marginal when every tilde site enters quadratically.

    Holds for linear drift with constant diffusion. Tilde sites are
    conditionally independent given the hat block, so the marginal is a product
    of one-dimensional Gaussian integrals.
    """

    def __init__(self, spec: ProblemSpec, rtol: float = 1e-8):
        self.spec = spec
        self.rtol = rtol

    def __call__(self, hat, l: int) -> float:
        hat = np.asarray(hat, dtype=float)
        e = lambda u: _tilde_energy(self.spec, l, hat, np.full(hat.size - 1, float(u)))
        e0, e1, em = e(0.0), e(1.0), e(-1.0)
        A = 0.5 * (e1 + em) - e0
        B = 0.5 * (e1 - em)
        C = e0
        e2 = e(2.0)
        if np.any(A <= 0) or not np.allclose(4 * A + 2 * B + C, e2, rtol=self.rtol, atol=1e-10):
            raise OracleUnavailableError("level density is not Gaussian in the tilde variables")
        log_int = 0.5 * np.log(np.pi / A) + B * B / (4 * A) - C
        return float(np.sum(log_int)) + _hat_only_terms(self.spec, l, hat)


class QuadratureMarginal:
    """Marginal by one-dimensional adaptive quadrature over each tilde site.

    Only used for small test problems; refuses more than ``max_sites`` sites.
    """

    def __init__(self, spec: ProblemSpec, max_sites: int = 32):
        self.spec = spec
        self.max_sites = max_sites

    def __call__(self, hat, l: int) -> float:
        hat = np.asarray(hat, dtype=float)
        n = hat.size - 1
        if n > self.max_sites:
            raise OracleUnavailableError(f"{n} tilde sites exceed the quadrature limit {self.max_sites}")
        total = _hat_only_terms(self.spec, l, hat)
        for k in range(n):
            def energy(u, k=k):
                uu = np.zeros(n)
                uu[k] = u
                return float(_tilde_energy(self.spec, l, hat, uu)[k])

            centre = 0.5 * (hat[k] + hat[k + 1])
            shift = energy(centre)
            width = 20.0 * np.sqrt(self.spec.spacing(l))
            val, _ = integrate.quad(lambda u: np.exp(shift - energy(u)), centre - width, centre + width,
                                    limit=200, epsabs=0.0, epsrel=1e-11)
            total += np.log(val) - shift
        return total


def exact_swap_accept(state: HierarchyState, l: int, marginal_oracle: Callable, *,
                      log_density: Callable | None = None) -> float:
    """Swap acceptance probability with exact marginals supplied by ``marginal_oracle(hat, l)``."""
    log_density = _default_log_density(state.spec) if log_density is None else log_density
    xhat = state.levels[l].values[0::2].copy()
    x_next = state.levels[l + 1].values.copy()
    # grouped so that a symmetric state gives exactly zero
    log_r = ((marginal_oracle(x_next, l) - marginal_oracle(xhat, l))
             + (float(log_density(xhat, l + 1)) - float(log_density(x_next, l + 1))))
    return float(np.exp(min(0.0, log_r)))
