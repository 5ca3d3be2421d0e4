"""Reference conditionals for the tilde variables and sequential kernel families.

A reference conditional provides ``sample(hat, size, rng)`` and
``log_prob(tilde, hat)``; both act on the tilde block of one level given the
hat block (a level ``l + 1`` shaped vector).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..density import ProblemSpec

_LOG_2PI = np.log(2.0 * np.pi)


def midpoints(hat: np.ndarray) -> np.ndarray:
    return 0.5 * (hat[..., :-1] + hat[..., 1:])


class MidpointGaussian:
    """Independent ``N(midpoint of neighbours, 2**(l-1) * delta)`` per tilde site.

    For zero drift and unit diffusion this is the exact conditional of the
    level density given its hat values.
    """

    kind = "MidpointGaussian"

    def __init__(self, spec: ProblemSpec, level: int):
        self.level = level
        self.variance = 2.0 ** (level - 1) * spec.delta
        self.sd = np.sqrt(self.variance)

    def mean(self, hat):
        return midpoints(np.asarray(hat, dtype=float))

    def noise(self, size: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sd * rng.standard_normal((size, n))

    def sample(self, hat, size: int, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(hat)
        return mu + self.noise(size, mu.shape[-1], rng)

    def log_prob_noise(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta)
        n = zeta.shape[-1]
        return -0.5 * np.sum(zeta * zeta, axis=-1) / self.variance - 0.5 * n * (_LOG_2PI + np.log(self.variance))

    def log_prob(self, tilde, hat) -> np.ndarray:
        return self.log_prob_noise(np.asarray(tilde, dtype=float) - self.mean(hat))


@dataclass
class SequentialKernelFamily:
    """Correlated reference draws for the sequential swap variant.

    ``sample_step(history, hat, rng)`` draws ``u^j`` given ``history`` =
    ``(u^0, ..., u^{j-1})`` stacked along axis 0; ``step_log_density(u, history, hat)``
    is its log density; ``log_lambda(seq, a, b)`` is the log of the symmetric
    weighting function, ``seq`` holding ``(u^0, ..., u^j)``.
    """

    sample_step: Callable
    step_log_density: Callable
    log_lambda: Callable
    name: str = "custom"

    def chain_log_density(self, seq: np.ndarray, hat) -> float:
        """log of ``p^j((u^1..u^j) | u^0, hat)``, the product of the step densities."""
        return float(sum(self.step_log_density(seq[m], seq[:m], hat) for m in range(1, len(seq))))


def reduction_lambda(reference) -> Callable:
    """``1 / (p(u^j | a) p(u^0 | b))``: turns independent draws into the independent-sample swap."""

    def log_lambda(seq, a, b):
        return float(-reference.log_prob(seq[-1], a) - reference.log_prob(seq[0], b))

    return log_lambda


def q_form_lambda(family_steps: Callable, q_log: Callable) -> Callable:
    """``q(u^1..u^{j-1} | a, b) / (p^j(reverse | u^j, a) p^j(forward | u^0, b))``.

    ``family_steps(seq, hat)`` is the chain log density and ``q_log(inner, a, b)``
    a log density symmetric under reversing ``inner`` and swapping ``a, b``.
    With this choice each weight is an unbiased estimate of the marginal.
    """

    def log_lambda(seq, a, b):
        return float(q_log(seq[1:-1], a, b) - family_steps(seq[::-1], a) - family_steps(seq, b))

    return log_lambda


def independent_family(reference) -> SequentialKernelFamily:
    """Every step an independent draw from the reference, with the reduction weighting."""

    def sample_step(history, hat, rng):
        return reference.sample(hat, 1, rng)[0]

    def step_log_density(u, history, hat):
        return float(reference.log_prob(u, hat))

    return SequentialKernelFamily(sample_step, step_log_density, reduction_lambda(reference), "independent")


def autoregressive_family(reference: MidpointGaussian, rho: float = 0.5) -> SequentialKernelFamily:
    """Gaussian AR(1) moves ``u' = m + rho (u - m) + sqrt(1 - rho^2) * noise``.

    Each step leaves the reference conditional invariant. The weighting is the
    symmetric q-form with ``q`` the reference conditioned on the average of the
    two hat blocks.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    scale = np.sqrt(1.0 - rho * rho)
    var = reference.variance * (1.0 - rho * rho)

    def sample_step(history, hat, rng):
        m = reference.mean(hat)
        prev = history[-1]
        return m + rho * (prev - m) + scale * reference.sd * rng.standard_normal(m.shape)

    def step_log_density(u, history, hat):
        m = reference.mean(hat)
        d = u - m - rho * (history[-1] - m)
        return float(-0.5 * np.sum(d * d) / var - 0.5 * d.size * (_LOG_2PI + np.log(var)))

    def chain(seq, hat):
        return float(sum(step_log_density(seq[k], seq[:k], hat) for k in range(1, len(seq))))

    def q_log(inner, a, b):
        if len(inner) == 0:
            return 0.0
        mid = 0.5 * (np.asarray(a) + np.asarray(b))
        return float(np.sum(reference.log_prob(np.asarray(inner), mid)))

    return SequentialKernelFamily(sample_step, step_log_density, q_form_lambda(chain, q_log),
                                  f"ar({rho:g})")
