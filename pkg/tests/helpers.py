"""Test-only constructions: grid-valued references, Gaussian oracles and error bars."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from parmarg.kernels import SequentialKernelFamily, q_form_lambda


class GridReference:
    """Per-site discretized Gaussian on ``grid``, centred at the hat midpoints.

    Used to make the swap kernels map grid states to grid states so that
    transition counts between individual states can be compared.
    """

    def __init__(self, grid, variance: float):
        self.grid = np.asarray(grid, dtype=float)
        self.variance = float(variance)
        self._rows: dict[float, np.ndarray] = {}

    def _row(self, c: float) -> np.ndarray:
        # grid states only ever produce a handful of distinct centres
        row = self._rows.get(c)
        if row is None:
            lp = -0.5 * (self.grid - c) ** 2 / self.variance
            row = self._rows[c] = lp - logsumexp(lp)
        return row

    def _site_logp(self, centre):
        centre = np.round(np.asarray(centre, dtype=float), 12)
        rows = [self._row(float(c)) for c in centre.ravel()]
        return np.array(rows).reshape(centre.shape + (self.grid.size,))

    def mean(self, hat):
        hat = np.asarray(hat, dtype=float)
        return 0.5 * (hat[..., :-1] + hat[..., 1:])

    def sample(self, hat, size: int, rng):
        lp = self._site_logp(self.mean(hat))  # (n, G)
        p = np.exp(lp)
        cum = np.cumsum(p, axis=-1)
        u = rng.random((size, lp.shape[0], 1))
        idx = np.minimum((u > cum[None]).sum(axis=-1), self.grid.size - 1)
        return self.grid[idx]

    def site_index(self, u):
        return np.searchsorted(self.grid, np.round(np.asarray(u, dtype=float), 12))

    def log_prob(self, tilde, hat):
        tilde = np.asarray(tilde, dtype=float)
        lp = self._site_logp(self.mean(hat))
        idx = self.site_index(tilde)
        vals = np.take_along_axis(np.broadcast_to(lp, tilde.shape + (self.grid.size,)), idx[..., None], -1)[..., 0]
        return vals.sum(axis=-1)

    def log_prob_centre(self, tilde, centre):
        tilde = np.asarray(tilde, dtype=float)
        lp = self._site_logp(centre)
        idx = self.site_index(tilde)
        vals = np.take_along_axis(np.broadcast_to(lp, tilde.shape + (self.grid.size,)), idx[..., None], -1)[..., 0]
        return vals.sum(axis=-1)


def lazy_grid_family(ref: GridReference, keep: float = 0.5) -> SequentialKernelFamily:
    """Each site keeps its previous value with probability ``keep``, else redraws from ``ref``.

    Reversible with respect to the reference, so the sequence is correlated but
    has the reference as its stationary law. Weighted with the q-form lambda.
    """

    def sample_step(history, hat, rng):
        prev = history[-1]
        fresh = ref.sample(hat, 1, rng)[0]
        stay = rng.random(prev.shape) < keep
        return np.where(stay, prev, fresh)

    def step_log_density(u, history, hat):
        prev = history[-1]
        lp = ref._site_logp(ref.mean(hat))
        idx = ref.site_index(u)
        p_fresh = np.exp(lp[np.arange(idx.size), idx])
        p = (1 - keep) * p_fresh + keep * (np.asarray(u) == np.asarray(prev))
        return float(np.sum(np.log(p)))

    def chain(seq, hat):
        return float(sum(step_log_density(seq[k], seq[:k], hat) for k in range(1, len(seq))))

    def q_log(inner, a, b):
        if len(inner) == 0:
            return 0.0
        centre = ref.mean(0.5 * (np.asarray(a) + np.asarray(b)))
        return float(np.sum(ref.log_prob_centre(np.asarray(inner), centre)))

    return SequentialKernelFamily(sample_step, step_log_density, q_form_lambda(chain, q_log), "lazy-grid")


def quadratic_form(log_density, n: int, h: float = 1.0):
    """Precision matrix ``P`` and mean ``m`` of a Gaussian log density on ``R^n``.

    Exact (up to rounding) when ``log_density`` is quadratic: second
    differences of a quadratic do not depend on the step.
    """
    f0 = log_density(np.zeros(n))
    e = np.eye(n) * h
    fp = np.array([log_density(e[i]) for i in range(n)])
    fm = np.array([log_density(-e[i]) for i in range(n)])
    P = np.empty((n, n))
    for i in range(n):
        P[i, i] = -(fp[i] + fm[i] - 2 * f0) / h**2
        for j in range(i + 1, n):
            fij = log_density(e[i] + e[j])
            P[i, j] = P[j, i] = -(fij - fp[i] - fp[j] + f0) / h**2
    grad = (fp - fm) / (2 * h)
    m = np.linalg.solve(P, grad)
    return P, m


def batch_means_se(x, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    b = x.size // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


class GaussianSwapSetup:
    """Linear-drift bridge where level ``l + 1`` uses the exact marginal of level ``l``.

    ``log_density`` is the override to hand to the swap functions and
    ``sample_state`` draws a hierarchy state exactly from the product target
    (for the two levels involved; the other levels are left as initialized).
    """

    def __init__(self, spec, L: int, l: int):
        from parmarg.density import log_density_values
        from parmarg.hierarchy import init_hierarchy
        from parmarg.kernels import GaussianMarginal

        self.spec, self.L, self.l = spec, L, l
        self.marginal = GaussianMarginal(spec)
        n = spec.n_points(l)
        self._free = np.arange(n)[spec.free_slice(l)]

        def full(v):
            x = np.zeros(n)
            x[0], x[-1] = spec.z_minus, spec.z_plus
            x[self._free] = v
            return float(log_density_values(x, l, spec))

        P, self._mean = quadratic_form(full, self._free.size)
        self._chol = np.linalg.cholesky(np.linalg.inv(P))
        self._template = init_hierarchy(spec, L, np.random.default_rng(0), perturbation_variance=0.0)

        def log_density(values, level):
            if level == l + 1:
                values = np.asarray(values, dtype=float)
                if values.ndim == 1:
                    return self.marginal(values, l)
                return np.array([self.marginal(v, l) for v in values])
            return log_density_values(values, level, spec)

        self.log_density = log_density

    def sample_level(self, rng) -> np.ndarray:
        x = np.zeros(self.spec.n_points(self.l))
        x[0], x[-1] = self.spec.z_minus, self.spec.z_plus
        x[self._free] = self._mean + self._chol @ rng.standard_normal(self._free.size)
        return x

    def sample_state(self, rng):
        s = self._template.copy()
        s.levels[self.l].values = self.sample_level(rng)
        s.levels[self.l + 1].values = self.sample_level(rng)[0::2].copy()
        return s
