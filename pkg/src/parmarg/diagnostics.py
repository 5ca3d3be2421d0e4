"""Swap-rate tables, autocorrelation, integrated autocorrelation time and CSV output.

Autocorrelations use the biased (divide-by-n) covariance estimator, which keeps
the estimated sequence positive definite. The integrated autocorrelation time
is truncated with Geyer's initial positive sequence rule.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft


class InsufficientLengthError(ValueError):
    pass


class InsufficientVarianceError(ValueError):
    pass


@dataclass
class TraceBuffer:
    """A scalar time series, e.g. the level-0 midpoint after every step."""

    series: np.ndarray
    stride: int = 1
    label: str = ""

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=float)
        if self.series.ndim != 1:
            raise ValueError("trace must be one-dimensional")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not np.all(np.isfinite(self.series)):
            raise ValueError(f"trace {self.label!r} contains non-finite values")

    def __len__(self) -> int:
        return self.series.size

    def after_burn_in(self, fraction: float) -> "TraceBuffer":
        if not 0.0 <= fraction < 1.0:
            raise ValueError("burn-in fraction must lie in [0, 1)")
        start = int(fraction * self.series.size)
        return TraceBuffer(self.series[start:], self.stride, self.label)


class TraceRecorder:
    """Append-only growable buffer used while a chain runs."""

    def __init__(self, label: str = "", stride: int = 1, capacity: int = 1024):
        self.label = label
        self.stride = stride
        self._data = np.empty(max(capacity, 1))
        self._n = 0

    def append(self, value: float) -> None:
        if self._n == self._data.size:
            self._data = np.resize(self._data, 2 * self._data.size)
        self._data[self._n] = value
        self._n += 1

    def freeze(self) -> TraceBuffer:
        return TraceBuffer(self._data[: self._n].copy(), self.stride, self.label)


@dataclass
class SwapRateTable:
    """Per-pair swap counters; pair ``l`` is the swap between levels ``l`` and ``l + 1``."""

    attempts: np.ndarray
    accepts: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.attempts = np.asarray(self.attempts, dtype=np.int64)
        self.accepts = np.asarray(self.accepts, dtype=np.int64)
        if self.degenerate is None:
            self.degenerate = np.zeros_like(self.attempts)
        self.degenerate = np.asarray(self.degenerate, dtype=np.int64)
        if self.attempts.shape != self.accepts.shape:
            raise ValueError("attempts and accepts must have the same shape")
        if np.any(self.accepts < 0) or np.any(self.accepts > self.attempts):
            raise ValueError("need 0 <= accepts <= attempts for every pair")

    @classmethod
    def zeros(cls, L: int) -> "SwapRateTable":
        return cls(np.zeros(L, dtype=np.int64), np.zeros(L, dtype=np.int64))

    @property
    def n_pairs(self) -> int:
        return self.attempts.size

    @property
    def rejects(self) -> np.ndarray:
        return self.attempts - self.accepts

    @property
    def rates(self) -> np.ndarray:
        """Acceptance rate per pair (NaN where nothing was attempted)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.accepts / np.maximum(self.attempts, 1), np.nan)

    def record(self, rec) -> None:
        """Add one kernel step record (no-op when the step had no swap)."""
        if rec.swap_level is None:
            return
        self.attempts[rec.swap_level] += 1
        self.accepts[rec.swap_level] += int(rec.outcome.accepted)
        self.degenerate[rec.swap_level] += int(rec.outcome.degenerate)

    def rows(self) -> list[tuple[int, int, int, int, float]]:
        return [(l, l + 1, int(a), int(c), float(r))
                for l, (a, c, r) in enumerate(zip(self.attempts, self.accepts, self.rates))]


def _as_series(trace) -> np.ndarray:
    return trace.series if isinstance(trace, TraceBuffer) else np.asarray(trace, dtype=float)


def _check(x: np.ndarray, max_lag: int) -> np.ndarray:
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if x.size <= 4 * max_lag or x.size < 2:
        raise InsufficientLengthError(
            f"trace of length {x.size} is too short for max_lag={max_lag} (need > {4 * max_lag})"
        )
    d = x - x.mean()
    if not np.any(d):
        raise InsufficientVarianceError("trace has zero variance")
    return d


def autocovariance_direct(trace, max_lag: int) -> np.ndarray:
    """Biased autocovariance by explicit summation (O(n * max_lag))."""
    d = _check(_as_series(trace), max_lag)
    n = d.size
    return np.array([np.dot(d[: n - k], d[k:]) / n for k in range(max_lag + 1)])


def autocovariance_fft(trace, max_lag: int) -> np.ndarray:
    """Biased autocovariance through a zero-padded FFT."""
    d = _check(_as_series(trace), max_lag)
    n = d.size
    size = sfft.next_fast_len(2 * n)
    f = sfft.rfft(d, size)
    acov = sfft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return acov / n


def autocorrelation(trace, max_lag: int, method: str = "fft") -> np.ndarray:
    """``rho(k) = C(k) / C(0)`` for ``k = 0..max_lag``."""
    if method == "fft":
        c = autocovariance_fft(trace, max_lag)
    elif method == "direct":
        c = autocovariance_direct(trace, max_lag)
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = c / c[0]
    rho[0] = 1.0
    return np.clip(rho, -1.0, 1.0)


def integrated_act(trace, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time ``1 + 2 sum rho(k)``.

    The sum runs over Geyer's initial positive sequence: pair sums
    ``rho(2m) + rho(2m + 1)`` are accumulated while they stay positive. If
    the first pair is already negative (strong anticorrelation) only the lag-1
    term is used, so alternating series give values below one.
    """
    x = _as_series(trace)
    if max_lag is None:
        max_lag = max(1, (x.size - 1) // 4)
    rho = autocorrelation(x, max_lag)
    n_pairs = (rho.size) // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    if pairs[0] <= 0:
        return float(1.0 + 2.0 * rho[1])
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else n_pairs
    # pairs[0] includes rho(0) = 1, hence the -1
    return float(-1.0 + 2.0 * pairs[:stop].sum())


def effective_sample_size(trace) -> float:
    x = _as_series(trace)
    return x.size / integrated_act(x)


@dataclass
class ComparisonReport:
    tau_pm: float
    tau_mh: float
    cost_ratio: float
    speedup: float

    def as_dict(self) -> dict:
        return {"tau_pm": self.tau_pm, "tau_mh": self.tau_mh,
                "cost_ratio": self.cost_ratio, "speedup": self.speedup}


NOMINAL_COST_RATIO = 10.0


def cost_normalized_comparison(pm_trace, mh_trace, cost_ratio: float = NOMINAL_COST_RATIO,
                               *, tau_pm: float | None = None,
                               tau_mh: float | None = None) -> ComparisonReport:
    """Speedup ``tau(MH) / (cost_ratio * tau(PM))``.

    ``cost_ratio`` is the wall-clock cost of one PM iteration in units of one MH
    iteration; callers normally pass the measured value. Precomputed
    autocorrelation times may be supplied instead of being estimated here.
    """
    if not cost_ratio > 0:
        raise ValueError("cost_ratio must be positive")
    t_pm = integrated_act(pm_trace) if tau_pm is None else float(tau_pm)
    t_mh = integrated_act(mh_trace) if tau_mh is None else float(tau_mh)
    return ComparisonReport(t_pm, t_mh, float(cost_ratio), t_mh / (cost_ratio * t_pm))


# ---------------------------------------------------------------------------
# CSV writers


def _write(path, header, rows) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def write_swaprates(path, table: SwapRateTable) -> str:
    rows = [(lo, hi, a, c, _fmt(r)) for lo, hi, a, c, r in table.rows()]
    return _write(path, ["level_low", "level_high", "attempts", "accepts", "rate"], rows)


def write_trace(path, trace: TraceBuffer, start_iter: int = 0) -> str:
    it = start_iter + np.arange(len(trace)) * trace.stride
    return _write(path, ["iter", "y_mid"], ((int(i), _fmt(v)) for i, v in zip(it, trace.series)))


def write_autocorr(path, rho_pm, rho_mh=None) -> str:
    """Columns ``lag, rho_pm, rho_mh``; the shorter column is padded with blanks."""
    rho_pm = np.asarray(rho_pm) if rho_pm is not None else np.empty(0)
    rho_mh = np.asarray(rho_mh) if rho_mh is not None else np.empty(0)
    n = max(rho_pm.size, rho_mh.size)
    rows = ((k, _fmt(rho_pm[k]) if k < rho_pm.size else "", _fmt(rho_mh[k]) if k < rho_mh.size else "")
            for k in range(n))
    return _write(path, ["lag", "rho_pm", "rho_mh"], rows)


def write_path(directory, iteration: int, times, values) -> str:
    path = os.path.join(directory, f"path_{int(iteration)}.csv")
    return _write(path, ["time", "value"], ((_fmt(t), _fmt(v)) for t, v in zip(times, values)))
