"""Experiment configuration, runner and the ``pmrun`` command.

Config files are INI text. Sections only group keys; every key name is
unique, so a key may sit in any section and a file without any section header
is read as if it started with ``[experiment]``. See the README for the grammar.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import diagnostics as dg
from .density import DegenerateStepError, ProblemSpec, brownian, double_well, ornstein_uhlenbeck
from .density import double_well_bridge, double_well_smoothing
from .hierarchy import DivisibilityError, check_depth, init_hierarchy
from .kernels import (
    AllZeroWeightError,
    ParallelMarginalization,
    Variant,
    constant_schedule,
    default_step_scale,
    dyadic_schedule,
    linear_schedule,
    sweep_inplace,
)
from .rng import Role, StreamBank

log = logging.getLogger("parmarg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

EXPERIMENTS = ("bridge", "smoothing", "custom")
DRIFTS = ("double_well", "brownian", "ou")


class ConfigError(ValueError):
    """Invalid configuration: a parse error or a value outside its range."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "bridge"
    T: float = 10.0
    N: int = 10240
    L: int = 9
    alpha: float = 0.5
    iters: int = 150_000
    burn_in_fraction: float = 0.1
    seed: int = 20060101
    m_schedule: str = "linear"
    swap_variant: str = "simplified"
    mh_step_scales: tuple[float, ...] | None = None
    output_dir: str = "pm_output"
    strict_mode: bool = False
    baseline_mh: bool = False
    snapshot_every: int = 0
    max_lag: int = 10_000
    # custom experiments only
    drift: str = "brownian"
    theta: float = 1.0
    sigma: float = 1.0
    z_minus: float = 0.0
    z_plus: float = 0.0

    def schedule(self):
        if self.m_schedule == "linear":
            return linear_schedule
        if self.m_schedule == "dyadic":
            return dyadic_schedule
        return constant_schedule(int(self.m_schedule.split(":", 1)[1]))

    def problem(self) -> ProblemSpec:
        if self.experiment == "bridge":
            return double_well_bridge(self.N, self.T)
        if self.experiment == "smoothing":
            return double_well_smoothing(self.N, self.T)
        model = {"double_well": double_well, "brownian": brownian,
                 "ou": lambda: ornstein_uhlenbeck(self.theta, self.sigma)}[self.drift]()
        return ProblemSpec.bridge(model, self.T, self.N, self.z_minus, self.z_plus)

    def step_scale(self, spec: ProblemSpec, level: int) -> float:
        if self.mh_step_scales is None:
            return default_step_scale(spec, level)
        return self.mh_step_scales[level]

    def as_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["mh_step_scales"] = "auto" if self.mh_step_scales is None else list(self.mh_step_scales)
        return d

    def to_ini(self) -> str:
        d = self.as_dict()
        lines = []
        for section, keys in _SECTIONS.items():
            lines.append(f"[{section}]")
            for k in keys:
                v = d[k]
                if isinstance(v, list):
                    v = ", ".join(repr(float(s)) for s in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


_SECTIONS = {
    "experiment": ("experiment", "T", "N", "L", "iters", "burn_in_fraction", "seed"),
    "sampler": ("alpha", "m_schedule", "swap_variant", "mh_step_scales", "strict_mode"),
    "output": ("output_dir", "baseline_mh", "snapshot_every", "max_lag"),
    "model": ("drift", "theta", "sigma", "z_minus", "z_plus"),
}
_KEYS = {k for keys in _SECTIONS.values() for k in keys}

# defaults that depend on the experiment
_PRESETS = {
    "bridge": dict(T=10.0, N=10240, L=9, m_schedule="linear"),
    "smoothing": dict(T=10.0, N=10240, L=7, m_schedule="dyadic"),
    "custom": dict(T=1.0, N=64, L=3, m_schedule="linear", iters=20_000),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_ini(text: str) -> dict[str, str]:
    body = text
    offset = 0
    first = next((ln.strip() for ln in text.splitlines()
                  if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        body = "[experiment]\n" + text
        offset = 1
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep "T" and "N" case
    try:
        cp.read_string(body)
    except configparser.ParsingError as e:
        where = "; ".join(f"line {ln - offset}: {line}" for ln, line in e.errors)
        raise ConfigError(f"cannot parse config ({where})") from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"line {e.lineno - offset}: duplicate key {e.option!r}") from None
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None

    raw: dict[str, str] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] (known: {', '.join(_SECTIONS)})")
        for key, value in cp.items(section):
            if key not in _KEYS:
                raise ConfigError(f"[{section}] {key}: unknown key")
            if key in raw:
                raise ConfigError(f"{key}: given more than once")
            raw[key] = value
    return raw


def _convert(key: str, value: Any, target) -> Any:
    if not isinstance(value, str):
        return value
    v = value.strip()
    try:
        if target is bool:
            if v.lower() in _TRUE:
                return True
            if v.lower() in _FALSE:
                return False
            raise ValueError
        if target is int:
            f = float(v)
            if not f.is_integer():
                raise ValueError
            return int(f)
        if target is float:
            return float(v)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {target.__name__}") from None
    return v


_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_PY = {"float": float, "int": int, "bool": bool, "str": str}


def _range_checks(c: ExperimentConfig) -> None:
    def need(ok, field, bound):
        if not ok:
            raise ConfigError(f"{field} = {getattr(c, field)!r} out of range: {bound}")

    need(c.experiment in EXPERIMENTS, "experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    need(np.isfinite(c.T) and c.T > 0, "T", "must be > 0")
    need(c.N >= 2, "N", "must be >= 2")
    need(c.L >= 1, "L", "must be >= 1")
    need(c.N % 2**c.L == 0, "N", f"must be divisible by 2**L = {2**c.L}")
    need(c.N // 2**c.L >= 2, "N", f"must be >= 2 * 2**L = {2 * 2**c.L}")
    need(0.0 <= c.alpha < 1.0, "alpha", "must satisfy 0 <= alpha < 1")
    need(c.iters >= 0, "iters", "must be >= 0")
    need(0.0 <= c.burn_in_fraction < 1.0, "burn_in_fraction", "must satisfy 0 <= burn_in_fraction < 1")
    need(0 <= c.seed < 2**64, "seed", "must satisfy 0 <= seed < 2**64")
    need(c.swap_variant in {v.value for v in Variant}, "swap_variant", "must be pm1, pm2 or simplified")
    ok = c.m_schedule in ("linear", "dyadic")
    if c.m_schedule.startswith("constant:"):
        try:
            ok = int(c.m_schedule.split(":", 1)[1]) >= 1
        except ValueError:
            ok = False
    need(ok, "m_schedule", "must be linear, dyadic or constant:<c> with c >= 1")
    if c.mh_step_scales is not None:
        need(len(c.mh_step_scales) == c.L + 1, "mh_step_scales", f"needs L + 1 = {c.L + 1} values")
        need(all(s >= 0 and np.isfinite(s) for s in c.mh_step_scales), "mh_step_scales", "values must be >= 0")
    need(c.snapshot_every >= 0, "snapshot_every", "must be >= 0")
    need(c.max_lag >= 1, "max_lag", "must be >= 1")
    need(c.drift in DRIFTS, "drift", f"must be one of {', '.join(DRIFTS)}")
    need(c.sigma > 0, "sigma", "must be > 0")
    if c.experiment == "smoothing":
        need(float(c.T).is_integer() and c.T >= 2, "T", "must be an integer >= 2 (observations at integer times)")
        need(c.N % int(c.T) == 0 and (c.N // int(c.T)) % 2**c.L == 0, "N",
             f"must make every observation index N*j/T divisible by 2**L = {2**c.L}")


def build_config(raw: dict[str, Any]) -> ExperimentConfig:
    """Resolve experiment presets, convert values and range-check."""
    raw = dict(raw)
    unknown = set(raw) - _KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    experiment = str(raw.get("experiment", "bridge")).strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment = {experiment!r} out of range: must be one of {', '.join(EXPERIMENTS)}")
    values: dict[str, Any] = dict(_PRESETS[experiment])
    for key, value in raw.items():
        if value is None:
            continue
        if key == "mh_step_scales":
            values[key] = _step_scales(value)
            continue
        typ = _TYPES[key]
        base = typ.split(" | ")[0] if isinstance(typ, str) else typ
        values[key] = _convert(key, value, _PY.get(base, str))
    values["experiment"] = experiment
    cfg = ExperimentConfig(**values)
    _range_checks(cfg)
    return cfg


def _step_scales(value) -> tuple[float, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() == "auto":
            return None
        try:
            return tuple(float(s) for s in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"mh_step_scales: cannot read {value!r} as a list of reals or 'auto'") from None
    return tuple(float(s) for s in value)


def validate_config(text: str, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Parse config text, apply ``overrides`` (e.g. from command-line flags) and range-check."""
    raw = _parse_ini(text)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(raw)


def config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    """Rebuild a config from the ``config`` entry of a summary.json."""
    return build_config({k: v for k, v in d.items()})


# ---------------------------------------------------------------------------
# runner


def _midpoint(spec: ProblemSpec) -> int:
    return spec.N // 2


def _mh_baseline(cfg: ExperimentConfig, spec: ProblemSpec, x0: np.ndarray, bank: StreamBank,
                 burn: int, out_dir: str) -> tuple[dg.TraceBuffer, float, float]:
    rng = bank.get(Role.BASELINE)
    scale = cfg.step_scale(spec, 0)
    x = x0.copy()
    mid = _midpoint(spec)
    rec = dg.TraceRecorder("mh", capacity=cfg.iters - burn)
    acc = prop = 0
    t0 = time.perf_counter()
    for it in range(cfg.iters):
        a, p = sweep_inplace(x, 0, spec, scale, rng)
        if it >= burn:
            rec.append(x[mid])
            acc, prop = acc + a, prop + p
        if cfg.snapshot_every and (it + 1) % cfg.snapshot_every == 0:
            dg.write_path(os.path.join(out_dir, "mh"), it + 1, np.arange(x.size) * spec.delta, x)
    elapsed = time.perf_counter() - t0
    dg.write_path(os.path.join(out_dir, "mh"), cfg.iters, np.arange(x.size) * spec.delta, x)
    return rec.freeze(), elapsed / max(cfg.iters, 1), acc / max(prop, 1)


def _safe_act(trace: dg.TraceBuffer) -> float | None:
    try:
        return dg.integrated_act(trace)
    except (dg.InsufficientLengthError, dg.InsufficientVarianceError):
        return None


def _safe_rho(trace: dg.TraceBuffer, max_lag: int):
    lag = min(max_lag, (len(trace) - 1) // 4)
    if lag < 1:
        return None
    try:
        return dg.autocorrelation(trace, lag)
    except (dg.InsufficientLengthError, dg.InsufficientVarianceError):
        return None


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> dict[str, Any]:
    """Run the configured experiment, write all artifacts to ``cfg.output_dir`` and return the summary."""
    spec = cfg.problem()
    try:
        check_depth(spec, cfg.L)
    except DivisibilityError as e:
        raise ConfigError(str(e)) from None
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)

    bank = StreamBank(cfg.seed)
    state = init_hierarchy(spec, cfg.L, bank.get(Role.INIT))
    x0 = state.levels[0].values.copy()
    sampler = ParallelMarginalization(
        cfg.L, bank, cfg.alpha, cfg.schedule(), Variant(cfg.swap_variant),
        lambda l: cfg.step_scale(spec, l), cfg.strict_mode,
    )
    burn = int(cfg.burn_in_fraction * cfg.iters)
    table = dg.SwapRateTable.zeros(cfg.L)
    trace = dg.TraceRecorder("pm", capacity=cfg.iters - burn)
    sweep_acc = np.zeros(cfg.L + 1)
    sweep_prop = np.zeros(cfg.L + 1)
    mid = _midpoint(spec)
    times0 = np.arange(spec.n_points(0)) * spec.delta

    t0 = time.perf_counter()
    report_every = max(cfg.iters // 10, 1)
    for it in range(cfg.iters):
        rec = sampler.step(state)
        if it >= burn:
            table.record(rec)
            sweep_acc += rec.sweep_accepts
            sweep_prop += rec.sweep_proposals
            trace.append(state.levels[0].values[mid])
        if cfg.snapshot_every and (it + 1) % cfg.snapshot_every == 0:
            dg.write_path(out, it + 1, times0, state.levels[0].values)
        if progress and (it + 1) % report_every == 0:
            log.info("iteration %d/%d, swap rates %s", it + 1, cfg.iters, np.round(table.rates, 3))
    pm_time = (time.perf_counter() - t0) / max(cfg.iters, 1)

    pm_trace = trace.freeze()
    dg.write_swaprates(os.path.join(out, "swaprates.csv"), table)
    dg.write_trace(os.path.join(out, "trace.csv"), pm_trace, start_iter=burn)
    dg.write_path(out, cfg.iters, times0, state.levels[0].values)

    summary: dict[str, Any] = {
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "iterations": cfg.iters,
        "burn_in": burn,
        "swap_rates": [
            {"level_low": lo, "level_high": hi, "attempts": a, "accepts": c,
             "rate": None if np.isnan(r) else r}
            for lo, hi, a, c, r in table.rows()
        ],
        "degenerate_swaps": table.degenerate.tolist(),
        "sweep_acceptance": [None if p == 0 else float(a / p) for a, p in zip(sweep_acc, sweep_prop)],
        "seconds_per_iteration": {"pm": pm_time, "mh": None},
        "tau_int": {"pm": _safe_act(pm_trace), "mh": None},
        "cost_ratio": None,
        "speedup": None,
    }
    rho_pm = _safe_rho(pm_trace, cfg.max_lag)
    rho_mh = None
    if cfg.baseline_mh:
        mh_trace, mh_time, mh_acc = _mh_baseline(cfg, spec, x0, bank, burn, out)
        dg.write_trace(os.path.join(out, "trace_mh.csv"), mh_trace, start_iter=burn)
        rho_mh = _safe_rho(mh_trace, cfg.max_lag)
        summary["seconds_per_iteration"]["mh"] = mh_time
        summary["tau_int"]["mh"] = _safe_act(mh_trace)
        summary["mh_sweep_acceptance"] = mh_acc
        if mh_time > 0 and pm_time > 0:
            summary["cost_ratio"] = pm_time / mh_time
        if None not in (summary["tau_int"]["pm"], summary["tau_int"]["mh"], summary["cost_ratio"]):
            rep = dg.cost_normalized_comparison(
                pm_trace, mh_trace, summary["cost_ratio"],
                tau_pm=summary["tau_int"]["pm"], tau_mh=summary["tau_int"]["mh"],
            )
            summary["speedup"] = rep.speedup
    dg.write_autocorr(os.path.join(out, "autocorr.csv"), rho_pm, rho_mh)

    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(cfg.to_ini())
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmrun", description="Parallel marginalization path sampler.")
    p.add_argument("--config", help="INI config file (optional; defaults are used without one)")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--levels", type=int, dest="L")
    p.add_argument("--variant", choices=[v.value for v in Variant], dest="swap_variant")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--baseline-mh", action="store_true", default=None, dest="baseline_mh")
    p.add_argument("--strict", action="store_true", default=None, dest="strict_mode")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "quiet") and v is not None}
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = validate_config(text, overrides)
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg, progress=not args.quiet)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (AllZeroWeightError, DegenerateStepError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    rates = [r["rate"] for r in summary["swap_rates"]]
    log.info("done: swap rates %s, output in %s", rates, cfg.output_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
