import numpy as np
import pytest

from parmarg import density as D
from parmarg.hierarchy import LevelPath
from parmarg.kernels import mh_sweep, site_log_ratio, sweep_inplace
from parmarg.kernels import mh as mh_module

from helpers import batch_means_se


def _path(spec, level, rng):
    x = rng.normal(size=spec.n_points(level))
    if spec.kind is D.ProblemKind.BRIDGE:
        x[0], x[-1] = spec.z_minus, spec.z_plus
    return x


def test_zero_step_leaves_path_and_accepts_everything():
    spec = D.double_well_bridge(N=64, T=1)
    rng = np.random.default_rng(0)
    p = LevelPath(0, _path(spec, 0, rng), spec.delta)
    out, acc = mh_sweep(p, spec, 0.0, rng)
    np.testing.assert_array_equal(out.values, p.values)
    assert acc == 63


def test_negative_step_rejected():
    spec = D.double_well_bridge(N=8, T=1)
    with pytest.raises(ValueError):
        mh_sweep(LevelPath(0, np.zeros(9), spec.delta), spec, -1.0, np.random.default_rng(0))


def test_mh_sweep_does_not_mutate_input():
    spec = D.double_well_bridge(N=32, T=1)
    rng = np.random.default_rng(0)
    x = _path(spec, 0, rng)
    p = LevelPath(0, x.copy(), spec.delta)
    out, acc = mh_sweep(p, spec, 0.1, rng)
    np.testing.assert_array_equal(p.values, x)
    assert acc > 0 and not np.array_equal(out.values, x)
    assert out.values[0] == 0 and out.values[-1] == 0


@pytest.mark.parametrize("spec,level", [
    (D.double_well_bridge(N=64, T=4), 0),
    (D.double_well_bridge(N=64, T=4), 2),
    (D.double_well_smoothing(N=80, T=10), 0),
    (D.double_well_smoothing(N=80, T=10), 3),
])
def test_site_ratio_matches_full_recomputation(spec, level):
    rng = np.random.default_rng(level + 11)
    x = _path(spec, level, rng)
    free = np.arange(spec.n_points(level))[spec.free_slice(level)]
    ks = np.concatenate([free[:2], free[-2:], rng.choice(free, 96)])
    for k in ks:
        new = x[k] + rng.normal()
        y = x.copy()
        y[k] = new
        full = D.log_density_values(y, level, spec) - D.log_density_values(x, level, spec)
        assert site_log_ratio(x, level, spec, k, new) == pytest.approx(full, rel=1e-10, abs=1e-10)


def test_three_point_bridge_midpoint_variance():
    spec = D.ProblemSpec.bridge(D.brownian(), 0.5, 2)
    x = np.zeros(3)
    rng = np.random.default_rng(3)
    out = np.empty(100_000)
    for i in range(out.size):
        sweep_inplace(x, 0, spec, 0.8, rng)
        out[i] = x[1]
    sq = out**2
    target = spec.delta / 2
    assert abs(sq.mean() - target) < 3 * batch_means_se(sq)
    assert abs(out.mean()) < 3 * batch_means_se(out)


def test_python_fallback_matches_compiled_kernel():
    spec = D.double_well_smoothing(N=80, T=10)
    m, obs = spec.model, spec.observations
    compiled = mh_module._kernel(spec)[0]
    py = mh_module._make_sweep(m.f, m.f_prime, m.sigma, obs.initial_log_density,
                               obs.noise_log_density, True, jit=False)[0]
    target, lo, hi = mh_module._level_setup(spec, 1)
    rng = np.random.default_rng(5)
    x = _path(spec, 1, rng)
    a, b = x.copy(), x.copy()
    for key in np.random.default_rng(6).integers(0, 2**63, 20, dtype=np.uint64):
        na = compiled(a, spec.spacing(1), lo, hi, target, 0.2, key)
        with np.errstate(over="ignore"):
            nb = py(b, spec.spacing(1), lo, hi, target, 0.2, key)
        assert na == nb
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_sweeps_replay_with_same_stream_seed():
    spec = D.double_well_bridge(N=128, T=2)
    x0 = _path(spec, 0, np.random.default_rng(0))
    runs = []
    for _ in range(2):
        x = x0.copy()
        rng = np.random.default_rng(42)
        for _ in range(10):
            sweep_inplace(x, 0, spec, 0.05, rng)
        runs.append(x)
    np.testing.assert_array_equal(runs[0], runs[1])
