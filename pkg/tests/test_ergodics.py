import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from levywave.control import min_norm_control
from levywave.ergodics import (EmpiricalMeasure, PseudometricFamily, asf_diagnostic, asf_summary,
                               bl_distance, cheapest_direction, irreducibility_probe, kb_average,
                               push_forward, wilson_interval)
from levywave.levy import LevyDensitySpec, MarkBand
from levywave.operators import WaveModelSpec
from levywave.spde import SdeRunConfig, SigmaSpec

MODEL = WaveModelSpec(n_modes=4, alpha_damp=0.5)
CAPPED = LevyDensitySpec(alpha=1.5, K0=1.5, jump_cap=5.0)


def _cfg(band=None, **kw):
    band = MarkBand(CAPPED.mark_floor(), 6.0) if band is None else band
    d = dict(model=MODEL, noise=CAPPED, band=band, sigma=SigmaSpec(c0=0.5),
             x0=np.full(MODEL.modes.dim, 0.2), horizon=2.0, seed=2)
    d.update(kw)
    return SdeRunConfig(**d)


def test_wilson_known_values():
    lo, hi = wilson_interval(0, 10)
    z2 = 1.959963984540054**2
    assert lo == 0.0 and hi == pytest.approx(z2 / (10 + z2))
    assert wilson_interval(10, 10)[1] == 1.0
    lo, hi = wilson_interval(5, 10)
    assert lo + hi == pytest.approx(1.0)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


@pytest.mark.parametrize("p,n", [(0.3, 50), (0.02, 200), (0.9, 30)])
def test_wilson_coverage(p, n):
    k = np.arange(n + 1)
    covered = np.array([lo <= p <= hi for lo, hi in (wilson_interval(int(j), n) for j in k)])
    assert binom.pmf(k, n, p)[covered].sum() >= 0.92


def test_empirical_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((3, 2)), np.full(3, 0.3))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 2)), np.array([1.5, -0.5]))
    mu = EmpiricalMeasure.weighted(np.zeros((4, 2)), [1, 1, 2, 4])
    assert mu.weights.sum() == pytest.approx(1.0) and len(mu) == 4
    assert mu.mean(np.arange(4.0)) == pytest.approx((1 + 4 + 12) / 8)


def test_family_validation():
    f = PseudometricFamily.default(4)
    assert np.allclose(f.a, [1, 2**-0.5, 3**-0.5, 0.5]) and np.allclose(f.t, 2 * math.pi * np.arange(1, 5))
    assert f.metric(3).scales == tuple(f.a[:3])
    with pytest.raises(ValueError):
        PseudometricFamily([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        PseudometricFamily([1.0, 0.5], [2.0, 1.0])


def test_pseudometric_is_capped():
    d = PseudometricFamily.default(2).metric(2)
    y = np.zeros((3, 2))
    z = np.array([[0.1, 0], [3, 4], [0, 0]])
    assert np.allclose(d(y, z), [0.1 / d.a, 1.0, 0.0])


clouds = st.integers(0, 10**6).map(lambda s: np.random.default_rng(s).standard_normal((60, 3)))


@settings(max_examples=20)
@given(clouds, clouds)
def test_bl_distance_properties(x, y):
    fam = PseudometricFamily.default(4)
    mx, my = EmpiricalMeasure.uniform(x), EmpiricalMeasure.uniform(y)
    vals = [bl_distance(mx, my, fam.metric(n)) for n in range(1, 5)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert np.all(np.diff(vals) >= -1e-15)
    assert bl_distance(mx, mx, fam.metric(4)) == 0.0
    assert bl_distance(my, mx, fam.metric(2)) == pytest.approx(vals[1], abs=1e-12)


@given(st.floats(0.0, 5.0))
def test_bl_distance_point_masses(delta):
    d = PseudometricFamily.default(3).metric(3)
    a = EmpiricalMeasure.uniform(np.zeros((1, 2)))
    b = EmpiricalMeasure.uniform(np.array([[delta, 0.0]]))
    assert bl_distance(a, b, d) == pytest.approx(min(1.0, delta / d.a), abs=1e-12)


def test_bl_distance_se():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((400, 2))
    mu, nu = EmpiricalMeasure.uniform(x), EmpiricalMeasure.uniform(x + 0.05)
    d = PseudometricFamily.default(2).metric(2)
    D, se = bl_distance(mu, nu, d, paired=True, return_se=True)
    D2, se2 = bl_distance(mu, nu, d, return_se=True)
    assert D == D2 and 0 < se < se2
    with pytest.raises(ValueError):
        bl_distance(mu, EmpiricalMeasure.uniform(x[:10]), d, paired=True, return_se=True)


def test_probe_deterministic_cases():
    cfg = _cfg(band=MarkBand(0.0, 0.0))
    target = cfg.modes.propagate(cfg.x0, cfg.horizon)
    hit = irreducibility_probe(cfg, 1e-9, 50, center=target)
    assert hit["hits"] == 50 and hit["status"] == "pass" and hit["kappa_lower"] > 0.9
    miss = irreducibility_probe(cfg, 1e-3, 50)
    assert miss["hits"] == 0 and miss["status"] == "inconclusive"
    assert miss["rule_of_three"] == pytest.approx(3 / 50)
    with pytest.raises(ValueError):
        irreducibility_probe(cfg, 0.0, 5)


def test_kb_average_structure():
    cfg = _cfg(horizon=4.0)
    out = kb_average(cfg, [2.0, 4.0], 50, n_times=4)
    assert [len(m) for m in out["measures"]] == [200, 200]
    assert len(out["obs_times"]) == 8 and out["bound"] is not None
    assert np.all(out["second_moment"] <= out["bound"])
    with pytest.raises(ValueError):
        kb_average(cfg, [5.0], 10)


def test_push_forward_on_empty_band_is_the_flow():
    cfg = _cfg(band=MarkBand(0.0, 0.0))
    mu = EmpiricalMeasure.uniform(np.random.default_rng(3).standard_normal((7, MODEL.modes.dim)))
    out = push_forward(cfg, mu, 1.3)
    assert np.allclose(out.samples, MODEL.modes.propagate(mu.samples, 1.3), atol=1e-14)
    assert np.array_equal(out.weights, mu.weights) and out.provenance["pushed"] == 1.3


def test_cheapest_direction_is_cheapest():
    T = 4 * math.pi
    h = cheapest_direction(MODEL, T, 128)
    assert MODEL.modes.norm(h) == pytest.approx(1.0)
    e = min_norm_control(MODEL, h, None, T, 128).energy
    rng = np.random.default_rng(4)
    for _ in range(5):
        r = rng.standard_normal(MODEL.modes.dim)
        r /= MODEL.modes.norm(r)
        assert e <= min_norm_control(MODEL, r, None, T, 128).energy + 1e-12


def test_asf_small_run():
    free = LevyDensitySpec(alpha=1.5, K0=1.5)
    cfg = SdeRunConfig(MODEL, free, MarkBand(0.0, 10.0), SigmaSpec(c0=2.0),
                       np.zeros(MODEL.modes.dim), 4 * math.pi, seed=3)
    fam = PseudometricFamily.default(2)
    h = cheapest_direction(MODEL, fam.t[0], 64)
    rows = asf_diagnostic(cfg, h, [0.0, 0.05], fam, 600, steps_per_period=64)
    assert len(rows) == 4
    zero = [r for r in rows if r["eps"] == 0]
    assert all(r["coupled_bl"] == 0 and r["coupled"] == 0 and r["mean_density"] == 1 for r in zero)
    for r in rows:
        if r["eps"]:
            assert 0 <= r["coupled_bl"] <= 1 and r["coupled"] >= r["tracking"]
            assert abs(r["mean_density"] - 1) < 0.2
    s = asf_summary(rows)
    assert s["zero_eps_exact"] and set(s["per_eps"]) == {"0.05"}


def _row(n, eps, D, se, c, nv):
    return {"n": n, "eps": eps, "coupled_bl": D, "coupled_bl_se": se, "coupled": c, "naive": nv,
            "naive_bl": 1.0}


def test_asf_summary_verdicts():
    rows = [_row(1, 0.0, 0.0, 0.0, 0.0, 0.0), _row(2, 0.0, 0.0, 0.0, 0.0, 0.0),
            _row(1, 0.1, 0.05, 0.01, 0.2, 0.3), _row(2, 0.1, 0.06, 0.01, 0.1, 0.3)]
    s = asf_summary(rows)
    e = s["per_eps"]["0.1"]
    assert e["non_increasing"] and not e["strictly_non_increasing"] and s["pass"]
    rows[3] = _row(2, 0.1, 0.2, 0.01, 0.1, 0.3)
    assert not asf_summary(rows)["pass"]
    rows[3] = _row(2, 0.1, 0.04, 0.01, 0.4, 0.3)
    assert not asf_summary(rows)["per_eps"]["0.1"]["coupled_beats_naive"]
