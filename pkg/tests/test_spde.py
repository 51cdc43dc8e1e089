import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levywave.control import ControlGrid
from levywave.levy import LevyDensitySpec, MarkBand
from levywave.operators import WaveModelSpec
from levywave.spde import (PURPOSES, SdeRunConfig, SigmaSpec, SimulationError,
                           coupled_functional_samples, moment_bound, moment_estimate,
                           replica_seed, run_batch, sigma_eval, simulate, transform_setup)

MODEL = WaveModelSpec(n_modes=6, alpha_damp=0.5)
NOISE = LevyDensitySpec(alpha=1.5, K0=1.5, jump_cap=5.0)


def _cfg(**kw):
    d = dict(model=MODEL, noise=NOISE, band=MarkBand(NOISE.mark_floor(), 10.0), sigma=SigmaSpec(),
             x0=np.full(MODEL.modes.dim, 0.1), horizon=2.0, seed=3)
    d.update(kw)
    return SdeRunConfig(**d)


def test_empty_band_is_free_flow():
    cfg = _cfg(band=MarkBand(0.0, 0.0))
    res = run_batch(cfg, range(5), [0.5, 2.0])
    want = cfg.modes.propagate(cfg.x0, 2.0)
    assert np.allclose(res.states[:, -1], want, atol=1e-14)
    assert np.all(res.density == 1.0)


def test_replicas_reproducible_and_purpose_separated():
    cfg = _cfg()
    a = run_batch(cfg, [0, 1, 2], [2.0])
    b = run_batch(cfg, [2, 0, 1], [2.0])
    assert np.array_equal(a.states[[2, 0, 1]], b.states)
    c = run_batch(cfg, [0, 1, 2], [2.0], purpose="probe")
    assert not np.array_equal(a.states, c.states)
    assert replica_seed(7, "push", 9) == [7, PURPOSES["push"], 9]
    assert len(set(PURPOSES.values())) == len(PURPOSES)


def test_simulate_path_sample(tmp_path):
    ps = simulate(_cfg(), np.linspace(0, 2, 9))
    assert ps.states.shape == (9, MODEL.modes.dim)
    assert np.allclose(ps.energy, MODEL.modes.norm(ps.states))
    assert ps.energy[0] == pytest.approx(MODEL.modes.norm(_cfg().x0))
    ps.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,energy,l2_u"


@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12))
def test_sigma_log_form_bounds(x):
    spec = SigmaSpec("log", cap=2.5)
    s = sigma_eval(spec, np.array(x))
    assert math.log(2.0) <= s <= 2.5
    assert sigma_eval(SigmaSpec(c0=0.7), np.array(x)) == 0.7


@pytest.mark.parametrize("kw", [dict(mode="cubic"), dict(c0=0.0), dict(floor=-1.0),
                                dict(c0=2.0, cap=1.0)])
def test_sigma_validation(kw):
    with pytest.raises(ValueError):
        SigmaSpec(**kw)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(band=MarkBand(0.0, 10.0))  # below the mark floor of the jump cap
    with pytest.raises(ValueError):
        _cfg(x0=np.zeros(3))
    with pytest.raises(ValueError):
        _cfg(horizon=0.0)
    with pytest.raises(ValueError):
        _cfg(control_mode="feedback")


def test_transform_setup_checks_band():
    free = LevyDensitySpec(alpha=1.5, K0=1.5)
    cfg = _cfg(noise=free, band=MarkBand(0.0, 2.0), control=ControlGrid(2.0, np.full(8, 0.3)),
               control_mode="transform")
    with pytest.raises(SimulationError, match="raise z_cut"):
        transform_setup(cfg)
    with pytest.raises(SimulationError, match="escort table"):
        transform_setup(cfg.with_(band=MarkBand(0.0, 50.0), control=ControlGrid(2.0, np.full(8, 50.0))))


def test_moment_bound_holds():
    cfg = _cfg(sigma=SigmaSpec(c0=1.3))
    est = moment_estimate(cfg, 4000, [0.5, 1.0, 2.0])
    assert est["pass"]
    assert np.all(np.diff(est["bound"]) > 0)
    assert moment_bound(cfg, 0.0) == pytest.approx(9 * MODEL.modes.norm(cfg.x0) ** 2)
    with pytest.raises(ValueError):
        moment_bound(cfg.with_(sigma=SigmaSpec("log")), 1.0)


@settings(max_examples=5, deadline=None)
@given(st.floats(-0.3, 0.3))
def test_coupled_samples_reproduce_additive_mean(c):
    """``E[G X^theta(T)] = E[X^v(T)]`` for a linear functional."""
    free = LevyDensitySpec(alpha=1.5, K0=1.5)
    cfg = _cfg(noise=free, band=MarkBand(0.0, 20.0), sigma=SigmaSpec(c0=2.0),
               control=ControlGrid(2.0, np.full(16, c)), seed=11)
    phi = lambda x: x[:, 0]
    weighted, plain = coupled_functional_samples(cfg, phi, 6000)
    additive = phi(run_batch(cfg, np.arange(6000), [2.0], master=99).states[:, 0])
    se = math.sqrt(np.var(weighted) / 6000 + np.var(additive) / 6000)
    assert abs(weighted.mean() - additive.mean()) <= 4 * se
    assert plain.shape == weighted.shape
