import os
import subprocess
import sys

import numpy as np
import pytest

from levywave import _backend, _kernels_py
from levywave.control import ControlGrid, controlled_states
from levywave.girsanov import EscortTable, build_profile
from levywave.levy import LevyDensitySpec, MarkBand, TailTransform, sample_stream
from levywave.operators import HeatModelSpec, WaveModelSpec
from levywave.spde import SdeRunConfig, SigmaSpec, _profile_vector, simulate_streams

try:
    from levywave import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")

NOISE = LevyDensitySpec(alpha=1.5, K0=1.5)
WAVE = WaveModelSpec(n_modes=6, alpha_damp=0.5)
OBS = [0.7, 2.0, 3.5]


def _cfg(model=WAVE, sigma=SigmaSpec(), control=None, mode="additive", band=MarkBand(0.3, 10.0)):
    x0 = np.random.default_rng(0).standard_normal(model.modes.dim) * 0.3
    return SdeRunConfig(model, NOISE, band, sigma, x0, 3.5, control, mode, seed=1)


def _streams(cfg, n=40):
    return [sample_stream(cfg.noise, cfg.band, cfg.horizon, [4, k]) for k in range(n)]


def _run(cfg, backend, monkeypatch):
    monkeypatch.setattr(_backend, "simulate_batch", backend.simulate_batch)
    return simulate_streams(cfg, _streams(cfg), OBS)


CTRL = ControlGrid(3.5, 0.4 * np.sin(np.linspace(0, 6, 56)))
CASES = {
    "free": _cfg(),
    "free-log-sigma": _cfg(sigma=SigmaSpec("log", cap=3.0)),
    "additive": _cfg(control=CTRL),
    "additive-log-sigma": _cfg(sigma=SigmaSpec("log", cap=3.0), control=CTRL),
    "transform": _cfg(sigma=SigmaSpec(c0=2.0), control=CTRL, mode="transform",
                      band=MarkBand(0.0, 20.0)),
    "literal-damping": _cfg(WaveModelSpec(n_modes=4, alpha_damp=0.5, damping_form="literal")),
    "heat": _cfg(HeatModelSpec(n_modes=5), control=CTRL),
}


@needs_compiled
@pytest.mark.parametrize("name", sorted(CASES))
def test_compiled_matches_fallback(name, monkeypatch):
    cfg = CASES[name]
    a = _run(cfg, _kernels, monkeypatch)
    b = _run(cfg, _kernels_py, monkeypatch)
    assert np.array_equal(a.status, b.status)
    scale = 1.0 + np.max(np.abs(b.states))
    assert np.max(np.abs(a.states - b.states)) <= 1e-11 * scale
    assert np.allclose(a.density, b.density, rtol=1e-11)
    if name == "transform":
        assert np.any(b.density != 1.0)


def _oracle(cfg, stream, T, with_control):
    """Event loop on ``LinearModes.propagate`` for constant sigma."""
    m = cfg.modes
    tt = TailTransform(cfg.noise)
    x = m.propagate(cfg.x0, T)
    for t, z, s in zip(stream.times, stream.marks, stream.signs):
        if t <= T:
            x = x + m.propagate(m.input * cfg.sigma.c0 * s * float(tt(z)), T - t)
    if with_control:
        x = x + m.propagate(controlled_states(m, cfg.control)[-1], T - cfg.control.horizon)
    return x


@pytest.mark.parametrize("backend", [_kernels_py, _kernels] if _kernels else [_kernels_py])
@pytest.mark.parametrize("name", ["free", "additive", "heat"])
def test_against_event_loop_oracle(name, backend, monkeypatch):
    cfg = CASES[name]
    res = _run(cfg, backend, monkeypatch)
    for k, s in enumerate(_streams(cfg)[:10]):
        want = _oracle(cfg, s, 3.5, cfg.control is not None)
        assert np.allclose(res.states[k, -1], want, atol=1e-10)


@pytest.mark.parametrize("backend", [_kernels_py, _kernels] if _kernels else [_kernels_py])
def test_status_when_intensity_leaves_table(backend):
    tt = TailTransform(NOISE)
    p, _ = build_profile(tt)
    et = EscortTable.build(p, tt, K_hi=2.0, n=61)
    cfg = CASES["transform"]
    m = cfg.modes
    s = sample_stream(NOISE, MarkBand(0.0, 20.0), 3.5, 2)
    offsets = np.array([0, len(s)], dtype=np.int64)
    w_tab, K_tab = et.arrays()
    ctrl = np.full(8, -10.0)
    _, G, status = backend.simulate_batch(
        m.kind, m.param, m.input, cfg.x0[None, :], offsets, s.times, s.marks,
        s.signs.astype(np.int8), tt.delta0, tt.alpha, (0, 1.0, 1.0, 1.0), 2, ctrl, 3.5 / 8,
        np.zeros((2, m.dim)), w_tab, K_tab, _profile_vector(p), np.array([3.5]))
    assert status[0] == _kernels_py.KAPPA_RANGE


def test_fallback_selected_by_environment():
    env = dict(os.environ, LEVYWAVE_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from levywave import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
