"""Acceptance suite: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly as a script.  The Monte-Carlo criteria drive the CLI
with the shipped configs, so they also exercise the artifact pipeline.
"""

import contextlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from levywave.cli import COMMANDS, main
from levywave.config import load_config
from levywave.ergodics import irreducibility_probe
from levywave.girsanov import (VALIDATION_GRID, EscortTable, build_profile, energy_integral,
                               kappa, theta_identity, w_of_K)
from levywave.levy import LevyDensitySpec, MarkBand, TailTransform, sample_stream, tail_mass
from levywave.operators import WaveModelSpec
from levywave.spde import SdeRunConfig, SigmaSpec, simulate_streams

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

CONFIG_OF = {
    "simulate": "simulate.ini",
    "girsanov-check": "girsanov.ini",
    "laplace-check": "laplace.ini",
    "control": "control.ini",
    "vanishing-energy": "vanishing.ini",
    "irreducibility": "irreducibility.ini",
    "invariant": "invariant.ini",
    "asf": "asf.ini",
}


def record(idx: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[idx] = f"{idx:2d}. {'PASS' if ok else 'FAIL'}  {name}: {detail}"


def run_cli(command: str, out: Path, *extra: str):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([command, "--config", str(CONFIGS / CONFIG_OF[command]), "--out", str(out),
                     *extra])
    return code, out / command, buf.getvalue()


def jsonl(path: Path):
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.fixture(scope="session")
def cli(tmp_path_factory):
    """Full-size CLI runs, each executed once per session."""
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(command):
        if command not in cache:
            cache[command] = run_cli(command, root, "--quiet")
        return cache[command]

    return get


def test_inverse_pair_identity():
    rho = np.logspace(-6, 6, 50)
    worst = 0.0
    for alpha in (1.2, 1.5, 1.9, 2.0):
        spec = LevyDensitySpec(alpha=alpha)
        tt = TailTransform(spec)
        back = np.array([float(tt(tail_mass(spec, r))) for r in rho])
        worst = max(worst, float(np.max(np.abs(back / rho - 1))))
    ok = worst <= 1e-10
    record(1, "inverse-pair identity", ok, f"max relative error {worst:.2e} (tol 1e-10)")
    assert ok


def test_kappa_inversion_and_monotone_w():
    Ks = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
    worst, branches, mono = 0.0, [], True
    for alpha in (1.2, 1.5, 1.9):
        tt = TailTransform(LevyDensitySpec(alpha=alpha))
        p, rejected = build_profile(tt)
        et = EscortTable.build(p, tt)
        mono &= bool(np.all(np.diff(et.values) > 0))
        mono &= bool(np.all(np.diff([w_of_K(p, tt, K) for K in VALIDATION_GRID]) > 0))
        worst = max(worst, max(abs(kappa(et, w_of_K(p, tt, K)) - K) for K in Ks))
        branches.append(f"alpha={alpha}: {p.branch} after {len(rejected)} rejected")
    ok = worst <= 1e-8 and mono
    record(2, "kappa(w(K)) = K and w monotone", ok,
           f"max |error| {worst:.1e} (tol 1e-8); " + "; ".join(branches))
    assert ok


def test_theta_defining_identity():
    et = load_config().escort_table()
    errs = [abs(theta_identity(et, float(v)) - v) for v in np.linspace(-1, 1, 21)]
    ok = max(errs) <= 1e-5
    record(3, "theta defining identity", ok, f"max |error| {max(errs):.1e} on 21 points (tol 1e-5)")
    assert ok


def _energies():
    et = load_config().escort_table()
    v = np.array([x for x in np.linspace(-1, 1, 21) if x != 0])
    E = np.array([energy_integral(et.params, kappa(et, abs(x))) for x in v])
    return v, E


def test_quadratic_energy_bound():
    v, E = _energies()
    C = float(np.dot(E, v**2) / np.dot(v**2, v**2))  # least-squares fit of E = C v^2
    ratio = E / v**2
    ok = float(ratio.max()) <= C * (1 + 1e-3)
    record(4, "quadratic energy bound", ok,
           f"fitted C {C:.3g}, E/v^2 ranges {ratio.min():.3g}..{ratio.max():.3g}; "
           f"E/|v| stays in {np.min(E / abs(v)):.3g}..{np.max(E / abs(v)):.3g}, "
           "so the energy is linear in |v| near 0 and no single C fits")
    if not ok:
        pytest.xfail("energy of a compactly supported displacement is at least linear in |v|")


def test_energy_is_linear_near_zero():
    """Backs the analysis recorded for the quadratic bound."""
    v, E = _energies()
    small = abs(v) <= 0.3
    assert np.all(E[small] / abs(v[small]) > 5.0)
    assert np.all(E[small] / v[small] ** 2 > 15.0)


def test_martingale_and_girsanov(cli):
    code, out, _ = cli("girsanov-check")
    recs = jsonl(out / "report.jsonl")
    mart = [r for r in recs if r["identity"] == "martingale" and r["t"] == 1.0]
    balls = [r for r in recs if r["identity"] == "ball"]
    ok = code == 0 and len(mart) == 1 and len(balls) == 3 and all(r["pass"] for r in recs)
    z = [abs(r["lhs"] - r["rhs"]) / r["stderr"] for r in mart + balls if r["stderr"] > 0]
    record(5, "E[G(T)] = 1 and ball-indicator Girsanov checks", ok,
           f"{sum(r['pass'] for r in recs)}/{len(recs)} checks within 3 SE, "
           f"worst {max(z):.2f} SE, N = {balls[0]['N'] if balls else 0}")
    assert ok


def test_laplace_identity(cli):
    code, out, _ = cli("laplace-check")
    recs = jsonl(out / "report.jsonl")
    z = max(abs(r["lhs"] - r["rhs"]) / r["stderr"] for r in recs)
    ok = code == 0 and len(recs) == 6 and all(r["pass"] for r in recs)
    record(6, "Laplace identity", ok, f"{len(recs)} (lambda, t) pairs, worst {z:.2f} SE (tol 3)")
    assert ok


def sample_empty():
    return sample_stream(LevyDensitySpec(), MarkBand(0.0, 0.0), 10.0, 0)


def test_deterministic_wave_exactness():
    model = WaveModelSpec(n_modes=64, alpha_damp=0.0)
    m = model.modes
    x0 = np.random.default_rng(0).standard_normal(m.dim)
    cfg = SdeRunConfig(model, LevyDensitySpec(), MarkBand(0.0, 0.0), SigmaSpec(), x0, 10.0)
    obs = np.linspace(0.0, 10.0, 41)
    states = simulate_streams(cfg, [sample_empty()], obs).states[0]
    N = m.n_modes
    e = model.omega2 * states[:, :N] ** 2 + states[:, N:] ** 2
    cons = float(np.max(np.abs(e - e[0]) / (1 + np.abs(e[0]))))
    comp = 0.0
    for s, t in ((1.3, 8.7), (4.0, 6.0), (0.1, 9.9)):
        mid = simulate_streams(cfg, [sample_empty()], [s]).states[0, 0]
        two = simulate_streams(cfg.with_(x0=mid), [sample_empty()], [t]).states[0, 0]
        comp = max(comp, float(np.max(np.abs(two - m.propagate(x0, s + t)))))
    ok = cons <= 1e-10 and comp <= 1e-12 * (1 + np.max(np.abs(x0)))
    record(7, "deterministic wave exactness", ok,
           f"per-mode energy drift {cons:.1e} (tol 1e-10), composition error {comp:.1e}")
    assert ok


def test_control_closure(cli):
    code, out, _ = cli("control")
    rec = jsonl(out / "report.jsonl")[0]
    ok = code == 0 and rec["residual"] <= 1e-6 and rec["forward_error"] <= 1e-10
    record(8, "control closure", ok,
           f"residual {rec['residual']:.1e} (tol 1e-6), forward error {rec['forward_error']:.1e} "
           f"(tol 1e-10), x0 energy {rec['x0_energy']:.3g}")
    assert ok


def test_vanishing_energy(cli):
    code, out, _ = cli("vanishing-energy")
    rec = jsonl(out / "report.jsonl")[0]
    E = np.array(rec["energies"])
    unresolved = rec["unresolved_horizons"]
    ok = code == 0 and rec["decreasing"] and E[-1] <= 0.1 * E[0]
    resolved = [i for i in range(len(E)) if i + 1 not in unresolved]
    tail = E[resolved[-1]] / E[resolved[0]] if resolved else float("nan")
    record(9, "vanishing energy", ok,
           f"E_6/E_1 = {E[-1] / E[0]:.2e}; horizons {unresolved} admit no exact null control "
           f"(residual {max(rec['residuals'][i - 1] for i in unresolved) if unresolved else 0:.2f}), "
           f"over the resolved ones E decreases with last/first {tail:.3f}")
    assert ok


def test_moment_bound(cli):
    code, out, _ = cli("invariant")
    rec = jsonl(out / "report.jsonl")[0]
    rows = [line.split(",") for line in (out / "moments.csv").read_text().splitlines()[1:]]
    mean, se, bound = (np.array([float(r[i]) for r in rows]) for i in (1, 2, 3))
    ok = code == 0 and rec["moment_pass"] and len(rows) == 10 and bool(np.all(mean <= bound + 3 * se))
    record(10, "moment bound", ok,
           f"{len(rows)} times, max E|X|^2 / bound {np.max(mean / bound):.3f}, N = 10000")
    assert ok


def test_irreducibility(cli):
    code, out, _ = cli("irreducibility")
    rec = jsonl(out / "report.jsonl")[0]
    oracle_cfg = SdeRunConfig(WaveModelSpec(n_modes=16, alpha_damp=0.5), LevyDensitySpec(),
                              MarkBand(0.0, 0.0), SigmaSpec(), np.zeros(32), 4 * math.pi)
    oracle = irreducibility_probe(oracle_cfg, 0.5, 100)
    ok = (code == 0 and rec["kappa_lower"] > 0 and abs(rec["x0_energy"] - 1) < 1e-12
          and oracle["p_hat"] == 1.0)
    record(11, "irreducibility", ok,
           f"{rec['hits']}/{rec['N']} hits, Wilson lower bound {rec['kappa_lower']:.3g}; "
           f"no-noise oracle p_hat {oracle['p_hat']:g}")
    assert ok


def test_asf_trend(cli):
    code, out, _ = cli("asf")
    recs = jsonl(out / "report.jsonl")
    summ = recs[-1]
    per = summ["per_eps"]
    parts = []
    for eps, e in sorted(per.items()):
        parts.append(f"eps={eps}: D {e['D'][0]:.2g}->{e['D'][-1]:.2g} "
                     f"(strict {e['strictly_non_increasing']}), coupled {e['coupling_bound'][-1]:.3f} "
                     f"vs naive {e['naive_bound'][-1]:.3f}")
    ok = code == 0 and summ["pass"] and summ["zero_eps_exact"] and set(per) == {"0.05", "0.1"}
    record(12, "asymptotic strong Feller trend", ok,
           "; ".join(parts) + ("; D(n, 0) = 0 exactly" if summ["zero_eps_exact"] else ""))
    assert ok


REDUCED = {"girsanov-check": "4000", "laplace-check": "4000", "irreducibility": "2000",
           "invariant": "1000", "asf": "400", "simulate": "1", "control": "1",
           "vanishing-energy": "1"}


def test_reproducibility(tmp_path):
    diffs, files = [], 0
    for command in COMMANDS:
        outs = []
        for rep in ("a", "b"):
            code, out, _ = run_cli(command, tmp_path / rep, "--quiet", "--replicas", REDUCED[command])
            assert code in (0, 1, 3)
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir() if p.name != "timestamp.txt")
        assert names == sorted(p.name for p in outs[1].iterdir() if p.name != "timestamp.txt")
        for n in names:
            files += 1
            if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes():
                diffs.append(f"{command}/{n}")
    ok = not diffs
    record(13, "byte-identical reruns", ok,
           f"{files} artifacts over {len(COMMANDS)} subcommands at reduced replicas"
           + (f"; differing: {diffs}" if diffs else ""))
    assert ok


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
