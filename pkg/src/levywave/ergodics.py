"""Monte-Carlo diagnostics for irreducibility, invariant measures and the
asymptotic strong Feller property.

All distances between laws use the pseudometrics
``d_n(y, z) = min(1, |y - z| / a_n)`` on the state space.  The dual
(bounded-Lipschitz) distance is estimated from below by a fixed dictionary
of ``d_n``-Lipschitz test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal

from .control import min_norm_control, input_matrix, _metric
from .girsanov import EscortTable, build_profile
from .operators import LinearModes
from .spde import SdeRunConfig, iter_batches, moment_bound, run_batch, transform_setup

__all__ = [
    "EmpiricalMeasure",
    "PseudometricFamily",
    "Pseudometric",
    "wilson_interval",
    "irreducibility_probe",
    "kb_average",
    "push_forward",
    "support_chain",
    "bl_distance",
    "cheapest_direction",
    "asf_diagnostic",
    "asf_summary",
]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted sample cloud; ``samples`` are flat states, weights sum to 1."""

    samples: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.shape != (len(self.samples),):
            raise ValueError("one weight per sample")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")

    @classmethod
    def uniform(cls, samples, **prov) -> "EmpiricalMeasure":
        samples = np.asarray(samples, float)
        return cls(samples, np.full(len(samples), 1.0 / len(samples)), prov)

    @classmethod
    def weighted(cls, samples, w, **prov) -> "EmpiricalMeasure":
        w = np.asarray(w, float)
        return cls(np.asarray(samples, float), w / w.sum(), prov)

    def __len__(self) -> int:
        return len(self.samples)

    def mean(self, f) -> float:
        return float(np.dot(self.weights, f))


@dataclass(frozen=True)
class Pseudometric:
    """``d(y, z) = min(1, |y - z| / a)``; ``scales`` lists the ramp widths
    the distance estimator may use (all ``>= a``)."""

    a: float
    scales: tuple

    def __call__(self, y, z, modes: LinearModes | None = None):
        diff = np.asarray(y, float) - np.asarray(z, float)
        r = modes.norm(diff) if modes is not None else np.linalg.norm(diff, axis=-1)
        return np.minimum(1.0, r / self.a)


@dataclass(frozen=True)
class PseudometricFamily:
    """Decreasing scales ``a_n -> 0`` paired with increasing times ``t_n``."""

    a: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        a, t = np.asarray(self.a, float), np.asarray(self.t, float)
        if a.shape != t.shape:
            raise ValueError("a and t must have the same length")
        if np.any(a <= 0) or np.any(np.diff(a) >= 0):
            raise ValueError("a_n must be positive and strictly decreasing")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_n must increase")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "t", t)

    @classmethod
    def default(cls, n_max: int = 6, exponent: float = 0.5, period: float = 2 * math.pi):
        n = np.arange(1, n_max + 1)
        return cls(n ** (-exponent), period * n)

    def metric(self, n: int) -> Pseudometric:
        """``d_n`` for ``n = 1, 2, ...``."""
        return Pseudometric(float(self.a[n - 1]), tuple(float(x) for x in self.a[:n]))


def wilson_interval(k: int, n: int, conf: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    z = _normal.ppf(0.5 + conf / 2)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def irreducibility_probe(cfg: SdeRunConfig, delta: float, N: int, center=None,
                         chunk: int = 4096, purpose: str = "probe") -> dict:
    """Estimate ``P(|X(T, x0) - center| <= delta)`` with a Wilson interval.

    ``kappa_lower`` is the interval's lower end.  With no hits the result is
    inconclusive and carries the rule-of-three bound ``3 / N``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = cfg.modes
    c = np.zeros(m.dim) if center is None else np.asarray(center, float)
    hits = 0
    for res in iter_batches(cfg, N, [cfg.horizon], purpose=purpose, chunk=chunk):
        hits += int(np.sum(m.norm(res.states[:, 0] - c) <= delta))
    lo, hi = wilson_interval(hits, N)
    out = {"hits": hits, "N": N, "p_hat": hits / N, "wilson_ci": [lo, hi],
           "kappa_lower": lo, "delta": delta, "T": cfg.horizon}
    out["status"] = "pass" if lo > 0 else "inconclusive"
    if hits == 0:
        out["rule_of_three"] = 3.0 / N
    return out


def kb_average(cfg: SdeRunConfig, T_grid, N: int, n_times: int = 8, burn_in: float = 0.0,
               ceiling: float = math.inf, chunk: int = 2048) -> dict:
    """Time-averaged empirical laws ``R_T`` for each ``T`` in ``T_grid``.

    Each path is observed at ``n_times`` midpoints of a uniform grid on
    ``[burn_in, T]``; the pooled states form ``R_T``.  Also reports
    ``sup_t E |X(t)|^2`` over all observation times as a tightness proxy.
    """
    T_grid = np.asarray(T_grid, float)
    if np.any(T_grid <= burn_in) or T_grid.max() > cfg.horizon + 1e-12:
        raise ValueError("each T must exceed burn_in and stay within the horizon")
    per_T = [burn_in + (np.arange(n_times) + 0.5) * (T - burn_in) / n_times for T in T_grid]
    obs, inv = np.unique(np.concatenate(per_T), return_inverse=True)
    m = cfg.modes
    states = []
    s1 = np.zeros(len(obs))
    for res in iter_batches(cfg, N, obs, purpose="invariant", chunk=chunk):
        states.append(res.states)
        s1 += (m.norm(res.states) ** 2).sum(axis=0)
    states = np.concatenate(states)
    second = s1 / N
    measures = []
    for i, T in enumerate(T_grid):
        cols = inv[i * n_times:(i + 1) * n_times]
        measures.append(EmpiricalMeasure.uniform(states[:, cols].reshape(-1, m.dim), T=float(T), N=N))
    out = {"T": T_grid, "measures": measures, "obs_times": obs, "second_moment": second,
           "sup_second_moment": float(second.max()), "blow_up": bool(second.max() > ceiling)}
    try:
        out["bound"] = moment_bound(cfg, obs)
    except ValueError:
        out["bound"] = None
    return out


def push_forward(cfg: SdeRunConfig, mu: EmpiricalMeasure, h: float, chunk: int = 4096,
                 purpose: str = "push") -> EmpiricalMeasure:
    """Evolve each sample of ``mu`` by ``h`` with fresh independent noise."""
    c = cfg.with_(horizon=h, control=None)
    out = []
    for start in range(0, len(mu), chunk):
        idx = np.arange(start, min(len(mu), start + chunk))
        out.append(run_batch(c, idx, [h], purpose=purpose, x0=mu.samples[idx]).states[:, 0])
    return EmpiricalMeasure(np.concatenate(out), mu.weights.copy(), dict(mu.provenance, pushed=h))


def support_chain(cfg: SdeRunConfig, rho: EmpiricalMeasure, C: float, delta: float,
                  n_probe: int = 4, N_probe: int = 2000) -> dict:
    """Check ``(rho P_T)(B_delta) >= rho(B_C) * kappa`` on sample clouds.

    ``kappa`` is the smallest Wilson lower bound over ``n_probe`` cloud
    points inside ``B_C`` (the largest-norm ones, as the hardest starts).
    """
    m = cfg.modes
    r = m.norm(rho.samples)
    inside = np.flatnonzero(r <= C)
    q = float(rho.weights[inside].sum())
    starts = inside[np.argsort(r[inside])[::-1][:n_probe]]
    kappas = [irreducibility_probe(cfg.with_(x0=rho.samples[i]), delta, N_probe)["kappa_lower"]
              for i in starts]
    kappa = min(kappas) if kappas else 0.0
    pushed = push_forward(cfg, rho, cfg.horizon)
    freq = float(pushed.weights[m.norm(pushed.samples) <= delta].sum())
    return {"q": q, "kappa": kappa, "lhs": freq, "rhs": q * kappa, "pass": freq >= q * kappa}


def _coordinates(mu: EmpiricalMeasure, modes: LinearModes | None):
    if modes is None:
        return mu.samples
    active = modes.norm_weights > 0
    return mu.samples[:, active] * np.sqrt(modes.norm_weights[active])


def bl_distance(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, d: Pseudometric,
                modes: LinearModes | None = None, n_thresholds: int = 33,
                max_coords: int = 8, paired: bool = False, return_se: bool = False):
    """Dictionary lower bound of ``sup |int f dmu1 - int f dmu2|`` over ``d``-Lipschitz ``f``.

    The dictionary holds ramps ``clip((<y, e> - c) / s, 0, 1)`` for widths
    ``s`` in ``d.scales``, thresholds ``c`` at pooled quantiles, and
    directions ``e``: the difference of means, the leading coordinates, and
    the radial functional ``|y|``.  Each ramp is 1-Lipschitz for ``d`` and
    takes values in ``[0, 1]``, so the result lies in ``[0, 1]``.

    With ``return_se`` also returns the standard error of the maximising
    ramp's difference; ``paired`` treats sample ``i`` of both clouds as one
    replica (common noise).
    """
    Y1, Y2 = _coordinates(mu1, modes), _coordinates(mu2, modes)
    w1, w2 = mu1.weights, mu2.weights
    feats1, feats2 = [np.linalg.norm(Y1, axis=1)], [np.linalg.norm(Y2, axis=1)]
    diff = w1 @ Y1 - w2 @ Y2
    if np.linalg.norm(diff) > 0:
        e = diff / np.linalg.norm(diff)
        feats1.append(Y1 @ e)
        feats2.append(Y2 @ e)
    spread = (w1 @ Y1**2 - (w1 @ Y1) ** 2) + (w2 @ Y2**2 - (w2 @ Y2) ** 2)
    for k in np.argsort(spread)[::-1][:max_coords]:
        feats1.append(Y1[:, k])
        feats2.append(Y2[:, k])
    q = np.linspace(0.0, 1.0, n_thresholds)
    best, arg = 0.0, None
    for i, (f1, f2) in enumerate(zip(feats1, feats2)):
        cs = np.quantile(np.concatenate([f1, f2]), q)
        for s in d.scales:
            for c in (cs, cs - s):
                gap = np.abs(w1 @ _ramp(f1, c, s) - w2 @ _ramp(f2, c, s))
                j = int(np.argmax(gap))
                if gap[j] > best:
                    best, arg = float(gap[j]), (i, float(c[j]), s)
    best = min(best, 1.0)
    if not return_se:
        return best
    if arg is None:
        return best, 0.0
    i, c, s = arg
    g1 = _ramp(feats1[i], np.array([c]), s)[:, 0]
    g2 = _ramp(feats2[i], np.array([c]), s)[:, 0]
    if paired:
        if len(g1) != len(g2):
            raise ValueError("paired clouds must have equal size")
        n = len(g1)
        se = float(np.std(n * (w1 * g1 - w2 * g2), ddof=1) / math.sqrt(n))
    else:
        se = math.sqrt(_weighted_var(g1, w1) + _weighted_var(g2, w2))
    return best, se


def _ramp(f, c, s):
    return np.clip((f[:, None] - c[None, :]) / s, 0.0, 1.0)


def _weighted_var(g, w):
    """Variance of the self-normalised weighted mean (effective sample size)."""
    m = w @ g
    return float(np.sum(w * w * (g - m) ** 2))


def cheapest_direction(model, T: float, n_steps: int = 256) -> np.ndarray:
    """Unit-norm state that is cheapest to null-control at horizon ``T``.

    This is the leading Gramian eigenvector mapped back from orthonormal
    coordinates; its null-control energy is ``1 / lambda_max``.
    """
    m = model if isinstance(model, LinearModes) else model.modes
    Phi = input_matrix(m, T, n_steps)
    active, q = _metric(m)
    Psi = q[:, None] * Phi[active]
    lam, U = np.linalg.eigh(Psi @ Psi.T)
    x = np.zeros(m.dim)
    x[active] = U[:, -1] / q
    # the free flow moves the target; steer x so that S(T) x is the cheap one
    x = np.linalg.solve(m.propagator_matrix(T), x)
    x = x / m.norm(x)
    return x if x[np.argmax(np.abs(x))] > 0 else -x


def asf_diagnostic(cfg: SdeRunConfig, h, eps_grid, family: PseudometricFamily, N: int,
                   steps_per_period: int = 64, et: EscortTable | None = None,
                   chunk: int = 4096) -> list:
    """Coupled and naive distances between the laws started at ``x`` and ``x + eps h``.

    For each horizon ``t_n`` the null control ``v`` of ``eps h`` is realised on
    the ``y``-path by the mark transformation, which tracks the ``x``-path on
    common noise; the density ``G`` restores the law of the ``y``-path.
    Reported per ``(n, eps)``:

    ``coupled``
        ``E d_n(X^x, X^theta) + E|1 - G| / 2``, the coupling bound.
    ``naive``
        ``E d_n(X^x, X^y)`` under common noise with no transformation.
    ``coupled_bl`` / ``naive_bl``
        Dictionary estimates of the distance between the weighted cloud
        ``(X^theta, G)`` (resp. ``X^y``) and ``X^x``.
    """
    m = cfg.modes
    h = np.asarray(h, float)
    x = cfg.x0
    if et is None:
        p, _ = build_profile(cfg.tail)
        et = EscortTable.build(p, cfg.tail)
    period = family.t[0]
    unit = []
    for t in family.t:
        n_steps = int(round(t / period * steps_per_period))
        unit.append(min_norm_control(m, h, None, t, n_steps, max_condition=math.inf))
    rows = []
    for n, (t, uc) in enumerate(zip(family.t, unit), start=1):
        d = family.metric(n)
        base = cfg.with_(horizon=float(t), control=None)
        ref = _collect(base, N, t, chunk)
        for eps in eps_grid:
            row = {"n": n, "t": float(t), "a": d.a, "eps": float(eps),
                   "control_energy": float(eps * eps * uc.energy),
                   "control_residual": float(eps * uc.residual)}
            if eps == 0:
                row.update(coupled=0.0, naive=0.0, coupled_bl=0.0, naive_bl=0.0,
                           coupled_bl_se=0.0, naive_bl_se=0.0, density_l1=0.0, tracking=0.0,
                           mean_density=1.0)
                rows.append(row)
                continue
            y = x + eps * h
            naive = _collect(base.with_(x0=y), N, t, chunk)
            grid = type(uc.grid)(uc.grid.horizon, eps * uc.grid.values)
            coupled_cfg = base.with_(x0=y, control=grid, control_mode="transform")
            transform_setup(coupled_cfg, et)
            st, G = _collect(coupled_cfg, N, t, chunk, et=et, density=True)
            track = float(np.mean(d(ref, st, m)))
            l1 = float(np.mean(np.abs(1.0 - G)))
            row.update(tracking=track, density_l1=l1, coupled=track + 0.5 * l1,
                       naive=float(np.mean(d(ref, naive, m))),
                       mean_density=float(G.mean()))
            mu_x = EmpiricalMeasure.uniform(ref)
            row["coupled_bl"], row["coupled_bl_se"] = bl_distance(
                EmpiricalMeasure.weighted(st, G), mu_x, d, m, paired=True, return_se=True)
            row["naive_bl"], row["naive_bl_se"] = bl_distance(
                EmpiricalMeasure.uniform(naive), mu_x, d, m, paired=True, return_se=True)
            rows.append(row)
    return rows


def _collect(cfg, N, t, chunk, et=None, density=False):
    """Terminal states of replicas ``0 .. N-1`` (common noise across calls)."""
    st, G = [], []
    for res in iter_batches(cfg, N, [t], purpose="noise", chunk=chunk, et=et):
        if np.any(res.status >= 2):
            raise RuntimeError("mark transformation left its table or lost positivity")
        st.append(res.states[:, 0])
        G.append(res.density[:, 0])
    st = np.concatenate(st)
    return (st, np.concatenate(G)) if density else st


def asf_summary(rows, nsigma: float = 2.0) -> dict:
    """Trend verdicts for an :func:`asf_diagnostic` table.

    ``D`` is ``coupled_bl``.  Per ``eps > 0``: ``D`` is non-increasing in
    ``n`` up to ``nsigma`` combined standard errors of consecutive values
    (the strict verdict is reported too), and at the largest ``n`` the
    coupled coupling bound is below the naive one.  ``eps = 0`` rows must
    give ``D = 0`` exactly.
    """
    eps_vals = sorted({r["eps"] for r in rows})
    n_max = max(r["n"] for r in rows)
    out = {"summary": True, "nsigma": nsigma, "per_eps": {}}
    ok = True
    zero = [r for r in rows if r["eps"] == 0]
    out["zero_eps_exact"] = all(r["coupled_bl"] == 0 and r["coupled"] == 0 for r in zero)
    ok &= out["zero_eps_exact"]
    for eps in eps_vals:
        if eps == 0:
            continue
        rs = sorted((r for r in rows if r["eps"] == eps), key=lambda r: r["n"])
        D = np.array([r["coupled_bl"] for r in rs])
        se = np.array([r["coupled_bl_se"] for r in rs])
        tol = nsigma * np.hypot(se[:-1], se[1:])
        last = rs[-1]
        e = {"D": D, "D_se": se,
             "non_increasing": bool(np.all(np.diff(D) <= tol)),
             "strictly_non_increasing": bool(np.all(np.diff(D) <= 0)),
             "coupling_bound": [r["coupled"] for r in rs],
             "naive_bound": [r["naive"] for r in rs],
             "coupled_beats_naive": bool(last["coupled"] < last["naive"]),
             "coupled_bl_below_naive_bl": bool(last["coupled_bl"] < last["naive_bl"]),
             "n_max": n_max}
        e["pass"] = e["non_increasing"] and e["coupled_beats_naive"]
        ok &= e["pass"]
        out["per_eps"][repr(float(eps))] = e
    out["pass"] = bool(ok)
    return out
