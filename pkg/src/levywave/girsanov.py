"""Mark transformations that shift the jump noise, and their densities.

A transformation ``theta(v, .)`` moves marks so that the transformed noise
carries an extra drift of ``-v`` per unit time.  The displacement profile
``h(K, z)`` lives on a compact window; ``w(K)`` is the drift it produces and
``kappa = w^{-1}`` picks the profile for a requested drift.  Each event the
transformation touches contributes a factor ``1 + h_z`` to the density ``G``
of the measure under which the transformed marks are again Poisson.

Sign convention
---------------
Marks are signed (``z > 0`` with sign ``s``, jump ``s c(z)``).  For ``v > 0``
the transformation moves marks with ``s = +1`` outward, ``z -> z + h``; for
``v < 0`` it moves the ``s = -1`` marks.  This keeps ``theta`` increasing in
``z`` for both signs and yields ``int (c(z) s - c(theta) s) dz = v`` exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .levy import LevyDensitySpec, MarkBand, TailTransform, _rng

__all__ = [
    "BRANCHES",
    "PerturbProfileParams",
    "ProfileConstructionError",
    "KappaRangeError",
    "EscortTable",
    "DensityPath",
    "VerificationReport",
    "build_profile",
    "h_profile",
    "h_profile_dz",
    "profile_eval",
    "w_of_K",
    "kappa",
    "theta",
    "theta_identity",
    "energy_integral",
    "growth_check",
    "density_path",
    "density_factors",
    "log_compensator_rate",
    "girsanov_check",
    "laplace_exponent",
    "laplace_check",
    "martingale_check",
]

# Construction ladder, tried in order until the profile validates.
BRANCHES = (
    "stated",           # exponents and windows as stated
    "flipped-window",   # K < 1 window width r1 K^(+alpha/2)
    "scaled-small-K",   # ... and K < 1 amplitude C K z^(-beta2)
    "scale-invariant",  # ... and K >= 1 window K r1 with beta1 = 0
)

_QUAD_EPSABS = 1e-13
_QUAD_EPSREL = 1e-12


class ProfileConstructionError(ValueError):
    pass


class KappaRangeError(ValueError):
    pass


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_dt(t):
    return 6.0 * t * (1.0 - t)


@dataclass(frozen=True)
class PerturbProfileParams:
    """Exponents and constants of the displacement profile ``h(K, z)``.

    For ``K >= 1`` the profile is ``K z^-beta1`` on ``(K^nu r1, 2 K^nu r1)``;
    for ``0 < K < 1`` it is ``C_cont [K] z^-beta2`` on ``(r1, r1 (1 + K^gamma2))``
    (the ``K`` factor only when ``small_k_amplitude``).  Outside the window it
    decays to 0 through cubic smoothstep buffers.
    """

    alpha: float
    r1: float
    beta1: float
    nu: float
    gamma2: float
    beta2: float = -1.0
    buffer: float = 0.25
    C_cont: float = 1.0
    small_k_amplitude: bool = False
    branch: str = "stated"

    def __post_init__(self):
        if abs(self.alpha - 5.0 / 3.0) < 1e-12:
            raise ValueError("alpha = 5/3 makes beta1 singular")
        if self.r1 <= 0 or self.buffer <= 0 or self.C_cont <= 0:
            raise ValueError("r1, buffer and C_cont must be positive")
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")

    @classmethod
    def stated_defaults(cls, tt: TailTransform, C_cont: float = 1.0) -> "PerturbProfileParams":
        a = tt.alpha
        if abs(a - 5.0 / 3.0) < 1e-12:
            raise ValueError("alpha = 5/3 makes beta1 singular")
        return cls(alpha=a, r1=tt.r1, beta1=(3 - 2 * a) / (a * (3 * a - 5)),
                   nu=5 * a - 3 * a * a, gamma2=-a / 2, C_cont=C_cont)

    @classmethod
    def for_branch(cls, tt: TailTransform, branch: str, C_cont: float = 1.0) -> "PerturbProfileParams":
        p = cls.stated_defaults(tt, C_cont)
        i = BRANCHES.index(branch)
        kw = dict(branch=branch)
        if i >= 1:
            kw["gamma2"] = tt.alpha / 2
        if i >= 2:
            kw["small_k_amplitude"] = True
        if i >= 3:
            kw.update(nu=1.0, beta1=0.0)
        return _replace(p, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def window(self, K: float):
        """``(lo, hi, A, e, bl, br)``: window, ``h = A z^-e`` inside, buffer widths."""
        if K >= 1.0:
            s = K**self.nu * self.r1
            lo, hi, A, e = s, 2.0 * s, K, self.beta1
        else:
            lo, hi = self.r1, self.r1 * (1.0 + K**self.gamma2)
            A = self.C_cont * (K if self.small_k_amplitude else 1.0)
            e = self.beta2
        bl = min(self.buffer, 0.5 * lo)
        # widen the outer buffer with the edge amplitude so theta stays increasing
        br = max(self.buffer, 2.0 * A * hi ** (-e))
        return lo, hi, A, e, bl, br

    def support(self, K: float):
        if K <= 0:
            return (0.0, 0.0)
        lo, hi, _, _, bl, br = self.window(K)
        return lo - bl, hi + br


def _replace(p, **kw):
    d = asdict(p)
    d.update(kw)
    return PerturbProfileParams(**d)


def profile_eval(p: PerturbProfileParams, K: float, z):
    """``(h, h_z)`` at scalar ``K`` for an array of marks ``z``."""
    z = np.asarray(z, dtype=float)
    h = np.zeros_like(z)
    hz = np.zeros_like(z)
    if K <= 0:
        return h, hz
    lo, hi, A, e, bl, br = p.window(K)
    mid = (z >= lo) & (z <= hi)
    h[mid] = A * z[mid] ** (-e)
    hz[mid] = -e * A * z[mid] ** (-e - 1.0)
    # buffers hold the edge value fixed, so h_z >= -1.5 g(hi) / br >= -3/4
    left = (z > lo - bl) & (z < lo)
    if np.any(left):
        g, t = A * lo ** (-e), (z[left] - lo + bl) / bl
        h[left] = _smoothstep(t) * g
        hz[left] = _smoothstep_dt(t) / bl * g
    right = (z > hi) & (z < hi + br)
    if np.any(right):
        g, t = A * hi ** (-e), (hi + br - z[right]) / br
        h[right] = _smoothstep(t) * g
        hz[right] = -_smoothstep_dt(t) / br * g
    return h, hz


def h_profile(p: PerturbProfileParams, K: float, z):
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    h, _ = profile_eval(p, K, z)
    return h if h.ndim else float(h)


def h_profile_dz(p: PerturbProfileParams, K: float, z):
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    _, hz = profile_eval(p, K, z)
    return hz if hz.ndim else float(hz)


def w_of_K(p: PerturbProfileParams, tt: TailTransform, K: float) -> float:
    """Drift ``int (c(z) - c(z + h(K, z))) dz`` produced by the profile at ``K``."""
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if K == 0:
        return 0.0
    lo, hi, _, _, bl, br = p.window(K)

    def f(z):
        h, _ = profile_eval(p, K, np.array([z]))
        return float(tt(z) - tt(z + h[0]))

    total = 0.0
    for a, b in ((lo - bl, lo), (lo, hi), (hi, hi + br)):
        if b > a:
            total += quad(f, a, b, epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL, limit=200)[0]
    return total


def energy_integral(p: PerturbProfileParams, K: float) -> float:
    """``int |h_z(K, z)| dz`` (exact total variation of the profile)."""
    if K <= 0:
        return 0.0
    lo, hi, _, _, bl, br = p.window(K)

    def f(z):
        return abs(profile_eval(p, K, np.array([z]))[1][0])

    pts = [lo - bl, lo, hi, hi + br]
    return sum(quad(f, a, b, epsabs=_QUAD_EPSABS, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))


_K_SMALL = np.logspace(-4, 0, 13)[:-1]
_K_LARGE = np.array([1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 32.0, 64.0])
VALIDATION_GRID = np.concatenate([_K_SMALL, _K_LARGE])


def _validate(p, tt, margin):
    """Reason string if the profile fails validation, else None."""
    ws = np.array([w_of_K(p, tt, K) for K in VALIDATION_GRID])
    if not np.all(np.diff(ws) > 0):
        i = int(np.argmin(np.diff(ws)))
        return f"w not increasing between K={VALIDATION_GRID[i]:g} and K={VALIDATION_GRID[i + 1]:g}"
    # the branch switch at K = 1 can leave a shallow dip the coarse grid misses
    Kf = np.logspace(-0.3, 0.3, 121)
    wf = np.array([w_of_K(p, tt, K) for K in Kf])
    if not np.all(np.diff(wf) > 0):
        i = int(np.argmin(np.diff(wf)))
        return f"w not increasing near K={Kf[i]:.4g}"
    if ws[0] > 1e-2 * ws[list(VALIDATION_GRID).index(1.0)]:
        return f"w does not vanish as K -> 0 (w({VALIDATION_GRID[0]:g}) = {ws[0]:.3g})"
    worst = math.inf
    for K in VALIDATION_GRID:
        a, b = p.support(K)
        z = np.linspace(a, b, 2001)[1:-1]
        worst = min(worst, float(np.min(1.0 + profile_eval(p, K, z)[1])))
    if worst < margin:
        return f"1 + h_z drops to {worst:.3g} (< {margin})"
    return None


def _continuity_constant(p, tt):
    target = w_of_K(p, tt, 1.0)
    Kl = 1.0 - 1e-12

    def gap(C):
        return w_of_K(_replace(p, C_cont=C), tt, Kl) - target

    return brentq(gap, 1e-8, 1e4, xtol=1e-14, rtol=1e-13)


@lru_cache(maxsize=32)
def _build(alpha, K0, r0, margin, start, buffer):
    tt = TailTransform(LevyDensitySpec(alpha=alpha, K0=K0, r0=r0))
    reasons = []
    for branch in BRANCHES[BRANCHES.index(start):]:
        p = _replace(PerturbProfileParams.for_branch(tt, branch), buffer=buffer)
        try:
            p = _replace(p, C_cont=_continuity_constant(p, tt))
        except ValueError as exc:
            reasons.append(f"{branch}: no continuity constant ({exc})")
            continue
        why = _validate(p, tt, margin)
        if why is None:
            return p, tuple(reasons)
        reasons.append(f"{branch}: {why}")
    raise ProfileConstructionError("no profile branch validated; " + "; ".join(reasons))


def build_profile(tt: TailTransform, margin: float = 0.05, start: str = "stated",
                  buffer: float = 0.25):
    """Construct a validated profile, trying ``BRANCHES`` from ``start`` on.

    Validation requires ``w`` strictly increasing on ``VALIDATION_GRID``,
    ``w(K) -> 0`` as ``K -> 0`` and ``1 + h_z >= margin`` so every density
    factor stays positive.  Returns ``(params, rejected)`` where ``rejected``
    lists the branches that failed and why.  ``buffer`` is the smoothstep
    width; wider buffers give smaller ``h_z`` and a less variable density.
    """
    s = tt.spec
    p, rejected = _build(float(s.alpha), float(s.K0), float(s.r0), float(margin), start,
                         float(buffer))
    return p, list(rejected)


@dataclass(frozen=True)
class EscortTable:
    """Tabulated ``w`` on an increasing ``K`` grid, used to invert it."""

    params: PerturbProfileParams
    tt: TailTransform
    grid: np.ndarray
    values: np.ndarray
    K_max: float = 1e4
    tol: float = 1e-10

    def __post_init__(self):
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        if np.any(np.diff(self.values) <= 0):
            i = int(np.argmin(np.diff(self.values)))
            raise ProfileConstructionError(
                f"w not increasing on branch {self.params.branch!r} near K={self.grid[i]:g}")

    @classmethod
    def build(cls, params: PerturbProfileParams, tt: TailTransform, K_hi: float = 64.0,
              n: int = 241, K_max: float = 1e4) -> "EscortTable":
        return _table(params, tt.spec, float(K_hi), int(n), float(K_max))

    @property
    def K_hi(self) -> float:
        return float(self.grid[-1])

    @property
    def v_hi(self) -> float:
        return float(self.values[-1])

    def w(self, K: float) -> float:
        return w_of_K(self.params, self.tt, K)

    def interpolated_inverse(self, v):
        """Monotone cubic approximation of ``kappa`` inside the table."""
        return PchipInterpolator(self.values, self.grid)(v)

    def arrays(self):
        """``(values, grid)`` for the compiled kernels (linear inverse)."""
        return np.ascontiguousarray(self.values), np.ascontiguousarray(self.grid)


@lru_cache(maxsize=32)
def _table(params, spec, K_hi, n, K_max):
    tt = TailTransform(spec)
    n_small = n // 3
    grid = np.concatenate([[0.0], np.logspace(-6, 0, n_small, endpoint=False),
                           np.logspace(0, math.log10(K_hi), n - n_small - 1)])
    values = np.array([w_of_K(params, tt, K) for K in grid])
    return EscortTable(params, tt, grid, values, K_max=K_max)


def kappa(et: EscortTable, v: float) -> float:
    """``K`` with ``w(K) = v``, to ``et.tol`` in ``K``.

    Outside the table the bracket grows geometrically up to ``et.K_max``.
    """
    if v < 0:
        raise ValueError(f"kappa needs v >= 0, got {v}")
    if v == 0:
        return 0.0
    if v <= et.v_hi:
        i = int(np.searchsorted(et.values, v))
        if et.values[i] == v:
            return float(et.grid[i])
        a, b = float(et.grid[i - 1]), float(et.grid[i])
    else:
        a, b = et.K_hi, 2.0 * et.K_hi
        while et.w(b) < v:
            a, b = b, 2.0 * b
            if b > et.K_max:
                raise KappaRangeError(
                    f"v = {v:g} exceeds w(K_max = {et.K_max:g}); extend the escort table "
                    "or reduce the control amplitude")
    # start brentq from the monotone interpolant's bracket guess
    return brentq(lambda K: et.w(K) - v, a, b, xtol=et.tol * 1e-2, rtol=4 * np.finfo(float).eps)


def theta(et: EscortTable, v: float, z, sign=1):
    """Image of the signed marks ``(z, sign)`` under the transformation for drift ``v``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("marks must be positive")
    if v == 0:
        return z.copy() if z.ndim else float(z)
    K = kappa(et, abs(v))
    h = profile_eval(et.params, K, z)[0]
    out = np.where(np.asarray(sign) == np.sign(v), z + h, z)
    return out if out.ndim else float(out)


def theta_identity(et: EscortTable, v: float, band: MarkBand | None = None) -> float:
    """Quadrature of ``sum_s int (s c(z) - s c(theta(v, z, s))) dz`` over the band.

    Only the sign class that ``theta`` moves contributes.  Should equal ``v``.
    """
    if v == 0:
        return 0.0
    s = float(np.sign(v))
    K = kappa(et, abs(v))
    a, b = et.params.support(K)
    if band is not None:
        if a < band.z_min or b > band.z_cut:
            raise ValueError(f"profile support ({a:g}, {b:g}) leaves the mark band")
    lo, hi, *_ = et.params.window(K)

    def f(z):
        return s * float(et.tt(z) - et.tt(theta(et, v, np.array([z]), s)[0]))

    pts = [a, lo, hi, b]
    return sum(quad(f, x0, x1, epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL, limit=200)[0]
               for x0, x1 in zip(pts[:-1], pts[1:]) if x1 > x0)


def growth_check(p: PerturbProfileParams, tt: TailTransform, fit_grid=None, check_grid=None,
                 rtol: float = 1e-3):
    """Fit ``C`` in ``w(K) >= C K^(alpha-1)`` on ``fit_grid`` and test ``check_grid``.

    Also reports the local log-log slope of ``w`` at the end of the check grid.
    """
    fit_grid = np.linspace(1.0, 10.0, 10) if fit_grid is None else np.asarray(fit_grid, float)
    check_grid = np.linspace(1.0, 10.0, 46) if check_grid is None else np.asarray(check_grid, float)
    e = tt.alpha - 1.0
    C = min(w_of_K(p, tt, K) / K**e for K in fit_grid)
    ratios = np.array([w_of_K(p, tt, K) / (C * K**e) for K in check_grid])
    K1, K2 = check_grid[-2], check_grid[-1]
    slope = math.log(w_of_K(p, tt, K2) / w_of_K(p, tt, K1)) / math.log(K2 / K1)
    return {"C": C, "min_ratio": float(ratios.min()), "pass": bool(ratios.min() >= 1.0 - rtol),
            "terminal_slope": slope, "exponent": e}


@dataclass(frozen=True)
class DensityPath:
    """``G`` after each event, and the deterministic log-compensator."""

    times: np.ndarray
    values: np.ndarray
    compensator_log: float

    def __post_init__(self):
        if np.any(self.values <= 0):
            raise ValueError("density path left (0, inf)")

    @property
    def terminal(self) -> float:
        return float(self.values[-1]) if len(self.values) else math.exp(self.compensator_log)

    def at(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right"))
        return float(self.values[i - 1]) if i else 1.0


def density_factors(et: EscortTable, v, z, sign):
    """Per-event factors ``1 + h_z`` (1 where the transformation is idle).

    ``v`` holds the transformation intensity at each event.
    """
    v = np.broadcast_to(np.asarray(v, float), np.shape(z))
    z = np.asarray(z, float)
    sign = np.asarray(sign)
    out = np.ones_like(z)
    for i in np.flatnonzero((v != 0) & (np.sign(v) == sign)):
        K = kappa(et, abs(v[i]))
        out[i] = 1.0 + profile_eval(et.params, K, z[i:i + 1])[1][0]
    return out


def log_compensator_rate(et: EscortTable, band: MarkBand, v: float) -> float:
    """``-int_band h_z(K, z) dz`` for the moved sign class, ``K = kappa(|v|)``.

    The integral is a boundary term; it vanishes whenever the profile support
    lies in the band, which is enforced because otherwise ``theta`` would not
    map the band onto itself.
    """
    if v == 0:
        return 0.0
    K = kappa(et, abs(v))
    a, b = et.params.support(K)
    if a < band.z_min or b > band.z_cut:
        raise ValueError(
            f"profile support ({a:g}, {b:g}) at K={K:g} leaves the mark band "
            f"({band.z_min:g}, {band.z_cut:g}]; raise z_cut or lower the control")
    h = profile_eval(et.params, K, np.array([max(band.z_min, 1e-300), band.z_cut]))[0]
    return -float(h[1] - h[0])


def density_path(stream, v_of_t, sigma_of_t, et: EscortTable) -> DensityPath:
    """Doleans-Dade density of the transformation along one event stream.

    ``v_of_t(t)`` is the requested drift; the transformation intensity at an
    event is ``v / sigma`` with ``sigma_of_t`` a scalar, a callable of time or
    an array aligned with the events.  If ``v_of_t`` exposes ``values`` (a
    piecewise-constant control) every level is checked against the band.
    """
    t = stream.times
    if callable(sigma_of_t):
        sig = np.array([sigma_of_t(s) for s in t], dtype=float)
    else:
        sig = np.broadcast_to(np.asarray(sigma_of_t, float), t.shape)
    if np.any(sig <= 0):
        raise ValueError("sigma must stay positive along the path")
    v = np.array([v_of_t(s) for s in t], dtype=float) / sig if len(t) else np.zeros(0)
    levels = list(v)
    if hasattr(v_of_t, "values") and np.ndim(sigma_of_t) == 0 and not callable(sigma_of_t):
        levels += list(np.asarray(v_of_t.values, float) / float(sigma_of_t))
    rate = [log_compensator_rate(et, stream.band, x) for x in set(levels)]
    assert all(r == 0.0 for r in rate)
    f = density_factors(et, v, stream.marks, stream.signs)
    if np.any(f <= 0):
        i = int(np.argmin(f))
        raise ValueError(f"density factor {f[i]:.3g} <= 0 at t={t[i]:g}: invalid profile/intensity")
    return DensityPath(t.copy(), np.cumprod(f), 0.0)


@dataclass
class VerificationReport:
    identity: str
    lhs: float
    rhs: float
    stderr: float
    N: int
    seed: object
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"identity": self.identity, "lhs": self.lhs, "rhs": self.rhs,
             "stderr": self.stderr, "N": self.N, "seed": self.seed, "pass": self.passed}
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def laplace_exponent(tt: TailTransform, band: MarkBand, lam: float, t: float) -> float:
    """``t sum_s int_band (exp(-lam s c) - 1 + lam s c) dz`` by quadrature."""
    if band.empty or lam == 0:
        return 0.0
    if band.z_min == 0:
        raise ValueError("laplace exponent needs a bounded band (z_min > 0)")

    def f(z):
        x = lam * float(tt(z))
        return 2.0 * (math.cosh(x) - 1.0)

    edges = np.geomspace(band.z_min, band.z_cut, 9)
    return t * sum(quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                   for a, b in zip(edges[:-1], edges[1:]))


def _compound_sums(tt, band, t, N, rng):
    counts = rng.poisson(band.intensity() * t, N)
    total = int(counts.sum())
    z = band.z_cut - rng.random(total) * band.width
    s = np.where(rng.random(total) < 0.5, 1.0, -1.0)
    idx = np.repeat(np.arange(N), counts)
    return np.bincount(idx, weights=s * tt(z), minlength=N)


def laplace_check(tt: TailTransform, band: MarkBand, lam: float, t: float, N: int,
                  seed=0, nsigma: float = 3.0) -> VerificationReport:
    """Monte-Carlo ``E exp(-lam xi(t))`` against the quadrature exponent.

    ``xi`` is the compound-Poisson noise on ``band``; it is already centred
    because the two sign classes cancel.
    """
    if lam < 0 or t <= 0:
        raise ValueError("need lam >= 0 and t > 0")
    rhs = math.exp(laplace_exponent(tt, band, lam, t))
    if lam == 0:
        return VerificationReport("laplace", 1.0, 1.0, 0.0, N, seed, True, {"lam": lam, "t": t})
    xi = _compound_sums(tt, band, t, N, _rng(seed))
    y = np.exp(-lam * xi)
    lhs = float(y.mean())
    se = float(y.std(ddof=1) / math.sqrt(N))
    return VerificationReport("laplace", lhs, rhs, se, N, seed, abs(lhs - rhs) <= nsigma * se,
                              {"lam": lam, "t": t})


def girsanov_check(lhs_samples, rhs_samples, *, identity="girsanov", seed=None,
                   nsigma: float = 3.0, paired: bool = False, extra=None) -> VerificationReport:
    """Compare ``E[G phi(u^theta)]`` with ``E[phi(u)]``.

    With ``paired`` the samples share their event streams and the standard
    error is that of the paired difference; otherwise the replicas are taken
    as independent.  Passes when the difference lies inside ``nsigma``
    standard errors.  Samples come from
    :func:`levywave.spde.coupled_functional_samples`.
    """
    a = np.asarray(lhs_samples, float)
    b = np.asarray(rhs_samples, float)
    lhs, rhs = float(a.mean()), float(b.mean())
    if paired:
        if a.shape != b.shape:
            raise ValueError("paired samples must have equal length")
        se = float((a - b).std(ddof=1) / math.sqrt(len(a)))
    else:
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    ok = abs(lhs - rhs) <= nsigma * se if se > 0 else lhs == rhs
    return VerificationReport(identity, lhs, rhs, se, len(a), seed, bool(ok), dict(extra or {}))


def martingale_check(et: EscortTable, band: MarkBand, v: float, times, N: int, seed=0,
                     nsigma: float = 3.0) -> list:
    """``E[G(t)] = 1`` for the constant transformation intensity ``v``.

    ``G(t)`` is the product of ``1 + h_z`` over moved events up to ``t``;
    one report per entry of ``times`` (all from the same ``N`` paths).
    """
    times = np.asarray(times, float)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and increasing")
    if v != 0:
        log_compensator_rate(et, band, v)
    rng = _rng(seed)
    T = float(times[-1])
    counts = rng.poisson(band.intensity() * T, N)
    total = int(counts.sum())
    t = T - rng.random(total) * T
    z = band.z_cut - rng.random(total) * band.width
    s = np.where(rng.random(total) < 0.5, 1, -1)
    idx = np.repeat(np.arange(N), counts)
    logf = np.zeros(total)
    if v != 0:
        moved = s == np.sign(v)
        hz = profile_eval(et.params, kappa(et, abs(v)), z[moved])[1]
        if np.any(1.0 + hz <= 0):
            raise ValueError("density factor left (0, inf)")
        logf[moved] = np.log1p(hz)
    out = []
    for tk in times:
        G = np.exp(np.bincount(idx, weights=np.where(t <= tk, logf, 0.0), minlength=N))
        se = float(G.std(ddof=1) / math.sqrt(N))
        lhs = float(G.mean())
        ok = abs(lhs - 1.0) <= nsigma * se if se > 0 else lhs == 1.0
        out.append(VerificationReport("martingale", lhs, 1.0, se, N, seed, bool(ok),
                                      {"t": float(tk), "v": float(v)}))
    return out
