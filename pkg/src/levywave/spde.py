"""Jump-adapted exact solver for the Levy-forced spectral system.

Between events the state moves by the exact semigroup; at an event it receives
the boundary impulse ``sigma(X(t-)) s c(z)`` along the injection vector.  An
optional piecewise-constant control enters either additively (closed-form
Duhamel term) or through the mark transformation of :mod:`levywave.girsanov`,
in which case the density ``G`` is tracked along each path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _backend
from .control import ControlGrid, controlled_states
from .girsanov import EscortTable, PerturbProfileParams, build_profile, kappa
from .levy import EventStream, LevyDensitySpec, MarkBand, TailTransform, sample_stream, second_moment
from .operators import HeatModelSpec, LinearModes, SpectralState, WaveModelSpec

__all__ = [
    "SIGMA_MODES",
    "CONTROL_MODES",
    "PURPOSES",
    "SimulationError",
    "SigmaSpec",
    "SdeRunConfig",
    "PathSample",
    "BatchResult",
    "sigma_eval",
    "replica_seed",
    "replica_streams",
    "pack_streams",
    "simulate",
    "simulate_streams",
    "transform_setup",
    "run_batch",
    "iter_batches",
    "coupled_functional_samples",
    "moment_bound",
    "moment_estimate",
]

SIGMA_MODES = ("constant", "log")
CONTROL_MODES = ("additive", "transform")

# Stream families: replica k of purpose p uses default_rng([seed, p, k]).
PURPOSES = {"noise": 0, "reference": 1, "probe": 2, "invariant": 3, "push": 4}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SigmaSpec:
    """Noise multiplier ``sigma``: constant ``c0`` or ``log(2 + |u|_L2)``.

    Values are clipped to ``[floor, cap]``; ``floor`` defaults to the
    smallest value the form can take.
    """

    mode: str = "constant"
    c0: float = 1.0
    floor: float | None = None
    cap: float = math.inf

    def __post_init__(self):
        if self.mode not in SIGMA_MODES:
            raise ValueError(f"sigma mode must be one of {SIGMA_MODES}")
        if self.mode == "constant" and not self.c0 > 0:
            raise ValueError("constant sigma needs c0 > 0")
        if self.lower <= 0:
            raise ValueError("sigma floor must be positive")
        if self.cap < self.lower:
            raise ValueError("sigma cap below its floor")

    @property
    def lower(self) -> float:
        if self.floor is not None:
            return self.floor
        return self.c0 if self.mode == "constant" else math.log(2.0)

    @property
    def upper(self) -> float:
        """Sup of ``sigma`` over all states (``inf`` for the uncapped log form)."""
        return min(self.cap, self.c0) if self.mode == "constant" else self.cap

    def kernel_args(self):
        return (0 if self.mode == "constant" else 1, float(self.c0), float(self.lower), float(self.cap))


def sigma_eval(spec: SigmaSpec, state) -> float:
    """``sigma`` at a state (``SpectralState`` or flat vector)."""
    if isinstance(state, SpectralState):
        a = np.asarray(state.a, float)
    else:
        x = np.asarray(state, float)
        a = x[: len(x) // 2]
    if spec.mode == "constant":
        s = spec.c0
    else:
        s = math.log(2.0 + float(np.sqrt(np.sum(a * a))))
    return float(min(max(s, spec.lower), spec.cap))


@dataclass(frozen=True)
class SdeRunConfig:
    """Everything one replica needs; ``x0`` is a flat ``(a, b)`` vector."""

    model: WaveModelSpec | HeatModelSpec
    noise: LevyDensitySpec
    band: MarkBand
    sigma: SigmaSpec
    x0: np.ndarray
    horizon: float
    control: ControlGrid | None = None
    control_mode: str = "additive"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.x0.shape != (self.modes.dim,):
            raise ValueError(f"x0 must have length {self.modes.dim}, got {self.x0.shape}")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")
        if self.control_mode not in CONTROL_MODES:
            raise ValueError(f"control_mode must be one of {CONTROL_MODES}")
        if isinstance(self.model, HeatModelSpec) and self.sigma.mode != "constant":
            raise ValueError("the heat variant is restricted to constant sigma")
        band = self.band
        if not band.empty and band.z_min < self.noise.mark_floor():
            raise ValueError("band reaches below the jump cap's mark floor")

    @property
    def modes(self) -> LinearModes:
        return self.model.modes

    @property
    def tail(self) -> TailTransform:
        return TailTransform(self.noise)

    def with_(self, **kw) -> "SdeRunConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SdeRunConfig(**d)


@dataclass
class PathSample:
    """Observed states of one replica."""

    times: np.ndarray
    states: np.ndarray
    stream: EventStream | None = None
    density: np.ndarray | None = None
    energy: np.ndarray = field(init=False)
    l2: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.states.shape[-1] // 2
        self.l2 = np.sqrt(np.sum(self.states[:, :n] ** 2, axis=1))
        self.energy = np.full(len(self.times), np.nan)

    def with_energy(self, modes: LinearModes) -> "PathSample":
        self.energy = modes.norm(self.states)
        return self

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "energy", "l2_u"])
            for t, e, l in zip(self.times, self.energy, self.l2):
                w.writerow([repr(float(t)), repr(float(e)), repr(float(l))])


@dataclass
class BatchResult:
    indices: np.ndarray
    states: np.ndarray
    density: np.ndarray
    status: np.ndarray


def replica_seed(master: int, purpose: str, k: int):
    return [int(master), PURPOSES[purpose], int(k)]


def replica_streams(noise: LevyDensitySpec, band: MarkBand, T: float, master: int,
                    purpose: str, indices) -> list:
    return [sample_stream(noise, band, T, replica_seed(master, purpose, k)) for k in indices]


def pack_streams(streams):
    """CSR layout ``(offsets, times, marks, signs)`` for the kernels."""
    counts = np.array([len(s) for s in streams], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    if offsets[-1] == 0:
        return offsets, np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int8)
    return (offsets, np.concatenate([s.times for s in streams]),
            np.concatenate([s.marks for s in streams]),
            np.concatenate([s.signs for s in streams]).astype(np.int8))


_NO_TABLE = (np.zeros(1), np.zeros(1), np.zeros(8))


def _profile_vector(p: PerturbProfileParams) -> np.ndarray:
    return np.array([p.r1, p.beta1, p.nu, p.gamma2, p.beta2, p.buffer, p.C_cont,
                     1.0 if p.small_k_amplitude else 0.0])


def transform_setup(cfg: SdeRunConfig, et: EscortTable | None = None) -> EscortTable:
    """Escort table for ``cfg``, checking the profile stays inside the band."""
    if et is None:
        p, _ = build_profile(cfg.tail)
        et = EscortTable.build(p, cfg.tail)
    v_max = float(np.max(np.abs(cfg.control.values))) / cfg.sigma.lower
    if v_max > et.v_hi:
        raise SimulationError(
            f"control intensity {v_max:.3g} exceeds the escort table (w(K_hi) = {et.v_hi:.3g}); "
            "reduce the displacement or extend the table")
    K = kappa(et, v_max) if v_max > 0 else 0.0
    lo, hi = et.params.support(K)
    if K > 0 and (lo < cfg.band.z_min or hi > cfg.band.z_cut):
        raise SimulationError(
            f"mark transformation support ({lo:.3g}, {hi:.3g}) leaves the band "
            f"({cfg.band.z_min:g}, {cfg.band.z_cut:g}]; raise z_cut")
    return et


def simulate_streams(cfg: SdeRunConfig, streams, obs_times, x0=None,
                     et: EscortTable | None = None) -> BatchResult:
    """Run the kernel on explicit streams; ``x0`` may be (P, 2N) or (2N,)."""
    m = cfg.modes
    obs = np.asarray(obs_times, dtype=float)
    if np.any(np.diff(obs) < 0) or (len(obs) and (obs[0] < 0 or obs[-1] > cfg.horizon + 1e-12)):
        raise ValueError("observation times must be increasing within [0, horizon]")
    P = len(streams)
    x0 = cfg.x0 if x0 is None else np.asarray(x0, float)
    X0 = np.broadcast_to(x0, (P, m.dim))
    offsets, times, marks, signs = pack_streams(streams)
    w_tab, K_tab, prof = _NO_TABLE
    if cfg.control is None:
        mode, ctrl, dt, cgrid = 0, np.zeros(1), 1.0, np.zeros((2, m.dim))
    else:
        ctrl, dt = cfg.control.values, cfg.control.dt
        if cfg.control_mode == "additive":
            mode, cgrid = 1, controlled_states(m, cfg.control)
        else:
            mode, cgrid = 2, np.zeros((2, m.dim))
            et = transform_setup(cfg, et)
            w_tab, K_tab = et.arrays()
            prof = _profile_vector(et.params)
    tt = cfg.tail
    states, G, status = _backend.simulate_batch(
        m.kind, m.param, m.input, X0, offsets, times, marks, signs,
        tt.delta0, tt.alpha, cfg.sigma.kernel_args(), mode, ctrl, dt, cgrid,
        w_tab, K_tab, prof, obs)
    return BatchResult(np.arange(P), states, G, status)


def run_batch(cfg: SdeRunConfig, indices, obs_times, purpose: str = "noise", master: int | None = None,
              x0=None, et: EscortTable | None = None) -> BatchResult:
    """Replicas ``indices`` of ``cfg`` with counter-derived seeds."""
    master = cfg.seed if master is None else master
    indices = np.asarray(indices, dtype=np.int64)
    streams = replica_streams(cfg.noise, cfg.band, cfg.horizon, master, purpose, indices)
    res = simulate_streams(cfg, streams, obs_times, x0=x0, et=et)
    res.indices = indices
    bad = res.status == 1
    if np.any(bad):
        raise SimulationError(f"non-finite state in replicas {indices[bad][:5].tolist()}")
    return res


def iter_batches(cfg: SdeRunConfig, n: int, obs_times, purpose: str = "noise", chunk: int = 4096,
                 **kw) -> Iterator[BatchResult]:
    for start in range(0, n, chunk):
        yield run_batch(cfg, np.arange(start, min(n, start + chunk)), obs_times, purpose, **kw)


def simulate(cfg: SdeRunConfig, obs_times=None) -> PathSample:
    """One replica (seeded by ``cfg.seed``) observed at ``obs_times`` (default ``[T]``)."""
    obs = np.array([cfg.horizon]) if obs_times is None else np.asarray(obs_times, float)
    stream = sample_stream(cfg.noise, cfg.band, cfg.horizon, cfg.seed)
    res = simulate_streams(cfg, [stream], obs)
    if res.status[0] == 1:
        raise SimulationError("state became non-finite")
    return PathSample(obs, res.states[0], stream, res.density[0]).with_energy(cfg.modes)


def coupled_functional_samples(cfg: SdeRunConfig, phi, N: int, et: EscortTable | None = None,
                               chunk: int = 4096):
    """``(G phi(X^theta(T)), phi(X(T)))`` for replicas ``0 .. N-1`` on common streams.

    ``X^theta`` carries ``cfg.control`` through the mark transformation and
    ``X`` is the uncontrolled solution.  ``phi`` maps an array of states
    ``(P, 2N)`` to ``P`` values, or to ``(P, k)`` for ``k`` functionals at once.
    """
    if cfg.control is None:
        raise ValueError("coupled samples need a control")
    tcfg = cfg.with_(control_mode="transform")
    et = transform_setup(tcfg, et)
    free = cfg.with_(control=None)
    T = [cfg.horizon]
    weighted, plain = [], []
    for start in range(0, N, chunk):
        idx = np.arange(start, min(N, start + chunk))
        r = run_batch(tcfg, idx, T, et=et)
        if np.any(r.status >= 2):
            raise SimulationError("mark transformation left its table or lost positivity")
        val = np.asarray(phi(r.states[:, 0]), float)
        G = r.density[:, 0].reshape((-1,) + (1,) * (val.ndim - 1))
        weighted.append(G * val)
        plain.append(phi(run_batch(free, idx, T).states[:, 0]))
    return np.concatenate(weighted), np.concatenate(plain)


def moment_bound(cfg: SdeRunConfig, t) -> np.ndarray:
    """``M^2 |x0|^2 + M^2 |B|^2 sup(sigma)^2 t int c^2`` for a non-expansive model.

    ``M`` bounds the semigroup uniformly in time and ``|B|`` is the norm of
    the injection vector; the second term is the Ito isometry bound for the
    banded noise.
    """
    m = cfg.modes
    M = cfg.model.contraction_constant()
    m2 = second_moment(cfg.tail, cfg.band)
    if not math.isfinite(m2):
        raise ValueError("noise band has infinite second moment; set a jump cap")
    K = cfg.sigma.upper
    if not math.isfinite(K):
        raise ValueError("moment bound needs a bounded sigma (set sigma cap)")
    B2 = float(m.norm(m.input)) ** 2
    t = np.asarray(t, dtype=float)
    return M * M * float(m.norm(cfg.x0)) ** 2 + M * M * B2 * K * K * m2 * t


def moment_estimate(cfg: SdeRunConfig, N: int, times, chunk: int = 4096) -> dict:
    """Monte-Carlo ``E |X(t)|^2`` with standard errors, alongside :func:`moment_bound`."""
    if cfg.noise.jump_cap is None and cfg.band.z_min == 0:
        raise ValueError("moment estimate needs a jump cap or a band bounded away from 0")
    times = np.asarray(times, dtype=float)
    s1 = np.zeros(len(times))
    s2 = np.zeros(len(times))
    for res in iter_batches(cfg, N, times, chunk=chunk):
        e = cfg.modes.norm(res.states) ** 2
        s1 += e.sum(axis=0)
        s2 += (e * e).sum(axis=0)
    mean = s1 / N
    var = np.maximum(s2 / N - mean**2, 0.0) * N / max(N - 1, 1)
    se = np.sqrt(var / N)
    bound = moment_bound(cfg, times)
    return {"t": times, "mean": mean, "stderr": se, "bound": bound,
            "pass": bool(np.all(mean <= bound + 3 * se))}
