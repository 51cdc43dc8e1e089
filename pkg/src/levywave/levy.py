"""Heavy-tailed jump noise: the Levy density, its inverse tail transform and
exact finite-activity sampling of the driving Poisson random measure.

Marks live on the positive half line with Lebesgue intensity; a mark ``z``
carries the jump size ``c(z)`` and an independent fair sign.  Large marks are
small jumps, so a band ``(z_min, z_cut]`` drops jumps below ``c(z_cut)`` and,
when ``z_min > 0``, jumps above ``c(z_min)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "LevyDensitySpec",
    "TailTransform",
    "MarkBand",
    "EventStream",
    "tail_mass",
    "tail_transform",
    "c_transform",
    "sample_stream",
    "second_moment",
    "full_second_moment",
]


@dataclass(frozen=True)
class LevyDensitySpec:
    """Symmetric power-law Levy density ``k(r) = K0 |r|^(-alpha-1)``.

    ``jump_cap`` (optional) removes jumps larger than ``J_max``; it is realised
    in simulation by raising the lower end of the mark band to
    :meth:`mark_floor`.
    """

    alpha: float = 1.5
    K0: float = 1.5
    r0: float = 1.0
    jump_cap: float | None = None

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.K0 <= 0:
            raise ValueError(f"K0 must be positive, got {self.K0}")
        if self.r0 <= 0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if self.jump_cap is not None and self.jump_cap <= self.r0:
            raise ValueError(f"jump_cap must exceed r0={self.r0}, got {self.jump_cap}")

    def density(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self.K0 * r ** (-self.alpha - 1.0)
        if self.jump_cap is not None:
            out = np.where(r > self.jump_cap, 0.0, out)
        return out

    def mark_floor(self) -> float:
        """Smallest admissible mark under the jump cap (0 without a cap)."""
        if self.jump_cap is None:
            return 0.0
        return self.K0 / self.alpha * self.jump_cap ** (-self.alpha)


def tail_mass(spec: LevyDensitySpec, rho: float) -> float:
    """Mass of the one-sided tail, ``int_rho^inf k(s) ds``.

    Jumps above ``spec.jump_cap`` are excluded when a cap is set.

    >>> tail_mass(LevyDensitySpec(alpha=1.5, K0=1.5), 1.0)
    1.0
    """
    if not rho > 0:
        raise ValueError(f"tail_mass needs rho > 0, got {rho}")
    scale = spec.K0 / spec.alpha
    if spec.jump_cap is None:
        return scale * rho ** (-spec.alpha)
    if rho >= spec.jump_cap:
        return 0.0
    return scale * (rho ** (-spec.alpha) - spec.jump_cap ** (-spec.alpha))


@dataclass(frozen=True)
class TailTransform:
    """Inverse tail transform ``c(r) = delta0 * r^(-1/alpha)`` and its derivative."""

    spec: LevyDensitySpec

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def delta0(self) -> float:
        return (self.spec.K0 / self.spec.alpha) ** (1.0 / self.spec.alpha)

    @property
    def r1(self) -> float:
        """Mark at which ``c`` equals the tail threshold ``r0``."""
        return self.spec.K0 / self.spec.alpha * self.spec.r0 ** (-self.spec.alpha)

    def __call__(self, r):
        """Vectorised signed transform; ``r`` must be nonzero."""
        r = np.asarray(r, dtype=float)
        return np.sign(r) * self.delta0 * np.abs(r) ** (-1.0 / self.alpha)

    def derivative(self, r):
        """``c'(r)`` for positive marks."""
        r = np.asarray(r, dtype=float)
        return -self.delta0 / self.alpha * r ** (-1.0 / self.alpha - 1.0)

    def antiderivative(self, r):
        """Primitive of ``c`` on the positive half line (vanishing at 0)."""
        p = 1.0 - 1.0 / self.alpha
        return self.delta0 * np.asarray(r, dtype=float) ** p / p


def tail_transform(spec: LevyDensitySpec) -> TailTransform:
    return TailTransform(spec)


def c_transform(tt: TailTransform, r: float) -> float:
    """Signed jump size carried by mark ``r`` (odd in ``r``)."""
    if r == 0:
        raise ValueError("c is undefined at 0: the Levy measure has no atom there")
    return float(tt(r))


@dataclass(frozen=True)
class MarkBand:
    """Mark interval ``(z_min, z_cut]``, used symmetrically for both signs."""

    z_min: float = 0.0
    z_cut: float = 1000.0

    def __post_init__(self):
        if self.z_min < 0:
            raise ValueError(f"z_min must be nonnegative, got {self.z_min}")

    @property
    def empty(self) -> bool:
        return self.z_min >= self.z_cut

    @property
    def width(self) -> float:
        return max(self.z_cut - self.z_min, 0.0)

    def intensity(self) -> float:
        """Event rate per unit time over both sign bands."""
        return 2.0 * self.width

    @classmethod
    def for_spec(cls, spec: LevyDensitySpec, z_cut: float = 1000.0) -> "MarkBand":
        """Band honouring the spec's jump cap."""
        return cls(spec.mark_floor(), z_cut)


@dataclass(frozen=True)
class EventStream:
    """Time-sorted jump events ``(t_i, z_i, s_i)`` on ``(0, horizon]``."""

    horizon: float
    band: MarkBand
    times: np.ndarray
    marks: np.ndarray
    signs: np.ndarray
    seed: object = None

    def __len__(self) -> int:
        return len(self.times)

    def jump_values(self, tt: TailTransform) -> np.ndarray:
        if len(self.marks) == 0:
            return np.zeros(0)
        return tt(self.marks) * self.signs

    def window(self, t0: float, t1: float) -> "EventStream":
        """Events in ``(t0, t1]`` shifted to start at 0."""
        sel = (self.times > t0) & (self.times <= t1)
        return EventStream(t1 - t0, self.band, self.times[sel] - t0,
                           self.marks[sel], self.signs[sel], self.seed)

    def to_csv(self, path, tt: TailTransform) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "z", "sign", "jump_value"])
            for t, z, s, j in zip(self.times, self.marks, self.signs, self.jump_values(tt)):
                w.writerow([repr(float(t)), repr(float(z)), int(s), repr(float(j))])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_stream(spec: LevyDensitySpec, band: MarkBand, T: float, seed) -> EventStream:
    """Draw one exact compound-Poisson realisation on ``band`` over ``(0, T]``.

    The count is Poisson with mean ``2 (z_cut - z_min) T``; times, marks and
    signs are i.i.d. uniform.  Identical ``seed`` gives an identical stream.
    """
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if band.empty:
        z = np.zeros(0)
        return EventStream(T, band, z, z.copy(), np.zeros(0, dtype=np.int8), seed)
    rng = _rng(seed)
    n = rng.poisson(band.intensity() * T)
    times = T - rng.random(n) * T  # uniform on (0, T]
    times.sort()
    # ties have probability zero; redraw whichever copies collide
    while n > 1 and np.any(np.diff(times) == 0.0):
        dup = np.flatnonzero(np.diff(times) == 0.0) + 1
        times[dup] = T - rng.random(len(dup)) * T
        times.sort()
    marks = band.z_cut - rng.random(n) * band.width  # uniform on (z_min, z_cut]
    signs = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    return EventStream(T, band, times, marks, signs, seed)


def second_moment(tt: TailTransform, band: MarkBand) -> float:
    """``int c(z)^2 dz`` over both signs of ``band`` (closed form).

    Returns ``inf`` when the band reaches ``z = 0`` (unbounded jumps).
    """
    if band.empty:
        return 0.0
    if band.z_min == 0.0:
        return math.inf
    p = 1.0 - 2.0 / tt.alpha
    if p == 0.0:
        integral = math.log(band.z_cut / band.z_min)
    else:
        integral = (band.z_cut ** p - band.z_min ** p) / p
    return 2.0 * tt.delta0 ** 2 * integral


def full_second_moment(spec: LevyDensitySpec) -> float:
    """``int |r|^2 nu(dr)`` over the untruncated (possibly capped) measure.

    Infinite without a jump cap, and infinite for ``alpha = 2`` regardless
    (logarithmic divergence of the small jumps).
    """
    floor = spec.mark_floor()
    if floor == 0.0 or spec.alpha == 2.0:
        return math.inf
    tt = TailTransform(spec)
    p = 1.0 - 2.0 / spec.alpha
    return 2.0 * tt.delta0 ** 2 * (-(floor ** p)) / p
