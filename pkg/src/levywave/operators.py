"""Spectral form of the boundary-forced string and of the heat variant.

The string lives on ``(0, 2 pi)`` with ``u(0) = 0`` and the Levy forcing
entering through ``u_xi(2 pi)``.  In the sine basis of the Dirichlet/Neumann
Laplacian the first-order system ``X = (u, u_t)`` decouples into independent
modes ``(a_n, b_n)``, each an exactly solvable oscillator.  States are flat
arrays laid out as ``[a_0 .. a_{N-1}, b_0 .. b_{N-1}]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "DAMPING_FORMS",
    "LinearModes",
    "WaveModelSpec",
    "HeatModelSpec",
    "SpectralState",
    "NeumannMapCoeffs",
    "eigenpairs",
    "semigroup_apply",
    "neumann_map",
    "neumann_profile",
    "boundary_inject",
    "heat_variant",
]

OSCILLATOR = 0
DECAY = 1

# "restoring": u_tt + a u - u_xixi = 0, i.e. omega_n^2 = lambda_n + a.
# "literal":   the displayed (0, +a z1) perturbation, omega_n^2 = lambda_n - a.
DAMPING_FORMS = ("restoring", "literal")

_SINH_2PI = math.exp(2 * math.pi) - math.exp(-2 * math.pi)


def _oscillator_coeffs(p, dt):
    """``C(dt)``, ``S1(dt) = int C``, ``S2(dt) = int S1`` for ``x'' = -p x``."""
    p = np.asarray(p, dtype=float)
    dt = np.asarray(dt, dtype=float)
    p, dt = np.broadcast_arrays(p, dt)
    C = np.ones_like(p * dt)
    S1 = np.array(dt, dtype=float, copy=True)
    S2 = 0.5 * dt * dt
    pos = p > 0
    if np.any(pos):
        w = np.sqrt(p[pos])
        x = w * dt[pos]
        C[pos] = np.cos(x)
        S1[pos] = np.sin(x) / w
        S2[pos] = 2.0 * np.sin(0.5 * x) ** 2 / p[pos]
    neg = p < 0
    if np.any(neg):
        k = np.sqrt(-p[neg])
        x = k * dt[neg]
        C[neg] = np.cosh(x)
        S1[neg] = np.sinh(x) / k
        S2[neg] = 2.0 * np.sinh(0.5 * x) ** 2 / (-p[neg])
    return C, S1, S2


@dataclass(frozen=True)
class LinearModes:
    """Mode table shared by the solver, the control layer and the kernels.

    ``kind[n]`` is ``OSCILLATOR`` (``a' = b + B_a v``, ``b' = -p a + B_b v``)
    or ``DECAY`` (``a' = -p a + B_a v``, ``b`` unused).  ``input`` is the
    injected direction, used for both the noise and the control.
    ``norm_weights`` gives the state-space norm, ``|x|^2 = sum w x^2``.
    """

    kind: np.ndarray
    param: np.ndarray
    input: np.ndarray
    norm_weights: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.kind)

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    def norm(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.sum(self.norm_weights * x * x, axis=-1))

    def l2_norm_u(self, x) -> np.ndarray:
        """L2 norm of the displacement component (sine basis is orthonormal)."""
        a = np.asarray(x, dtype=float)[..., : self.n_modes]
        return np.sqrt(np.sum(a * a, axis=-1))

    def _blocks(self, dt):
        """Per-mode propagator entries and unit-input responses for a step ``dt``."""
        N = self.n_modes
        osc = self.kind == OSCILLATOR
        C, S1, S2 = _oscillator_coeffs(np.where(osc, self.param, 0.0), dt)
        m11 = C.copy()
        m12 = np.where(osc, S1, 0.0)
        m21 = np.where(osc, -self.param * S1, 0.0)
        m22 = np.where(osc, C, 0.0)
        Ba, Bb = self.input[:N], self.input[N:]
        fa = Ba * S1 + Bb * S2
        fb = -self.param * S2 * Ba + Bb * S1
        dec = ~osc
        if np.any(dec):
            lam = self.param[dec]
            e = np.exp(-lam * dt)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(lam > 0, -np.expm1(-lam * dt) / np.where(lam > 0, lam, 1.0), dt)
            m11[dec] = e
            fa[dec] = Ba[dec] * g
            fb[dec] = 0.0
        fb = np.where(osc, fb, 0.0)
        return m11, m12, m21, m22, fa, fb

    def propagate(self, x, dt: float) -> np.ndarray:
        """Exact free evolution over ``dt >= 0``."""
        if dt < 0:
            raise ValueError(f"dt must be nonnegative, got {dt}")
        x = np.asarray(x, dtype=float)
        N = self.n_modes
        m11, m12, m21, m22, _, _ = self._blocks(dt)
        a, b = x[..., :N], x[..., N:]
        return np.concatenate([m11 * a + m12 * b, m21 * a + m22 * b], axis=-1)

    def forced_step(self, x, dt: float, v: float) -> np.ndarray:
        """Exact evolution over ``dt`` under the constant input ``v``."""
        x = np.asarray(x, dtype=float)
        N = self.n_modes
        m11, m12, m21, m22, fa, fb = self._blocks(dt)
        a, b = x[..., :N], x[..., N:]
        return np.concatenate([m11 * a + m12 * b + fa * v, m21 * a + m22 * b + fb * v], axis=-1)

    def step_response(self, dt: float) -> np.ndarray:
        """State reached from 0 after ``dt`` under unit input."""
        _, _, _, _, fa, fb = self._blocks(dt)
        return np.concatenate([fa, fb])

    def propagator_matrix(self, dt: float) -> np.ndarray:
        N = self.n_modes
        m11, m12, m21, m22, _, _ = self._blocks(dt)
        M = np.zeros((2 * N, 2 * N))
        i = np.arange(N)
        M[i, i] = m11
        M[i, N + i] = m12
        M[N + i, i] = m21
        M[N + i, N + i] = m22
        return M


@dataclass(frozen=True)
class SpectralState:
    """Position and velocity coefficients of a wave state."""

    a: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, n_modes: int) -> "SpectralState":
        return cls(np.zeros(n_modes), np.zeros(n_modes))

    @classmethod
    def from_vector(cls, x) -> "SpectralState":
        x = np.asarray(x, dtype=float)
        n = len(x) // 2
        return cls(x[:n].copy(), x[n:].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.a, float), np.asarray(self.b, float)])

    def energy(self, spec: "WaveModelSpec") -> float:
        """Norm in ``D(Lambda^1/2) x L^2``: ``sqrt(sum lambda a^2 + sum b^2)``."""
        return float(np.sqrt(np.sum(spec.eigenvalues * self.a**2) + np.sum(self.b**2)))


@dataclass(frozen=True)
class NeumannMapCoeffs:
    d: np.ndarray
    injected: np.ndarray

    def __post_init__(self):
        if np.any(self.d == 0.0):
            bad = np.flatnonzero(self.d == 0.0).tolist()
            raise ValueError(f"boundary map does not reach modes {bad}")


@dataclass(frozen=True)
class WaveModelSpec:
    n_modes: int = 64
    alpha_damp: float = 0.0
    damping_form: str = "restoring"
    lambda_shift: float = 1.0
    quad_points: int = 4096

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.damping_form not in DAMPING_FORMS:
            raise ValueError(f"damping_form must be one of {DAMPING_FORMS}")
        if self.lambda_shift != 1.0:
            raise ValueError("only the lambda = 1 boundary map has a closed form")
        if self.alpha_damp < 0:
            raise ValueError("alpha_damp must be nonnegative")

    length = 2.0 * math.pi

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return (2.0 * np.arange(1, self.n_modes + 1) - 1.0) / 4.0

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return self.wavenumbers**2

    @cached_property
    def omega2(self) -> np.ndarray:
        sign = 1.0 if self.damping_form == "restoring" else -1.0
        return self.eigenvalues + sign * self.alpha_damp

    @cached_property
    def frequencies(self) -> np.ndarray:
        if np.any(self.omega2 <= 0):
            raise ValueError("some modes are not oscillatory under this damping form")
        return np.sqrt(self.omega2)

    @cached_property
    def coeffs(self) -> NeumannMapCoeffs:
        return neumann_map(self, 1.0)[1]

    @cached_property
    def modes(self) -> LinearModes:
        N = self.n_modes
        return LinearModes(
            kind=np.full(N, OSCILLATOR, dtype=np.int8),
            param=self.omega2.copy(),
            input=self.coeffs.injected.copy(),
            norm_weights=np.concatenate([self.eigenvalues, np.ones(N)]),
        )

    def contraction_constant(self) -> float:
        """``M`` with ``|S(t) x| <= M |x|`` for all ``t >= 0`` (growth rate 0).

        The flow conserves ``sum omega_n^2 a_n^2 + b_n^2`` mode by mode, so
        ``M^2`` is the worst ratio between that energy and the state norm.
        """
        if np.any(self.omega2 <= 0):
            raise ValueError("no uniform bound for non-oscillatory modes")
        r = self.omega2 / self.eigenvalues
        return float(np.sqrt(max(np.max(r), np.max(1.0 / r))))


@dataclass(frozen=True)
class HeatModelSpec:
    """Rod ``(0, 1)`` with insulated ends, forced at ``xi = 1``.

    Modes ``cos(n pi xi)`` for ``n = 0 .. N-1`` with pure decay ``exp(-lambda_n t)``.
    """

    n_modes: int = 16

    length = 1.0

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return (np.pi * np.arange(self.n_modes)) ** 2

    @cached_property
    def boundary_values(self) -> np.ndarray:
        n = np.arange(self.n_modes)
        return np.where(n == 0, 1.0, math.sqrt(2.0) * (-1.0) ** n)

    def eigenfunctions(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        n = np.arange(self.n_modes)[:, None]
        return np.where(n == 0, 1.0, math.sqrt(2.0) * np.cos(n * np.pi * xi[None, :]))

    @cached_property
    def modes(self) -> LinearModes:
        N = self.n_modes
        return LinearModes(
            kind=np.full(N, DECAY, dtype=np.int8),
            param=self.eigenvalues.copy(),
            input=np.concatenate([self.boundary_values, np.zeros(N)]),
            norm_weights=np.concatenate([np.ones(N), np.zeros(N)]),
        )

    def contraction_constant(self) -> float:
        return 1.0

    def decay_factors(self, dt: float) -> np.ndarray:
        return np.exp(-self.eigenvalues * dt)


def eigenpairs(spec: WaveModelSpec):
    """Eigenvalues ``((2n-1)/4)^2`` and the orthonormal sine eigenfunctions.

    Returns ``(lam, phi)`` where ``phi(xi)`` evaluates all modes on a grid,
    shape ``(n_modes, len(xi))``.
    """
    k = spec.wavenumbers

    def phi(xi):
        xi = np.asarray(xi, dtype=float)
        return np.sin(k[:, None] * xi[None, :]) / math.sqrt(math.pi)

    return spec.eigenvalues.copy(), phi


def semigroup_apply(spec: WaveModelSpec, state: SpectralState, dt: float) -> SpectralState:
    """Exact modal rotation by ``dt``."""
    return SpectralState.from_vector(spec.modes.propagate(state.as_vector(), dt))


def neumann_profile(xi, a: float = 1.0):
    """``D_{B,1} a``: solves ``v'' = v`` with ``v'(0) = 0`` and ``v'(2 pi) = a``."""
    xi = np.asarray(xi, dtype=float)
    return a * (np.exp(-xi) + np.exp(xi)) / _SINH_2PI


def neumann_map(spec: WaveModelSpec, a: float = 1.0):
    """Boundary profile for amplitude ``a`` and its modal projections.

    The projections ``d_n = <D_{B,1} 1, phi_n>`` use a composite Simpson rule
    on ``spec.quad_points`` intervals; they are cached on ``spec.coeffs``.
    """
    d = spec.__dict__.get("_unit_projections")
    if d is None:
        n = spec.quad_points + (spec.quad_points % 2)
        xi = np.linspace(0.0, spec.length, n + 1)
        _, phi = eigenpairs(spec)
        f = phi(xi) * neumann_profile(xi)[None, :]
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        d = (f @ w) * (spec.length / n) / 3.0
        spec.__dict__["_unit_projections"] = d

    def profile(xi):
        return neumann_profile(xi, a)

    return profile, NeumannMapCoeffs(d=a * d, injected=np.concatenate([a * d, -a * d]))


def boundary_inject(spec: WaveModelSpec, coeffs: NeumannMapCoeffs, s: float) -> SpectralState:
    """Increment ``(A - I)(0, D s)^T = (D s, -D s)^T`` in mode space."""
    return SpectralState(coeffs.d * s, -coeffs.d * s)


def heat_variant(spec: WaveModelSpec | None = None, n_modes: int | None = None) -> HeatModelSpec:
    """Heat model with the same truncation as ``spec`` unless ``n_modes`` is given."""
    if n_modes is None:
        n_modes = spec.n_modes if spec is not None else 16
    return HeatModelSpec(n_modes=n_modes)
