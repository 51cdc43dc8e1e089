"""Null controls for the Galerkin system ``x' = A x + B v`` with scalar input.

Controls are piecewise constant on a uniform grid.  Each step has a
closed-form response, so the map from control values to the terminal state is
an exact matrix ``Phi``.  Norms are taken in the state-space metric; the
minimum-energy control is the adjoint solution
``v = Phi^T (Phi Phi^T)^{-1} r`` written in coordinates where that metric
is Euclidean.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .operators import LinearModes

__all__ = [
    "ControlError",
    "ControlGrid",
    "ControlResult",
    "GramianFactorization",
    "as_modes",
    "input_matrix",
    "input_map",
    "controlled_states",
    "min_norm_control",
    "vanishing_energy_sequence",
    "heat_approx_null",
]


class ControlError(ValueError):
    pass


def as_modes(model) -> LinearModes:
    return model if isinstance(model, LinearModes) else model.modes


@dataclass(frozen=True)
class ControlGrid:
    """Piecewise-constant scalar control, ``values[k]`` on ``[k dt, (k+1) dt)``."""

    horizon: float
    values: np.ndarray

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("values must be a non-empty 1-d array")

    @classmethod
    def zeros(cls, horizon: float, n_steps: int) -> "ControlGrid":
        return cls(horizon, np.zeros(n_steps))

    @property
    def n_steps(self) -> int:
        return len(self.values)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    @property
    def energy(self) -> float:
        """``int_0^T v(t)^2 dt``."""
        return float(np.sum(self.values**2) * self.dt)

    def __call__(self, t: float) -> float:
        """Left-continuous value (what a jump at time ``t`` sees); 0 after the horizon."""
        k = max(int(math.ceil(t / self.dt)) - 1, 0)
        return float(self.values[k]) if k < self.n_steps else 0.0

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v"])
            for t, v in zip(self.edges[:-1], self.values):
                w.writerow([repr(float(t)), repr(float(v))])


def input_matrix(model, T: float, n_steps: int) -> np.ndarray:
    """``Phi`` with ``Phi @ v`` the state reached from 0 at ``T`` (shape (2N, n_steps))."""
    m = as_modes(model)
    dt = T / n_steps
    F = m.step_response(dt)
    cols = [m.propagate(F, T - (k + 1) * dt) for k in range(n_steps)]
    return np.stack(cols, axis=1)


def input_map(model, grid: ControlGrid) -> np.ndarray:
    """Terminal state from 0 under ``grid``, stepping the exact forced update."""
    m = as_modes(model)
    x = np.zeros(m.dim)
    for v in grid.values:
        x = m.forced_step(x, grid.dt, v)
    return x


def controlled_states(model, grid: ControlGrid, x0=None) -> np.ndarray:
    """Controlled trajectory at every step edge, shape ``(n_steps + 1, 2N)``."""
    m = as_modes(model)
    out = np.empty((grid.n_steps + 1, m.dim))
    out[0] = 0.0 if x0 is None else x0
    for k, v in enumerate(grid.values):
        out[k + 1] = m.forced_step(out[k], grid.dt, v)
    return out


@dataclass(frozen=True)
class GramianFactorization:
    """Eigen-factorisation of ``W = Psi Psi^T / dt`` in orthonormal coordinates."""

    W: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    reg: float
    dt: float

    @classmethod
    def build(cls, Psi: np.ndarray, dt: float, reg_floor: float = 1e-12) -> "GramianFactorization":
        W = Psi @ Psi.T / dt
        W = 0.5 * (W + W.T)
        lam, U = np.linalg.eigh(W)
        reg = reg_floor * float(np.trace(W)) / W.shape[0]
        return cls(W, lam, U, reg, dt)

    @property
    def condition(self) -> float:
        lo = self.eigvals[0]
        return math.inf if lo <= 0 else float(self.eigvals[-1] / lo)

    def solve(self, r, reg: float | None = None) -> np.ndarray:
        """``(W + reg I)^{-1} r``."""
        reg = self.reg if reg is None else reg
        c = self.eigvecs.T @ r
        return self.eigvecs @ (c / (np.maximum(self.eigvals, 0.0) + reg))


@dataclass
class ControlResult:
    grid: ControlGrid
    terminal: np.ndarray
    target: np.ndarray
    residual: float
    energy: float
    reg: float
    condition: float
    achieved: bool = True
    extra: dict = field(default_factory=dict)


def _metric(m: LinearModes):
    active = m.norm_weights > 0
    return active, np.sqrt(m.norm_weights[active])


def _mode_names(m, vec, active):
    full = np.zeros(m.dim)
    full[np.flatnonzero(active)] = vec
    weight = full[: m.n_modes] ** 2 + full[m.n_modes:] ** 2
    return [int(i) + 1 for i in np.argsort(weight)[::-1][:3]]


def min_norm_control(model, x0, target=None, T: float = 4 * math.pi, n_steps: int = 256,
                     reg_floor: float = 1e-12, max_condition: float = 1e14) -> ControlResult:
    """Least-energy piecewise-constant control steering ``x0`` to ``target`` at ``T``.

    Raises :class:`ControlError` naming the worst-reached modes when the
    Gramian condition number exceeds ``max_condition``.
    """
    m = as_modes(model)
    x0 = np.asarray(x0, dtype=float)
    target = np.zeros(m.dim) if target is None else np.asarray(target, dtype=float)
    dt = T / n_steps
    Phi = input_matrix(m, T, n_steps)
    active, q = _metric(m)
    Psi = q[:, None] * Phi[active]
    fac = GramianFactorization.build(Psi, dt, reg_floor)
    if fac.condition > max_condition:
        worst = _mode_names(m, fac.eigvecs[:, 0], active)
        raise ControlError(
            f"Gramian condition {fac.condition:.3g} exceeds {max_condition:.3g}; "
            f"modes {worst} are nearly unreachable at T={T:g} with {n_steps} steps")
    r = q * (target - m.propagate(x0, T))[active]
    v = Psi.T @ fac.solve(r) / dt
    grid = ControlGrid(T, v)
    terminal = m.propagate(x0, T) + Phi @ v
    residual = float(m.norm(terminal - target))
    return ControlResult(grid, terminal, target, residual, grid.energy, fac.reg, fac.condition)


def vanishing_energy_sequence(model, x0, times, steps_per_unit: float | None = None,
                              base_steps: int = 128, **kw):
    """Null-control energies at each horizon, on one common step size.

    A step ``dt`` dividing every horizon makes shorter-horizon controls
    admissible (padded with zeros at the start) on longer horizons, so the
    minimum energies are non-increasing up to solver tolerance.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("horizons must increase")
    dt = times[0] / base_steps if steps_per_unit is None else 1.0 / steps_per_unit
    results = []
    for T in times:
        n = T / dt
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            raise ValueError(f"step {dt:g} does not divide horizon {T:g}")
        results.append(min_norm_control(model, x0, None, T, int(round(n)), **kw))
    return np.array([r.energy for r in results]), results


def heat_approx_null(model, x0, T: float, eps: float, n_steps: int = 256,
                     reg_floor: float = 1e-14, reg_start: float = 1e-2) -> ControlResult:
    """Tikhonov path for an ``eps``-approximate null control of a decaying system.

    The regularisation shrinks by decades from ``reg_start * trace / N``
    until the terminal norm is at most ``eps``; if the floor is reached first
    the result has ``achieved = False`` and carries the residual.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = as_modes(model)
    x0 = np.asarray(x0, dtype=float)
    dt = T / n_steps
    Phi = input_matrix(m, T, n_steps)
    active, q = _metric(m)
    Psi = q[:, None] * Phi[active]
    fac = GramianFactorization.build(Psi, dt, reg_floor)
    free = m.propagate(x0, T)
    r = -q * free[active]
    scale = float(np.trace(fac.W)) / fac.W.shape[0]
    rel = reg_start
    while True:
        reg = rel * scale
        v = Psi.T @ fac.solve(r, reg) / dt
        terminal = free + Phi @ v
        residual = float(m.norm(terminal))
        if residual <= eps or rel <= reg_floor:
            break
        rel /= 10.0
    grid = ControlGrid(T, v)
    return ControlResult(grid, terminal, np.zeros(m.dim), residual, grid.energy, reg,
                         fac.condition, achieved=residual <= eps)
