"""1D-1V Vlasov-Poisson solver for the two-stream instability.

Semi-Lagrangian Strang splitting with cubic Lagrange interpolation.  The
periodic Poisson solve for the potential is an LSP handed to the same
predictor-corrector policies as the SPH pressure solve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .linsys import ConvergenceError, Lsp, SparseMatrix, csr_from_triplets, oracle_solve
from .pcore import SkipLedger


class VlasovFailure(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"Vlasov run failed at step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass(eq=False)
class PhaseSpaceGrid:
    f: np.ndarray              # shape (nx, nv)
    L: float
    v_max: float
    q: float = -1.0
    m: float = 1.0
    eps0: float = 1.0
    n0: float = 1.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.f.ndim != 2 or self.f.shape[0] < 3 or self.f.shape[1] < 4:
            raise ValueError("f must be an (nx >= 3, nv >= 4) array")
        if self.L <= 0 or self.v_max <= 0:
            raise ValueError("L and v_max must be positive")

    @property
    def nx(self) -> int:
        return self.f.shape[0]

    @property
    def nv(self) -> int:
        return self.f.shape[1]

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.nv - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.nv)

    def with_f(self, f: np.ndarray) -> "PhaseSpaceGrid":
        return replace(self, f=f)

    def total_mass(self) -> float:
        return float(np.trapezoid(self.f, dx=self.dv, axis=1).sum() * self.dx)


@dataclass(eq=False)
class FieldState:
    phi: np.ndarray
    e_field: np.ndarray
    last_update_step: int = -1


def init_two_stream(nx: int = 64, nv: int = 128, L: float = 4.0 * math.pi, v0: float = 1.2, vt: float = 0.3,
                    alpha: float = 0.01, k_mode: int = 1, v_max: Optional[float] = None,
                    n0: float = 1.0) -> PhaseSpaceGrid:
    if nx < 3 or nv < 4:
        raise ValueError("need nx >= 3 and nv >= 4")
    if vt <= 0 or L <= 0 or n0 < 0:
        raise ValueError("vt and L must be positive, n0 non-negative")
    if abs(alpha) >= 1:
        raise ValueError("|alpha| must be < 1 to keep f non-negative")
    v_max = abs(v0) + 8.0 * vt if v_max is None else v_max
    if v_max < abs(v0) + 6.0 * vt:
        raise ValueError("v_max must be at least v0 + 6 vt")
    x = np.arange(nx) * (L / nx)
    v = np.linspace(-v_max, v_max, nv)
    fv = n0 / (2.0 * math.sqrt(2.0 * math.pi) * vt) * (
        np.exp(-((v - v0) ** 2) / (2 * vt ** 2)) + np.exp(-((v + v0) ** 2) / (2 * vt ** 2)))
    fx = 1.0 + alpha * np.cos(2.0 * math.pi * k_mode * x / L)
    return PhaseSpaceGrid(np.outer(fx, fv), L, v_max, n0=n0)


# ------------------------------------------------------------ advection

def _cubic_weights(theta: np.ndarray) -> tuple[np.ndarray, ...]:
    # Lagrange weights on nodes -1, 0, 1, 2 for a point at theta in [0, 1)
    wm1 = -theta * (theta - 1.0) * (theta - 2.0) / 6.0
    w0 = (theta + 1.0) * (theta - 1.0) * (theta - 2.0) / 2.0
    w1 = -(theta + 1.0) * theta * (theta - 2.0) / 2.0
    w2 = (theta + 1.0) * theta * (theta - 1.0) / 6.0
    return wm1, w0, w1, w2


def _shift_periodic(f: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Rows of f (axis 0 periodic) sampled at i - shift[j] for every column j."""
    n = f.shape[0]
    base = np.floor(-shift)
    theta = -shift - base
    i = np.arange(n)[:, None]
    k = (i + base[None, :].astype(np.int64))
    cols = np.arange(f.shape[1])[None, :]
    out = np.zeros_like(f)
    for off, w in zip((-1, 0, 1, 2), _cubic_weights(theta)):
        out += w[None, :] * f[(k + off) % n, cols]
    return out


def _shift_open(f: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Columns of f (axis 1, zero outside) sampled at j - shift[i] for every row i."""
    n = f.shape[1]
    base = np.floor(-shift)
    theta = -shift - base
    j = np.arange(n)[None, :]
    k = j + base[:, None].astype(np.int64)
    rows = np.arange(f.shape[0])[:, None]
    out = np.zeros_like(f)
    for off, w in zip((-1, 0, 1, 2), _cubic_weights(theta)):
        idx = k + off
        inside = (idx >= 0) & (idx < n)
        vals = f[rows, np.clip(idx, 0, n - 1)]
        out += w[:, None] * np.where(inside, vals, 0.0)
    return out


def advect_x(grid: PhaseSpaceGrid, dt: float) -> PhaseSpaceGrid:
    """f(x, v) <- f(x - v dt, v), periodic in x."""
    if dt == 0:
        return grid
    return grid.with_f(_shift_periodic(grid.f, grid.v * dt / grid.dx))


def advect_v(grid: PhaseSpaceGrid, e_field: np.ndarray, dt: float) -> PhaseSpaceGrid:
    """f(x, v) <- f(x, v - (q/m) E dt), zero inflow at +-v_max."""
    e_field = np.asarray(e_field, dtype=np.float64)
    if dt == 0 or not np.any(e_field):
        return grid
    return grid.with_f(_shift_open(grid.f, (grid.q / grid.m) * e_field * dt / grid.dv))


# ------------------------------------------------------------ fields

def charge_density(grid: PhaseSpaceGrid) -> np.ndarray:
    """q (int f dv - n0), trapezoid in v."""
    return grid.q * (np.trapezoid(grid.f, dx=grid.dv, axis=1) - grid.n0)


def assemble_poisson_1d(nx: int, dx: float) -> tuple[SparseMatrix, float]:
    """Periodic -d2/dx2 stencil and the rank-one pin weight gamma/nx (gamma = mean diagonal)."""
    if nx < 3:
        raise ValueError("nx must be >= 3")
    i = np.arange(nx)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i - 1) % nx, (i + 1) % nx])
    vals = np.concatenate([np.full(nx, 2.0), np.full(nx, -1.0), np.full(nx, -1.0)]) / dx ** 2
    gamma = 2.0 / dx ** 2
    return csr_from_triplets(nx, rows=rows, cols=cols, vals=vals), gamma / nx


def poisson_lsp(grid: PhaseSpaceGrid, rho: Optional[np.ndarray] = None) -> Lsp:
    rho = charge_density(grid) if rho is None else rho
    a, shift = assemble_poisson_1d(grid.nx, grid.dx)
    rhs = rho / grid.eps0
    return Lsp(a, rhs - rhs.mean(), shift=shift, solve_tol=1e-12)


def electric_field(phi: np.ndarray, dx: float) -> np.ndarray:
    return -(np.roll(phi, -1) - np.roll(phi, 1)) / (2.0 * dx)


def solve_field(lsp: Lsp, dx: float, step: int = -1) -> FieldState:
    oracle_solve(lsp)
    phi = lsp.reference_solution - lsp.reference_solution.mean()
    return FieldState(phi, electric_field(phi, dx), step)


def init_field(grid: PhaseSpaceGrid) -> FieldState:
    return solve_field(poisson_lsp(grid), grid.dx)


def energies(grid: PhaseSpaceGrid, fld: FieldState) -> tuple[float, float]:
    uk = 0.5 * grid.m * float(np.trapezoid(grid.f * grid.v[None, :] ** 2, dx=grid.dv, axis=1).sum() * grid.dx)
    ue = 0.5 * grid.eps0 * float(np.sum(np.asarray(fld.e_field) ** 2) * grid.dx)
    return uk, ue


# ------------------------------------------------------------ stepping

@dataclass(eq=False)
class VlasovState:
    grid: PhaseSpaceGrid
    fld: FieldState
    dt: float
    time: float = 0.0
    step: int = 0
    e_ref: float = 0.0
    growth_limit: float = 1e6

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.e_ref:
            self.e_ref = max(float(np.abs(self.fld.e_field).max()), 1e-12)


def vlasov_step(state: VlasovState, policy, ledger: SkipLedger | None = None) -> VlasovState:
    """Strang step: half x-advection, field decision, full v-advection, half x-advection."""
    g = advect_x(state.grid, 0.5 * state.dt)
    lsp = poisson_lsp(g)
    lsp.initial_guess = state.fld.phi
    decision = policy.decide(state.step, state.fld.phi, lsp)
    fld = state.fld
    iterations = 0
    if not decision.skip:
        try:
            fld = solve_field(lsp, g.dx, state.step)
        except ConvergenceError as exc:
            raise VlasovFailure(state.step, "Poisson solve diverged") from exc
        iterations = lsp.reference_iterations
    if ledger is not None:
        ledger.record(decision, iterations)
    g = advect_v(g, fld.e_field, state.dt)
    g = advect_x(g, 0.5 * state.dt)
    if not np.all(np.isfinite(g.f)):
        raise VlasovFailure(state.step, "non-finite distribution")
    if np.abs(fld.e_field).max() > state.growth_limit * state.e_ref:
        raise VlasovFailure(state.step, "field growth beyond limit")
    return replace(state, grid=g, fld=fld, time=state.time + state.dt, step=state.step + 1)


def write_energy_csv(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "UK", "UE"])
        for t, uk, ue in rows:
            w.writerow([repr(float(t)), repr(float(uk)), repr(float(ue))])


def write_f_snapshot(path: str | Path, grid: PhaseSpaceGrid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nx", "nv", "L", "v_max"])
        w.writerow([grid.nx, grid.nv, repr(grid.L), repr(grid.v_max)])
        w.writerow(["f"])
        for val in grid.f.ravel():
            w.writerow([repr(float(val))])
