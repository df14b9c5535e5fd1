"""Projection-method incompressible SPH with the pressure solve delegated to a policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..linsys import ConvergenceError, Lsp, cg_solve, csr_from_triplets
from ..pcore import PcDecision, SkipLedger
from .kernel import KernelSpec
from .neighbors import NeighborTable, build_neighbors
from .operators import (
    concentration,
    concentration_gradient,
    corrected_grad_w_pairs,
    grad_w_pairs,
    gradient_correction,
    lattice_concentration,
    morris_pair_coefficients,
    sph_divergence,
    sph_gradient,
    sph_laplacian_morris,
)

FLUID, BOUNDARY = 0, 1


class SimulationFailure(RuntimeError):
    """Raised by the divergence detector; ``step`` is the step that failed."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"simulation failed at step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass(frozen=True)
class IsphParams:
    h: float
    dx: float
    rho0: float = 1.0
    nu: float = 0.0
    gravity: tuple[float, float] = (0.0, 0.0)
    box_lo: tuple[float, float] = (0.0, 0.0)
    box_hi: tuple[float, float] = (1.0, 1.0)
    periodic: tuple[bool, bool] = (False, False)
    eta2_factor: float = 0.01          # eta^2 = eta2_factor * h^2
    cfl_velocity: float = 0.25
    cfl_gravity: float = 0.25
    cfl_viscous: float = 0.125
    dt_max: float = math.inf
    shifting: bool = False
    # renormalise kernel gradients so divergence and gradient are exact for linear fields
    gradient_correction: bool = False
    # correct only particles whose concentration is at least this fraction of the lattice value
    correction_min_concentration: float = 0.0
    # boundary rows carry the divergence of u* (walls at rest) instead of a zero source
    wall_source: bool = False
    # short-range repulsion from wall particles, strength in velocity^2 units (0 disables)
    wall_repulsion: float = 0.0
    shifting_coeff: float = 0.5
    free_surface: bool = False
    surface_threshold: float = 0.85
    blow_up_factor: float = 50.0
    ref_speed: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: Optional[int] = None

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.h)

    @property
    def eta2(self) -> float:
        return self.eta2_factor * self.h ** 2


@dataclass(eq=False)
class ParticleSystem:
    positions: np.ndarray
    velocities: np.ndarray
    pressures: np.ndarray
    mass: np.ndarray
    kind: np.ndarray
    params: IsphParams
    dt: float = 0.0
    time: float = 0.0
    step: int = 0
    last_solution: Optional[np.ndarray] = None
    c_ref: float = field(default=0.0)

    def __post_init__(self):
        n = len(self.positions)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(n, 2)
        self.velocities = np.asarray(self.velocities, dtype=np.float64).reshape(n, 2)
        self.pressures = np.asarray(self.pressures, dtype=np.float64).reshape(n)
        self.mass = np.broadcast_to(np.asarray(self.mass, dtype=np.float64), (n,)).copy()
        self.kind = np.asarray(self.kind, dtype=np.int8).reshape(n)
        if self.c_ref == 0.0:
            self.c_ref = lattice_concentration(self.params.dx, self.params.kernel)
        if not self.dt:
            self.dt = stable_dt(self)
        elif self.dt > stable_dt(self) * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} violates the CFL bounds ({stable_dt(self)})")

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def is_boundary(self) -> np.ndarray:
        return self.kind == BOUNDARY

    @property
    def is_fluid(self) -> np.ndarray:
        return self.kind == FLUID

    @property
    def volumes(self) -> np.ndarray:
        return self.mass / self.params.rho0

    def max_speed(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.sqrt(np.max(np.einsum("ij,ij->i", self.velocities, self.velocities))))

    def copy(self) -> "ParticleSystem":
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy(),
                       pressures=self.pressures.copy(),
                       last_solution=None if self.last_solution is None else self.last_solution.copy())


def stable_dt(system: ParticleSystem) -> float:
    p = system.params
    bounds = [p.dt_max]
    umax = system.max_speed()
    if umax > 0:
        bounds.append(p.cfl_velocity * p.h / umax)
    g = math.hypot(*p.gravity)
    if g > 0:
        bounds.append(p.cfl_gravity * math.sqrt(p.h / g))
    if p.nu > 0:
        bounds.append(p.cfl_viscous * p.h ** 2 / p.nu)
    dt = min(bounds)
    if not math.isfinite(dt):
        raise ValueError("no finite time step: set dt_max for a flow without velocity, gravity or viscosity")
    return dt


def neighbor_table(system: ParticleSystem, positions: np.ndarray | None = None) -> NeighborTable:
    p = system.params
    x = system.positions if positions is None else positions
    return build_neighbors(x, p.kernel.support_radius, p.box_lo, p.box_hi, p.periodic)


@dataclass(eq=False)
class PpeInfo:
    active: np.ndarray
    dirichlet: np.ndarray
    gamma: float
    rank_one: bool


def assemble_ppe(system: ParticleSystem, table: NeighborTable, u_star: np.ndarray, dt: float | None = None,
                 gw: np.ndarray | None = None) -> tuple[Lsp, PpeInfo]:
    """Symmetric positive (semi)definite form of the pressure Poisson equation.

    Row i reads  -sum_j c_ij (P_i - P_j) = -(1/dt) div u*_i  with the Morris
    coefficients c_ij (a = 1/rho).  Boundary particles that see fluid take
    part with zero source; free-surface particles get P = 0, eliminated
    symmetrically.  Without any Dirichlet row the constant null space is
    removed by the rank-one term gamma/n 11^T (gamma = mean diagonal) and the
    right side is made mean-free, which gives the zero-mean pressure.
    """
    p = system.params
    dt = system.dt if dt is None else dt
    kern = p.kernel
    n = system.n
    vol = system.volumes
    fluid = system.is_fluid
    gw = grad_w_pairs(table, kern) if gw is None else gw

    fluid_nbr = np.bincount(table.i, weights=fluid[table.j].astype(float), minlength=n) > 0
    active = fluid | (system.is_boundary & fluid_nbr)
    if p.free_surface:
        conc = concentration(vol, table, kern)
        dirichlet = fluid & (conc < p.surface_threshold * system.c_ref)
    else:
        dirichlet = np.zeros(n, dtype=bool)

    use = active[table.i] & active[table.j]
    pi, pj = table.i[use], table.j[use]
    sub = NeighborTable(n, pi, pj, table.rij[use], table.r[use], table.offsets)  # offsets unused below
    c = morris_pair_coefficients(np.full(n, 1.0 / p.rho0), vol, sub, kern, p.eta2)
    diag = -np.bincount(pi, weights=c, minlength=n)
    free = active & ~dirichlet
    off = free[pi] & free[pj]

    has_diag = free & (diag > 0)
    gamma = float(diag[has_diag].mean()) if has_diag.any() else 1.0
    # isolated, inactive and Dirichlet rows are decoupled and pinned to zero
    diag = np.where(has_diag, diag, gamma)

    rows = np.concatenate([np.arange(n), pi[off]])
    cols = np.concatenate([np.arange(n), pj[off]])
    vals = np.concatenate([diag, c[off]])
    matrix = csr_from_triplets(n, rows=rows, cols=cols, vals=vals)

    div = sph_divergence(u_star, vol, table, kern, gw)
    src_rows = free if p.wall_source else free & fluid
    rhs = np.where(src_rows, -div / dt, 0.0)
    rank_one = not dirichlet.any() and not (~active).any()
    shift = gamma / n if rank_one else 0.0
    if rank_one:
        # project onto the range of the singular operator so the pinned solution has zero mean
        rhs = rhs - rhs.mean()
    return Lsp(matrix, rhs, shift=shift, solve_tol=p.cg_tol), PpeInfo(active, dirichlet, gamma, rank_one)


def wall_repulsion_accel(system: ParticleSystem, table: NeighborTable) -> np.ndarray:
    """Lennard-Jones type push D [(r0/r)^4 - (r0/r)^2] x_ij / r^2 on fluid i from wall j
    closer than the initial spacing r0."""
    p = system.params
    kind = system.kind
    sel = (kind[table.i] == FLUID) & (kind[table.j] == BOUNDARY) & (table.r < p.dx)
    r = table.r[sel]
    q = p.dx / np.maximum(r, 1e-6 * p.dx)
    mag = p.wall_repulsion * (q ** 4 - q ** 2) / np.maximum(r, 1e-6 * p.dx) ** 2
    acc = np.zeros((system.n, 2))
    for k in range(2):
        acc[:, k] = np.bincount(table.i[sel], weights=mag * table.rij[sel, k], minlength=system.n)
    return acc


def pair_gradients(system: ParticleSystem, table: NeighborTable) -> np.ndarray:
    """Kernel gradients per pair used by divergence and pressure gradient."""
    p = system.params
    if not p.gradient_correction:
        return grad_w_pairs(table, p.kernel)
    mask = system.is_fluid
    if p.correction_min_concentration > 0:
        conc = concentration(system.volumes, table, p.kernel)
        mask = mask & (conc >= p.correction_min_concentration * system.c_ref)
    corr = gradient_correction(system.volumes, table, p.kernel, mask=mask)
    return corrected_grad_w_pairs(table, p.kernel, corr)


def _wrap(system: ParticleSystem, x: np.ndarray) -> np.ndarray:
    p = system.params
    for ax in range(2):
        if p.periodic[ax]:
            L = p.box_hi[ax] - p.box_lo[ax]
            x[:, ax] = p.box_lo[ax] + np.mod(x[:, ax] - p.box_lo[ax], L)
    return x


@dataclass
class StepReport:
    decision: PcDecision
    dt: float
    cg_iterations: int
    div_rms_before: float
    div_rms_after: float


def isph_step(system: ParticleSystem, policy, ledger: SkipLedger | None = None) -> tuple[ParticleSystem, StepReport]:
    """Advance one step.  Raises :class:`SimulationFailure` on divergence."""
    p = system.params
    kern = p.kernel
    step = system.step
    dt = stable_dt(system)
    fluid = system.is_fluid
    fl = fluid[:, None]
    vol = system.volumes
    x0, u0 = system.positions, system.velocities

    x_star = _wrap(system, np.where(fl, x0 + u0 * dt, x0))
    table = neighbor_table(system, x_star)
    gw = pair_gradients(system, table)
    g = np.asarray(p.gravity, dtype=np.float64)
    if p.nu > 0:
        visc = sph_laplacian_morris(np.full(system.n, p.nu), u0, vol, table, kern, p.eta2)
    else:
        visc = np.zeros_like(u0)
    body = visc + g
    if p.wall_repulsion > 0:
        body = body + wall_repulsion_accel(system, table)
    u_star = np.where(fl, u0 + body * dt, 0.0)

    staged = replace(system, positions=x_star, dt=dt)
    lsp, info = assemble_ppe(staged, table, u_star, dt, gw)
    if system.last_solution is not None:
        lsp.initial_guess = system.last_solution

    decision = policy.decide(step, system.last_solution, lsp)
    iterations = 0
    pressures = system.pressures
    last_solution = system.last_solution
    if not decision.skip:
        try:
            if lsp.reference_solution is None:
                res = cg_solve(lsp, tol=p.cg_tol, max_iter=p.cg_max_iter, x0=lsp.initial_guess)
                lsp.reference_solution, lsp.reference_iterations = res.x, res.iterations
            sol = lsp.reference_solution
            iterations = max(lsp.reference_iterations, 1) if np.any(lsp.rhs) else 0
        except ConvergenceError as exc:
            raise SimulationFailure(step, f"pressure solve diverged (residual {exc.residual:.2e})") from exc
        pressures = sol.copy()
        last_solution = sol.copy()
    if ledger is not None:
        ledger.record(decision, iterations)

    grad_p = sph_gradient(pressures, vol, table, kern, gw)
    u_new = np.where(fl, u_star - dt * grad_p / p.rho0, 0.0)
    x_new = np.where(fl, x0 + 0.5 * (u_new + u0) * dt, x0)

    div_before = float(np.sqrt(np.mean(sph_divergence(u_star, vol, table, kern, gw)[fluid & ~info.dirichlet] ** 2)))
    div_after = float(np.sqrt(np.mean(sph_divergence(u_new, vol, table, kern, gw)[fluid & ~info.dirichlet] ** 2)))

    if p.shifting:
        umax = float(np.sqrt(np.max(np.einsum("ij,ij->i", u_new, u_new)))) if system.n else 0.0
        if umax > 0:
            x_new = _wrap(system, x_new)
            t2 = neighbor_table(system, x_new)
            dC = concentration_gradient(vol, t2, kern)
            conc = concentration(vol, t2, kern)
            interior = fluid & (conc >= p.surface_threshold * system.c_ref)
            coeff = p.shifting_coeff * p.h * umax * dt
            x_new = np.where(interior[:, None], x_new - coeff * dC, x_new)
    x_new = _wrap(system, x_new)

    new = replace(system, positions=x_new, velocities=u_new, pressures=pressures, dt=0.0,
                  time=system.time + dt, step=step + 1, last_solution=last_solution)
    _check(new, step)
    return new, StepReport(decision, dt, iterations, div_before, div_after)


def _check(system: ParticleSystem, step: int) -> None:
    p = system.params
    if not (np.all(np.isfinite(system.positions)) and np.all(np.isfinite(system.velocities))
            and np.all(np.isfinite(system.pressures))):
        raise SimulationFailure(step, "non-finite state")
    vmax = system.max_speed()
    if vmax > p.blow_up_factor * p.ref_speed:
        raise SimulationFailure(step, f"max speed {vmax:.3g} exceeds {p.blow_up_factor} x reference {p.ref_speed:.3g}")
