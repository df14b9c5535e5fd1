"""Independent dense re-implementation of one full-solve vortex step.

Everything is built from N x N pair arrays (periodic minimum image, no cell
list, no CSR, no CG), so agreement with the production step checks the
neighbour search, assembly, sparse solve and update logic together.
"""

from __future__ import annotations

import math

import numpy as np


def wendland(r, h):
    q = r / h
    t = np.clip(1.0 - q / 2.0, 0.0, None)
    return 7.0 / (4.0 * math.pi * h * h) * t ** 4 * (2.0 * q + 1.0)


def wendland_dw_dr(r, h):
    # d/dq of (1 - q/2)^4 (2q + 1) is -5 q (1 - q/2)^3
    q = r / h
    t = np.clip(1.0 - q / 2.0, 0.0, None)
    return 7.0 / (4.0 * math.pi * h * h) * (-5.0 * q * t ** 3) / h


def pair_arrays(x, box, h):
    """Displacements x_i - x_j under the minimum image, distances and the support mask."""
    d = x[:, None, :] - x[None, :, :]
    d -= box * np.round(d / box)
    r = np.sqrt((d ** 2).sum(-1))
    mask = (r < 2.0 * h) & ~np.eye(len(x), dtype=bool)
    return d, r, mask


def raw_gradients(d, r, mask, h):
    safe = np.where(r > 0, r, 1.0)
    f = np.where(mask, wendland_dw_dr(r, h) / safe, 0.0)
    return f[..., None] * d


def corrected_gradients(gw, d, vol):
    # moment matrix M_i = sum_j V_j grad W_ij (x_j - x_i)^T, then L_i = M_i^{-1}
    m = np.einsum("j,ijk,ijl->ikl", vol, gw, -d)
    out = np.empty_like(gw)
    for i in range(len(m)):
        li = np.linalg.inv(m[i]) if np.linalg.det(m[i]) > 0.25 else np.eye(2)
        out[i] = gw[i] @ li.T
    return out


def lattice_sum(dx, h):
    m = int(math.ceil(2 * h / dx)) + 2
    total = 0.0
    for a in range(-m, m + 1):
        for b in range(-m, m + 1):
            total += wendland(math.hypot(a * dx, b * dx), h)
    return total * dx * dx


def reference_step(x0, u0, vol, *, h, dx, nu, rho0, box, eta2, cfl_velocity=0.25, cfl_viscous=0.125,
                   shifting_coeff=0.1, surface_threshold=0.85):
    n = len(x0)
    umax0 = np.sqrt((u0 ** 2).sum(1)).max()
    dt = min(cfl_velocity * h / umax0, cfl_viscous * h * h / nu)

    x_star = np.mod(x0 + u0 * dt, box)
    d, r, mask = pair_arrays(x_star, box, h)
    gw_raw = raw_gradients(d, r, mask, h)
    g = corrected_gradients(gw_raw, d, vol)
    xdotgw = (d * gw_raw).sum(-1)
    morris = np.where(mask, xdotgw / (r ** 2 + eta2), 0.0) * vol[None, :]

    # viscous predictor: sum_j V_j 2 nu x.gradW/(r^2+eta^2) (u_i - u_j)
    c_visc = 2.0 * nu * morris
    visc = c_visc.sum(1)[:, None] * u0 - c_visc @ u0
    u_star = u0 + dt * visc

    # pressure Poisson: -sum_j c_ij (P_i - P_j) = -(1/dt) div u*_i, with c from a = 1/rho
    c = (2.0 / rho0) * morris
    a = c.copy()
    np.fill_diagonal(a, -c.sum(1))
    gamma = float(np.diag(a).mean())
    div = np.einsum("j,ijk,ijk->i", vol, u_star[None, :, :] - u_star[:, None, :], g)
    rhs = -div / dt
    rhs = rhs - rhs.mean()
    pressure = np.linalg.solve(a + gamma / n * np.ones((n, n)), rhs)

    grad_p = np.einsum("j,ij,ijk->ik", vol, pressure[None, :] - pressure[:, None], g)
    u_new = u_star - dt * grad_p / rho0
    x_new = np.mod(x0 + 0.5 * (u_new + u0) * dt, box)

    umax = np.sqrt((u_new ** 2).sum(1)).max()
    d2, r2, mask2 = pair_arrays(x_new, box, h)
    conc = vol * wendland(0.0, h) + (np.where(mask2, wendland(r2, h), 0.0) * vol[None, :]).sum(1)
    grad_c = np.einsum("j,ijk->ik", vol, raw_gradients(d2, r2, mask2, h))
    interior = conc >= surface_threshold * lattice_sum(dx, h)
    x_new = np.where(interior[:, None], x_new - shifting_coeff * h * umax * dt * grad_c, x_new)
    x_new = np.mod(x_new, box)
    return {"dt": dt, "positions": x_new, "velocities": u_new, "pressures": pressure}
