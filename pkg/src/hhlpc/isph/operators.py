"""Pairwise SPH operators.  All reductions are ``np.bincount`` over the sorted pair list,
so summation order is fixed and results are bit-stable for a given table."""

from __future__ import annotations

import numpy as np

from .kernel import KernelSpec, kernel_dwdr_over_r, kernel_w
from .neighbors import NeighborTable


def _reduce(table: NeighborTable, per_pair: np.ndarray) -> np.ndarray:
    if per_pair.ndim == 1:
        return np.bincount(table.i, weights=per_pair, minlength=table.n)
    return np.stack([np.bincount(table.i, weights=per_pair[:, k], minlength=table.n)
                     for k in range(per_pair.shape[1])], axis=1)


def grad_w_pairs(table: NeighborTable, kernel: KernelSpec) -> np.ndarray:
    return kernel_dwdr_over_r(table.r, kernel)[:, None] * table.rij


def sph_gradient(field, volumes, table: NeighborTable, kernel: KernelSpec, gw=None) -> np.ndarray:
    """grad phi_i = sum_j V_j (phi_j - phi_i) grad_i W_ij."""
    field = np.asarray(field, dtype=np.float64)
    gw = grad_w_pairs(table, kernel) if gw is None else gw
    diff = (field[table.j] - field[table.i]) * volumes[table.j]
    return _reduce(table, diff[:, None] * gw)


def sph_divergence(vec, volumes, table: NeighborTable, kernel: KernelSpec, gw=None) -> np.ndarray:
    """div u_i = sum_j V_j (u_j - u_i) . grad_i W_ij."""
    vec = np.asarray(vec, dtype=np.float64)
    gw = grad_w_pairs(table, kernel) if gw is None else gw
    du = vec[table.j] - vec[table.i]
    return _reduce(table, volumes[table.j] * np.einsum("pk,pk->p", du, gw))


def morris_pair_coefficients(coeff, volumes, table: NeighborTable, kernel: KernelSpec, eta2: float) -> np.ndarray:
    """c_ij = V_j (a_i + a_j) x_ij . grad_i W_ij / (r_ij^2 + eta^2); never positive."""
    if eta2 <= 0:
        raise ValueError("eta^2 must be positive")
    coeff = np.asarray(coeff, dtype=np.float64)
    r2 = table.r ** 2
    xdotgw = kernel_dwdr_over_r(table.r, kernel) * r2
    return volumes[table.j] * (coeff[table.i] + coeff[table.j]) * xdotgw / (r2 + eta2)


def sph_laplacian_morris(coeff, field, volumes, table: NeighborTable, kernel: KernelSpec, eta2: float) -> np.ndarray:
    """(div a grad b)_i = sum_j c_ij (b_i - b_j), scalar or vector-valued b."""
    field = np.asarray(field, dtype=np.float64)
    c = morris_pair_coefficients(coeff, volumes, table, kernel, eta2)
    bij = field[table.i] - field[table.j]
    if field.ndim == 1:
        return _reduce(table, c * bij)
    return _reduce(table, c[:, None] * bij)


def concentration(volumes, table: NeighborTable, kernel: KernelSpec) -> np.ndarray:
    """Kernel-sum particle concentration, self contribution included."""
    w = kernel_w(table.r, kernel)
    return volumes * kernel_w(0.0, kernel) + _reduce(table, volumes[table.j] * w)


def concentration_gradient(volumes, table: NeighborTable, kernel: KernelSpec, gw=None) -> np.ndarray:
    gw = grad_w_pairs(table, kernel) if gw is None else gw
    return _reduce(table, volumes[table.j][:, None] * gw)


def lattice_concentration(dx: float, kernel: KernelSpec) -> float:
    """Concentration of an interior particle on an infinite square lattice of spacing dx."""
    m = int(np.ceil(kernel.support_radius / dx)) + 1
    g = np.arange(-m, m + 1) * dx
    xx, yy = np.meshgrid(g, g)
    return float(np.sum(kernel_w(np.hypot(xx, yy), kernel)) * dx * dx)


def gradient_correction(volumes, table: NeighborTable, kernel: KernelSpec, gw=None, mask=None) -> np.ndarray:
    """Per-particle 2x2 matrices making the difference-form gradient exact for linear fields.

    Particles outside ``mask`` (or with a near-singular moment matrix) get the identity.
    """
    gw = grad_w_pairs(table, kernel) if gw is None else gw
    outer = gw[:, :, None] * (-table.rij)[:, None, :]
    m = _reduce(table, volumes[table.j][:, None] * outer.reshape(-1, 4))
    m = m.reshape(table.n, 2, 2)
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    ok = det > 0.25
    if mask is not None:
        ok &= mask
    inv = np.empty_like(m)
    safe = np.where(ok, det, 1.0)
    inv[:, 0, 0] = m[:, 1, 1] / safe
    inv[:, 1, 1] = m[:, 0, 0] / safe
    inv[:, 0, 1] = -m[:, 0, 1] / safe
    inv[:, 1, 0] = -m[:, 1, 0] / safe
    inv[~ok] = np.eye(2)
    return inv


def corrected_grad_w_pairs(table: NeighborTable, kernel: KernelSpec, correction: np.ndarray) -> np.ndarray:
    gw = grad_w_pairs(table, kernel)
    return np.einsum("pab,pb->pa", correction[table.i], gw)
