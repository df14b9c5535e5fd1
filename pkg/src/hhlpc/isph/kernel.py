"""Wendland C2 kernel in two dimensions, support radius 2h."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    h: float
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise ValueError("only the 2D kernel is implemented")
        if self.h <= 0:
            raise ValueError("smoothing length must be positive")

    @property
    def support_radius(self) -> float:
        return 2.0 * self.h

    @property
    def normalization(self) -> float:
        return 7.0 / (4.0 * math.pi * self.h ** 2)


def kernel_w(r, spec: KernelSpec):
    q = np.asarray(r, dtype=np.float64) / spec.h
    t = np.clip(1.0 - 0.5 * q, 0.0, None)
    return spec.normalization * t ** 4 * (2.0 * q + 1.0)


def kernel_dwdr_over_r(r, spec: KernelSpec):
    """(dW/dr) / r, finite at r = 0; multiplying by x_ij gives grad_i W_ij."""
    q = np.asarray(r, dtype=np.float64) / spec.h
    t = np.clip(1.0 - 0.5 * q, 0.0, None)
    return -5.0 * spec.normalization / spec.h ** 2 * t ** 3


def kernel_grad_w(rvec, spec: KernelSpec):
    """Gradient with respect to particle i of W(|x_i - x_j|); ``rvec`` is x_i - x_j."""
    rvec = np.asarray(rvec, dtype=np.float64)
    r = np.linalg.norm(rvec, axis=-1)
    return kernel_dwdr_over_r(r, spec)[..., None] * rvec
