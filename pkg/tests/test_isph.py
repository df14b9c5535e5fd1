import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dense_isph import lattice_sum, pair_arrays, reference_step, wendland, wendland_dw_dr
from hhlpc import cases
from hhlpc.isph import (
    BOUNDARY,
    FLUID,
    IsphParams,
    KernelSpec,
    ParticleSystem,
    SimulationFailure,
    assemble_ppe,
    brute_force_neighbors,
    build_neighbors,
    isph_step,
    kernel_grad_w,
    kernel_w,
)
from hhlpc.isph.operators import (
    concentration,
    corrected_grad_w_pairs,
    gradient_correction,
    lattice_concentration,
    sph_gradient,
    sph_laplacian_morris,
)
from hhlpc.isph.solver import neighbor_table, pair_gradients
from hhlpc.linsys import cg_solve
from hhlpc.pcore import PcConfig, SkipLedger, make_policy

H = 0.13
SPEC = KernelSpec(H)


def lattice(n, dx, jitter=0.0, seed=0):
    g = np.arange(n) * dx
    xx, yy = np.meshgrid(g, g, indexing="ij")
    x = np.column_stack([xx.ravel(), yy.ravel()])
    if jitter:
        x = x + jitter * dx * np.random.default_rng(seed).uniform(-1, 1, x.shape)
    return x


def interior(x, margin):
    lo, hi = x.min(0) + margin, x.max(0) - margin
    return np.all((x > lo) & (x < hi), axis=1)


# ------------------------------------------------------------ kernel

def test_kernel_examples():
    assert kernel_w(0.0, SPEC) == pytest.approx(7 / (4 * math.pi * H * H))
    assert kernel_w(2 * H, SPEC) == 0.0 and kernel_w(3 * H, SPEC) == 0.0
    assert np.all(kernel_grad_w([2 * H, 0.0], SPEC) == 0.0)
    assert np.all(kernel_grad_w([0.0, 0.0], SPEC) == 0.0)


@given(st.floats(0.0, 2.5))
def test_kernel_matches_independent_formula(q):
    r = q * H
    assert kernel_w(r, SPEC) == pytest.approx(wendland(r, H), rel=1e-12, abs=1e-14)
    g = kernel_grad_w([r, 0.0], SPEC)
    assert g[0] == pytest.approx(wendland_dw_dr(r, H), rel=1e-12, abs=1e-12)


@given(st.floats(0.05, 1.95), st.floats(0, 2 * math.pi))
def test_kernel_gradient_is_the_derivative(q, angle):
    rvec = q * H * np.array([math.cos(angle), math.sin(angle)])
    eps = 1e-7 * H
    num = [(kernel_w(np.linalg.norm(rvec + eps * e), SPEC) - kernel_w(np.linalg.norm(rvec - eps * e), SPEC)) / (2 * eps)
           for e in np.eye(2)]
    assert np.allclose(kernel_grad_w(rvec, SPEC), num, rtol=1e-5, atol=1e-6 / H ** 3)


def test_lattice_sum_matches_brute_force_oracle():
    dx = H / 1.3
    assert lattice_concentration(dx, SPEC) == pytest.approx(lattice_sum(dx, H), rel=1e-12)
    x = lattice(21, dx)
    t = build_neighbors(x, 2 * H, x.min(0), x.max(0))
    c = concentration(np.full(len(x), dx * dx), t, SPEC)
    assert np.allclose(c[interior(x, 2 * H)], lattice_sum(dx, H), rtol=1e-12)


@pytest.mark.parametrize("ratio", [3.0, 4.0, 8.0])
def test_lattice_sum_converges_to_one(ratio):
    assert lattice_concentration(H / ratio, SPEC) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.xfail(strict=True, reason="the Wendland C2 lattice sum at h = 1.3 dx is 1.0105")
def test_lattice_sum_within_one_percent_at_default_spacing():
    assert lattice_concentration(H / 1.3, SPEC) == pytest.approx(1.0, abs=1e-2)


# ------------------------------------------------------------ neighbours

def _pairs(t):
    return set(zip(t.i.tolist(), t.j.tolist()))


def test_neighbor_examples():
    t = build_neighbors([[0.0, 0.0], [1.9 * H, 0.0]], 2 * H, (0, 0), (1, 1))
    assert _pairs(t) == {(0, 1), (1, 0)}
    t = build_neighbors([[0.0, 0.0], [2.1 * H, 0.0]], 2 * H, (0, 0), (1, 1))
    assert _pairs(t) == set()
    t = build_neighbors([[0.02, 0.5], [0.98, 0.5]], 2 * H, (0, 0), (1, 1), periodic=(True, False))
    assert _pairs(t) == {(0, 1), (1, 0)}
    assert t.r[0] == pytest.approx(0.04)


@given(st.integers(0, 2**31), st.integers(1, 150), st.booleans(), st.booleans())
def test_cell_list_matches_brute_force(seed, n, px, py):
    x = np.random.default_rng(seed).uniform(0, 1, (n, 2))
    args = (x, 2 * H, (0, 0), (1, 1), (px, py))
    fast, slow = build_neighbors(*args), brute_force_neighbors(*args)
    assert np.array_equal(fast.i, slow.i) and np.array_equal(fast.j, slow.j)
    assert np.allclose(fast.rij, slow.rij, atol=1e-15)
    assert _pairs(fast) == {(j, i) for i, j in _pairs(fast)}
    assert not np.any(fast.i == fast.j)
    d, r, mask = pair_arrays(x, np.array([1.0 if px else 1e9, 1.0 if py else 1e9]), H)
    assert _pairs(fast) == set(zip(*np.nonzero(mask)))


# ------------------------------------------------------------ operators

def test_gradient_of_constant_is_exactly_zero():
    dx = H / 1.3
    for jitter in (0.0, 0.3):
        x = lattice(12, dx, jitter)
        t = build_neighbors(x, 2 * H, x.min(0), x.max(0))
        assert np.all(sph_gradient(np.full(len(x), 3.7), np.full(len(x), dx * dx), t, SPEC) == 0.0)


def test_gradient_of_linear_field():
    dx = H / 1.3
    x = lattice(21, dx)
    t = build_neighbors(x, 2 * H, x.min(0), x.max(0))
    vol = np.full(len(x), dx * dx)
    grad = sph_gradient(2.0 * x[:, 0] - 3.0 * x[:, 1], vol, t, SPEC)[interior(x, 2 * H)]
    assert np.all(np.abs(grad - [2.0, -3.0]) <= 0.05 * np.array([2.0, 3.0]))


def test_gradient_correction_exact_for_linear_field_on_disordered_particles():
    dx = H / 1.3
    x = lattice(21, dx, jitter=0.25, seed=3)
    t = build_neighbors(x, 2 * H, x.min(0) - 1, x.max(0) + 1)
    vol = np.full(len(x), dx * dx)
    gw = corrected_grad_w_pairs(t, SPEC, gradient_correction(vol, t, SPEC))
    grad = sph_gradient(2.0 * x[:, 0] - 3.0 * x[:, 1], vol, t, SPEC, gw)
    assert np.allclose(grad[interior(x, 2 * H)], [2.0, -3.0], atol=1e-10)


def test_single_particle_gradient_is_zero():
    t = build_neighbors([[0.5, 0.5]], 2 * H, (0, 0), (1, 1))
    assert np.all(sph_gradient([4.0], np.array([0.01]), t, SPEC) == 0.0)


def test_morris_laplacian():
    dx = H / 1.3
    x = lattice(21, dx)
    t = build_neighbors(x, 2 * H, x.min(0), x.max(0))
    vol = np.full(len(x), dx * dx)
    one = np.ones(len(x))
    eta2 = 0.01 * H * H
    assert np.all(sph_laplacian_morris(one, np.full(len(x), 2.0), vol, t, SPEC, eta2) == 0.0)
    lap = sph_laplacian_morris(one, x[:, 0] ** 2, vol, t, SPEC, eta2)[interior(x, 2 * H)]
    assert np.all(np.abs(lap - 2.0) <= 0.2)
    # coincident particles stay finite thanks to eta^2
    t2 = build_neighbors([[0.5, 0.5], [0.5, 0.5]], 2 * H, (0, 0), (1, 1))
    out = sph_laplacian_morris(np.ones(2), np.array([1.0, 2.0]), np.full(2, dx * dx), t2, SPEC, (0.1 * H) ** 2)
    assert np.all(np.isfinite(out))


# ------------------------------------------------------------ pressure Poisson system

def _tgv(n_side=8, **kw):
    return cases.tgv_init(cases.TgvSpec(n_side=n_side), **kw)


def test_ppe_symmetric_and_matches_dense_solve():
    s = _tgv(8)
    t = neighbor_table(s)
    lsp, info = assemble_ppe(s, t, s.velocities, gw=pair_gradients(s, t))
    assert lsp.matrix.is_symmetric(tol=1e-12)
    assert info.rank_one and lsp.shift > 0
    x = cg_solve(lsp, tol=1e-12).x
    assert np.allclose(x, np.linalg.solve(lsp.dense(), lsp.rhs), atol=1e-9 * np.abs(x).max())
    assert abs(x.mean()) < 1e-10 * np.abs(x).max()


def test_ppe_uniform_translation_has_zero_source():
    s = _tgv(8)
    u = np.tile([0.3, -0.7], (s.n, 1))
    t = neighbor_table(s)
    lsp, _ = assemble_ppe(s, t, u)
    assert np.abs(lsp.rhs).max() < 1e-12
    assert np.abs(cg_solve(lsp).x).max() < 1e-12


def test_ppe_two_mirrored_particles():
    p = IsphParams(h=H, dx=H / 1.3, dt_max=1e-3)
    s = ParticleSystem([[0.4, 0.5], [0.6, 0.5]], [[0.1, 0.0], [-0.1, 0.0]], [0, 0], 0.01, [FLUID, FLUID], p)
    lsp, _ = assemble_ppe(s, neighbor_table(s), s.velocities)
    a = lsp.dense()
    assert a.shape == (2, 2) and a[0, 1] == a[1, 0] and a[0, 0] == a[1, 1]
    assert lsp.rhs[0] == pytest.approx(-lsp.rhs[1])


def test_ppe_symmetric_on_dam_break():
    s = cases.dambreak_init(cases.DamBreakSpec(n_width=11, wall_rows=70))
    lsp, info = assemble_ppe(s, neighbor_table(s), np.zeros((s.n, 2)))
    assert lsp.matrix.is_symmetric(tol=1e-12)
    assert info.dirichlet.any() and not info.rank_one


def test_ppe_cg_iterations_at_32():
    s = _tgv(32)
    policy = make_policy(PcConfig("fcs"))
    for _ in range(3):
        t = neighbor_table(s)
        lsp, _ = assemble_ppe(s, t, s.velocities, gw=pair_gradients(s, t))
        assert lsp.matrix.is_symmetric(tol=1e-12)
        assert cg_solve(lsp, tol=1e-8).iterations < 500
        s, _ = isph_step(s, policy)


# ------------------------------------------------------------ time step

def test_quiescent_fluid_is_unchanged():
    s = _tgv(8)
    s = ParticleSystem(s.positions, np.zeros_like(s.velocities), s.pressures, s.mass, s.kind,
                       cases.tgv_params(cases.TgvSpec(n_side=8), dt_max=1e-3))
    new, rep = isph_step(s, make_policy(PcConfig("fcs")))
    assert np.array_equal(new.positions, s.positions)
    assert np.all(new.velocities == 0.0) and np.all(new.pressures == 0.0)
    assert rep.cg_iterations == 0


def test_uniform_translation_is_preserved():
    s = _tgv(8, nu=0.0)
    u = np.tile([0.37, -0.21], (s.n, 1))
    s = ParticleSystem(s.positions, u, s.pressures, s.mass, s.kind, s.params)
    policy = make_policy(PcConfig("fcs"))
    for _ in range(5):
        s, _ = isph_step(s, policy)
        assert np.abs(s.velocities - [0.37, -0.21]).max() <= 1e-10


@pytest.mark.parametrize("warmup", [0, 6])
def test_step_matches_dense_reference(warmup):
    s = _tgv(8)
    policy = make_policy(PcConfig("fcs"))
    for _ in range(warmup):
        s, _ = isph_step(s, policy)
    p = s.params
    ref = reference_step(s.positions, s.velocities, s.volumes, h=p.h, dx=p.dx, nu=p.nu, rho0=p.rho0,
                         box=np.array([1.0, 1.0]), eta2=p.eta2, shifting_coeff=p.shifting_coeff)
    new, rep = isph_step(s, policy)
    assert rep.dt == pytest.approx(ref["dt"], rel=1e-14)
    dpos = new.positions - ref["positions"]
    dpos -= np.round(dpos)
    assert np.abs(dpos).max() <= 1e-8
    assert np.abs(new.velocities - ref["velocities"]).max() <= 1e-8
    assert np.abs(new.pressures - ref["pressures"]).max() <= 1e-8


def test_skip_steps_do_no_solve():
    s = _tgv(8)
    ledger = SkipLedger()
    policy = make_policy(PcConfig("periodic_skip", skip_rate=0.5))
    for _ in range(8):
        before = s.pressures.copy()
        s, rep = isph_step(s, policy, ledger)
        if rep.decision.skip:
            assert rep.cg_iterations == 0 and np.array_equal(s.pressures, before)
        else:
            assert rep.cg_iterations > 0
    assert [it == 0 for it in ledger.solve_iterations] == [d.skip for d in ledger.decisions]
    assert ledger.skips == 4


def test_boundary_particles_stay_put():
    s = cases.dambreak_init(cases.DamBreakSpec(n_width=11, wall_rows=70))
    wall = s.is_boundary
    x_wall = s.positions[wall].copy()
    policy = make_policy(PcConfig("fcs"))
    for _ in range(5):
        s, _ = isph_step(s, policy)
        assert np.array_equal(s.positions[wall], x_wall)
        assert np.all(s.velocities[wall] == 0.0)
    assert s.is_fluid.sum() == 12 * 23


def test_cfl_violation_rejected():
    s = _tgv(8)
    with pytest.raises(ValueError):
        ParticleSystem(s.positions, s.velocities, s.pressures, s.mass, s.kind, s.params, dt=1.0)


def test_blow_up_detector_reports_step():
    s = _tgv(8, ref_speed=0.01)
    with pytest.raises(SimulationFailure) as info:
        isph_step(s, make_policy(PcConfig("fcs")))
    assert info.value.step == 0


@pytest.mark.xfail(strict=True, reason="Morris pressure Laplacian cannot remove the high-wavenumber divergence "
                                      "seen by the kernel-gradient divergence; the ratio stays near 0.9")
def test_projection_reduces_divergence_tenfold():
    s = _tgv(32)
    policy = make_policy(PcConfig("fcs"))
    ratios = []
    for k in range(20):
        s, rep = isph_step(s, policy)
        if k > 5:
            ratios.append(rep.div_rms_after / rep.div_rms_before)
    assert max(ratios) <= 0.10
