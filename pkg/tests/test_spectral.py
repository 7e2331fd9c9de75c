import json
import math

import numpy as np
import pytest

from slabwave.errors import DomainError, GeometryRejectedError, SpectrumWarning
from slabwave.slabgeom import Grid2D, SlabGeometry, loads_modal_field
from slabwave.spectral import (
    assemble_3d_eigs,
    boundary_flux_norm,
    cylinder_eigs,
    degenerate_clusters,
    disk_eigensolve,
    disk_operator,
    export_eigenpairs,
    normal_derivative_on_gamma,
    rellich_sides,
    weyl_fit,
)
from tests.conftest import bump_potential

# squares of Bessel zeros (mpmath, 17 digits)
J01_SQ = 5.7831859629467845
J11_SQ = 14.681970642123893
J21_SQ = 26.374616427163391
J02_SQ = 30.471262343662086

GEOM = SlabGeometry(math.pi, 1, 1.0)


@pytest.fixture(scope="module")
def disk64():
    return disk_eigensolve(GEOM, 0.0, 12, h=1 / 64)


def test_bessel_zero_oracle(disk64):
    nus = [p.nu for p in disk64]
    assert nus[0] == pytest.approx(J01_SQ, rel=1e-3)
    assert nus[1] == pytest.approx(J11_SQ, rel=1e-3)
    assert nus[2] == pytest.approx(J11_SQ, rel=1e-3)
    assert nus[3] == pytest.approx(J21_SQ, rel=1e-3)
    assert nus[5] == pytest.approx(J02_SQ, rel=1e-3)
    clusters = degenerate_clusters(disk64)
    assert [2, 3] in clusters and [4, 5] in clusters


def test_second_order_convergence():
    errs = [abs(disk_eigensolve(GEOM, 0.0, 1, h=h)[0].nu - J01_SQ) for h in (1 / 16, 1 / 32, 1 / 64)]
    assert errs[1] < errs[0] / 2.5 and errs[2] < errs[1] / 2.5


def test_constant_shift_is_exact():
    grid = Grid2D.covering(1.0, 1 / 32)
    a = disk_eigensolve(GEOM, 0.0, 6, grid=grid)
    b = disk_eigensolve(GEOM, 3.5 * np.ones((grid.n, grid.n)), 6, grid=grid)
    assert np.allclose([q.nu - p.nu for p, q in zip(a, b)], 3.5, atol=1e-9)


def test_normalization_and_orthogonality(disk64):
    h = disk64[0].grid.h
    P = np.array([p.psi.ravel() for p in disk64])
    gram = h * h * P @ P.T
    assert np.max(np.abs(gram - np.eye(len(disk64)))) < 1e-8


def test_operator_is_symmetric():
    A, _ = disk_operator(Grid2D.covering(1.0, 1 / 16), 1.0, 0.0)
    assert abs(A - A.T).max() < 1e-12


def test_negative_potential_warns():
    grid = Grid2D.covering(1.0, 1 / 16)
    with pytest.warns(SpectrumWarning):
        pairs = disk_eigensolve(GEOM, -100.0 * np.ones((grid.n, grid.n)), 2, grid=grid)
    assert pairs[0].nu < 0


def test_count_cap():
    with pytest.raises(DomainError):
        disk_eigensolve(GEOM, 0.0, 10_000, h=1 / 8)


def test_first_radial_flux_matches_bessel_derivative(disk64):
    # psi_1 = J0(j r) / (sqrt(pi) |J1(j)|), so d_r psi_1(1) = -j / sqrt(pi)
    fl = disk64[0].flux(np.linspace(0, 2 * math.pi, 64, endpoint=False))
    assert np.mean(fl) == pytest.approx(-math.sqrt(J01_SQ / math.pi), rel=2e-4)
    assert np.ptp(fl) < 1e-3


@pytest.mark.xfail(strict=True, reason="Cartesian discretization leaves O(h^1.5) angular ripple in the flux")
def test_first_radial_flux_angle_independent_to_1e8(disk64):
    fl = disk64[0].flux(np.linspace(0, 2 * math.pi, 64, endpoint=False))
    assert np.ptp(fl) < 1e-8


def test_rellich_identity(disk64):
    for p in disk64[:6]:
        vol, bnd = rellich_sides(p.grid, p)
        assert abs(vol - bnd) < 5e-3 * vol


def test_rellich_with_potential():
    grid = Grid2D.covering(1.0, 1 / 64)
    X, Y = grid.mesh()
    V = 2.0 + X**2 + 0.5 * Y**2
    for p in disk_eigensolve(GEOM, V, 3, grid=grid):
        vol, bnd = rellich_sides(grid, p, V, grad_V=(2 * X, Y))
        assert abs(vol - bnd) < 5e-3 * vol


def test_interlacing_between_constant_bounds():
    grid = Grid2D.covering(1.0, 1 / 32)
    X, Y = grid.mesh()
    V = 1.0 + np.sin(3 * X) ** 2  # 1 <= V <= 2
    mid = disk_eigensolve(GEOM, V, 8, grid=grid)
    lo = disk_eigensolve(GEOM, np.ones_like(V), 8, grid=grid)
    hi = disk_eigensolve(GEOM, 2 * np.ones_like(V), 8, grid=grid)
    for a, b, c in zip(lo, mid, hi):
        assert a.nu <= b.nu <= c.nu


def test_assembly_order_and_first_value(disk64):
    eigs = assemble_3d_eigs(GEOM, disk64, 4)
    assert eigs[0].mu == pytest.approx(disk64[0].nu + 1.0)
    mus = [e.mu for e in eigs]
    assert mus == sorted(mus)
    with pytest.raises(DomainError):
        assemble_3d_eigs(SlabGeometry(math.pi, 3, 1.0), disk64, 2)


def test_threshold_collision_rejected(disk64):
    # choose L so that alpha_2 = kappa_1 exactly
    nu1 = disk64[0].nu
    # kappa(m=1, n=1)^2 = nu1 + (pi/L)^2 = (2 pi / L)^2  ->  L = pi sqrt(3 / nu1)
    L = math.pi * math.sqrt(3.0 / nu1)
    with pytest.raises(GeometryRejectedError):
        assemble_3d_eigs(SlabGeometry(L, 2, 1.0), disk64, 3)


def test_3d_normalization_orthonormality_and_residual(disk64):
    eigs = assemble_3d_eigs(GEOM, disk64, 6)[:30]
    grid = disk64[0].grid
    m = 256
    x3 = np.linspace(0, GEOM.L, m + 1)
    wz = np.full(m + 1, GEOM.L / m)
    wz[0] = wz[-1] = 0.5 * GEOM.L / m
    axial = np.array([e.axial(x3) for e in eigs])
    planar = np.array([e.disk.psi.ravel() for e in eigs]) * grid.h
    gram = (planar @ planar.T) * ((axial * wz) @ axial.T)
    assert np.max(np.abs(gram - np.eye(len(eigs)))) < 1e-5
    # residual of the tensor eigen relation: the axial second difference is O(dz^2)
    A, idx = disk_operator(grid, 1.0, 0.0)
    e = eigs[7]
    dz = x3[1] - x3[0]
    ax = e.axial(x3)
    d2 = (ax[2:] - 2 * ax[1:-1] + ax[:-2]) / dz**2
    v = e.disk.psi.ravel()[idx]
    res = np.linalg.norm(np.outer(A @ v, ax[1:-1]) - np.outer(v, d2) - e.mu * np.outer(v, ax[1:-1]))
    assert res < 1e-2 * e.mu * np.linalg.norm(np.outer(v, ax[1:-1]))


def test_normal_derivative_trace(disk64):
    eigs = assemble_3d_eigs(GEOM, disk64, 4)
    x3 = np.linspace(0, GEOM.L, 9)
    tr = normal_derivative_on_gamma(eigs[0], np.linspace(0, 6, 7), x3)
    assert np.all(tr[:, 0] == 0) and np.all(tr[:, -1] == 0)
    assert boundary_flux_norm(eigs[0], include_ends=False) == pytest.approx(eigs[0].disk.flux_l2())


def test_weyl_examples():
    eigs, pairs = cylinder_eigs(GEOM, 0.0, 70, h=1 / 32)
    assert abs(weyl_fit([e.mu for e in eigs], 3).slope - 2 / 3) < 0.15
    disk = disk_eigensolve(GEOM, 0.0, 60, h=1 / 32)
    assert abs(weyl_fit([p.nu for p in disk], 2).slope - 1.0) < 0.15
    grid = Grid2D.covering(1.0, 1 / 32)
    shifted, _ = cylinder_eigs(GEOM, bump_potential(grid, 5.0, 0.5), 70, grid=grid)
    base = weyl_fit([e.mu for e in eigs], 3).slope
    assert abs(weyl_fit([e.mu for e in shifted], 3).slope - base) < 0.05
    with pytest.raises(DomainError):
        weyl_fit(np.arange(1, 10), 3)
    fit = weyl_fit([e.mu for e in eigs], 3)
    j = np.arange(1, 71)
    mus = np.array([e.mu for e in eigs])
    assert np.all(fit.E1 * j ** (2 / 3) <= mus * (1 + 1e-12))
    assert np.all(mus <= fit.E2 * j ** (2 / 3) * (1 + 1e-12))


def test_export_format(disk64):
    eigs = assemble_3d_eigs(GEOM, disk64, 4)[:3]
    index, blobs = export_eigenpairs(eigs, GEOM, disk64[0].grid)
    rows = json.loads(index)
    assert [r["j"] for r in rows] == [1, 2, 3]
    f = loads_modal_field(blobs[1])
    assert f.geom.L == GEOM.L and f.coeffs.shape[0] >= eigs[0].n
