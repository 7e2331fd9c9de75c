import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slabwave.errors import DomainError
from slabwave.slabgeom import (
    CutoffFunction,
    Grid2D,
    ModalField,
    SlabGeometry,
    alpha_n,
    dumps_modal_field,
    loads_modal_field,
    make_cutoff,
    mode_project,
    mode_synthesize,
    parseval_norm,
    project_field,
)


@pytest.mark.parametrize("L,n,expected", [(math.pi, 2, 2.0), (1.0, 1, math.pi), (2.0, 3, 1.5 * math.pi)])
def test_alpha_examples(L, n, expected):
    assert alpha_n(SlabGeometry(L, 3, 1.0), n) == pytest.approx(expected, rel=1e-15)


def test_alpha_rejects_zero_and_geometry_validation():
    with pytest.raises(DomainError):
        alpha_n(SlabGeometry(1.0, 1, 1.0), 0)
    for bad in [(-1.0, 1, 1.0), (1.0, 0, 1.0), (1.0, 1, 0.0)]:
        with pytest.raises(DomainError):
            SlabGeometry(*bad)
    a = SlabGeometry(2.0, 5, 1.0).alpha()
    assert np.all(np.diff(a) > 0)


def test_grid_node_count():
    g = Grid2D(0.25, 6)
    assert g.n == 13 and g.half_extent == 1.5
    assert g.axis[0] == -1.5 and g.axis[-1] == 1.5
    c = Grid2D.covering(1.0, 1 / 16)
    assert c.half_extent >= 1.0 + 2 / 16 - 1e-12


def _g(X, Y):
    return np.exp(-(X**2 + Y**2) / 0.1)


@pytest.mark.parametrize("L", [1.0, 2.0, math.pi])
def test_projection_orthogonality(L):
    geom = SlabGeometry(L, 4, 1.0)
    grid = Grid2D(0.25, 4)
    a2 = alpha_n(geom, 2)
    sample = lambda X, Y, z: _g(X, Y) * math.sin(a2 * z)
    for n in range(1, 5):
        c = mode_project(sample, geom, grid, n)
        if n == 2:
            assert np.max(np.abs(c - _g(*grid.mesh()))) < 1e-10
        else:
            assert np.max(np.abs(c)) < 1e-10


def test_project_zero_and_roundtrip():
    geom = SlabGeometry(2.0, 3, 1.0)
    grid = Grid2D(0.2, 6)
    assert not np.any(mode_project(lambda X, Y, z: 0 * X, geom, grid, 1))
    rng = np.random.default_rng(1)
    coeffs = rng.standard_normal((3, grid.n, grid.n)) + 1j * rng.standard_normal((3, grid.n, grid.n))
    f = ModalField(geom, grid, coeffs)
    a = geom.alpha()

    def sample(X, Y, z):
        return sum(coeffs[k] * math.sin(a[k] * z) for k in range(3))

    back = project_field(sample, geom, grid)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-10


def test_synthesis_examples():
    geom = SlabGeometry(math.pi, 2, 1.0)
    grid = Grid2D(0.5, 2)
    rng = np.random.default_rng(0)
    c = rng.standard_normal((2, grid.n, grid.n)).astype(complex)
    f = ModalField(geom, grid, c)
    vals = mode_synthesize(f, [0.0, math.pi / 2, math.pi])
    assert np.all(vals[0] == 0) and np.all(vals[2] == 0)
    one = ModalField.single_mode(geom, grid, 1, c[0])
    assert np.allclose(mode_synthesize(one, [math.pi / 2])[0], c[0], atol=1e-15)
    two = ModalField.single_mode(geom, grid, 2, c[1])
    x3 = [0.3, 1.1, 2.9]
    assert np.allclose(mode_synthesize(f, x3), mode_synthesize(one, x3) + mode_synthesize(two, x3))
    with pytest.raises(DomainError):
        mode_synthesize(f, [-0.1])


def test_parseval_examples():
    geom = SlabGeometry(2.0, 1, 1.0)
    grid = Grid2D(0.5, 4)
    planar = np.zeros((grid.n, grid.n))
    # unit-area patch of interior cells (full trapezoid weight h^2 each)
    planar[2:4, 2:4] = 1.0
    assert parseval_norm(ModalField.single_mode(geom, grid, 1, planar)) == pytest.approx(1.0)
    assert parseval_norm(ModalField.zeros(geom, grid)) == 0.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_parseval_matches_direct_3d_quadrature(seed):
    rng = np.random.default_rng(seed)
    geom = SlabGeometry(float(rng.choice([1.0, 2.0, math.pi])), 2, 1.0)
    grid = Grid2D(0.25, 4)
    c = rng.standard_normal((2, grid.n, grid.n)) + 1j * rng.standard_normal((2, grid.n, grid.n))
    f = ModalField(geom, grid, c)
    m = 256
    x3 = np.linspace(0, geom.L, m + 1)
    w = np.full(m + 1, geom.L / m)
    w[0] = w[-1] = 0.5 * geom.L / m
    u = mode_synthesize(f, x3)
    direct = float(np.sum(w[:, None, None] * grid.weights()[None] * np.abs(u) ** 2))
    assert abs(direct - parseval_norm(f)) <= 1e-6 * direct


def test_cutoff_examples():
    grid = Grid2D(1 / 32, 40)
    cut = make_cutoff(1.0, 0.5, grid)
    assert cut(0.0) == 1.0 and cut(1.2) == 0.0 and cut.diameter == 2.0
    rho = cut.sampled()
    r = grid.radius()
    V = np.where(r < 0.45, 1 + r**2, 0.0)
    assert np.array_equal(rho * V, V)
    with pytest.raises(DomainError):
        CutoffFunction(0.5, 0.5)


def test_cutoff_second_differences_bounded_under_refinement():
    cut = CutoffFunction(1.0, 0.5)
    peaks = []
    for h in (1e-2, 5e-3, 2.5e-3):
        r = np.arange(0, 1.2, h)
        peaks.append(np.max(np.abs(np.diff(cut(r), 2))) / h**2)
    assert max(peaks) < 1.2 * peaks[0] + 1.0


def test_modal_field_is_immutable_and_validated():
    geom = SlabGeometry(1.0, 2, 1.0)
    grid = Grid2D(0.5, 2)
    f = ModalField.zeros(geom, grid)
    with pytest.raises(ValueError):
        f.coeffs[0, 0, 0] = 1.0
    with pytest.raises(DomainError):
        ModalField(geom, grid, np.zeros((1, grid.n, grid.n)))


def test_serialization_roundtrip():
    geom = SlabGeometry(2.0, 2, 1.0)
    grid = Grid2D(0.25, 5)
    rng = np.random.default_rng(3)
    f = ModalField(geom, grid, rng.standard_normal((2, grid.n, grid.n)) + 1j * rng.standard_normal((2, grid.n, grid.n)))
    blob = dumps_modal_field(f)
    head = blob.split(b"\n", 1)[0]
    assert b'"format": "slabwave.modalfield/1"' in head
    g = loads_modal_field(blob)
    assert g.geom == geom and g.grid == grid and np.array_equal(g.coeffs, f.coeffs)
    with pytest.raises(DomainError):
        loads_modal_field(b'{"format": "other"}\n')
