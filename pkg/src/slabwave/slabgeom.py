"""Slab geometry, planar grids, band-limited modal fields and cutoffs.

A field in the slab ``0 < x3 < L`` is stored through its axial sine
coefficients ``u(x', x3) = sum_n u_n(x') sin(alpha_n x3)`` with
``alpha_n = n pi / L``; only the first ``N`` coefficients are kept.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SlabGeometry:
    """Slab of thickness ``L`` with band limit ``N`` and observation radius ``R``.

    The observation domain is the cylinder ``B_R x (0, L)``; its lateral
    surface is the measurement aperture.
    """

    L: float
    N: int
    R: float

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"L must be positive, got {self.L}")
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")

    def alpha(self, n_max: int | None = None) -> np.ndarray:
        n_max = self.N if n_max is None else n_max
        return np.arange(1, n_max + 1) * math.pi / self.L


def alpha_n(geom: SlabGeometry, n: int) -> float:
    """Threshold wavenumber ``n pi / L``."""
    if int(n) != n or n < 1:
        raise DomainError(f"mode index must be >= 1, got {n}")
    return n * math.pi / geom.L


@dataclass(frozen=True)
class Grid2D:
    """Uniform square lattice ``x_i = i h`` for ``-K <= i <= K`` in both axes."""

    h: float
    K: int

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("grid spacing must be positive")
        if self.K < 1:
            raise DomainError("grid needs at least one node off the origin")

    @classmethod
    def covering(cls, radius: float, h: float, margin: int = 2) -> "Grid2D":
        """Smallest grid whose half-extent exceeds ``radius`` by ``margin`` nodes."""
        return cls(h, int(math.ceil(radius / h - 1e-9)) + margin)

    @property
    def n(self) -> int:
        return 2 * self.K + 1

    @property
    def half_extent(self) -> float:
        return self.K * self.h

    @property
    def axis(self) -> np.ndarray:
        return self.h * np.arange(-self.K, self.K + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` arrays indexed ``[iy, ix]``."""
        return np.meshgrid(self.axis, self.axis)

    def radius(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.hypot(X, Y)

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights on the full lattice."""
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        return np.outer(w1, w1)

    def integrate(self, values: np.ndarray) -> complex:
        return np.sum(values * self.weights(), axis=(-2, -1))


@dataclass(frozen=True, eq=False)
class ModalField:
    """``N`` planar coefficient grids of a band-limited slab field."""

    geom: SlabGeometry
    grid: Grid2D
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.geom.N, self.grid.n, self.grid.n):
            raise DomainError(
                f"expected coefficients of shape {(self.geom.N, self.grid.n, self.grid.n)}, "
                f"got {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, geom: SlabGeometry, grid: Grid2D) -> "ModalField":
        return cls(geom, grid, np.zeros((geom.N, grid.n, grid.n), complex))

    @classmethod
    def single_mode(cls, geom, grid, n: int, planar: np.ndarray) -> "ModalField":
        c = np.zeros((geom.N, grid.n, grid.n), complex)
        c[n - 1] = planar
        return cls(geom, grid, c)

    def __add__(self, other: "ModalField") -> "ModalField":
        return ModalField(self.geom, self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "ModalField") -> "ModalField":
        return ModalField(self.geom, self.grid, self.coeffs - other.coeffs)

    def scale(self, factor) -> "ModalField":
        return ModalField(self.geom, self.grid, factor * self.coeffs)

    def l2_norm(self) -> float:
        return math.sqrt(parseval_norm(self))

    # -- serialization -----------------------------------------------------
    def to_bytes(self) -> bytes:
        return dumps_modal_field(self)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModalField":
        return loads_modal_field(blob)


def _x3_rule(geom: SlabGeometry, n_max: int, min_intervals: int = 64):
    m = max(min_intervals, 16 * n_max)
    x3 = np.linspace(0.0, geom.L, m + 1)
    w = np.full(m + 1, geom.L / m)
    w[0] = w[-1] = 0.5 * geom.L / m
    return x3, w


def mode_project(sample3d: Callable, geom: SlabGeometry, grid: Grid2D, n: int) -> np.ndarray:
    """Axial sine coefficient ``(2/L) int_0^L f(x', x3) sin(alpha_n x3) dx3``.

    ``sample3d(X, Y, x3)`` is called with planar mesh arrays and a scalar
    ``x3``. The composite trapezoid rule uses at least 16 points per
    oscillation, which is exact for any band-limited input of degree below
    the rule size.
    """
    a = alpha_n(geom, n)
    X, Y = grid.mesh()
    x3, w = _x3_rule(geom, max(n, geom.N))
    out = np.zeros(X.shape, complex)
    for z, wz in zip(x3, w):
        s = math.sin(a * z)
        if s == 0.0:
            continue
        out += (wz * s) * np.asarray(sample3d(X, Y, z), dtype=complex)
    return (2.0 / geom.L) * out


def project_field(sample3d: Callable, geom: SlabGeometry, grid: Grid2D) -> ModalField:
    return ModalField(
        geom, grid, np.stack([mode_project(sample3d, geom, grid, n) for n in range(1, geom.N + 1)])
    )


def mode_synthesize(field: ModalField, x3_samples) -> np.ndarray:
    """Evaluate ``sum_n u_n(x') sin(alpha_n x3)``; result indexed ``[k, iy, ix]``."""
    x3 = np.atleast_1d(np.asarray(x3_samples, dtype=float))
    L = field.geom.L
    if np.any(x3 < 0) or np.any(x3 > L):
        raise DomainError(f"x3 samples must lie in [0, {L}]")
    S = np.sin(np.outer(x3, field.geom.alpha()))
    # sin(n pi) is not exactly zero in floating point; enforce the plates
    S[(x3 == 0) | (x3 == L)] = 0.0
    return np.einsum("kn,nij->kij", S, field.coeffs)


def parseval_norm(field: ModalField) -> float:
    """Squared L2 norm ``(L/2) sum_n ||f_n||^2`` with trapezoidal planar weights."""
    planar = field.grid.integrate(np.abs(field.coeffs) ** 2)
    return float(0.5 * field.geom.L * np.sum(planar.real))


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    """Radial cutoff equal to 1 for ``r <= plateau`` and 0 for ``r >= support``.

    Transition profile ``exp(1 - 1/(1 - s^2))`` with
    ``s = (r - plateau) / (support - plateau)``.
    """

    support_radius: float
    plateau_radius: float
    grid: Grid2D | None = None

    def __post_init__(self):
        if not 0 < self.plateau_radius < self.support_radius:
            raise DomainError(
                "cutoff needs 0 < plateau_radius < support_radius, got "
                f"{self.plateau_radius}, {self.support_radius}"
            )

    @property
    def diameter(self) -> float:
        return 2.0 * self.support_radius

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s = (r - self.plateau_radius) / (self.support_radius - self.plateau_radius)
        out = np.zeros_like(r)
        out[s <= 0] = 1.0
        mid = (s > 0) & (s < 1)
        sm = s[mid]
        out[mid] = np.exp(1.0 - 1.0 / (1.0 - sm * sm))
        return out

    def sampled(self, grid: Grid2D | None = None) -> np.ndarray:
        grid = grid or self.grid
        if grid is None:
            raise DomainError("no grid attached to the cutoff")
        return self(grid.radius())


def make_cutoff(support_radius: float, plateau_radius: float, grid: Grid2D | None = None) -> CutoffFunction:
    return CutoffFunction(support_radius, plateau_radius, grid)


# -- binary format ----------------------------------------------------------
# One header line of UTF-8 JSON terminated by "\n", followed by N*n*n
# little-endian float64 (re, im) pairs, mode-major then row-major [iy, ix].

FORMAT_TAG = "slabwave.modalfield/1"


def dumps_modal_field(field: ModalField) -> bytes:
    g = field.grid
    header = {
        "format": FORMAT_TAG,
        "L": field.geom.L,
        "N": field.geom.N,
        "R": field.geom.R,
        "h": g.h,
        "K": g.K,
        "extent": g.half_extent,
        "shape": [field.geom.N, g.n, g.n],
        "dtype": "<c16",
    }
    buf = io.BytesIO()
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    buf.write(np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes())
    return buf.getvalue()


def loads_modal_field(blob: bytes) -> ModalField:
    head, _, body = blob.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != FORMAT_TAG:
        raise DomainError(f"not a modal field file (format={header.get('format')!r})")
    geom = SlabGeometry(header["L"], header["N"], header["R"])
    grid = Grid2D(header["h"], header["K"])
    data = np.frombuffer(body, dtype="<c16").reshape(header["shape"])
    return ModalField(geom, grid, data.astype(complex))
