"""Dirichlet eigenpairs of ``-Laplacian + V`` on the cylinder ``B_R x (0, L)``.

With ``V = V(x')`` the cylinder problem separates into a planar Dirichlet
problem on the disk ``B_R`` and the axial sine modes. The disk problem is
discretized on the Cartesian grid: nodes outside ``B_R`` are masked and an arm
that leaves the disk is closed with a ghost value linearly extrapolated to zero
at the true boundary crossing. The ghost only alters the diagonal, so the
matrix stays symmetric and second order accurate.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .errors import DomainError, GeometryRejectedError, SpectrumWarning
from .slabgeom import Grid2D, ModalField, SlabGeometry, dumps_modal_field

THRESHOLD_TOL = 1e-6
# nodes closer than this fraction of h to the circle are treated as boundary
_MIN_ARM = 1e-3


@dataclass(frozen=True, eq=False)
class DiskEigenPair:
    m: int
    nu: float
    psi: np.ndarray = field(repr=False)  # full grid array, zero outside the disk
    flux_coeffs: np.ndarray = field(repr=False)  # angular Fourier coefficients of d_r psi at r = R
    R: float = 1.0
    grid: Grid2D | None = None

    def flux(self, angles) -> np.ndarray:
        """``d_r psi(R, theta)`` at the given angles."""
        angles = np.asarray(angles, dtype=float)
        M = (self.flux_coeffs.size - 1) // 2
        ms = np.arange(-M, M + 1)
        return (np.exp(1j * np.outer(angles, ms)) @ self.flux_coeffs).real

    def flux_l2(self) -> float:
        """``||d_r psi||_{L2(dB_R)}`` from Parseval on the circle."""
        return math.sqrt(2.0 * math.pi * self.R * float(np.sum(np.abs(self.flux_coeffs) ** 2)))


@dataclass(frozen=True, eq=False)
class EigenPair:
    j: int
    m: int
    n: int
    mu: float
    kappa: float
    disk: DiskEigenPair = field(repr=False)
    L: float = 1.0

    @property
    def alpha(self) -> float:
        return self.n * math.pi / self.L

    def axial(self, x3) -> np.ndarray:
        x3 = np.asarray(x3, dtype=float)
        s = math.sqrt(2.0 / self.L) * np.sin(self.alpha * x3)
        s[(x3 == 0) | (x3 == self.L)] = 0.0
        return s

    def modal_coefficients(self, geom: SlabGeometry, grid: Grid2D) -> np.ndarray:
        """Sine coefficients ``[N, ny, nx]`` of ``phi_j`` (zero if ``n > N``)."""
        out = np.zeros((geom.N, grid.n, grid.n))
        if self.n <= geom.N:
            out[self.n - 1] = math.sqrt(2.0 / self.L) * self.disk.psi
        return out


# ---------------------------------------------------------------------------
# disk problem
# ---------------------------------------------------------------------------
def disk_operator(grid: Grid2D, R: float, V: np.ndarray | float = 0.0):
    """Sparse ``-Lap_h + V`` on the grid nodes strictly inside ``B_R``.

    Returns the matrix and the flat indices of the unknown nodes.
    """
    if grid.half_extent < R:
        raise DomainError("grid must cover the disk")
    h = grid.h
    X, Y = grid.mesh()
    Vg = np.broadcast_to(np.asarray(V, dtype=float), X.shape)
    inside = X**2 + Y**2 < R * R
    n = grid.n

    # distance (in units of h) from each node to the circle along the four arms
    def arm(coord, other, sign):
        reach = np.sqrt(np.maximum(R * R - other**2, 0.0))
        return (reach - sign * coord) / h

    arms = [
        (arm(X, Y, +1.0), (0, 1)),
        (arm(X, Y, -1.0), (0, -1)),
        (arm(Y, X, +1.0), (1, 0)),
        (arm(Y, X, -1.0), (-1, 0)),
    ]
    for theta, _ in arms:
        inside &= ~(theta < _MIN_ARM)
    idx = np.flatnonzero(inside)
    number = -np.ones(n * n, dtype=int)
    number[idx] = np.arange(idx.size)
    diag = 4.0 / h**2 + Vg.ravel()[idx]
    rows, cols, vals = [], [], []
    iy, ix = np.divmod(idx, n)
    for theta, (dy, dx) in arms:
        jy, jx = iy + dy, ix + dx
        nb = number[jy * n + jx]
        th = theta.ravel()[idx]
        interior = (nb >= 0) & (th >= 1.0 - 1e-12)
        rows.append(np.arange(idx.size)[interior])
        cols.append(nb[interior])
        vals.append(np.full(interior.sum(), -1.0 / h**2))
        ghost = ~interior
        diag[ghost] += (1.0 / th[ghost] - 1.0) / h**2
    rows.append(np.arange(idx.size))
    cols.append(np.arange(idx.size))
    vals.append(diag)
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(idx.size, idx.size)
    )
    return A, idx


def flux_coefficients(grid: Grid2D, R: float, psi: np.ndarray, V, nu: float, m_max: int) -> np.ndarray:
    """Angular Fourier coefficients of ``d_r psi`` on ``r = R``.

    Green's identity against the harmonic functions ``(r/R)^|m| e^{-i m theta}``
    turns each boundary coefficient into a volume integral of
    ``(V - nu) psi``, which avoids one-sided differences at the stair-step
    boundary.
    """
    X, Y = grid.mesh()
    r = np.hypot(X, Y) / R
    th = np.arctan2(Y, X)
    src = (np.asarray(V, dtype=float) - nu) * psi * grid.h**2
    mask = r < 1.0
    rs, ts, ss = r[mask], th[mask], src[mask]
    ms = np.arange(-m_max, m_max + 1)
    kern = rs[None, :] ** np.abs(ms)[:, None] * np.exp(-1j * np.outer(ms, ts))
    return kern @ ss / (2.0 * math.pi * R)


def disk_eigensolve(
    geom: SlabGeometry, V: np.ndarray | float, count: int, h: float | None = None, grid: Grid2D | None = None, m_max: int | None = None
) -> list[DiskEigenPair]:
    """Lowest ``count`` Dirichlet eigenpairs of ``-Lap' + V`` on ``B_R``.

    Eigenfunctions are normalized with the grid quadrature ``h^2 sum psi^2 = 1``
    and returned as full grid arrays. Indices ``m`` count from 1 in ascending
    order of the eigenvalue.
    """
    if grid is None:
        grid = Grid2D.covering(geom.R, h if h is not None else geom.R / 64)
    A, idx = disk_operator(grid, geom.R, V)
    if count > A.shape[0] // 4:
        raise DomainError(f"count={count} exceeds a quarter of the {A.shape[0]} unknowns")
    Vmin = float(np.min(V)) if np.ndim(V) else float(V)
    sigma = min(Vmin, 0.0) - 1.0
    # fixed start vector: ARPACK's default one changes between calls
    v0 = np.random.default_rng(0).standard_normal(A.shape[0])
    vals, vecs = eigsh(A.tocsc(), k=count, sigma=sigma, which="LM", v0=v0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    if vals[0] <= 0:
        warnings.warn("discrete operator has non-positive eigenvalues (V strongly negative)", SpectrumWarning)
    m_max = m_max if m_max is not None else min(32, grid.K // 2)
    Vg = np.broadcast_to(np.asarray(V, dtype=float), (grid.n, grid.n))
    out = []
    for k in range(count):
        psi = np.zeros(grid.n * grid.n)
        psi[idx] = vecs[:, k] / grid.h
        # fix the sign so the largest entry is positive
        if psi[np.argmax(np.abs(psi))] < 0:
            psi = -psi
        psi = psi.reshape(grid.n, grid.n)
        fc = flux_coefficients(grid, geom.R, psi, Vg, vals[k], m_max)
        out.append(DiskEigenPair(m=k + 1, nu=float(vals[k]), psi=psi, flux_coeffs=fc, R=geom.R, grid=grid))
    return out


def degenerate_clusters(pairs: list[DiskEigenPair], rtol: float = 1e-3) -> list[list[int]]:
    """Groups of planar indices whose eigenvalues coincide to ``rtol``."""
    groups: list[list[int]] = []
    for p in pairs:
        if groups and abs(p.nu - pairs[groups[-1][0] - 1].nu) <= rtol * abs(p.nu):
            groups[-1].append(p.m)
        else:
            groups.append([p.m])
    return groups


# ---------------------------------------------------------------------------
# cylinder
# ---------------------------------------------------------------------------
def assemble_3d_eigs(geom: SlabGeometry, disk_pairs: list[DiskEigenPair], axial_cap: int) -> list[EigenPair]:
    """Separable eigenpairs ``mu = nu_m + (n pi / L)^2`` sorted by ``(mu, n, m)``.

    Only the eigenvalues that are guaranteed complete are kept, namely those
    below ``nu_max + alpha_1^2`` and ``nu_1 + alpha_cap^2``.
    """
    if axial_cap < geom.N:
        raise DomainError("axial cap must be at least the band limit N")
    L = geom.L
    entries = []
    for n in range(1, axial_cap + 1):
        a2 = (n * math.pi / L) ** 2
        for p in disk_pairs:
            entries.append((p.nu + a2, n, p.m, p))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    limit = min(disk_pairs[-1].nu + (math.pi / L) ** 2, disk_pairs[0].nu + (axial_cap * math.pi / L) ** 2)
    thresholds = geom.alpha()
    out = []
    for mu, n, m, p in entries:
        if mu > limit + 1e-12:
            break
        kappa = math.sqrt(mu) if mu > 0 else float("nan")
        close = np.abs(kappa - thresholds) < THRESHOLD_TOL
        if np.any(close):
            raise GeometryRejectedError(
                f"eigenfrequency kappa={kappa:.8g} collides with threshold "
                f"alpha_{int(np.argmax(close)) + 1}; perturb R or L slightly"
            )
        out.append(EigenPair(j=len(out) + 1, m=m, n=n, mu=mu, kappa=kappa, disk=p, L=L))
    return out


def cylinder_eigs(geom: SlabGeometry, V, count: int, h: float | None = None, grid: Grid2D | None = None, disk_count: int | None = None):
    """Convenience: at least ``count`` cylinder eigenpairs (fewer planar pairs are enough)."""
    disk_count = disk_count or max(count, 8)
    L = geom.L
    while True:
        pairs = disk_eigensolve(geom, V, disk_count, h=h, grid=grid)
        cap = max(geom.N, int(math.ceil(math.sqrt(max(pairs[-1].nu, 1.0)) * L / math.pi)) + 1)
        eigs = assemble_3d_eigs(geom, pairs, cap)
        if len(eigs) >= count:
            return eigs[:count], pairs
        disk_count = int(disk_count * 1.5) + 1


def normal_derivative_on_gamma(pair: EigenPair, angles, x3) -> np.ndarray:
    """``d_nu phi_j`` on the lateral surface; indexed ``[angle, x3]``."""
    return np.outer(pair.disk.flux(angles), pair.axial(x3))


def boundary_flux_norm(pair: EigenPair, include_ends: bool = True) -> float:
    """``||d_nu phi_j||_{L2}`` on the lateral surface, plus the end disks if asked.

    On the lateral surface the axial factor has unit norm. On each end disk
    ``|d_nu phi| = sqrt(2/L) alpha_n |psi|``.
    """
    lateral = pair.disk.flux_l2() ** 2
    ends = 2.0 * (2.0 / pair.L) * pair.alpha**2 if include_ends else 0.0
    return math.sqrt(lateral + ends)


@dataclass(frozen=True)
class WeylFit:
    slope: float
    E1: float
    E2: float
    intercept: float = 0.0


def weyl_fit(mus, dim: int, j_range: tuple[int, int] | None = None) -> WeylFit:
    """Log-log slope of ``mu_j`` against ``j`` and the envelope constants of ``j^{2/dim}``.

    The slope is fitted over ``j_range`` (inclusive, 1-based) or the upper
    half of the indices by default.
    """
    mus = np.asarray(mus, dtype=float)
    if mus.size < 30:
        raise DomainError(f"need at least 30 eigenvalues for a Weyl fit, got {mus.size}")
    j = np.arange(1, mus.size + 1)
    lo, hi = j_range if j_range is not None else (mus.size // 2 + 1, mus.size)
    sel = (j >= lo) & (j <= hi)
    slope, intercept = np.polyfit(np.log(j[sel]), np.log(mus[sel]), 1)
    scaled = mus / j ** (2.0 / dim)
    return WeylFit(float(slope), float(scaled.min()), float(scaled.max()), float(intercept))


def rellich_sides(grid: Grid2D, pair: DiskEigenPair, V: np.ndarray | float = 0.0, grad_V=None) -> tuple[float, float]:
    """Both sides of the Rellich identity with ``A = x' . grad'`` on the disk.

    Volume side ``2 int |grad psi|^2 - int (x . grad V) psi^2`` and boundary side
    ``R int_{dB} (d_r psi)^2 ds``.
    """
    h = grid.h
    psi = pair.psi
    Vg = np.broadcast_to(np.asarray(V, dtype=float), psi.shape)
    gy, gx = np.gradient(psi, h)
    # energy from the eigen relation is more accurate than centered gradients
    energy = pair.nu - h * h * float(np.sum(Vg * psi**2))
    if grad_V is None:
        Vy, Vx = np.gradient(Vg, h)
    else:
        Vx, Vy = grad_V
    X, Y = grid.mesh()
    xgradV = X * Vx + Y * Vy
    volume = 2.0 * energy - h * h * float(np.sum(xgradV * psi**2))
    boundary = pair.R * pair.flux_l2() ** 2
    return volume, boundary


def export_eigenpairs(eigs: list[EigenPair], geom: SlabGeometry, grid: Grid2D) -> tuple[str, dict[int, bytes]]:
    """JSON index ``(j, m, n, mu, kappa)`` and one modal-field blob per eigenpair."""
    index = [dict(j=e.j, m=e.m, n=e.n, mu=e.mu, kappa=e.kappa) for e in eigs]
    blobs = {}
    for e in eigs:
        g = SlabGeometry(geom.L, max(geom.N, e.n), geom.R)
        blobs[e.j] = dumps_modal_field(ModalField(g, grid, e.modal_coefficients(g, grid)))
    return json.dumps(index, indent=2), blobs
