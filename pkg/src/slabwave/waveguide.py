"""Modal resolvents of the planar waveguide.

Each axial mode ``n`` reduces the slab problem to a planar Helmholtz problem
with wavenumber ``beta_n(lambda) = sqrt(lambda^2 - alpha_n^2)``. The planar
convolution with the outgoing kernel is discretized by a Nystrom product rule
on the uniform grid: midpoint weights ``h^2 G(beta, |x - y|)`` off the
diagonal and the cell integral of the logarithmic singularity on it.
"""
from __future__ import annotations

import cmath
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import (
    ContractionError,
    DomainError,
    NearResonanceWarning,
    NumericError,
    ThresholdError,
)
from .slabgeom import CutoffFunction, Grid2D, ModalField, SlabGeometry, alpha_n
from .specfun import free_kernel_2d

logger = logging.getLogger(__name__)

THRESHOLD_ZONE = 10.0 * math.sqrt(np.finfo(float).eps)
RESONANCE_FLOOR = 0.05
EULER_GAMMA = 0.5772156649015329
# int over the unit square centred at 0 of log|x|
_LOG_CELL = 0.5 * (0.5 * math.pi - 3.0 - math.log(2.0))


# ---------------------------------------------------------------------------
# mode wavenumbers
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ModeWavenumber:
    n: int
    lam: complex
    gamma_n: float
    eta_n: float
    a_n: float
    b_n: float
    beta: complex


def _upper_root(lam1: float, lam2: float, alpha: float) -> complex:
    # principal root of (l - alpha)(l + alpha) with l = |lam1| + i|lam2|; its
    # real and imaginary parts are the non-negative a_n, b_n
    lt = complex(abs(lam1), abs(lam2))
    return cmath.sqrt((lt - alpha) * (lt + alpha))


def _check_threshold(lam: complex, alpha: float):
    if abs(lam - alpha) < THRESHOLD_ZONE or abs(lam + alpha) < THRESHOLD_ZONE:
        raise ThresholdError(f"lambda = {lam} is at the threshold alpha = {alpha}")


def mode_wavenumber(geom: SlabGeometry, n: int, lam) -> ModeWavenumber:
    """Extended ``beta_n(lambda)`` with its real/imaginary building blocks.

    For ``Im lambda >= 0`` this is the root of ``lambda^2 - alpha_n^2`` with
    non-negative imaginary part. Below the real axis ``Re beta`` is continued
    evenly and ``Im beta`` oddly in ``Im lambda``.
    """
    lam = complex(lam)
    a = alpha_n(geom, n)
    _check_threshold(lam, a)
    l1, l2 = lam.real, lam.imag
    root = _upper_root(l1, l2, a)
    a_n, b_n = root.real, root.imag
    sign_re = -1.0 if l1 < 0 else 1.0
    sign_im = -1.0 if l2 < 0 else 1.0
    beta = complex(sign_re * a_n, sign_im * b_n)
    return ModeWavenumber(
        n=n,
        lam=lam,
        gamma_n=l1 * l1 - l2 * l2 - a * a,
        eta_n=2.0 * l1 * l2,
        a_n=a_n,
        b_n=b_n,
        beta=beta,
    )


def beta_extended(geom: SlabGeometry, n: int, lam) -> complex:
    return mode_wavenumber(geom, n, lam).beta


# ---------------------------------------------------------------------------
# Nystrom discretization of the planar kernel
# ---------------------------------------------------------------------------
def self_cell_weight(beta: complex, h: float) -> complex:
    """Integral of ``(i/4) H0(beta r)`` over the ``h x h`` cell around the origin.

    Smooth remainder by the midpoint rule, logarithmic part exactly.
    """
    beta = complex(beta) + 0j
    smooth = 0.25j - (cmath.log(0.5 * beta) + EULER_GAMMA) / (2.0 * math.pi)
    singular = -(math.log(h) + _LOG_CELL) / (2.0 * math.pi)
    return h * h * (smooth + singular)


class NystromKernel:
    """Discrete planar operator ``f -> int G(beta, |x - y|) f(y) dy`` on a grid."""

    def __init__(self, grid: Grid2D, beta: complex):
        self.grid = grid
        self.beta = complex(beta)
        K2 = 2 * grid.K
        p = np.arange(K2 + 1)
        d2 = p[:, None] ** 2 + p[None, :] ** 2
        uniq, inv = np.unique(d2, return_inverse=True)
        vals = np.empty(uniq.shape, complex)
        vals[0] = self_cell_weight(self.beta, grid.h)
        r = grid.h * np.sqrt(uniq[1:].astype(float))
        vals[1:] = grid.h**2 * free_kernel_2d(self.beta, r)
        quad = vals[inv.reshape(d2.shape)]
        # mirror the quadrant onto offsets -2K..2K
        full = np.concatenate([quad[:0:-1], quad], axis=0)
        self.table = np.concatenate([full[:, :0:-1], full], axis=1)
        self._spectrum = None

    def _fft_shape(self):
        m = sfft.next_fast_len(self.grid.n + self.table.shape[0] - 1)
        return (m, m)

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """Apply the operator to one grid array or a stack of them."""
        shape = self._fft_shape()
        if self._spectrum is None:
            self._spectrum = sfft.fft2(self.table, s=shape)
        F = sfft.fft2(np.asarray(f, dtype=complex), s=shape, axes=(-2, -1))
        full = sfft.ifft2(F * self._spectrum, axes=(-2, -1))
        off = 2 * self.grid.K
        n = self.grid.n
        return full[..., off : off + n, off : off + n]

    def submatrix(self, rows: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
        """Dense block between flat node indices ``rows`` and ``cols``."""
        cols = rows if cols is None else cols
        n = self.grid.n
        ry, rx = np.divmod(rows, n)
        cy, cx = np.divmod(cols, n)
        off = 2 * self.grid.K
        return self.table[ry[:, None] - cy[None, :] + off, rx[:, None] - cx[None, :] + off]


class PairKernel:
    """Kernel matrices on a fixed node set, reusing the pairwise distances.

    Used where many spectral parameters are evaluated on the same nodes.
    """

    def __init__(self, grid: Grid2D, nodes: np.ndarray):
        self.grid = grid
        self.nodes = np.asarray(nodes)
        n = grid.n
        y, x = np.divmod(self.nodes, n)
        d2 = (y[:, None] - y[None, :]) ** 2 + (x[:, None] - x[None, :]) ** 2
        self._uniq, inv = np.unique(d2, return_inverse=True)
        self._inv = inv.reshape(d2.shape)
        self._r = grid.h * np.sqrt(self._uniq.astype(float))

    def matrix(self, beta: complex) -> np.ndarray:
        vals = np.empty(self._uniq.shape, complex)
        start = 0
        if self._uniq[0] == 0:
            vals[0] = self_cell_weight(beta, self.grid.h)
            start = 1
        vals[start:] = self.grid.h**2 * free_kernel_2d(beta, self._r[start:])
        return vals[self._inv]


def _mode_betas(geom: SlabGeometry, lam) -> list[complex]:
    return [beta_extended(geom, n, lam) for n in range(1, geom.N + 1)]


def _check_support(field: ModalField):
    c = field.coeffs
    ring = np.concatenate(
        [c[:, 0, :].ravel(), c[:, -1, :].ravel(), c[:, :, 0].ravel(), c[:, :, -1].ravel()]
    )
    peak = np.max(np.abs(c)) if c.size else 0.0
    if peak > 0 and np.max(np.abs(ring)) > 1e-12 * peak:
        raise DomainError("grid does not contain the support of the source; enlarge the extent")


def apply_R0(geom: SlabGeometry, lam, source: ModalField) -> ModalField:
    """Free waveguide resolvent applied mode by mode: ``u_n = G(beta_n) f_n``."""
    _check_support(source)
    out = np.empty_like(source.coeffs)
    for i, beta in enumerate(_mode_betas(geom, lam)):
        if not np.any(source.coeffs[i]):
            out[i] = 0.0
            continue
        out[i] = NystromKernel(source.grid, beta).convolve(source.coeffs[i])
    return ModalField(geom, source.grid, out)


# ---------------------------------------------------------------------------
# Lippmann-Schwinger solve
# ---------------------------------------------------------------------------
@dataclass
class SolveReport:
    lam: complex
    method: str
    residual: float
    neumann_contraction: float | None = None
    iterations: int = 0
    condition: float | None = None
    mode_residuals: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda"] = [self.lam.real, self.lam.imag]
        del d["lam"]
        d["contraction"] = d.pop("neumann_contraction")
        return json.dumps(d, indent=2, sort_keys=True)


def fd_residual(grid: Grid2D, u: np.ndarray, f: np.ndarray, V: np.ndarray | float, beta: complex) -> float:
    """L2 norm of ``(-Lap_h + V - beta^2) u - f`` over interior nodes (5-point stencil)."""
    h = grid.h
    lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1]) / h**2
    Vi = V[1:-1, 1:-1] if np.ndim(V) else V
    r = -lap + (Vi - beta**2) * u[1:-1, 1:-1] - f[1:-1, 1:-1]
    return float(h * np.linalg.norm(r))


def _power_norm(apply, apply_adj, x0, rtol, max_iter):
    x = x0 / np.linalg.norm(x0)
    prev = 0.0
    gap = np.inf
    for it in range(1, max_iter + 1):
        y = apply(x)
        z = apply_adj(y)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0, it, 0.0
        sigma = math.sqrt(nz)
        gap = abs(sigma - prev) / sigma
        if gap < rtol:
            return sigma, it, gap
        prev = sigma
        x = z / nz
    raise NumericError(f"power iteration did not converge in {max_iter} steps (gap {gap:.2e})", estimate=gap)


def operator_norm_estimate(A, rtol: float = 1e-4, max_iter: int = 2000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``A^* A``.

    ``A`` may be a dense array or a :class:`scipy.sparse.linalg.LinearOperator`
    (which must implement ``rmatvec``).
    """
    op = aslinearoperator(A)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
    sigma, it, gap = _power_norm(op.matvec, op.rmatvec, x0, rtol, max_iter)
    logger.debug("power iteration: sigma=%.6g after %d steps (gap %.1e)", sigma, it, gap)
    return sigma


def _power_sigma(apply, apply_adj, n, iters, rtol, seed):
    # capped power iteration that returns its last estimate instead of failing
    x = np.random.default_rng(seed).standard_normal(n).astype(complex)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        z = apply_adj(apply(x))
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        new = math.sqrt(nz)
        x = z / nz
        if abs(new - sigma) < rtol * new:
            return new
        sigma = new
    return sigma


def condition_estimate(lu_piv, A, iters: int = 60, rtol: float = 1e-3, seed: int = 0) -> float:
    """2-norm condition number ``sigma_max / sigma_min`` by seeded power iterations.

    ``sigma_min`` comes from inverse iteration with the existing LU factors.
    LAPACK's one-norm estimator was found to miss near-singular directions of
    these kernel matrices by more than an order of magnitude.
    """
    n = A.shape[0]
    smax = _power_sigma(lambda x: A @ x, lambda y: A.conj().T @ y, n, iters, rtol, seed)
    inv = _power_sigma(
        lambda x: linalg.lu_solve(lu_piv, x, check_finite=False),
        lambda y: linalg.lu_solve(lu_piv, y, trans=2, check_finite=False),
        n, iters, rtol, seed + 1,
    )
    return smax * inv


def solve_RV(
    geom: SlabGeometry,
    lam,
    V: np.ndarray,
    source: ModalField,
    method: str = "dense",
    cutoff: CutoffFunction | None = None,
    cond_threshold: float = 1e8,
    tol: float = 1e-13,
    max_iter: int = 1000,
) -> tuple[ModalField, SolveReport]:
    """Solve ``u_n + G(beta_n)(V u_n) = G(beta_n) f_n`` for every mode.

    ``V`` is a planar array on the source grid, so the potential is independent
    of ``x3`` by construction. Only nodes with ``V != 0`` are unknowns of the
    dense system; the field elsewhere follows by one more convolution.
    """
    if method not in ("dense", "neumann_series"):
        raise DomainError(f"unknown method {method!r}")
    grid = source.grid
    V = np.asarray(V)
    if V.shape != (grid.n, grid.n):
        raise DomainError("potential must be sampled on the source grid")
    _check_support(source)
    if cutoff is not None:
        outside = (V != 0) & (grid.radius() > cutoff.plateau_radius + 1e-12)
        if np.any(outside):
            raise DomainError("supp V must lie inside the plateau of the cutoff")
    lam = complex(lam)
    S = np.flatnonzero(V.ravel())
    VS = V.ravel()[S]
    out = np.empty_like(source.coeffs)
    residuals, contractions, conds = [], [], []
    iterations = 0
    for i, beta in enumerate(_mode_betas(geom, lam)):
        f = source.coeffs[i]
        kern = NystromKernel(grid, beta)
        g = kern.convolve(f)
        if S.size == 0 or not np.any(f):
            u = g if S.size == 0 else np.zeros_like(g)
            out[i] = u
            residuals.append(fd_residual(grid, u, f, V, beta))
            continue
        G = kern.submatrix(S)
        gS = g.ravel()[S]
        if method == "dense":
            A = G * VS[None, :]
            A[np.diag_indices_from(A)] += 1.0
            lu_piv = linalg.lu_factor(A, check_finite=False)
            uS = linalg.lu_solve(lu_piv, gS)
            cond = condition_estimate(lu_piv, A)
            conds.append(cond)
            if cond > cond_threshold:
                warnings.warn(
                    f"near resonance at lambda={lam}: condition estimate {cond:.3e}",
                    NearResonanceWarning,
                    stacklevel=2,
                )
        else:
            T = G * VS[None, :]
            q = operator_norm_estimate(T, rtol=1e-6)
            contractions.append(q)
            if q >= 0.5:
                raise ContractionError(
                    f"Neumann series refused: contraction estimate {q:.4f} >= 1/2", estimate=q
                )
            uS = gS.copy()
            term = gS.copy()
            for k in range(1, max_iter + 1):
                term = -(T @ term)
                uS = uS + term
                if np.linalg.norm(term) <= tol * np.linalg.norm(uS):
                    break
            else:
                raise NumericError("Neumann series did not converge", estimate=np.linalg.norm(term))
            iterations = max(iterations, k)
        w = np.zeros(grid.n * grid.n, complex)
        w[S] = VS * uS
        u = g - kern.convolve(w.reshape(grid.n, grid.n))
        out[i] = u
        residuals.append(fd_residual(grid, u, f, V, beta))
    report = SolveReport(
        lam=lam,
        method=method,
        residual=max(residuals) if residuals else 0.0,
        neumann_contraction=max(contractions) if contractions else None,
        iterations=iterations,
        condition=max(conds) if conds else None,
        mode_residuals=residuals,
    )
    return ModalField(geom, grid, out), report


# ---------------------------------------------------------------------------
# resonance-free region and scans
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ResonanceFreeRegion:
    """``{lambda : Im lambda >= -M log|lambda|, |lambda| >= C0}``."""

    M: float
    C0: float
    T: float
    alpha_N: float = 0.0

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("cutoff diameter T must be positive")
        if not 0 < self.M < 1.0 / (8.0 * self.T):
            raise DomainError(f"M must satisfy 0 < M < 1/(8T) = {1 / (8 * self.T):.6g}, got {self.M}")
        if not self.C0 > self.alpha_N:
            raise DomainError(f"C0 = {self.C0} must exceed the top threshold alpha_N = {self.alpha_N}")

    @classmethod
    def for_geometry(cls, geom: SlabGeometry, cutoff: CutoffFunction, M: float, C0: float):
        return cls(M, C0, cutoff.diameter, alpha_n(geom, geom.N))

    def contains(self, lam) -> bool:
        return in_resonance_free_region(self, lam)


def in_resonance_free_region(region: ResonanceFreeRegion, lam) -> bool:
    lam = complex(lam)
    mod = abs(lam)
    return bool(mod >= region.C0 and lam.imag >= -region.M * math.log(mod))


def rho_G_rho(grid: Grid2D, beta: complex, rho: np.ndarray) -> LinearOperator:
    """``rho G(beta) rho`` as a linear operator on flattened grid vectors."""
    kern = NystromKernel(grid, beta)
    rho = np.asarray(rho, dtype=float)
    n = grid.n

    def mv(x):
        return (rho * kern.convolve(rho * x.reshape(n, n))).ravel()

    def rmv(x):
        # the kernel matrix is complex symmetric, so A^H x = conj(A conj(x))
        return np.conj(mv(np.conj(x)))

    return LinearOperator((n * n, n * n), matvec=mv, rmatvec=rmv, dtype=complex)


@dataclass
class ScanResult:
    re: np.ndarray
    im: np.ndarray
    sigma_min: np.ndarray  # [i_im, i_re]
    flagged: np.ndarray
    masked: np.ndarray
    floor: float

    def to_csv(self) -> str:
        lines = ["re_lambda,im_lambda,min_singular_value,flagged"]
        for a, y in enumerate(self.im):
            for b, x in enumerate(self.re):
                s = self.sigma_min[a, b]
                sval = "nan" if self.masked[a, b] else f"{s:.12e}"
                lines.append(f"{x:.12g},{y:.12g},{sval},{int(self.flagged[a, b])}")
        return "\n".join(lines) + "\n"

    def candidates(self) -> list[complex]:
        a, b = np.nonzero(self.flagged)
        return [complex(self.re[j], self.im[i]) for i, j in zip(a, b)]


def fredholm_min_singular(pk: PairKernel, VS: np.ndarray, geom: SlabGeometry, lam) -> float:
    """min over modes of the smallest singular value of ``I + V G(beta_n)`` on supp V."""
    best = np.inf
    for beta in _mode_betas(geom, lam):
        A = pk.matrix(beta) * VS[:, None]
        A[np.diag_indices_from(A)] += 1.0
        best = min(best, float(linalg.svdvals(A, check_finite=False)[-1]))
    return best


def resonance_scan(
    geom: SlabGeometry,
    V: np.ndarray,
    grid: Grid2D,
    re_values,
    im_values,
    cutoff: CutoffFunction | None = None,
    floor: float = RESONANCE_FLOOR,
) -> ScanResult:
    """Smallest singular value of the reduced Fredholm operator over a lambda mesh.

    Mesh nodes within half a step of a threshold ``+-alpha_n`` are masked.
    """
    re_values = np.asarray(re_values, dtype=float)
    im_values = np.asarray(im_values, dtype=float)
    V = np.asarray(V)
    if cutoff is not None:
        outside = (V != 0) & (grid.radius() > cutoff.plateau_radius + 1e-12)
        if np.any(outside):
            raise DomainError("supp V must lie inside the plateau of the cutoff")
    S = np.flatnonzero(V.ravel())
    VS = V.ravel()[S]
    pk = PairKernel(grid, S) if S.size else None
    steps = [np.min(np.diff(v)) for v in (re_values, im_values) if v.size > 1]
    half = 0.5 * min(steps) if steps else THRESHOLD_ZONE
    thresholds = geom.alpha()
    sig = np.full((im_values.size, re_values.size), np.nan)
    masked = np.zeros(sig.shape, bool)
    for a, y in enumerate(im_values):
        for b, x in enumerate(re_values):
            lam = complex(x, y)
            if np.any(np.minimum(np.abs(lam - thresholds), np.abs(lam + thresholds)) < half):
                masked[a, b] = True
                continue
            sig[a, b] = 1.0 if pk is None else fredholm_min_singular(pk, VS, geom, lam)
    flagged = ~masked & (sig < floor)
    return ScanResult(re_values, im_values, sig, flagged, masked, floor)


# ---------------------------------------------------------------------------
# boundary traces
# ---------------------------------------------------------------------------
def periodic_angles(count: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(count) / count


def uniform_x3(geom: SlabGeometry, count: int) -> np.ndarray:
    return np.linspace(0.0, geom.L, count)


def interpolate_circle(grid: Grid2D, values: np.ndarray, radius: float, angles) -> np.ndarray:
    """Bilinear interpolation of grid arrays (last two axes) onto a circle."""
    if grid.half_extent < radius + grid.h:
        raise DomainError(
            f"grid half-extent {grid.half_extent:.4g} must exceed the trace radius {radius:.4g} by a cell"
        )
    angles = np.asarray(angles, dtype=float)
    x = radius * np.cos(angles)
    y = radius * np.sin(angles)
    fx = (x + grid.half_extent) / grid.h
    fy = (y + grid.half_extent) / grid.h
    ix = np.clip(np.floor(fx).astype(int), 0, grid.n - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, grid.n - 2)
    tx = fx - ix
    ty = fy - iy
    v = values
    return (
        v[..., iy, ix] * (1 - tx) * (1 - ty)
        + v[..., iy, ix + 1] * tx * (1 - ty)
        + v[..., iy + 1, ix] * (1 - tx) * ty
        + v[..., iy + 1, ix + 1] * tx * ty
    )


def trace_on_gamma(geom: SlabGeometry, solution: ModalField, angles, x3) -> np.ndarray:
    """Dirichlet trace on the lateral surface ``r = R``; indexed ``[angle, x3]``."""
    modal = interpolate_circle(solution.grid, solution.coeffs, geom.R, angles)  # [n, angle]
    x3 = np.asarray(x3, dtype=float)
    if np.any(x3 < 0) or np.any(x3 > geom.L):
        raise DomainError(f"x3 samples must lie in [0, {geom.L}]")
    S = np.sin(np.outer(x3, geom.alpha()))
    S[(x3 == 0) | (x3 == geom.L)] = 0.0
    return modal.T @ S.T


def gamma_weights(geom: SlabGeometry, angles, x3) -> np.ndarray:
    """Trapezoid weights on the (periodic angle, x3) lattice including ``ds = R dtheta dx3``."""
    angles = np.asarray(angles)
    x3 = np.asarray(x3)
    wt = np.full(angles.size, 2.0 * math.pi / angles.size)
    wz = np.full(x3.size, geom.L / (x3.size - 1))
    wz[0] = wz[-1] = 0.5 * geom.L / (x3.size - 1)
    return geom.R * np.outer(wt, wz)


def gamma_l2_norm(geom: SlabGeometry, trace: np.ndarray, angles, x3) -> float:
    w = gamma_weights(geom, angles, x3)
    return float(math.sqrt(np.sum(w * np.abs(trace) ** 2)))
