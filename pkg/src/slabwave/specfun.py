"""Outgoing free-resolvent kernel of the planar Helmholtz operator.

Two independent routes are provided:

* ``series`` -- ``(i/4) H0^(1)(lambda r)`` through the Bessel/Hankel
  evaluation of :func:`hankel0_first`;
* ``integral_representation`` -- the Laplace-type integral

      G(lambda, r) = C exp(i lambda r) int_0^inf e^{-t} t^{-1/2} (t/2 - i lambda r)^{-1/2} dt

  evaluated by double-exponential quadrature.

The constant ``C`` is calibrated once against the series route at
``lambda = 1, r = 1``; analytically it equals ``sqrt(2) / (4 pi)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .errors import (
    AccuracyWarning,
    BranchCutWarning,
    DomainError,
    NumericError,
    SingularityError,
)

#: validated modulus range for :func:`hankel0_first`
HANKEL_RANGE = (1e-6, 1e4)
#: width of the flagged band around the negative real axis of ``lambda r``
BRANCH_CUT_BAND = 0.05

SERIES = "series"
INTEGRAL = "integral_representation"


@dataclass(frozen=True)
class KernelEval:
    lam: complex
    r: float
    value: complex
    path: str


def hankel0_first(z):
    """Hankel function ``H0^(1)(z) = J0(z) + i Y0(z)`` on the principal branch.

    Accepts scalars or arrays. For ``Re z < 0`` with ``Im z >= 0`` the value is
    obtained by the reflection ``H0(z) = -conj(H0(-conj z))``; on the negative
    real axis itself this selects the limit from the upper half-plane, which is
    the outgoing boundary value.

    Raises
    ------
    SingularityError
        If any ``z == 0``.
    """
    zarr = np.asarray(z, dtype=complex)
    if np.any(zarr == 0):
        raise SingularityError("H0^(1) is singular at z = 0")
    mod = np.abs(zarr)
    if np.any((mod < HANKEL_RANGE[0]) | (mod > HANKEL_RANGE[1])):
        warnings.warn(
            f"|z| outside validated range {HANKEL_RANGE}; accuracy not guaranteed",
            AccuracyWarning,
            stacklevel=2,
        )
    # -0.0 imaginary parts are folded onto the upper side of the cut
    zarr = zarr + 0j
    left = (zarr.real < 0) & (zarr.imag >= 0)
    out = np.empty_like(zarr)
    right = ~left
    out[right] = special.hankel1(0, zarr[right])
    out[left] = -np.conj(special.hankel1(0, -np.conj(zarr[left])))
    if np.ndim(z) == 0:
        return complex(out)
    return out


def _check_args(lam, r):
    if lam == 0:
        raise DomainError("lambda = 0 is a resonance of the 2D free resolvent")
    if np.any(np.asarray(r) <= 0):
        raise DomainError("kernel separation r must be positive")


def _flag_branch(z):
    z = np.asarray(z, dtype=complex)
    near = (z.real < 0) & (z.imag < 0) & (np.abs(z.imag) < BRANCH_CUT_BAND)
    if np.any(near):
        warnings.warn(
            "continued kernel evaluated within 0.05 of the negative real axis of lambda*r",
            BranchCutWarning,
            stacklevel=3,
        )


def free_kernel_2d(lam, r):
    """Outgoing Green function ``(i/4) H0^(1)(lam r)`` of ``-Laplacian - lam^2``.

    ``r`` may be an array of positive separations.
    """
    lam = complex(lam)
    _check_args(lam, r)
    z = lam * np.asarray(r, dtype=float)
    if lam.imag < 0:
        _flag_branch(z)
    return 0.25j * hankel0_first(z)


def exp_sinh_quad(
    f: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-12,
    h0: float = 0.5,
    max_levels: int = 10,
    window: tuple[float, float] = (-6.0, 4.0),
):
    """Double-exponential quadrature of ``f`` over ``(0, inf)``.

    Uses ``t = exp(pi/2 sinh u)`` so that algebraic endpoint singularities at
    ``t = 0`` and exponential decay at infinity both become double-exponential
    decay in ``u``. The step is halved until two successive estimates agree to
    ``tol``.

    Returns
    -------
    value, error_estimate
    """
    lo, hi = window

    def trapezoid(step, offset):
        u = np.arange(lo + offset, hi + 0.5 * step, step)
        s = 0.5 * math.pi * np.sinh(u)
        t = np.exp(s)
        w = 0.5 * math.pi * np.cosh(u) * t
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            vals = f(t) * w
        vals = np.where(np.isfinite(vals), vals, 0.0)
        return np.sum(vals) * step

    step = h0
    total = trapezoid(step, 0.0)
    err = np.inf
    for _ in range(max_levels):
        # refined rule reuses the previous nodes and adds the midpoints
        mids = trapezoid(step, 0.5 * step)
        new = 0.5 * (total + mids)
        err = abs(new - total)
        total = new
        step *= 0.5
        if err <= tol * max(1.0, abs(total)):
            return total, err
    raise NumericError(
        f"exp-sinh quadrature did not converge (estimate {err:.3e})", estimate=err
    )


def _laplace_integral(z: complex, tol: float) -> complex:
    def integrand(t):
        return np.exp(-t) * t ** -0.5 * (0.5 * t - 1j * z) ** -0.5

    val, _ = exp_sinh_quad(integrand, tol=tol)
    return complex(val)


@lru_cache(maxsize=1)
def kernel_constant() -> float:
    """Multiplicative constant of the integral route, calibrated at lam = r = 1."""
    ref = free_kernel_2d(1.0, 1.0)
    c = ref / (np.exp(1j) * _laplace_integral(1.0 + 0j, 1e-14))
    return float(c.real)


def kernel_integral_rep(lam, r, tol: float = 1e-10) -> complex:
    """Free kernel through its Laplace-type integral representation.

    Agrees with :func:`free_kernel_2d` wherever ``lam r`` lies in the right or
    upper half-plane. In the third quadrant the two routes sit on different
    sheets of the logarithmic surface.
    """
    lam = complex(lam)
    _check_args(lam, r)
    if tol <= 0:
        raise DomainError("tol must be positive")
    z = lam * float(r)
    if z.real == 0 and z.imag < 0:
        raise DomainError("integral route is singular on the negative imaginary axis")
    scale = abs(np.exp(1j * z)) * kernel_constant()
    return complex(kernel_constant() * np.exp(1j * z) * _laplace_integral(z, tol / max(scale, 1.0)))


def evaluate_kernel(lam, r, path: str = SERIES, tol: float = 1e-10) -> KernelEval:
    if path == SERIES:
        val = free_kernel_2d(lam, r)
    elif path == INTEGRAL:
        val = kernel_integral_rep(lam, r, tol)
    else:
        raise DomainError(f"unknown kernel path {path!r}")
    return KernelEval(complex(lam), float(r), complex(val), path)
