"""Turn a validated :class:`ExperimentConfig` into geometry, grids, potentials and sources."""
from __future__ import annotations

import math

import numpy as np

from .config import ConfigError, ExperimentConfig
from .slabgeom import CutoffFunction, Grid2D, ModalField, SlabGeometry, loads_modal_field, project_field
from .spectral import cylinder_eigs
from .waveguide import ResonanceFreeRegion


def bump_profile(r, radius):
    """``exp(1 - 1/(1 - (r/radius)^2))`` inside the radius, zero outside; peak value 1."""
    s = np.asarray(r, dtype=float) / radius
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def geometry(cfg: ExperimentConfig) -> SlabGeometry:
    g = cfg.geometry
    return SlabGeometry(g.L, g.N, g.R)


def grid(cfg: ExperimentConfig) -> Grid2D:
    g = cfg.geometry
    h = cfg.h
    if g.extent is None:
        return Grid2D.covering(g.R, h)
    return Grid2D(h, int(math.ceil(g.extent / h - 1e-9)))


def cutoff(cfg: ExperimentConfig, grd: Grid2D | None = None) -> CutoffFunction:
    return CutoffFunction(cfg.support, cfg.plateau, grd)


def region(cfg: ExperimentConfig) -> ResonanceFreeRegion:
    return ResonanceFreeRegion.for_geometry(geometry(cfg), cutoff(cfg), cfg.region.M, cfg.region.C0)


def potential(cfg: ExperimentConfig, grd: Grid2D) -> np.ndarray:
    p = cfg.potential
    r = grd.radius()
    if p.kind == "zero":
        return np.zeros((grd.n, grd.n))
    if p.kind == "constant":
        return np.where(r < p.radius, p.amplitude, 0.0)
    if p.kind == "bump":
        return p.amplitude * bump_profile(r, p.radius)
    V = np.load(p.path)
    if V.shape != (grd.n, grd.n):
        raise ConfigError("potential.path", f"array shape {V.shape} does not match the grid {(grd.n, grd.n)}")
    if np.any((V != 0) & (r > cfg.plateau + 1e-12)):
        raise ConfigError("potential.path", "supp V leaves the cutoff plateau")
    return V


def source(cfg: ExperimentConfig, geom: SlabGeometry, grd: Grid2D, V=None, eigs=None) -> ModalField:
    s = cfg.source
    band_geom = SlabGeometry(geom.L, cfg.band, geom.R)
    if s.kind == "eigenmode":
        if eigs is None:
            eigs, _ = cylinder_eigs(geom, potential(cfg, grd) if V is None else V, s.index, grid=grd)
        e = eigs[s.index - 1]
        if e.n > geom.N:
            raise ConfigError("source.index", f"eigenmode {s.index} has axial index {e.n} > N = {geom.N}")
        return ModalField(geom, grd, s.amplitude * e.modal_coefficients(geom, grd))
    if s.kind == "file":
        with open(s.path, "rb") as fh:
            f = loads_modal_field(fh.read())
        if f.grid != grd or f.geom.N != geom.N:
            raise ConfigError("source.path", "modal field grid or band does not match the configuration")
        return f
    cx, cy = s.center
    z0 = s.x3_center if s.x3_center is not None else 0.5 * geom.L
    wz = s.x3_width if s.x3_width is not None else geom.L / 8
    if s.kind == "bump":

        def sample(X, Y, z):
            return s.amplitude * bump_profile(np.hypot(X - cx, Y - cy), s.radius) * math.exp(-((z - z0) ** 2) / (2 * wz**2))

    else:

        def sample(X, Y, z):
            inside = (np.hypot(X - cx, Y - cy) < s.radius) & (abs(z - z0) < wz)
            return s.amplitude * inside.astype(float)

    f = project_field(sample, band_geom, grd)
    if cfg.band == geom.N:
        return f
    c = np.zeros((geom.N, grd.n, grd.n), complex)
    c[: cfg.band] = f.coeffs
    return ModalField(geom, grd, c)


def window(cfg: ExperimentConfig, eigs, N1_max: int) -> tuple[float, float]:
    """``(A, A1)`` from the config, defaulting to a unit gap above ``kappa_{N1}``."""
    st = cfg.stability
    A = st.A if st.A is not None else max(eigs[N1_max - 1].kappa + 0.5, cfg.region.C0 + 0.5, 1.5)
    A1 = st.A1 if st.A1 is not None else A + 2.0
    return A, A1


def stability_config(cfg: ExperimentConfig, eigs, N1: int, Q: float) -> "StabilityConfig":
    from .inverse import StabilityConfig

    st = cfg.stability
    A, A1 = window(cfg, eigs, max(st.N1_list))
    d = st.d if st.d is not None else StabilityConfig.strip_halfwidth(cfg.region.M, A)
    return StabilityConfig(A=A, A1=A1, d=d, c=st.c, Q=Q, N1=N1, smoothness=st.smoothness, C0=cfg.region.C0)


def spectral_Q(f: ModalField, eigs, smoothness: int) -> float:
    """``sqrt(sum (1 + mu_j)^{n+1} |f_j|^2)``: a spectral stand-in for ``||f||_{H^{n+1}}``."""
    from .inverse import project_coefficients

    c = project_coefficients(f, eigs)
    mus = np.array([e.mu for e in eigs])
    return float(math.sqrt(np.sum((1.0 + mus) ** (smoothness + 1) * np.abs(c) ** 2)))
