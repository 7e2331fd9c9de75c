"""Multi-frequency inverse source problem from lateral Dirichlet data.

Coefficient recovery rests on Green's second identity. For an eigenpair
``(mu_j, phi_j)`` of the Dirichlet problem on the cylinder and the scattered
field ``u`` at ``kappa_j = sqrt(mu_j)``,

    f_j = int_Omega f conj(phi_j) dx = int_Gamma u conj(d_nu phi_j) ds,

because ``phi_j`` vanishes on the whole boundary and ``u`` vanishes on the
plates. Everything downstream (reconstruction, tails, stability sweeps) is
built on that map.
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SlabwaveError
from .slabgeom import Grid2D, ModalField, SlabGeometry, parseval_norm
from .spectral import EigenPair, cylinder_eigs, normal_derivative_on_gamma
from .waveguide import (
    gamma_l2_norm,
    gamma_weights,
    periodic_angles,
    solve_RV,
    trace_on_gamma,
    uniform_x3,
)

logger = logging.getLogger(__name__)

FREQ_MATCH = 1e-9


# ---------------------------------------------------------------------------
# data sets
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class BoundaryDataSet:
    """Lateral Dirichlet traces ``u(., kappa)|_Gamma``, indexed ``[freq, angle, x3]``."""

    geom: SlabGeometry
    frequencies: np.ndarray
    traces: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    x3: np.ndarray = field(repr=False)
    noise_level: float = 0.0
    seed: int = 0
    eps: float | None = None
    eps1: float | None = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        if np.any(np.diff(self.frequencies) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        if self.traces.shape != (self.frequencies.size, self.angles.size, self.x3.size):
            raise DomainError("trace array does not match the frequency/angle/x3 lattice")

    def index_of(self, kappa: float) -> int:
        k = np.flatnonzero(np.abs(self.frequencies - kappa) <= FREQ_MATCH * max(1.0, abs(kappa)))
        if k.size == 0:
            raise DomainError(f"frequency {kappa:.12g} is not in the data set")
        return int(k[0])

    def trace(self, kappa: float) -> np.ndarray:
        return self.traces[self.index_of(kappa)]

    def gamma_norm(self, kappa: float) -> float:
        return gamma_l2_norm(self.geom, self.trace(kappa), self.angles, self.x3)

    def weighted_energy(self, kappas) -> float:
        """``sum kappa^2 ||u(., kappa)||^2_{L2(Gamma)}`` over the listed frequencies."""
        return float(sum(k * k * self.gamma_norm(k) ** 2 for k in kappas))

    def window_sup(self, A: float, A1: float) -> float:
        """``sup kappa^2 ||u||^2`` over the stored frequencies inside ``(A, A1)``."""
        inside = [k for k in self.frequencies if A < k < A1]
        if not inside:
            raise DomainError(f"no data frequencies inside the window ({A}, {A1})")
        return max(k * k * self.gamma_norm(k) ** 2 for k in inside)

    # -- files -------------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "format": "slabwave.dataset/1",
            "geometry": {"L": self.geom.L, "N": self.geom.N, "R": self.geom.R},
            "frequencies": self.frequencies.tolist(),
            "angles": self.angles.size,
            "x3": self.x3.size,
            "noise_level": self.noise_level,
            "seed": self.seed,
            "eps": self.eps,
            "eps1": self.eps1,
            "traces": {"dtype": "<c16", "shape": list(self.traces.shape), "order": "freq,angle,x3"},
        }

    def save(self, stem) -> tuple[str, str]:
        """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (raw traces)."""
        stem = str(stem)
        with open(stem + ".json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(stem + ".bin", "wb") as fh:
            fh.write(np.ascontiguousarray(self.traces, dtype="<c16").tobytes())
        return stem + ".json", stem + ".bin"

    @classmethod
    def load(cls, stem) -> "BoundaryDataSet":
        stem = str(stem)
        with open(stem + ".json") as fh:
            man = json.load(fh)
        if man.get("format") != "slabwave.dataset/1":
            raise DomainError("not a slabwave data set manifest")
        g = man["geometry"]
        geom = SlabGeometry(g["L"], g["N"], g["R"])
        with open(stem + ".bin", "rb") as fh:
            traces = np.frombuffer(fh.read(), dtype="<c16").reshape(man["traces"]["shape"]).astype(complex)
        return cls(
            geom,
            np.asarray(man["frequencies"]),
            traces,
            periodic_angles(man["angles"]),
            uniform_x3(geom, man["x3"]),
            man["noise_level"],
            man["seed"],
            man.get("eps"),
            man.get("eps1"),
        )


def noise_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator per (seed, frequency index); order independent."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def add_noise(geom, trace, angles, x3, level: float, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian perturbation with ``||noise||_Gamma = level ||trace||_Gamma``."""
    if level == 0:
        return trace
    xi = rng.standard_normal(trace.shape) + 1j * rng.standard_normal(trace.shape)
    xi[:, 0] = xi[:, -1] = 0.0  # the plates carry no data
    scale = level * gamma_l2_norm(geom, trace, angles, x3) / gamma_l2_norm(geom, xi, angles, x3)
    return trace + scale * xi


def synthesize_data(
    geom: SlabGeometry,
    V: np.ndarray,
    f: ModalField,
    frequencies,
    noise_level: float = 0.0,
    seed: int = 0,
    n_angles: int = 128,
    n_x3: int = 65,
    eigen_kappas=None,
    window: tuple[float, float] | None = None,
    method: str = "dense",
) -> BoundaryDataSet:
    """Forward solve at every frequency, trace on Gamma, perturb.

    ``eps`` is recorded over ``eigen_kappas`` (all frequencies if omitted) and
    ``eps1`` as the supremum over the stored frequencies inside ``window``.
    Any failing frequency aborts the whole data set.
    """
    freqs = np.asarray(frequencies, dtype=float)
    angles = periodic_angles(n_angles)
    x3 = uniform_x3(geom, n_x3)
    traces = np.empty((freqs.size, n_angles, n_x3), complex)
    for k, kappa in enumerate(freqs):
        try:
            u, report = solve_RV(geom, kappa, V, f, method=method)
        except SlabwaveError as exc:
            raise type(exc)(f"data synthesis failed at kappa={kappa}: {exc}") from exc
        tr = trace_on_gamma(geom, u, angles, x3)
        traces[k] = add_noise(geom, tr, angles, x3, noise_level, noise_stream(seed, k))
    data = BoundaryDataSet(geom, freqs, traces, angles, x3, noise_level, seed)
    ek = freqs if eigen_kappas is None else eigen_kappas
    data.eps = math.sqrt(data.weighted_energy(ek))
    if window is not None:
        data.eps1 = math.sqrt(data.window_sup(*window))
    return data


# ---------------------------------------------------------------------------
# coefficients and reconstruction
# ---------------------------------------------------------------------------
def recover_coefficient(data: BoundaryDataSet, pair: EigenPair, dnu_trace: np.ndarray | None = None) -> complex:
    """``f_j = int_Gamma u(., kappa_j) conj(d_nu phi_j) ds`` by the trapezoid rule."""
    u = data.trace(pair.kappa)
    if dnu_trace is None:
        dnu_trace = normal_derivative_on_gamma(pair, data.angles, data.x3)
    elif dnu_trace.shape != u.shape:
        raise DomainError("normal-derivative trace lattice does not match the data lattice")
    w = gamma_weights(data.geom, data.angles, data.x3)
    return complex(np.sum(w * u * np.conj(dnu_trace)))


def recover_coefficients(data: BoundaryDataSet, eigs: list[EigenPair]) -> np.ndarray:
    return np.array([recover_coefficient(data, e) for e in eigs])


def eigen_expansion(coeffs, eigs: list[EigenPair], geom: SlabGeometry, grid: Grid2D) -> ModalField:
    """``sum_j c_j phi_j`` as a modal field on a band wide enough for every ``n_j``."""
    n_rec = max([geom.N] + [e.n for e in eigs])
    g = SlabGeometry(geom.L, n_rec, geom.R)
    out = np.zeros((n_rec, grid.n, grid.n), complex)
    for c, e in zip(coeffs, eigs):
        out[e.n - 1] += c * math.sqrt(2.0 / e.L) * e.disk.psi
    return ModalField(g, grid, out)


def reconstruct_source(data: BoundaryDataSet, eigs: list[EigenPair], N1: int) -> tuple[ModalField, np.ndarray]:
    """Truncated eigen-expansion ``sum_{j <= N1} f_j phi_j`` from the data."""
    if N1 < 0 or N1 > len(eigs):
        raise DomainError(f"N1={N1} outside 0..{len(eigs)}")
    used = eigs[:N1]
    grid = eigs[0].disk.grid
    coeffs = recover_coefficients(data, used) if used else np.zeros(0, complex)
    return eigen_expansion(coeffs, used, data.geom, grid), coeffs


def pad_modes(field: ModalField, N: int) -> ModalField:
    if field.geom.N >= N:
        return field
    g = SlabGeometry(field.geom.L, N, field.geom.R)
    c = np.zeros((N,) + field.coeffs.shape[1:], complex)
    c[: field.geom.N] = field.coeffs
    return ModalField(g, field.grid, c)


def relative_l2_error(f: ModalField, f_hat: ModalField) -> float:
    N = max(f.geom.N, f_hat.geom.N)
    a, b = pad_modes(f, N), pad_modes(f_hat, N)
    return math.sqrt(parseval_norm(a - b) / parseval_norm(a))


def project_coefficients(f: ModalField, eigs: list[EigenPair]) -> np.ndarray:
    """Direct projections ``<f, phi_j>`` with the grid quadrature."""
    h2 = f.grid.h**2
    out = []
    for e in eigs:
        if e.n > f.geom.N:
            out.append(0.0)
            continue
        # int_0^L sin^2 = L/2 turns the modal inner product into a planar one
        planar = np.sum(f.coeffs[e.n - 1] * e.disk.psi) * h2
        out.append(math.sqrt(2.0 / e.L) * 0.5 * e.L * planar)
    return np.asarray(out, dtype=complex)


# ---------------------------------------------------------------------------
# analytic-continuation machinery
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class StabilityConfig:
    """Window ``(A, A1)``, strip half-width ``d`` and the a-priori data of the estimate.

    ``smoothness`` is the Sobolev index ``n`` in ``H^{n+1}``; it is unrelated to
    the spatial dimension used by the Weyl fit.
    """

    A: float
    A1: float
    d: float
    c: float = 0.1
    Q: float = 1.0
    N1: int = 1
    smoothness: int = 1
    C0: float | None = None

    def __post_init__(self):
        if not self.A < self.A1:
            raise DomainError(f"window needs A < A1, got A={self.A}, A1={self.A1}")
        if self.C0 is not None and not self.C0 < self.A:
            raise DomainError(f"window must start above C0={self.C0}, got A={self.A}")
        if not self.d > 0:
            raise DomainError("strip half-width d must be positive")
        if not self.Q > 0:
            raise DomainError("a-priori bound Q must be positive")
        if not self.c > 0:
            raise DomainError("constant c must be positive")
        if self.N1 < 1:
            raise DomainError("N1 must be at least 1")

    @property
    def a(self) -> float:
        return self.A1 - self.A

    @staticmethod
    def strip_halfwidth(M: float, A: float) -> float:
        """Largest ``d`` with ``(A, inf) x (-d, d)`` inside ``|Im k| <= M log|k|``."""
        if A <= 1:
            raise DomainError("the logarithmic region needs A > 1")
        return M * math.log(A)


def continuation_exponent(cfg: StabilityConfig, z: float) -> float:
    """``64 a d / (3 pi^2 (a^2 + 4 d^2)) * exp(pi/(2d) (a/2 - z))`` for ``z >= A1``."""
    if z < cfg.A1:
        raise DomainError(f"continuation exponent defined for z >= A1={cfg.A1}, got {z}")
    a, d = cfg.a, cfg.d
    pref = 64.0 * a * d / (3.0 * math.pi**2 * (a * a + 4.0 * d * d))
    return pref * math.exp(math.pi / (2.0 * d) * (0.5 * a - z))


def continuation_bound(cfg: StabilityConfig, epsilon1: float, kappa: float) -> float:
    """Ceiling ``Q^2 e^{c kappa} eps1^{2 mu(kappa)}`` on ``kappa^2 ||u||^2_Gamma``."""
    if not 0 < epsilon1 <= 1:
        raise DomainError(f"epsilon1 must lie in (0, 1], got {epsilon1}")
    mu = continuation_exponent(cfg, kappa)
    return cfg.Q**2 * math.exp(cfg.c * kappa) * epsilon1 ** (2.0 * mu)


def chebyshev_window(A: float, A1: float, count: int = 16) -> np.ndarray:
    """Chebyshev nodes of the first kind inside ``(A, A1)``, increasing."""
    k = np.arange(count)
    x = np.cos((2 * k + 1) * math.pi / (2 * count))
    return np.sort(0.5 * (A + A1) + 0.5 * (A1 - A) * x)


def tail_check(coeffs, smoothness: int, s: int, Q: float, total: float | None = None) -> tuple[float, float]:
    """High-frequency tail ``sum_{j >= s} |f_j|^2`` and its ratio to ``Q^2 / s^{2(n+1)/3}``.

    With ``total = ||f||^2`` the tail is taken as ``total - sum_{j < s} |f_j|^2``
    so energy beyond the computed eigenpairs is included.
    """
    c = np.abs(np.asarray(coeffs)) ** 2
    if s < 1:
        raise DomainError("tail index s must be >= 1")
    if c.size < 2 * s:
        raise DomainError(f"need coefficients up to j = {2 * s} for a tail from s = {s}, got {c.size}")
    if total is None:
        tail = float(np.sum(c[s - 1 :]))
    else:
        tail = max(float(total - np.sum(c[: s - 1])), 0.0)
    bound = Q**2 / s ** (2.0 * (smoothness + 1) / 3.0)
    return tail, tail / bound


def stability_rhs_shape(eps: float, eps1: float, Q: float, N1: int, smoothness: int) -> float:
    """``eps^2 + Q^2 / (N1^{(n+1)/3} (ln|ln eps1|)^{(n+1)/3})``.

    The log-log factor is floored at 1: for ``eps1`` that is not small the
    estimate degenerates to the plain ``N1`` decay.
    """
    p = (smoothness + 1) / 3.0
    ll = 1.0
    if 0 < eps1 < math.exp(-1):
        ll = max(1.0, math.log(abs(math.log(eps1))))
    return eps**2 + Q**2 / (N1**p * ll**p)


@dataclass
class SweepRow:
    N1: int
    noise: float
    eps: float = float("nan")
    eps1: float = float("nan")
    rel_error: float = float("nan")
    rhs_bound: float = float("nan")
    data_error: float = float("nan")
    status: str = "ok"


@dataclass
class SweepTable:
    rows: list[SweepRow]
    constant: float = float("nan")

    COLUMNS = ("N1", "noise", "eps", "eps1", "rel_error", "rhs_bound", "data_error", "status")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.COLUMNS) + "\n")
        for r in self.rows:
            out.write(
                f"{r.N1},{r.noise:.6g},{r.eps:.10e},{r.eps1:.10e},{r.rel_error:.10e},"
                f"{r.rhs_bound:.10e},{r.data_error:.10e},{r.status}\n"
            )
        return out.getvalue()

    def cell(self, N1: int, noise: float) -> SweepRow:
        for r in self.rows:
            if r.N1 == N1 and r.noise == noise:
                return r
        raise KeyError((N1, noise))


def stability_sweep(
    geom: SlabGeometry,
    V: np.ndarray,
    f: ModalField,
    cfg: StabilityConfig,
    N1_list,
    noise_list,
    eigs: list[EigenPair] | None = None,
    seed: int = 0,
    window_nodes: int = 16,
    n_angles: int = 128,
    n_x3: int = 65,
) -> SweepTable:
    """Reconstruction error over a grid of (N1, noise) cells.

    Per noise level one data set is synthesized at the eigenfrequencies
    ``kappa_j, j <= max(N1_list)`` and at Chebyshev nodes of the window.
    Columns:

    * ``eps``, ``eps1`` -- data norms of the noisy set (``eps`` over ``j <= N1``);
    * ``rel_error`` -- ``||f - f_hat|| / ||f||``;
    * ``data_error`` -- ``||f_hat_noisy - f_hat_clean|| / ||f||``, the part of the
      error driven by the data discrepancy;
    * ``rhs_bound`` -- ``sqrt(C * shape) / ||f||`` with the stability shape
      evaluated on the noise discrepancy and a single constant ``C`` fitted as
      the smallest value bounding every successful cell.
    """
    N1_list = sorted(int(n) for n in N1_list)
    if eigs is None:
        eigs, _ = cylinder_eigs(geom, V, N1_list[-1], grid=f.grid)
    if N1_list[-1] > len(eigs):
        raise DomainError(f"only {len(eigs)} eigenpairs available, N1 up to {N1_list[-1]} requested")
    kappas = np.array([e.kappa for e in eigs[: N1_list[-1]]])
    window = chebyshev_window(cfg.A, cfg.A1, window_nodes)
    freqs = np.unique(np.concatenate([kappas, window]))
    fnorm = math.sqrt(parseval_norm(f))
    clean = None
    rows: list[SweepRow] = []
    shapes: dict[tuple[int, float], float] = {}
    levels = sorted(set([0.0] + [float(x) for x in noise_list]))
    datasets = {}
    for level in levels:
        try:
            datasets[level] = synthesize_data(
                geom, V, f, freqs, level, seed, n_angles, n_x3, window=(cfg.A, cfg.A1)
            )
        except SlabwaveError as exc:
            logger.warning("noise level %g failed: %s", level, exc)
            datasets[level] = exc
    clean = datasets[0.0]
    for level in [float(x) for x in noise_list]:
        data = datasets[level]
        for N1 in N1_list:
            row = SweepRow(N1, level)
            if isinstance(data, Exception) or isinstance(clean, Exception):
                row.status = "failed"
                rows.append(row)
                continue
            used = eigs[:N1]
            f_hat, coeffs = reconstruct_source(data, used, N1)
            f_ref, _ = reconstruct_source(clean, used, N1)
            row.eps = math.sqrt(data.weighted_energy([e.kappa for e in used]))
            row.eps1 = math.sqrt(data.window_sup(cfg.A, cfg.A1))
            row.rel_error = relative_l2_error(f, f_hat)
            N = max(f_hat.geom.N, f_ref.geom.N)
            row.data_error = math.sqrt(parseval_norm(pad_modes(f_hat, N) - pad_modes(f_ref, N))) / fnorm
            delta2 = sum(
                e.kappa**2 * gamma_l2_norm(geom, data.trace(e.kappa) - clean.trace(e.kappa), data.angles, data.x3) ** 2
                for e in used
            )
            shapes[(N1, level)] = stability_rhs_shape(
                math.sqrt(delta2), row.eps1, cfg.Q, N1, cfg.smoothness
            )
            rows.append(row)
    ok = [r for r in rows if r.status == "ok"]
    C = max(((r.rel_error * fnorm) ** 2 / shapes[(r.N1, r.noise)] for r in ok), default=float("nan"))
    for r in ok:
        r.rhs_bound = math.sqrt(C * shapes[(r.N1, r.noise)]) / fnorm
    return SweepTable(rows, C)


def flux_constant(eigs: list[EigenPair]) -> float:
    """Largest ``||d_nu phi_j||_{L2(Gamma)} / kappa_j``: the constant of the coefficient bound."""
    return max(e.disk.flux_l2() / e.kappa for e in eigs)
