"""Command-line front end.

Usage::

    slabwave <command> [-c config.toml] [--set section.key=value ...]

Commands: forward, scan, eigen, synth, invert, sweep, check-bounds.
Exit status 0 on success, 1 on numeric failure, 2 on validation failure; the
last two print a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import builders
from .config import ConfigError, ExperimentConfig, load_config
from .errors import DomainError, NumericError, SlabwaveError

logger = logging.getLogger("slabwave")

COMMANDS = ("forward", "scan", "eigen", "synth", "invert", "sweep", "check-bounds")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------
class Outputs:
    """Serialized writer for one command's artifacts plus the config sidecar."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.dir = Path(cfg.output.directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.written: list[str] = []
        self.text(f"{command}.config.toml", cfg.dumps())

    def path(self, name: str) -> Path:
        return self.dir / name

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        with open(p, "w", newline="\n") as fh:
            fh.write(content)
        self.written.append(str(p))
        return p

    def blob(self, name: str, content: bytes) -> Path:
        p = self.path(name)
        p.write_bytes(content)
        self.written.append(str(p))
        return p

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def plot(self, name: str, fn, *args, **kwargs):
        if not self.wants("svg"):
            return None
        p = self.path(name)
        fn(*args, p, **kwargs)
        self.written.append(str(p))
        return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _setup(cfg):
    geom = builders.geometry(cfg)
    grd = builders.grid(cfg)
    V = builders.potential(cfg, grd)
    return geom, grd, V


def _eigs(cfg, geom, grd, V, count=None):
    from .spectral import cylinder_eigs

    return cylinder_eigs(geom, V, count or cfg.eigen.count, grid=grd, disk_count=cfg.eigen.disk_count)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_forward(cfg: ExperimentConfig, args) -> int:
    from .plotting import plot_trace
    from .waveguide import periodic_angles, solve_RV, trace_on_gamma, uniform_x3

    geom, grd, V = _setup(cfg)
    f = builders.source(cfg, geom, grd, V)
    sv = cfg.solver
    u, report = solve_RV(
        geom, sv.kappa, V, f, method=sv.method, cutoff=builders.cutoff(cfg, grd),
        cond_threshold=sv.cond_threshold, tol=sv.tol, max_iter=sv.max_iter,
    )
    angles, x3 = periodic_angles(sv.n_angles), uniform_x3(geom, sv.n_x3)
    tr = trace_on_gamma(geom, u, angles, x3)
    out = Outputs(cfg, "forward")
    lines = ["theta,x3,Re u,Im u"]
    for i, t in enumerate(angles):
        for k, z in enumerate(x3):
            lines.append(f"{t:.12g},{z:.12g},{tr[i, k].real:.16e},{tr[i, k].imag:.16e}")
    out.text("forward_trace.csv", "\n".join(lines) + "\n")
    out.text("forward_report.json", report.to_json() + "\n")
    out.plot("forward_trace.svg", plot_trace, tr, angles, x3)
    return 0


def cmd_scan(cfg: ExperimentConfig, args) -> int:
    from .plotting import plot_scan
    from .waveguide import resonance_scan

    geom, grd, V = _setup(cfg)
    r = cfg.region
    im_min = r.im_min if r.im_min is not None else -r.M * math.log(r.re_min)
    re = np.linspace(r.re_min, r.re_max, r.n_re)
    im = np.linspace(im_min, r.im_max, r.n_im)
    scan = resonance_scan(geom, V, grd, re, im, cutoff=builders.cutoff(cfg, grd), floor=r.floor)
    out = Outputs(cfg, "scan")
    out.text("scan.csv", scan.to_csv())
    out.plot("scan.svg", plot_scan, scan)
    return 0


def cmd_eigen(cfg: ExperimentConfig, args) -> int:
    from .bounds import flux_ratios
    from .plotting import plot_weyl
    from .spectral import degenerate_clusters, export_eigenpairs, weyl_fit

    geom, grd, V = _setup(cfg)
    eigs, pairs = _eigs(cfg, geom, grd, V)
    ratios = flux_ratios(eigs)
    out = Outputs(cfg, "eigen")
    lines = ["j,m,n,mu,kappa,flux_over_kappa"]
    for e, q in zip(eigs, ratios):
        lines.append(f"{e.j},{e.m},{e.n},{e.mu:.12e},{e.kappa:.12e},{q:.10e}")
    out.text("eigen.csv", "\n".join(lines) + "\n")
    clusters = [c for c in degenerate_clusters(pairs) if len(c) > 1]
    disk = [{"m": p.m, "nu": p.nu} for p in pairs]
    out.text("eigen_disk.json", _dump({"disk": disk, "degenerate": clusters}))
    fit = weyl_fit([e.mu for e in eigs], 3) if len(eigs) >= 30 else None
    out.plot("eigen_weyl.svg", plot_weyl, [e.mu for e in eigs], fit)
    if args.export_fields:
        index, blobs = export_eigenpairs(eigs, geom, grd)
        out.text("eigen_index.json", index + "\n")
        for j, b in blobs.items():
            out.blob(f"eigen_phi_{j:04d}.mf", b)
    return 0


def _synth_frequencies(cfg, eigs):
    from .inverse import chebyshev_window

    n1 = max(cfg.stability.N1_list)
    A, A1 = builders.window(cfg, eigs, n1)
    kap = np.array([e.kappa for e in eigs[:n1]])
    return np.unique(np.concatenate([kap, chebyshev_window(A, A1, cfg.stability.window_nodes)])), (A, A1), kap


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    from .inverse import synthesize_data

    geom, grd, V = _setup(cfg)
    eigs, _ = _eigs(cfg, geom, grd, V)
    f = builders.source(cfg, geom, grd, V, eigs)
    freqs, win, kap = _synth_frequencies(cfg, eigs)
    sv, st = cfg.solver, cfg.stability
    data = synthesize_data(
        geom, V, f, freqs, st.synth_noise, st.seed, sv.n_angles, sv.n_x3,
        eigen_kappas=kap, window=win, method=sv.method,
    )
    out = Outputs(cfg, "synth")
    data.save(out.path("dataset"))
    out.written += [str(out.path("dataset.json")), str(out.path("dataset.bin"))]
    return 0


def cmd_invert(cfg: ExperimentConfig, args) -> int:
    from .inverse import BoundaryDataSet, project_coefficients, reconstruct_source, relative_l2_error
    from .plotting import plot_coefficients

    geom, grd, V = _setup(cfg)
    stem = args.data or str(Path(cfg.output.directory) / "dataset")
    data = BoundaryDataSet.load(stem)
    if data.geom != geom:
        raise ConfigError("geometry", f"data set geometry {data.geom} differs from the configuration")
    N1 = max(cfg.stability.N1_list)
    eigs, _ = _eigs(cfg, geom, grd, V, max(N1, cfg.eigen.count))
    f_hat, coeffs = reconstruct_source(data, eigs, N1)
    f = builders.source(cfg, geom, grd, V, eigs)
    ref = project_coefficients(f, eigs[:N1])
    out = Outputs(cfg, "invert")
    lines = ["j,m,n,kappa,Re f_j,Im f_j,abs f_j,abs projection"]
    for e, c, p in zip(eigs, coeffs, ref):
        lines.append(f"{e.j},{e.m},{e.n},{e.kappa:.12e},{c.real:.16e},{c.imag:.16e},{abs(c):.16e},{abs(p):.16e}")
    out.text("coefficients.csv", "\n".join(lines) + "\n")
    out.blob("reconstruction.mf", f_hat.to_bytes())
    report = {"N1": N1, "relative_l2_error": relative_l2_error(f, f_hat), "data": stem}
    out.text("invert_report.json", _dump(report))
    out.plot("coefficients.svg", plot_coefficients, [e.kappa for e in eigs[:N1]], coeffs, reference=ref)
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    from .inverse import stability_sweep
    from .plotting import plot_sweep

    geom, grd, V = _setup(cfg)
    st = cfg.stability
    eigs, _ = _eigs(cfg, geom, grd, V, max(max(st.N1_list), cfg.eigen.count))
    f = builders.source(cfg, geom, grd, V, eigs)
    Q = st.Q if st.Q is not None else builders.spectral_Q(f, eigs, st.smoothness)
    scfg = builders.stability_config(cfg, eigs, max(st.N1_list), Q)
    table = stability_sweep(
        geom, V, f, scfg, st.N1_list, st.noise_list, eigs, seed=st.seed,
        window_nodes=st.window_nodes, n_angles=cfg.solver.n_angles, n_x3=cfg.solver.n_x3,
    )
    out = Outputs(cfg, "sweep")
    out.text("sweep.csv", table.to_csv())
    out.text("sweep_fit.json", _dump({"constant": table.constant, "Q": Q, "A": scfg.A, "A1": scfg.A1, "d": scfg.d}))
    out.plot("sweep.svg", plot_sweep, table)
    if all(r.status != "ok" for r in table.rows):
        raise NumericError("every sweep cell failed")
    return 0


def cmd_check_bounds(cfg: ExperimentConfig, args) -> int:
    from . import bounds
    from .inverse import project_coefficients
    from .slabgeom import Grid2D, parseval_norm

    geom, grd, V = _setup(cfg)
    cut = builders.cutoff(cfg, grd)
    reg = builders.region(cfg)
    results = [bounds.check_free_resolvent_decay(grd, cut)]
    # dense checks run on a grid no finer than R/32
    coarse = Grid2D.covering(geom.R, max(cfg.h, geom.R / 32))
    Vc = builders.potential(cfg, coarse)
    cut_c = builders.cutoff(cfg, coarse)
    C0 = cfg.region.C0
    lams = [complex(x, y) for x in (C0 + 1, 2 * C0 + 2, 4 * C0 + 4, 8 * C0 + 8) for y in (-0.5, 0.5, 2.0)]
    results.append(bounds.check_free_resolvent_shape(geom, coarse, cut_c, lams))
    lams_in = [complex(x, -0.5 * reg.M * math.log(x)) for x in (C0 + 1, 2 * C0 + 2, 4 * C0 + 4, 8 * C0 + 8)]
    results.append(bounds.check_perturbed_resolvent_shape(geom, coarse, cut_c, Vc, reg, lams_in))
    r = cfg.region
    re, im = bounds.region_mesh(reg, max(r.re_min, C0), r.re_max, r.n_re, r.n_im, r.im_max)
    results.append(bounds.check_resonance_free(geom, coarse, Vc, cut_c, reg, re, im))
    eigs, _ = _eigs(cfg, geom, grd, V, max(cfg.eigen.count, 80))
    results.append(bounds.check_weyl(eigs))
    results.append(bounds.check_flux(eigs[:50]))
    f = builders.source(cfg, geom, grd, V, eigs)
    c = project_coefficients(f, eigs)
    Q = builders.spectral_Q(f, eigs, cfg.stability.smoothness)
    s_max = len(eigs) // 2
    s_vals = [s for s in (5, 10, 20, 40) if s <= s_max]
    results.append(bounds.check_tail(c, cfg.stability.smoothness, Q, parseval_norm(f), s_vals))
    results.append(bounds.check_continuation(builders.stability_config(cfg, eigs, 1, Q)))
    out = Outputs(cfg, "check-bounds")
    out.text("bounds.json", _dump([res.to_dict() for res in results]))
    lines = ["name,value,target,passed"]
    lines += [f"{res.name},{res.value:.10e},\"{res.target}\",{int(res.passed)}" for res in results]
    out.text("bounds.csv", "\n".join(lines) + "\n")
    return 0


HANDLERS = {
    "forward": cmd_forward,
    "scan": cmd_scan,
    "eigen": cmd_eigen,
    "synth": cmd_synth,
    "invert": cmd_invert,
    "sweep": cmd_sweep,
    "check-bounds": cmd_check_bounds,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def sample_config_path() -> Path:
    return Path(str(resources.files("slabwave") / "data" / "sample.toml"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slabwave", description="Slab waveguide resolvents and inverse source experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("-c", "--config", help="TOML config file (default: bundled sample)")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config field; the value is parsed as TOML (repeatable)",
    )
    p.add_argument("-o", "--output", help="shorthand for --set output.directory=...")
    p.add_argument("--data", help="data set stem for 'invert' (default: <output>/dataset)")
    p.add_argument("--export-fields", action="store_true", help="'eigen': also write every eigenfunction")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _threads():
    raw = os.environ.get("SLABWAVE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("SLABWAVE_THREADS", f"expected an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("SLABWAVE_THREADS", "must be >= 0 (0 = automatic)")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _fail(code: int, payload: dict) -> int:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.output:
        overrides.append(f'output.directory="{args.output}"')
    try:
        cfg = load_config(args.config or sample_config_path(), overrides)
        with _threads(), warnings.catch_warnings():
            warnings.simplefilter("default")
            return HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(2, exc.to_json())
    except DomainError as exc:
        return _fail(2, {"error": "validation", "field": None, "message": str(exc)})
    except (NumericError, SlabwaveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        payload = {"error": "numeric", "message": str(exc)}
        if getattr(exc, "estimate", None) is not None:
            payload["estimate"] = float(exc.estimate)
        return _fail(1, payload)
    except OSError as exc:
        return _fail(2, {"error": "validation", "field": None, "message": str(exc)})


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
