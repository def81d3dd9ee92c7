"""Command-line harness: direct solves, two-grid runs, convergence studies.

Results are written as delimited CSV tables mirroring the benchmark table
layout (one row per eigenvalue index j), studies additionally emit
per-eigenvalue log-log error data, fitted convergence slopes and a
rendered error-curve figure.  Configuration comes from flags, optionally
layered over a JSON config file (flags win).

Exit codes: 0 success, 2 configuration problems, 3 solver convergence
failures (partial results are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .assembly import (
    RefractionIndex,
    assemble_matrices,
    build_pencil,
    export_matrix_market,
)
from .eigensolver import SolverOptions, solve_primal
from .errors import ConvergenceError, ModelError, SolverError
from .mesh import Domain, build_mesh
from .twogrid import TwoGridSession

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ConvergenceReport",
    "parse_refraction",
    "run",
    "convergence_study",
    "dump_matrices",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

CSV_COLUMNS = [
    "j",
    "H",
    "h",
    "k_H_re",
    "k_H_im",
    "k_twogrid_re",
    "k_twogrid_im",
    "k_direct_re",
    "k_direct_im",
    "residual",
    "wall_time_s",
]

FAILED = "---"


class ConfigError(Exception):
    """Configuration problem; the message names the offending field."""


@dataclass
class ExperimentConfig:
    """Merged configuration of one CLI invocation."""

    domain: str = "square"
    refraction: str = "const:16"
    method: str = "direct"
    coarse: int | None = None
    fine: int = 32
    nev: int = 4
    tol: float = 1e-9
    krylov_dim: int | None = None
    cluster_tol: float = 1e-6
    deterministic: bool = True
    identity_trick: bool = True
    levels: list = field(default_factory=lambda: [8, 16, 32, 64])
    out: str = "results.csv"
    out_prefix: str = "study"

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            tol=self.tol,
            krylov_dim=self.krylov_dim,
            cluster_tol=self.cluster_tol,
            deterministic=self.deterministic,
        )

    def domain_enum(self) -> Domain:
        try:
            return Domain(self.domain)
        except ValueError:
            raise ConfigError(
                f"domain: expected 'square' or 'lshape', got '{self.domain}'"
            ) from None

    def refraction_index(self) -> RefractionIndex:
        return parse_refraction(self.refraction)


def parse_refraction(text: str) -> RefractionIndex:
    """Parse 'const:<c>' or 'affine:<c0>,<c1>,<c2>'."""
    kind, sep, rest = str(text).partition(":")
    try:
        parts = [float(p) for p in rest.split(",")] if sep else []
        if kind == "const" and len(parts) == 1:
            return RefractionIndex.constant(parts[0])
        if kind == "affine" and len(parts) == 3:
            return RefractionIndex.affine(*parts)
    except ValueError:
        pass
    except ModelError as exc:
        raise ConfigError(f"refraction: {exc}") from None
    raise ConfigError(
        f"refraction: expected 'const:<c>' or 'affine:<c0>,<c1>,<c2>', got '{text}'"
    )


def _fmt(value, spec="{:.10f}"):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return spec.format(value)


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)


def _validate_common(config: ExperimentConfig) -> None:
    if config.fine < 2:
        raise ConfigError(f"fine: subdivision must be >= 2, got {config.fine}")
    if config.nev < 1:
        raise ConfigError(f"nev: must be >= 1, got {config.nev}")
    if not config.tol > 0:
        raise ConfigError(f"tol: must be positive, got {config.tol}")
    domain = config.domain_enum()
    try:
        config.refraction_index().validate_on(build_mesh(domain, 2))
    except ModelError as exc:
        raise ConfigError(f"refraction: {exc}") from None


def run(config: ExperimentConfig) -> int:
    """Execute a solve run and write its CSV table.

    Direct runs fill only the k_direct columns; two-grid runs fill the
    coarse, two-grid and direct reference columns, like the benchmark
    tables.  Rows whose computation failed to converge carry '---' and
    turn the exit code to 3 while the rest of the table is still written.
    """
    _validate_common(config)
    if config.method == "direct":
        return _run_direct(config)
    if config.method == "twogrid":
        return _run_twogrid(config)
    raise ConfigError(
        f"method: expected 'direct' or 'twogrid', got '{config.method}'"
    )


def _solve_direct(config: ExperimentConfig, n_subdiv: int):
    """Direct fine solve returning (spectrum_or_partial, wall_time, failed)."""
    mesh = build_mesh(config.domain_enum(), n_subdiv)
    pencil = build_pencil(
        assemble_matrices(mesh, config.refraction_index()),
        identity_trick=config.identity_trick,
    )
    t0 = time.perf_counter()
    try:
        spectrum = solve_primal(pencil, config.nev, config.solver_options())
        failed = False
    except ConvergenceError as exc:
        spectrum = exc.partial
        failed = True
    return mesh, spectrum, time.perf_counter() - t0, failed


def _run_direct(config: ExperimentConfig) -> int:
    mesh, spectrum, wall, failed = _solve_direct(config, config.fine)
    h = mesh.mesh_size
    rows = []
    for j in range(1, config.nev + 1):
        if j <= len(spectrum.pairs):
            p = spectrum.pairs[j - 1]
            rows.append([
                j, "", _fmt(h), "", "", "", "",
                _fmt(p.k.real), _fmt(p.k.imag),
                _fmt(p.residual, "{:.3e}"), _fmt(wall, "{:.3f}"),
            ])
        else:
            rows.append([j, "", _fmt(h), "", "", "", "",
                         FAILED, FAILED, FAILED, _fmt(wall, "{:.3f}")])
    _write_csv(config.out, rows)
    return EXIT_SOLVER if failed else EXIT_OK


def _run_twogrid(config: ExperimentConfig) -> int:
    if config.coarse is None:
        raise ConfigError("coarse: required for the two-grid method")
    if config.coarse < 2:
        raise ConfigError(f"coarse: subdivision must be >= 2, got {config.coarse}")
    if config.fine % config.coarse != 0:
        raise ConfigError(
            f"coarse: fine N={config.fine} must be an integer multiple of "
            f"coarse N={config.coarse}"
        )
    session = TwoGridSession(
        config.domain_enum(),
        config.refraction_index(),
        config.coarse,
        config.fine,
        config.solver_options(),
    )
    any_failed = False
    try:
        session.prepare(config.nev)
    except ConvergenceError:
        any_failed = True

    _, direct_spec, direct_wall, direct_failed = _solve_direct(config, config.fine)
    any_failed = any_failed or direct_failed

    big_h = session.coarse_mesh.mesh_size
    small_h = session.fine_mesh.mesh_size
    rows = []
    for j in range(1, config.nev + 1):
        coarse_cells = [FAILED, FAILED]
        two_cells = [FAILED, FAILED]
        try:
            result = session.correct(j)
            k_coarse = complex(np.sqrt(result.coarse.lam))
            coarse_cells = [_fmt(k_coarse.real), _fmt(k_coarse.imag)]
            two_cells = [_fmt(result.k.real), _fmt(result.k.imag)]
            row_wall = _fmt(result.wall_time_s, "{:.3f}")
        except (SolverError, ValueError):
            any_failed = True
            row_wall = FAILED
        if j <= len(direct_spec.pairs):
            p = direct_spec.pairs[j - 1]
            direct_cells = [_fmt(p.k.real), _fmt(p.k.imag)]
            residual = _fmt(p.residual, "{:.3e}")
        else:
            direct_cells = [FAILED, FAILED]
            residual = FAILED
        rows.append([j, _fmt(big_h), _fmt(small_h), *coarse_cells, *two_cells,
                     *direct_cells, residual, row_wall])
    _write_csv(config.out, rows)
    return EXIT_SOLVER if any_failed else EXIT_OK


@dataclass
class ConvergenceReport:
    """Per-level eigenvalues, reference values and fitted slopes."""

    levels: list
    mesh_sizes: list
    wavenumbers: dict
    reference_level: int
    reference: dict
    slopes: dict
    fit_points: dict
    files: list


def convergence_study(config: ExperimentConfig) -> tuple[ConvergenceReport, int]:
    """Run direct solves over config.levels and fit convergence slopes.

    The finest successful level serves as the reference; errors of the
    remaining levels against it are fitted in log-log coordinates (at
    least 3 levels must survive).  Writes <prefix>_levels.csv,
    <prefix>_err_j<j>.dat per eigenvalue, <prefix>_slopes.csv and a
    rendered <prefix>_convergence.png.
    """
    _validate_common(config)
    levels = list(config.levels)
    if len(levels) < 4:
        raise ConfigError(f"levels: need at least 4 mesh levels, got {levels}")
    if sorted(set(levels)) != levels:
        raise ConfigError(f"levels: must be strictly increasing, got {levels}")
    if any(n < 2 for n in levels):
        raise ConfigError(f"levels: all subdivisions must be >= 2, got {levels}")

    per_level = {}
    mesh_sizes = {}
    walls = {}
    any_failed = False
    for n_subdiv in levels:
        mesh, spectrum, wall, failed = _solve_direct(config, n_subdiv)
        mesh_sizes[n_subdiv] = mesh.mesh_size
        walls[n_subdiv] = wall
        if failed or len(spectrum.pairs) < config.nev:
            any_failed = True
            per_level[n_subdiv] = None
        else:
            per_level[n_subdiv] = spectrum
    good = [n for n in levels if per_level[n] is not None]
    if len(good) < 3:
        raise ConvergenceError(
            f"only {len(good)} of {len(levels)} levels solved; "
            "cannot fit slopes from fewer than 3"
        )
    ref_level = good[-1]
    ref = {
        j: per_level[ref_level].pairs[j - 1].k for j in range(1, config.nev + 1)
    }

    prefix = config.out_prefix
    files = []
    level_rows = []
    for n_subdiv in levels:
        spec = per_level[n_subdiv]
        for j in range(1, config.nev + 1):
            if spec is None:
                level_rows.append([n_subdiv, _fmt(mesh_sizes[n_subdiv]), j,
                                   FAILED, FAILED, FAILED])
            else:
                p = spec.pairs[j - 1]
                level_rows.append([
                    n_subdiv, _fmt(mesh_sizes[n_subdiv]), j,
                    _fmt(p.k.real), _fmt(p.k.imag), _fmt(p.residual, "{:.3e}"),
                ])
    levels_path = f"{prefix}_levels.csv"
    with open(levels_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "h", "j", "k_re", "k_im", "residual"])
        writer.writerows(level_rows)
    files.append(levels_path)

    slopes = {}
    fit_points = {}
    err_data = {}
    for j in range(1, config.nev + 1):
        pts = []
        for n_subdiv in good:
            if n_subdiv == ref_level:
                continue
            err = abs(per_level[n_subdiv].pairs[j - 1].k - ref[j])
            if err > 0:
                pts.append((np.log10(mesh_sizes[n_subdiv]), np.log10(err)))
        fit_points[j] = pts
        err_data[j] = pts
        dat_path = f"{prefix}_err_j{j}.dat"
        with open(dat_path, "w") as fh:
            fh.write("# log10_h log10_err\n")
            for lh, le in pts:
                fh.write(f"{lh:.12g} {le:.12g}\n")
        files.append(dat_path)
        if len(pts) >= 3:
            arr = np.array(pts)
            slopes[j] = float(np.polyfit(arr[:, 0], arr[:, 1], 1)[0])
        else:
            slopes[j] = None
            any_failed = True

    slopes_path = f"{prefix}_slopes.csv"
    with open(slopes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "slope", "n_points", "k_ref_re", "k_ref_im"])
        for j in range(1, config.nev + 1):
            writer.writerow([
                j,
                FAILED if slopes[j] is None else f"{slopes[j]:.4f}",
                len(fit_points[j]),
                _fmt(ref[j].real),
                _fmt(ref[j].imag),
            ])
    files.append(slopes_path)

    png_path = f"{prefix}_convergence.png"
    _render_error_curves(png_path, config, err_data, slopes)
    files.append(png_path)

    report = ConvergenceReport(
        levels=levels,
        mesh_sizes=[mesh_sizes[n] for n in levels],
        wavenumbers={
            n: (None if per_level[n] is None
                else [per_level[n].pairs[j - 1].k for j in range(1, config.nev + 1)])
            for n in levels
        },
        reference_level=ref_level,
        reference=ref,
        slopes=slopes,
        fit_points=fit_points,
        files=files,
    )
    return report, (EXIT_SOLVER if any_failed else EXIT_OK)


def _render_error_curves(path, config, err_data, slopes) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for j, pts in err_data.items():
        if not pts:
            continue
        arr = np.array(pts)
        h = 10.0 ** arr[:, 0]
        err = 10.0 ** arr[:, 1]
        slope = slopes.get(j)
        label = f"j={j}" + (f" (slope {slope:.2f})" if slope is not None else "")
        ax.loglog(h, err, marker="o", label=label)
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("|k_j(h) - k_j(ref)|")
    ax.set_title(
        f"{config.domain}, n = {config.refraction}: eigenvalue convergence"
    )
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def dump_matrices(config: ExperimentConfig, path_prefix: str | None = None) -> list:
    """Assemble the configured fine-mesh pencil and export it.

    Writes <prefix>_K.mtx and <prefix>_M.mtx in MatrixMarket coordinate
    format; returns the written paths.
    """
    _validate_common(config)
    prefix = path_prefix if path_prefix is not None else config.out_prefix
    mesh = build_mesh(config.domain_enum(), config.fine)
    pencil = build_pencil(
        assemble_matrices(mesh, config.refraction_index()),
        identity_trick=config.identity_trick,
    )
    return list(export_matrix_market(pencil, prefix))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transeig",
        description="Helmholtz transmission eigenvalue solver "
        "(direct and two-grid finite element methods)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--domain", choices=["square", "lshape"], default=None,
                       help="computational domain")
        p.add_argument("--n", dest="refraction", default=None,
                       help="refraction index: const:<c> or affine:<c0>,<c1>,<c2>")
        p.add_argument("--nev", type=int, default=None,
                       help="number of eigenvalues")
        p.add_argument("--tol", type=float, default=None,
                       help="eigensolver residual tolerance")
        p.add_argument("--krylov-dim", type=int, default=None,
                       help="Arnoldi subspace dimension (>= 3*nev + 20)")
        p.add_argument("--cluster-tol", type=float, default=None,
                       help="relative gap that merges eigenvalues into a cluster")
        p.add_argument("--deterministic", action="store_const", const=True,
                       default=None,
                       help="require bit-reproducible runs (the default)")
        p.add_argument("--identity-trick", choices=["on", "off"], default=None,
                       help="replace pencil mass blocks by the identity in "
                            "direct eigensolves (default on; the two-grid "
                            "correction always keeps the mass blocks)")

    p_solve = sub.add_parser("solve", help="compute eigenvalues on one mesh pair")
    add_common(p_solve)
    p_solve.add_argument("--method", choices=["direct", "twogrid"], default=None)
    p_solve.add_argument("--coarse", type=int, default=None,
                         help="coarse subdivisions (two-grid only)")
    p_solve.add_argument("--fine", type=int, default=None,
                         help="fine subdivisions")
    p_solve.add_argument("--out", default=None, help="output CSV path")

    p_study = sub.add_parser("study", help="convergence study over mesh levels")
    add_common(p_study)
    p_study.add_argument("--levels", default=None,
                         help="comma-separated subdivision counts, e.g. 8,16,32,64")
    p_study.add_argument("--out-prefix", dest="out_prefix", default=None,
                         help="prefix for the study output files")

    p_dump = sub.add_parser("dump", help="export the assembled pencil matrices")
    add_common(p_dump)
    p_dump.add_argument("--fine", type=int, default=None,
                        help="fine subdivisions")
    p_dump.add_argument("--out-prefix", dest="out_prefix", default=None,
                        help="prefix for the MatrixMarket files")

    return parser


_CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in '{path}': {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(data) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"config: unknown fields {sorted(unknown)}")
    return data


def _parse_levels(value) -> list:
    if isinstance(value, (list, tuple)):
        try:
            return [int(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"levels: expected integers, got {value!r}") from None
    try:
        return [int(part) for part in str(value).split(",")]
    except ValueError:
        raise ConfigError(
            f"levels: expected comma-separated integers, got '{value}'"
        ) from None


def merge_config(args: argparse.Namespace) -> ExperimentConfig:
    """Layer defaults, config file and explicit flags into one config."""
    config = ExperimentConfig()
    if getattr(args, "config", None):
        overrides = _load_config_file(args.config)
        if "levels" in overrides:
            overrides["levels"] = _parse_levels(overrides["levels"])
        config = replace(config, **overrides)
    updates = {}
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is None:
            continue
        if name == "levels":
            value = _parse_levels(value)
        elif name == "identity_trick":
            value = value if isinstance(value, bool) else value == "on"
        updates[name] = value
    return replace(config, **updates)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = merge_config(args)
        if args.command == "solve":
            return run(config)
        if args.command == "study":
            _, code = convergence_study(config)
            return code
        if args.command == "dump":
            dump_matrices(config)
            return EXIT_OK
        raise ConfigError(f"command: unknown command '{args.command}'")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
