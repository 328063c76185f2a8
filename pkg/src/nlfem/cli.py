"""Config-driven batch front end.

Usage: ``nlfem <command> --config <file> [--out <prefix>] [--workers <n>]``.

Config files are flat ``key = value`` text (``#`` starts a comment, one run
per file); list-valued keys take comma-separated entries.  Exit codes:
0 success, 2 config error, 3 numerical failure.  All CSV output uses ``.``
decimals, LF line endings and 17 significant digits, and identical configs
reproduce byte-identical files.
"""

import argparse
import math
import sys
import warnings

import numpy as np

from . import assembly, kernels, solve, studies
from .mesh import MeshSpec, generate_mesh
from .quadrature import QuadratureError

__all__ = ["main", "parse_config", "ConfigError"]


class ConfigError(Exception):
    pass


def parse_config(path):
    """Read a flat key = value file into a string dict."""
    config = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip()
                if key in config:
                    raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
                config[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return config


class _Config:
    """Typed, whitelist-checked access to a parsed config."""

    def __init__(self, raw, allowed):
        unknown = set(raw) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        self.raw = raw

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def _convert(self, key, value, kind):
        try:
            if kind is bool:
                lowered = value.lower()
                if lowered in ("true", "yes", "1"):
                    return True
                if lowered in ("false", "no", "0"):
                    return False
                raise ValueError(value)
            return kind(value)
        except ValueError:
            raise ConfigError(f"key '{key}': cannot parse '{value}' as {kind.__name__}") from None

    def typed(self, key, kind, default=None, required=False):
        if key not in self.raw:
            if required:
                raise ConfigError(f"missing required key '{key}'")
            return default
        return self._convert(key, self.raw[key], kind)

    def list_of(self, key, kind, default=None, required=False):
        if key not in self.raw:
            if required:
                raise ConfigError(f"missing required key '{key}'")
            return default
        items = [p.strip() for p in self.raw[key].split(",") if p.strip()]
        if not items:
            raise ConfigError(f"key '{key}': sweep list is empty")
        return [self._convert(key, p, kind) for p in items]


_MESH_KEYS = ("mesh", "a", "b", "n", "gamma", "q", "m", "eta")
_KERNEL_KEYS = ("kernel", "alpha", "delta")


def _build_mesh(cfg, n=None):
    scheme = cfg.get("mesh", "uniform")
    spec = MeshSpec(scheme=scheme,
                    a=cfg.typed("a", float, 0.0),
                    b=cfg.typed("b", float, 1.0),
                    n=int(n if n is not None else cfg.typed("n", int, required=True)),
                    gamma=cfg.typed("gamma", float, 2.0),
                    q=cfg.typed("q", float, 0.5),
                    m=cfg.typed("m", int, 1),
                    eta=cfg.typed("eta", float, 0.25))
    try:
        return generate_mesh(spec)
    except ValueError as exc:
        raise ConfigError(f"mesh: {exc}") from exc


def _build_kernel(cfg):
    name = cfg.get("kernel", "fractional")
    alpha = cfg.typed("alpha", float)
    delta = cfg.typed("delta", float)
    try:
        if name == "fractional":
            if alpha is None or delta is None:
                raise ConfigError("kernel 'fractional' needs keys alpha and delta")
            return kernels.fractional(alpha, delta)
        if name == "box":
            if delta is None:
                raise ConfigError("kernel 'box' needs key delta")
            return kernels.box(delta)
        if name == "fractional_infinite":
            if alpha is None:
                raise ConfigError("kernel 'fractional_infinite' needs key alpha")
            if delta is None or math.isinf(delta):
                return kernels.fractional_infinite(alpha)
            return kernels.truncated_infinite(alpha, delta)
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc
    raise ConfigError(f"unknown kernel '{name}' (use fractional|box|fractional_infinite)")


def _function(cfg, key, default=None, required=False):
    tag = cfg.get(key)
    if tag is None:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return default
    try:
        return studies.resolve_function(tag)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': {exc}") from exc


def _assemble_for(mesh, kernel, workers):
    if kernel.has_moments:
        return assembly.assemble_stiffness(mesh, kernel, workers=workers)
    return assembly.assemble_infinite_horizon(mesh, kernel.alpha)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def _cmd_assemble(raw, out, workers):
    cfg = _Config(raw, _MESH_KEYS + _KERNEL_KEYS + ("toeplitz",))
    mesh = _build_mesh(cfg)
    kernel = _build_kernel(cfg)
    matrix = _assemble_for(mesh, kernel, workers)
    assembly.dump_coordinate(matrix, f"{out}matrix.txt")
    mesh.to_csv(f"{out}mesh.csv")
    print(f"assemble: n={matrix.n} half_bandwidth={matrix.half_bandwidth} "
          f"storage={matrix.storage} -> {out}matrix.txt")
    if cfg.typed("toeplitz", bool, False):
        toep = assembly.assemble_toeplitz(mesh, kernel)
        assembly.dump_toeplitz(toep, f"{out}toeplitz.txt")
        print(f"assemble: generating vector -> {out}toeplitz.txt")
    return 0


def _cmd_bvp(raw, out, workers):
    cfg = _Config(raw, _MESH_KEYS + _KERNEL_KEYS + ("f", "lambda"))
    mesh = _build_mesh(cfg)
    kernel = _build_kernel(cfg)
    problem = solve.BvpProblem(mesh, kernel, _function(cfg, "f", required=True),
                               shift=cfg.typed("lambda", float, 0.0))
    sol = solve.solve_bvp(problem, matrix=_assemble_for(mesh, kernel, workers))
    sol.to_csv(f"{out}solution.csv")
    print(f"bvp: n={mesh.n_interior} max|u|={np.abs(sol.values).max():.6g} "
          f"-> {out}solution.csv")
    return 0


def _cmd_helmholtz(raw, out, workers):
    cfg = _Config(raw, _MESH_KEYS + _KERNEL_KEYS + ("f", "k2", "refraction"))
    mesh = _build_mesh(cfg)
    kernel = _build_kernel(cfg)
    sol = solve.solve_helmholtz(mesh, kernel,
                                cfg.typed("k2", float, required=True),
                                _function(cfg, "refraction", required=True),
                                _function(cfg, "f", required=True),
                                matrix=_assemble_for(mesh, kernel, workers))
    sol.to_csv(f"{out}solution.csv")
    print(f"helmholtz: n={mesh.n_interior} max|u|={np.abs(sol.values).max():.6g} "
          f"-> {out}solution.csv")
    return 0


def _cmd_eig(raw, out, workers):
    cfg = _Config(raw, _MESH_KEYS + _KERNEL_KEYS + ("count",))
    mesh = _build_mesh(cfg)
    kernel = _build_kernel(cfg)
    count = cfg.typed("count", int, 5)
    matrix = _assemble_for(mesh, kernel, workers)
    values, _ = solve.eig_generalized(matrix, assembly.mass_matrix(mesh), count)
    with open(f"{out}eigenvalues.csv", "w", newline="\n") as fh:
        fh.write("k,lambda\n")
        for k, lam in enumerate(values, 1):
            fh.write(f"{k},{lam:.17g}\n")
    print(f"eig: lambda_1={values[0]:.10g} .. lambda_{count}={values[-1]:.10g} "
          f"-> {out}eigenvalues.csv")
    return 0


def _cmd_allen_cahn(raw, out, workers):
    cfg = _Config(raw, _MESH_KEYS + _KERNEL_KEYS + ("eps", "tau", "T", "u0", "snapshots"))
    mesh = _build_mesh(cfg)
    kernel = _build_kernel(cfg)
    t_final = cfg.typed("T", float, required=True)
    problem = solve.AllenCahnProblem(mesh=mesh, kernel=kernel,
                                     eps=cfg.typed("eps", float, required=True),
                                     tau=cfg.typed("tau", float, required=True),
                                     t_final=t_final,
                                     u0=_function(cfg, "u0", required=True))
    snapshots = cfg.list_of("snapshots", float, default=[t_final])
    result = solve.allen_cahn_run(problem, snapshot_times=snapshots)
    for t, values in zip(result.times, result.snapshots):
        solve.Solution(mesh, values).to_csv(f"{out}snapshot_t{t:g}.csv")
    result.history_to_csv(f"{out}maxnorm.csv")
    peak = float(result.max_history[:, 1].max())
    print(f"allen-cahn: {len(result.times)} snapshots, max over run = {peak:.10g} "
          f"-> {out}maxnorm.csv")
    return 0


def _cmd_study_cond(raw, out, workers):
    cfg = _Config(raw, ("mesh", "a", "b", "gamma", "q", "eta", "alpha", "delta", "n"))
    report = studies.study_conditioning(
        scheme=cfg.get("mesh", "graded_boundary"),
        alpha=cfg.typed("alpha", float, 1.5),
        delta=cfg.typed("delta", float, 0.3),
        n_list=cfg.list_of("n", int, required=True),
        gamma=cfg.typed("gamma", float, 2.0),
        q=cfg.typed("q", float, 0.999),
        eta=cfg.typed("eta", float, 0.2),
        a=cfg.typed("a", float, 0.0),
        b=cfg.typed("b", float, 1.0),
        workers=workers)
    report.to_csv(f"{out}conditioning.csv")
    for row in report.rows:
        print(f"study-cond: n={row[0]} cond={row[6]:.6g}")
    print(f"study-cond: cond slope {report.slopes['cond'].slope:.4f}, "
          f"lambda_min slope {report.slopes['lambda_min'].slope:.4f} "
          f"-> {out}conditioning.csv")
    return 0


def _cmd_study_convergence(raw, out, workers):
    cfg = _Config(raw, ("example", "alpha", "delta", "levels", "coupled",
                        "n", "mesh", "gamma"))
    example = cfg.get("example", "smooth")
    if example == "smooth":
        report = studies.study_convergence_smooth(
            alpha=cfg.typed("alpha", float, 0.5),
            delta=cfg.typed("delta", float, 0.1),
            levels=cfg.list_of("levels", int, default=[1, 2, 3, 4, 5]),
            coupled=cfg.typed("coupled", bool, False),
            workers=workers)
    elif example == "discontinuous":
        report = studies.study_convergence_discontinuous(
            delta=cfg.typed("delta", float, 0.1),
            n_list=cfg.list_of("n", int, default=[64, 128, 256, 512, 1024]),
            scheme=cfg.get("mesh", "uniform"),
            gamma=cfg.typed("gamma", float, 2.0),
            workers=workers)
    else:
        raise ConfigError(f"unknown example '{example}' (use smooth|discontinuous)")
    report.to_csv(f"{out}convergence.csv")
    for row in report.rows:
        print(f"study-convergence: n={row[0]} l2={row[report.columns.index('l2')]:.6e}")
    print(f"study-convergence: l2 slope {report.slopes['l2'].slope:.4f}, "
          f"linf slope {report.slopes['linf'].slope:.4f} -> {out}convergence.csv")
    return 0


def _cmd_study_limit(raw, out, workers):
    cfg = _Config(raw, ("reference", "alpha", "gamma", "n", "delta"))
    reference = cfg.get("reference", "local")
    if reference == "local":
        report = studies.study_local_limit(
            alpha=cfg.typed("alpha", float, 0.5),
            gamma=cfg.typed("gamma", float, 2.0),
            n=cfg.typed("n", int, 256),
            deltas=cfg.list_of("delta", float, default=[0.2, 0.1, 0.05, 0.025]),
            workers=workers)
        label = "max_deviation"
    elif reference == "fractional":
        report = studies.study_fractional_limit(
            alpha=cfg.typed("alpha", float, 0.5),
            gamma=cfg.typed("gamma", float, 2.0),
            n_list=cfg.list_of("n", int, default=[256, 512, 1024]),
            delta=cfg.typed("delta", float, 20.0))
        label = "linf"
    else:
        raise ConfigError(f"unknown reference '{reference}' (use local|fractional)")
    report.to_csv(f"{out}limit.csv")
    idx = report.columns.index(label)
    for row in report.rows:
        print(f"study-limit: {report.columns[0]}={row[0]} {label}={row[idx]:.6e}")
    return 0


_COMMANDS = {
    "assemble": _cmd_assemble,
    "bvp": _cmd_bvp,
    "helmholtz": _cmd_helmholtz,
    "eig": _cmd_eig,
    "allen-cahn": _cmd_allen_cahn,
    "study-cond": _cmd_study_cond,
    "study-convergence": _cmd_study_convergence,
    "study-limit": _cmd_study_limit,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nlfem", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="nlfem_", help="output path prefix")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        raw = parse_config(args.config)
        return _COMMANDS[args.command](raw, args.out, max(args.workers, 1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, QuadratureError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
