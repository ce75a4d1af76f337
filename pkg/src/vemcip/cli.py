"""Command-line front end: ``vemcip {mesh,solve,convergence,robustness,reproduce}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field

from .mesh import MeshError, load_mesh, save_mesh
from .svgplot import loglog_svg
from .system import Discretization, SolverError
from .verification import (
    DEFAULT_LADDERS,
    ROBUSTNESS_EPS,
    StudyConfig,
    StudyRow,
    StudyTable,
    convergence_study,
    make_mesh,
    manufactured,
    robustness_sweep,
    run_single,
)

log = logging.getLogger("vemcip")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    family: str = "voro"
    n: int | None = None  # octag subdivisions
    cells: int | None = None  # voro cell count
    levels: list[int] | None = None
    mesh: str | None = None
    k: int = 1
    problem: str = "u1"
    eps: float = 1e-5
    sigma: float = 1.0
    delta: float = 0.1
    kappa: float = 0.025  # used for both kappa_e and kappa_E
    seed: int = 0
    lloyd_iters: int = 10
    out: str = "."
    threads: int = 1
    eps_list: list[float] = field(default_factory=lambda: list(ROBUSTNESS_EPS))
    octag_levels: list[int] = field(default_factory=lambda: list(DEFAULT_LADDERS["octag"]))
    voro_levels: list[int] = field(default_factory=lambda: list(DEFAULT_LADDERS["voro"]))
    robustness_cells: int = 1024

    def validate(self):
        if self.k not in (1, 2, 3):
            raise ConfigError(f"invalid k={self.k}: valid range is 1..3")
        if self.family not in ("octag", "voro"):
            raise ConfigError(f"unknown family {self.family!r}: use octag or voro")
        if self.problem not in ("u1", "u2"):
            raise ConfigError(f"unknown problem {self.problem!r}: use u1 or u2")
        for name in ("eps", "sigma", "delta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.kappa < 0:
            raise ConfigError("kappa must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def level(self) -> int:
        lvl = self.n if self.family == "octag" else self.cells
        if lvl is None:
            lvl = 8 if self.family == "octag" else 256
        return lvl

    def study(self) -> StudyConfig:
        return StudyConfig(family=self.family, levels=self.levels, k=self.k, problem=self.problem, eps=self.eps,
                           sigma=self.sigma, delta=self.delta, kappa_e=self.kappa, kappa_E=self.kappa,
                           seed=self.seed, lloyd_iters=self.lloyd_iters, threads=self.threads)

    def header(self) -> str:
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "out"}
        return "vemcip " + json.dumps(d, sort_keys=True)


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vemcip", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so a config file can fill anything not given on the command line
    common.add_argument("--config", help="JSON file mirroring the run configuration")
    common.add_argument("--family", choices=["octag", "voro"], default=None)
    common.add_argument("--n", type=int, default=None, help="octag grid subdivisions")
    common.add_argument("--cells", type=int, default=None, help="voro cell count")
    common.add_argument("--levels", type=_int_list, default=None, help="comma-separated refinement ladder")
    common.add_argument("--mesh", default=None, help="mesh JSON file instead of a generated family")
    common.add_argument("--k", type=int, default=None)
    common.add_argument("--problem", default=None)
    common.add_argument("--eps", type=float, default=None)
    common.add_argument("--eps-list", dest="eps_list", type=_float_list, default=None)
    common.add_argument("--sigma", type=float, default=None)
    common.add_argument("--delta", type=float, default=None)
    common.add_argument("--kappa", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--lloyd-iters", dest="lloyd_iters", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    for name, helptext in [
        ("mesh", "generate a mesh and write it as JSON"),
        ("solve", "single solve with error report"),
        ("convergence", "convergence study over a refinement ladder"),
        ("robustness", "sweep over the diffusion coefficient on a fixed mesh"),
        ("reproduce", "run every convergence and robustness experiment"),
    ]:
        sub.add_parser(name, parents=[common], help=helptext)
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["command"] = args.command
    unknown = set(values) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _mesh_for(cfg: RunConfig):
    if cfg.mesh:
        return load_mesh(cfg.mesh)
    return make_mesh(cfg.family, cfg.level(), cfg.seed, cfg.lloyd_iters)


def cmd_mesh(cfg: RunConfig) -> int:
    mesh = _mesh_for(cfg)
    path = cfg.out if cfg.out.endswith(".json") else os.path.join(cfg.out, f"{mesh.name}.json")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_mesh(mesh, path)
    print(f"mesh {mesh.name}: {mesh.n_cells} cells, {mesh.n_facets} facets, h={mesh.h:.4g} -> {path}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    mesh = _mesh_for(cfg)
    problem = manufactured(cfg.problem, cfg.eps, cfg.sigma)
    params = problem.params(cfg.k, cfg.delta, cfg.kappa, cfg.kappa)
    disc = Discretization(mesh, cfg.k, cfg.threads)
    _, rep = run_single(disc, problem, params)
    table = StudyTable(cfg.study(), [StudyRow(cfg.family if not cfg.mesh else mesh.name, cfg.level() if not cfg.mesh else 0, cfg.k, cfg.eps, rep)])
    path = os.path.join(cfg.out, "report.csv")
    atomic_write(path, table.to_csv(cfg.header()))
    print(f"{cfg.problem} {mesh.name} k={cfg.k} eps={cfg.eps:g} N={rep.ndofs} h={rep.h:.4g} "
          f"eH1={rep.eH1:.6e} eL2={rep.eL2:.6e} ecip={rep.ecip:.6e} residual={rep.residual:.1e}")
    return EXIT_OK


def _write_table(table: StudyTable, cfg: RunConfig, stem: str, slopes=(), key_x="h") -> None:
    atomic_write(os.path.join(cfg.out, stem + ".csv"), table.to_csv(cfg.header()))
    series = {}
    if key_x == "h":
        for key in ("eH1", "eL2", "ecip"):
            h, e = table.series(key)
            series[key] = (list(h), list(e))
        svg = loglog_svg(series, title=stem, slopes=slopes)
    else:
        ok = [r for r in table.rows if r.report is not None]
        series["ecip"] = ([r.eps for r in ok], [r.report.ecip for r in ok])
        svg = loglog_svg(series, title=stem, xlabel="eps", ylabel="CIP error")
    atomic_write(os.path.join(cfg.out, stem + ".svg"), svg)


def _failed(table: StudyTable) -> bool:
    return any(r.report is None for r in table.rows)


def cmd_convergence(cfg: RunConfig) -> int:
    table = convergence_study(cfg.study())
    _write_table(table, cfg, f"convergence_{cfg.problem}_{cfg.family}_k{cfg.k}", slopes=(cfg.k, cfg.k + 1))
    rc = table.rate_columns()
    for i, row in enumerate(r for r in table.rows if r.report):
        print(f"{row.family} level={row.level} h={row.report.h:.4g} eH1={row.report.eH1:.3e} "
              f"eL2={row.report.eL2:.3e} ecip={row.report.ecip:.3e} rates={rc['rateH1'][i]:.2f}/"
              f"{rc['rateL2'][i]:.2f}/{rc['rateCIP'][i]:.2f}")
    return EXIT_SOLVER if _failed(table) else EXIT_OK


def cmd_robustness(cfg: RunConfig) -> int:
    study = cfg.study()
    if cfg.levels is None:
        study.levels = [cfg.level() if cfg.family == "octag" or cfg.cells else 1024]
    table = robustness_sweep(study, cfg.eps_list)
    _write_table(table, cfg, f"robustness_{cfg.problem}_{cfg.family}_k{cfg.k}", key_x="eps")
    vals = [r.report.ecip for r in table.rows if r.report]
    for r in table.rows:
        print(f"eps={r.eps:g} ecip={r.report.ecip:.4e}" if r.report else f"eps={r.eps:g} FAILED {r.error}")
    if vals:
        print(f"max/min ecip ratio = {max(vals) / min(vals):.3f}")
    return EXIT_SOLVER if _failed(table) else EXIT_OK


def reproduce_all(cfg: RunConfig) -> int:
    """Every convergence panel (problem x order, both families) plus the eps sweeps."""
    failures = 0
    meshes, discs = {}, {}
    ladders = {"octag": cfg.octag_levels, "voro": cfg.voro_levels}
    for problem in ("u1", "u2"):
        for k in (1, 2, 3):
            rows = []
            for family in ("octag", "voro"):
                sc = dataclasses.replace(cfg.study(), family=family, k=k, problem=problem, eps=1e-5,
                                         levels=ladders[family])
                t = convergence_study(sc, meshes, discs)
                failures += _failed(t)
                rows.append(t)
            stem = f"convergence_{problem}_k{k}"
            csv_text = rows[0].to_csv(cfg.header()) + "".join(t.to_csv().split("\n", 1)[1] for t in rows[1:])
            atomic_write(os.path.join(cfg.out, stem + ".csv"), csv_text)
            series = {}
            for t in rows:
                for key in ("eH1", "eL2", "ecip"):
                    h, e = t.series(key)
                    series[f"{t.config.family} {key}"] = (list(h), list(e))
            atomic_write(os.path.join(cfg.out, stem + ".svg"),
                         loglog_svg(series, title=f"{problem}, k={k}, eps=1e-5", slopes=(k, k + 1)))
            print(f"wrote {stem}.csv")
    for problem in ("u1", "u2"):
        cells = cfg.robustness_cells
        sc = dataclasses.replace(cfg.study(), family="voro", k=1, problem=problem, levels=[cells])
        disc = discs.get(("voro", cells, 1))
        t = robustness_sweep(sc, cfg.eps_list, disc)
        failures += _failed(t)
        _write_table(t, cfg, f"robustness_{problem}", key_x="eps")
        print(f"wrote robustness_{problem}.csv")
    return EXIT_SOLVER if failures else EXIT_OK


COMMANDS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "robustness": cmd_robustness,
    "reproduce": reproduce_all,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, MeshError, FileNotFoundError) as err:
        print(f"vemcip: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"vemcip: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
