"""Manufactured problems, error measures and the convergence/robustness drivers."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .forms import ModelParams
from .mesh import PolyMesh, generate_octag, generate_voronoi
from .polybasis import ScaledMonomialBasis2D, eval_basis, eval_gradients, facet_quadrature, polygon_quadrature
from .system import Discretization, GlobalSystem, SolverError, solve
from .vemspace import interpolate

log = logging.getLogger(__name__)

LAYER = 0.05


def rotating_beta(points):
    x, y = points[:, 0], points[:, 1]
    s = np.sin(np.pi * (x + 2 * y))
    return np.column_stack([-2 * np.pi * s, np.pi * s])


def _u1(p):
    return 0.5 * (1 - np.tanh((p[:, 0] - 0.5) / LAYER))


def _u1_grad(p):
    t = np.tanh((p[:, 0] - 0.5) / LAYER)
    return np.column_stack([-0.5 / LAYER * (1 - t**2), np.zeros(len(p))])


def _u1_lap(p):
    t = np.tanh((p[:, 0] - 0.5) / LAYER)
    return (1 - t**2) * t / LAYER**2


_E1 = np.exp(-1 / LAYER)


def _phi(x):
    return x - (np.exp((x - 1) / LAYER) - _E1) / (1 - _E1)


def _dphi(x):
    return 1 - np.exp((x - 1) / LAYER) / (LAYER * (1 - _E1))


def _d2phi(x):
    return -np.exp((x - 1) / LAYER) / (LAYER**2 * (1 - _E1))


def _u2(p):
    x, y = p[:, 0], p[:, 1]
    return (y - y**2) * _phi(x)


def _u2_grad(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([(y - y**2) * _dphi(x), (1 - 2 * y) * _phi(x)])


def _u2_lap(p):
    x, y = p[:, 0], p[:, 1]
    return (y - y**2) * _d2phi(x) - 2 * _phi(x)


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    u: Callable
    grad: Callable
    lap: Callable
    beta: Callable = rotating_beta
    eps: float = 1e-5
    sigma: float = 1.0

    def f(self, p):
        # assembled from the closed-form pieces, never simplified
        return -self.eps * self.lap(p) + np.einsum("qd,qd->q", self.beta(p), self.grad(p)) + self.sigma * self.u(p)

    def g(self, p):
        return self.u(p)

    def params(self, k: int, delta: float = 0.1, kappa_e: float = 0.025, kappa_E: float = 0.025) -> ModelParams:
        return ModelParams(self.eps, self.sigma, self.beta, k, delta, kappa_e, kappa_E)

    def with_eps(self, eps: float) -> "ManufacturedProblem":
        return replace(self, eps=eps)

    def scaled(self, factor: float) -> "ManufacturedProblem":
        u, grad, lap = self.u, self.grad, self.lap
        return replace(self, name=f"{self.name}*{factor:g}", u=lambda p: factor * u(p),
                       grad=lambda p: factor * grad(p), lap=lambda p: factor * lap(p))


def manufactured(name: str, eps: float = 1e-5, sigma: float = 1.0) -> ManufacturedProblem:
    if name == "u1":
        return ManufacturedProblem("u1", _u1, _u1_grad, _u1_lap, eps=eps, sigma=sigma)
    if name == "u2":
        return ManufacturedProblem("u2", _u2, _u2_grad, _u2_lap, eps=eps, sigma=sigma)
    raise ValueError(f"unknown problem {name!r}; expected 'u1' or 'u2'")


def polynomial_problem(coeffs, beta=(1.0, 0.5), eps: float = 1.0, sigma: float = 1.0) -> ManufacturedProblem:
    """u = sum_a coeffs[a] x^a (graded-lex, unscaled) with constant beta."""
    coeffs = np.asarray(coeffs, float)
    k = int(round((np.sqrt(8 * len(coeffs) + 1) - 3) / 2))
    basis = ScaledMonomialBasis2D(k, np.zeros(2), 1.0)
    L = basis.laplacian_matrix()
    lap_coeffs = L.T @ coeffs
    lap_basis = ScaledMonomialBasis2D(max(k - 2, 0), np.zeros(2), 1.0)
    bvec = np.asarray(beta, float)

    def lap(p):
        if k < 2:
            return np.zeros(len(p))
        return eval_basis(lap_basis, p) @ lap_coeffs

    return ManufacturedProblem(
        name=f"poly{k}",
        u=lambda p: eval_basis(basis, p) @ coeffs,
        grad=lambda p: np.einsum("qad,a->qd", eval_gradients(basis, p), coeffs),
        lap=lap,
        beta=lambda p: np.broadcast_to(bvec, (len(p), 2)).copy(),
        eps=eps,
        sigma=sigma,
    )


# ---------------------------------------------------------------- error measures


def _cell_errors(disc: Discretization, dofs: np.ndarray, problem: ManufacturedProblem, exactness: int):
    mesh = disc.mesh
    h1, l2, stream = 0.0, 0.0, 0.0
    for c, S in enumerate(disc.spaces):
        ud = dofs[disc.dofmap.local_to_global[c]]
        rule = polygon_quadrature(mesh.cell_coords(c), exactness)
        x, w = rule.points, rule.weights
        M = eval_basis(S.basis, x)
        G = eval_gradients(S.basis, x)
        pn, p0 = S.pi_nabla @ ud, S.pi0 @ ud
        gu, uu = problem.grad(x), problem.u(x)
        dg = gu - np.einsum("qad,a->qd", G, pn)
        h1 += w @ np.sum(dg * dg, axis=1)
        dl = uu - M @ p0
        l2 += w @ (dl * dl)
        ds = np.einsum("qd,qd->q", problem.beta(x), gu - np.einsum("qad,a->qd", G, p0))
        stream += w @ (ds * ds)
    return h1, l2, stream


def error_h1(disc: Discretization, dofs, problem, exactness: int | None = None) -> float:
    q = 2 * disc.k + 6 if exactness is None else exactness
    return float(np.sqrt(_cell_errors(disc, dofs, problem, q)[0]))


def error_l2(disc: Discretization, dofs, problem, exactness: int | None = None) -> float:
    q = 2 * disc.k + 6 if exactness is None else exactness
    return float(np.sqrt(_cell_errors(disc, dofs, problem, q)[1]))


@dataclass
class ErrorReport:
    eH1: float
    eL2: float
    ecip: float
    terms: dict[str, float]
    h: float
    ndofs: int
    seconds: float = 0.0
    residual: float = float("nan")
    meta: dict = field(default_factory=dict)


def error_cip(disc: Discretization, dofs, problem: ManufacturedProblem, params: ModelParams,
              exactness: int | None = None, u_interp: np.ndarray | None = None) -> tuple[float, dict[str, float]]:
    """CIP-norm error with its six terms.

    Terms needing DoFs of u (boundary projections and jumps) use the moment
    interpolant of u; the others compare exact values with projected discrete
    polynomials at quadrature points.
    """
    mesh, k = disc.mesh, disc.k
    q = 2 * k + 6 if exactness is None else exactness
    h = mesh.h
    h1, l2, stream = _cell_errors(disc, dofs, problem, q)
    if u_interp is None:
        u_interp = interpolate(problem.u, mesh, k)
    diff = u_interp - dofs
    bproj, inflow = 0.0, 0.0
    for c in range(mesh.n_cells):
        if not mesh.is_boundary_cell(c):
            continue
        S = disc.spaces[c]
        ud = dofs[disc.dofmap.local_to_global[c]]
        dd = diff[disc.dofmap.local_to_global[c]]
        p0 = S.pi0 @ ud
        for j, e in enumerate(S.edges):
            if not e.is_boundary:
                continue
            a, b = mesh.facet_endpoints(e.facet)
            fr = facet_quadrature(a, b, q)
            tr = S.edge_trace(j)  # exact for degree 2k-2 integrands at the default edge rule
            vals = tr @ dd
            bproj += e.weights @ (vals * vals)
            win = np.maximum(0.0, -(problem.beta(fr.points) @ e.normal))
            r = problem.u(fr.points) - eval_basis(S.basis, fr.points) @ p0
            inflow += fr.weights @ (win * r * r)
    J = disc.jump_matrix(params)
    jterm = float(diff @ (J @ diff))
    terms = {
        "diffusion": params.eps * h1,
        "streamline": h * stream,
        "reaction": params.sigma * l2,
        "boundary": params.eps / (params.delta * h) * bproj,
        "inflow": inflow,
        "jump": jterm,
    }
    return float(np.sqrt(sum(terms.values()))), terms


def evaluate(disc: Discretization, dofs, problem: ManufacturedProblem, params: ModelParams) -> ErrorReport:
    ecip, terms = error_cip(disc, dofs, problem, params)
    eh1 = np.sqrt(terms["diffusion"] / params.eps)
    el2 = np.sqrt(terms["reaction"] / params.sigma)
    return ErrorReport(float(eh1), float(el2), ecip, terms, disc.mesh.h, disc.dofmap.size,
                       meta={"u_dofs": "interpolant"})


def run_single(disc: Discretization, problem: ManufacturedProblem, params: ModelParams) -> tuple[np.ndarray, ErrorReport]:
    t0 = time.perf_counter()
    system = GlobalSystem(disc.matrix(params), disc.rhs(params, problem.f, problem.g), disc.dofmap)
    dofs = solve(system)
    rep = evaluate(disc, dofs, problem, params)
    rep.seconds = time.perf_counter() - t0
    rep.residual = system.residual
    return dofs, rep


# ---------------------------------------------------------------- studies

CSV_FIELDS = ["family", "level", "k", "eps", "h", "N", "eH1", "eL2", "ecip", "rateH1", "rateL2", "rateCIP", "seconds"]

DEFAULT_LADDERS = {"octag": [4, 8, 16, 32], "voro": [64, 256, 1024, 4096]}


def make_mesh(family: str, level: int, seed: int = 0, lloyd_iters: int = 10, perturb: float = 0.1) -> PolyMesh:
    if family == "octag":
        return generate_octag(level, perturb, seed)
    if family == "voro":
        return generate_voronoi(level, lloyd_iters, seed)
    raise ValueError(f"unknown mesh family {family!r}; expected 'octag' or 'voro'")


def rates(h, err) -> list[float]:
    """Log-ratio rates between successive levels (nan for the first level)."""
    out = [float("nan")]
    for i in range(1, len(h)):
        if err[i] > 0 and err[i - 1] > 0 and h[i] != h[i - 1]:
            out.append(float(np.log(err[i - 1] / err[i]) / np.log(h[i - 1] / h[i])))
        else:
            out.append(0.0 if err[i] == err[i - 1] else float("nan"))
    return out


def fitted_rate(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class StudyConfig:
    family: str = "octag"
    levels: list[int] | None = None
    k: int = 1
    problem: str = "u1"
    eps: float = 1e-5
    sigma: float = 1.0
    delta: float = 0.1
    kappa_e: float = 0.025
    kappa_E: float = 0.025
    seed: int = 0
    lloyd_iters: int = 10
    threads: int = 1

    def ladder(self) -> list[int]:
        return list(self.levels) if self.levels else list(DEFAULT_LADDERS[self.family])


@dataclass
class StudyRow:
    family: str
    level: int
    k: int
    eps: float
    report: ErrorReport | None
    error: str = ""

    def as_csv(self) -> dict:
        r = self.report
        nan = float("nan")
        return {
            "family": self.family, "level": self.level, "k": self.k, "eps": f"{self.eps:.6g}",
            "h": f"{r.h:.17g}" if r else nan, "N": r.ndofs if r else 0,
            "eH1": f"{r.eH1:.17g}" if r else nan, "eL2": f"{r.eL2:.17g}" if r else nan,
            "ecip": f"{r.ecip:.17g}" if r else nan,
            "seconds": f"{r.seconds:.3f}" if r else nan,
        }


@dataclass
class StudyTable:
    config: StudyConfig
    rows: list[StudyRow]

    def _ok(self):
        return [r for r in self.rows if r.report is not None]

    def series(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        ok = self._ok()
        return np.array([r.report.h for r in ok]), np.array([getattr(r.report, key) for r in ok])

    def rate_columns(self) -> dict[str, list[float]]:
        out = {}
        for col, key in (("rateH1", "eH1"), ("rateL2", "eL2"), ("rateCIP", "ecip")):
            h, e = self.series(key)
            out[col] = rates(h, e)
        return out

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        rc = self.rate_columns()
        i = 0
        for row in self.rows:
            d = row.as_csv()
            if row.report is not None:
                for col in rc:
                    d[col] = f"{rc[col][i]:.6f}"
                i += 1
            else:
                for col in rc:
                    d[col] = "nan"
            w.writerow(d)
        return buf.getvalue()


def convergence_study(config: StudyConfig, meshes: dict | None = None, discs: dict | None = None) -> StudyTable:
    """One solve per ladder level; failures are recorded and the study continues.

    ``meshes``/``discs`` are optional caches keyed by (family, level) and
    (family, level, k) so several problems can share geometry work.
    """
    problem = manufactured(config.problem, config.eps, config.sigma)
    params = problem.params(config.k, config.delta, config.kappa_e, config.kappa_E)
    meshes = {} if meshes is None else meshes
    discs = {} if discs is None else discs
    rows = []
    for level in config.ladder():
        try:
            key = (config.family, level)
            if key not in meshes:
                meshes[key] = make_mesh(config.family, level, config.seed, config.lloyd_iters)
            dkey = key + (config.k,)
            if dkey not in discs:
                discs[dkey] = Discretization(meshes[key], config.k, config.threads)
            _, rep = run_single(discs[dkey], problem, params)
            log.info("%s %s k=%d level=%d h=%.4g eH1=%.3e eL2=%.3e ecip=%.3e",
                     config.problem, config.family, config.k, level, rep.h, rep.eH1, rep.eL2, rep.ecip)
            rows.append(StudyRow(config.family, level, config.k, config.eps, rep))
        except (SolverError, np.linalg.LinAlgError, ValueError) as err:
            log.warning("level %s failed: %s", level, err)
            rows.append(StudyRow(config.family, level, config.k, config.eps, None, str(err)))
    return StudyTable(config, rows)


ROBUSTNESS_EPS = [1.0, 1e-2, 1e-4, 1e-6, 1e-8]


def robustness_sweep(config: StudyConfig, eps_list=None, disc: Discretization | None = None) -> StudyTable:
    """Fixed mesh (first ladder level), one solve per diffusion value."""
    eps_list = ROBUSTNESS_EPS if eps_list is None else list(eps_list)
    level = config.ladder()[0]
    if disc is None:
        disc = Discretization(make_mesh(config.family, level, config.seed, config.lloyd_iters), config.k, config.threads)
    rows = []
    for eps in eps_list:
        problem = manufactured(config.problem, eps, config.sigma)
        params = problem.params(config.k, config.delta, config.kappa_e, config.kappa_E)
        try:
            _, rep = run_single(disc, problem, params)
            rows.append(StudyRow(config.family, level, config.k, eps, rep))
        except (SolverError, np.linalg.LinAlgError, ValueError) as err:
            rows.append(StudyRow(config.family, level, config.k, eps, None, str(err)))
    return StudyTable(config, rows)
