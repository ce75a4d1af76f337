"""Dense local matrices and load vectors of the CIP-stabilized scheme.

Matrices follow the convention M[i, j] = form(phi_j, phi_i): rows index the
test function, so the assembled system reads A u = F.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import PolyMesh
from .polybasis import facet_quadrature
from .vemspace import LocalSpace

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelParams:
    eps: float
    sigma: float
    beta: Field  # (n, 2) points -> (n, 2) advection field, divergence free
    k: int = 1
    delta: float = 0.1
    kappa_e: float = 0.025
    kappa_E: float = 0.025

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.kappa_e < 0 or self.kappa_E < 0:
            raise ValueError("kappa_e and kappa_E must be nonnegative")


def zero_field(points):
    return np.zeros((len(points), 2))


def local_diffusion(S: LocalSpace) -> np.ndarray:
    """Projected-gradient consistency term plus dofi-dofi stabilization of (I - Pi_nabla)."""
    nk1 = S.grad_x.shape[0]
    H1 = S.mass[:nk1, :nk1]
    R = S.residual_nabla()
    return S.grad_x.T @ H1 @ S.grad_x + S.grad_y.T @ H1 @ S.grad_y + R.T @ R


def local_advection(S: LocalSpace, beta: Field) -> np.ndarray:
    b = beta(S.qpoints)
    bgrad = np.einsum("qd,qad->qa", b, S.qgrads)  # beta . grad m_a
    W = (S.qvalues * S.qweights[:, None]).T @ bgrad  # W[a, g] = int m_a (beta . grad m_g)
    return S.pi0.T @ W @ S.pi0


def local_reaction(S: LocalSpace) -> np.ndarray:
    R = S.residual_pi0()
    return S.pi0.T @ S.mass @ S.pi0 + S.area * (R.T @ R)


def beta_max_on_boundary(S: LocalSpace, beta: Field) -> float:
    pts = np.vstack([e.points for e in S.edges])
    return float(np.max(np.hypot(*beta(pts).T)))


def element_jump_J(S: LocalSpace, gamma_E: float) -> np.ndarray:
    R = S.residual_pi0()
    return gamma_E * S.diameter * (R.T @ R)


def _require_interior(mesh: PolyMesh, f: int):
    if mesh.facets[f].is_boundary:
        raise ValueError(f"facet {f} lies on the boundary; interior facet required")


def _facet_rule(mesh, f, exactness):
    a, b = mesh.facet_endpoints(f)
    fr = facet_quadrature(a, b, exactness)
    return fr.points, fr.weights, mesh.facets[f].normal


def facet_dh(mesh: PolyMesh, f: int, S_own: LocalSpace, S_nb: LocalSpace, beta: Field,
             exactness: int | None = None) -> np.ndarray:
    """-int_e beta.[[Pi0 u]] {Pi0 v} on paired DoFs (owner first, then neighbor)."""
    _require_interior(mesh, f)
    q = 2 * S_own.k + 2 if exactness is None else exactness
    x, w, n = _facet_rule(mesh, f, q)
    bn = beta(x) @ n
    Po, Pn = S_own.pi0_values(x), S_nb.pi0_values(x)
    jump = np.hstack([Po, -Pn])  # [[p]] . n_owner
    avg = 0.5 * np.hstack([Po, Pn])
    return -(avg * (w * bn)[:, None]).T @ jump


def gamma_facet(mesh: PolyMesh, f: int, beta: Field, kappa_e: float, k: int) -> float:
    a, b = mesh.facet_endpoints(f)
    x = facet_quadrature(a, b, 2 * k + 2).points
    return kappa_e * float(np.max(np.hypot(*beta(x).T)))


def facet_jump_J(mesh: PolyMesh, f: int, S_own: LocalSpace, S_nb: LocalSpace, gamma_e: float,
                 exactness: int | None = None) -> np.ndarray:
    """gamma_e h_e^2 int_e [[grad Pi0 u]] [[grad Pi0 v]] on paired DoFs."""
    _require_interior(mesh, f)
    q = 2 * S_own.k + 2 if exactness is None else exactness
    x, w, n = _facet_rule(mesh, f, q)
    go = np.einsum("d,qdn->qn", n, S_own.pi0_gradients(x))
    gn = np.einsum("d,qdn->qn", n, S_nb.pi0_gradients(x))
    J = np.hstack([go, -gn])
    he = mesh.facets[f].length
    return gamma_e * he**2 * (J * w[:, None]).T @ J


@dataclass
class NitscheBlocks:
    consistency: np.ndarray  # -eps <Pi grad u . n, v>
    symmetry: np.ndarray  # -eps <u, Pi grad v . n>
    penalty: np.ndarray  # eps/(delta h_E) sum <Pi^e u, Pi^e v>
    inflow: np.ndarray  # <|beta.n| Pi0 u, Pi0 v> on the inflow part

    @property
    def total(self) -> np.ndarray:
        return self.consistency + self.symmetry + self.penalty + self.inflow


def _boundary_edges(S: LocalSpace):
    edges = [(j, e) for j, e in enumerate(S.edges) if e.is_boundary]
    if not edges:
        raise ValueError(f"cell {S.cell} has no boundary facet")
    return edges


def nitsche_blocks(S: LocalSpace, params: ModelParams) -> NitscheBlocks:
    """The four boundary terms, each by facet quadrature.

    Pairings of the projected normal flux against the raw virtual function use its
    edge L2 projection, which is exact because the flux is in P_{k-1}(e).
    """
    N = S.ndofs
    cons, pen, inflow = np.zeros((N, N)), np.zeros((N, N)), np.zeros((N, N))
    eps = params.eps
    for j, e in _boundary_edges(S):
        T = S.edge_trace(j)
        flux = np.einsum("d,qdn->qn", e.normal, S.grad_projection_values(e.points))
        cons -= eps * (T * e.weights[:, None]).T @ flux
        pen += eps / (params.delta * S.diameter) * (T * e.weights[:, None]).T @ T
        win = np.maximum(0.0, -(params.beta(e.points) @ e.normal))
        P0 = S.pi0_values(e.points)
        inflow += (P0 * (e.weights * win)[:, None]).T @ P0
    return NitscheBlocks(cons, cons.T.copy(), pen, inflow)


def nitsche_matrix(S: LocalSpace, params: ModelParams) -> np.ndarray:
    return nitsche_blocks(S, params).total


def local_load(S: LocalSpace, f: Field, g: Field | None, params: ModelParams) -> np.ndarray:
    """Volume source against Pi0 v plus the Nitsche data terms on boundary facets."""
    F = S.qvalues.T @ (S.qweights * f(S.qpoints))
    F = S.pi0.T @ F
    if g is None:
        return F
    eps = params.eps
    for j, e in enumerate(S.edges):
        if not e.is_boundary:
            continue
        gv = e.weights * g(e.points)
        T = S.edge_trace(j)
        flux = np.einsum("d,qdn->qn", e.normal, S.grad_projection_values(e.points))
        win = np.maximum(0.0, -(params.beta(e.points) @ e.normal))
        F += -eps * flux.T @ gv
        F += eps / (params.delta * S.diameter) * T.T @ gv
        F += S.pi0_values(e.points).T @ (win * gv)
    return F


@dataclass
class LocalForms:
    """Element matrices of one cell, already weighted by eps and sigma."""

    diffusion: np.ndarray
    advection: np.ndarray
    reaction: np.ndarray
    cip_volume: np.ndarray
    nitsche: np.ndarray | None
    gamma_E: float = field(default=0.0)

    def element_matrix(self, params: ModelParams) -> np.ndarray:
        A = params.eps * self.diffusion + self.advection + params.sigma * self.reaction + self.cip_volume
        if self.nitsche is not None:
            A = A + self.nitsche
        return A


def element_forms(S: LocalSpace, params: ModelParams, boundary: bool) -> LocalForms:
    gE = params.kappa_E * beta_max_on_boundary(S, params.beta)
    return LocalForms(
        diffusion=local_diffusion(S),
        advection=local_advection(S, params.beta),
        reaction=local_reaction(S),
        cip_volume=element_jump_J(S, gE),
        nitsche=nitsche_matrix(S, params) if boundary else None,
        gamma_E=gE,
    )
