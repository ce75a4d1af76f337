"""Global assembly of the nonsymmetric CIP system and its direct solution."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from .forms import ModelParams
from .mesh import PolyMesh
from .vemspace import GlobalDofMap, LocalSpace, build_dof_map, build_local_spaces

__all__ = ["GlobalSystem", "Discretization", "assemble", "solve", "build_dof_map", "SolverError"]


class SolverError(RuntimeError):
    pass


class AssemblyError(ValueError):
    pass


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: GlobalDofMap
    residual: float | None = None

    def save_matrix_market(self, path) -> None:
        from scipy.io import mmwrite

        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".mtx")
        os.close(fd)
        mmwrite(tmp, self.matrix)
        os.replace(tmp, path)


class Discretization:
    """Mesh, order and local spaces, reusable across parameters and data."""

    def __init__(self, mesh: PolyMesh, k: int, threads: int = 1, spaces: list[LocalSpace] | None = None):
        self.mesh = mesh
        self.k = k
        self.threads = threads
        self.spaces = spaces if spaces is not None else build_local_spaces(mesh, k, threads)
        self.dofmap = build_dof_map(mesh, k)
        self._cache: dict = {}

    def _map(self, fn, items):
        if self.threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def facet_blocks(self, params: ModelParams):
        """Per interior facet: (facet, paired global dofs, D_e + J_e)."""
        mesh, S = self.mesh, self.spaces

        def one(f):
            rec = mesh.facets[f]
            So, Sn = S[rec.owner], S[rec.neighbor]
            ge = forms.gamma_facet(mesh, f, params.beta, params.kappa_e, self.k)
            M = forms.facet_dh(mesh, f, So, Sn, params.beta) + forms.facet_jump_J(mesh, f, So, Sn, ge)
            dofs = np.concatenate([self.dofmap.local_to_global[rec.owner], self.dofmap.local_to_global[rec.neighbor]])
            return dofs, M

        return self._map(one, list(mesh.interior_facets))

    def jump_matrix(self, params: ModelParams) -> sp.csr_matrix:
        """Global J_h alone (facet and element parts)."""
        mesh, S, dm = self.mesh, self.spaces, self.dofmap
        rows, cols, vals = [], [], []
        for c, Sc in enumerate(S):
            gE = params.kappa_E * forms.beta_max_on_boundary(Sc, params.beta)
            _push(rows, cols, vals, dm.local_to_global[c], forms.element_jump_J(Sc, gE))
        for f in mesh.interior_facets:
            rec = mesh.facets[f]
            ge = forms.gamma_facet(mesh, f, params.beta, params.kappa_e, self.k)
            M = forms.facet_jump_J(mesh, f, S[rec.owner], S[rec.neighbor], ge)
            _push(rows, cols, vals, np.concatenate([dm.local_to_global[rec.owner], dm.local_to_global[rec.neighbor]]), M)
        return _csr(rows, cols, vals, dm.size)

    def matrix(self, params: ModelParams) -> sp.csr_matrix:
        mesh, dm = self.mesh, self.dofmap

        def one(c):
            lf = forms.element_forms(self.spaces[c], params, mesh.is_boundary_cell(c))
            A = lf.element_matrix(params)
            if not np.all(np.isfinite(A)):
                raise AssemblyError(f"non-finite entry in local matrix of cell {c}")
            return A

        rows, cols, vals = [], [], []
        for c, A in enumerate(self._map(one, range(mesh.n_cells))):
            _push(rows, cols, vals, dm.local_to_global[c], A)
        for dofs, M in self.facet_blocks(params):
            if not np.all(np.isfinite(M)):
                raise AssemblyError("non-finite entry in a facet matrix")
            _push(rows, cols, vals, dofs, M)
        return _csr(rows, cols, vals, dm.size)

    def rhs(self, params: ModelParams, f, g) -> np.ndarray:
        F = np.zeros(self.dofmap.size)
        for c, S in enumerate(self.spaces):
            gc = g if self.mesh.is_boundary_cell(c) else None
            Fe = forms.local_load(S, f, gc, params)
            if not np.all(np.isfinite(Fe)):
                raise AssemblyError(f"non-finite entry in load vector of cell {c}")
            np.add.at(F, self.dofmap.local_to_global[c], Fe)
        return F


def _push(rows, cols, vals, dofs, M):
    n = len(dofs)
    rows.append(np.repeat(dofs, n))
    cols.append(np.tile(dofs, n))
    vals.append(M.ravel())


def _csr(rows, cols, vals, n) -> sp.csr_matrix:
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A = A.tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble(mesh: PolyMesh, k: int, params: ModelParams, problem, threads: int = 1,
             disc: Discretization | None = None) -> GlobalSystem:
    """Assemble A_cip and F_h. ``problem`` supplies callables ``f`` and ``g``."""
    if disc is None:
        disc = Discretization(mesh, k, threads)
    return GlobalSystem(disc.matrix(params), disc.rhs(params, problem.f, problem.g), disc.dofmap)


def solve(system: GlobalSystem) -> np.ndarray:
    """Sparse LU solve; records the relative residual on the system."""
    A, b = system.matrix, system.rhs
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as err:
        raise SolverError(f"sparse LU failed: {err}") from err
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution (singular factorization)")
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0)
    system.residual = float(r)
    return x
