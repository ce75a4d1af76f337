"""Scaled monomial bases on cells and facets, and polygon/segment quadrature."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


def dim_poly(k: int) -> int:
    """Dimension of bivariate polynomials of degree <= k (0 for k < 0)."""
    return 0 if k < 0 else (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def exponents(k: int) -> tuple[tuple[int, int], ...]:
    """Graded-lex multi-indices: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ..."""
    return tuple((i, d - i) for d in range(k + 1) for i in range(d, -1, -1))


def _index_map(k: int) -> dict[tuple[int, int], int]:
    return {a: i for i, a in enumerate(exponents(k))}


@dataclass(frozen=True)
class ScaledMonomialBasis2D:
    """m_a(x) = ((x - center) / diameter)^a for |a| <= degree."""

    degree: int
    center: np.ndarray
    diameter: float
    powers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "powers", np.array(exponents(self.degree), dtype=int).reshape(-1, 2))

    def __len__(self):
        return dim_poly(self.degree)

    def scaled(self, points):
        return (np.asarray(points, dtype=float) - self.center) / self.diameter

    def derivative_matrix(self, axis: int) -> np.ndarray:
        """Matrix T with d/dx_axis m_a = sum_b T[a, b] m_b, b of degree <= degree-1."""
        n, n1 = dim_poly(self.degree), dim_poly(self.degree - 1)
        T = np.zeros((n, n1))
        idx = _index_map(self.degree - 1) if self.degree > 0 else {}
        for i, (a, b) in enumerate(exponents(self.degree)):
            p = (a, b)[axis]
            if p > 0:
                lower = (a - 1, b) if axis == 0 else (a, b - 1)
                T[i, idx[lower]] = p / self.diameter
        return T

    def laplacian_matrix(self) -> np.ndarray:
        """Matrix L with Lap m_a = sum_b L[a, b] m_b, b of degree <= degree-2."""
        n, n2 = dim_poly(self.degree), dim_poly(self.degree - 2)
        L = np.zeros((n, n2))
        if n2 == 0:
            return L
        idx = _index_map(self.degree - 2)
        h2 = self.diameter**2
        for i, (a, b) in enumerate(exponents(self.degree)):
            if a >= 2:
                L[i, idx[(a - 2, b)]] += a * (a - 1) / h2
            if b >= 2:
                L[i, idx[(a, b - 2)]] += b * (b - 1) / h2
        return L


@dataclass(frozen=True)
class ScaledMonomialBasis1D:
    """((s - s_e) / h_e)^l, l < count, in the arc-length coordinate of a segment."""

    start: np.ndarray
    end: np.ndarray
    count: int

    @property
    def length(self) -> float:
        return float(np.hypot(*(np.asarray(self.end) - np.asarray(self.start))))

    def local_coordinate(self, points) -> np.ndarray:
        """t = (s - s_e)/h_e in [-1/2, 1/2] for points on the segment."""
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        tau = (b - a) / self.length
        return (np.asarray(points, float) - a) @ tau / self.length - 0.5

    def evaluate(self, points) -> np.ndarray:
        t = self.local_coordinate(points)
        return t[:, None] ** np.arange(self.count)


def eval_basis(basis: ScaledMonomialBasis2D, points) -> np.ndarray:
    """Values table of shape (npoints, len(basis))."""
    X = basis.scaled(np.atleast_2d(points))
    p = basis.powers
    return X[:, None, 0] ** p[:, 0] * X[:, None, 1] ** p[:, 1]


def eval_gradients(basis: ScaledMonomialBasis2D, points) -> np.ndarray:
    """Gradient table of shape (npoints, len(basis), 2)."""
    X = basis.scaled(np.atleast_2d(points))
    p = basis.powers
    x, y = X[:, None, 0], X[:, None, 1]
    px, py = p[:, 0], p[:, 1]
    dx = np.where(px > 0, px * x ** np.maximum(px - 1, 0), 0.0) * y**py
    dy = np.where(py > 0, py * y ** np.maximum(py - 1, 0), 0.0) * x**px
    return np.stack([dx, dy], axis=-1) / basis.diameter


def mass_matrix_reference_1d(count: int) -> np.ndarray:
    """int_{-1/2}^{1/2} t^i t^j dt for i, j < count."""
    i = np.arange(count)
    s = i[:, None] + i[None, :]
    return np.where(s % 2 == 0, 2.0 * 0.5 ** (s + 1) / (s + 1), 0.0)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int
    local: np.ndarray | None = None  # facet rules: t in [-1/2, 1/2] along start -> end

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values))


@lru_cache(maxsize=None)
def _gauss_legendre_unit(npts: int):
    x, w = roots_legendre(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _collapsed_triangle(exactness: int):
    # Conical product: Gauss-Jacobi(0,1) absorbs the Duffy Jacobian u in the collapsed direction.
    m = max(1, (exactness + 2) // 2)
    su, wu = roots_jacobi(m, 0.0, 1.0)
    u, wu = 0.5 * (su + 1.0), wu / 4.0
    v, wv = _gauss_legendre_unit(m)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    # barycentric weights for vertices (A, B, C): x = A + u (B - A) + u v (C - B)
    lam = np.stack([1.0 - U.ravel(), U.ravel() * (1.0 - V.ravel()), U.ravel() * V.ravel()], axis=1)
    return lam, 2.0 * W.ravel()


def triangle_quadrature(tri, exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights on triangle(s) tri of shape (3, 2) or (ntri, 3, 2)."""
    tri = np.asarray(tri, float)
    single = tri.ndim == 2
    tri = tri.reshape(-1, 3, 2)
    lam, w = _collapsed_triangle(exactness)
    pts = np.einsum("qi,tij->tqj", lam, tri)
    e1, e2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    wts = area[:, None] * w[None, :]
    if single:
        return pts[0], wts[0]
    return pts.reshape(-1, 2), wts.ravel()


def signed_area(poly) -> float:
    poly = np.asarray(poly, float)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    poly = np.asarray(poly, float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _ear_clip(poly: np.ndarray) -> np.ndarray:
    idx = list(range(len(poly)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3 and guard < 10 * len(poly) ** 2:
        guard += 1
        for j in range(len(idx)):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 0:
                continue
            inside = False
            for m in idx:
                if m in (i0, i1, i2):
                    continue
                p = poly[m]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                idx.pop(j)
                break
        else:
            raise ValueError("ear clipping failed: polygon is not simple")
    tris.append(tuple(idx))
    return poly[np.array(tris)]


def triangulate(poly) -> np.ndarray:
    """Fan from the centroid when every fan triangle is positive, else ear clipping."""
    poly = np.asarray(poly, float)
    c = polygon_centroid(poly)
    nxt = np.roll(poly, -1, axis=0)
    d1, d2 = poly - c, nxt - c
    cr = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.max(np.sum((poly - c) ** 2, axis=1))
    if np.all(cr > 1e-12 * scale):
        return np.stack([np.broadcast_to(c, poly.shape), poly, nxt], axis=1)
    return _ear_clip(poly)


def polygon_quadrature(cell, exactness: int) -> QuadratureRule:
    """Rule exact for bivariate polynomials of degree <= exactness on a simple ccw polygon."""
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    pts, wts = triangle_quadrature(triangulate(cell), exactness)
    return QuadratureRule(pts, wts, exactness)


def facet_quadrature(start, end, exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule with ceil((exactness+1)/2) points on the segment [start, end]."""
    a, b = np.asarray(start, float), np.asarray(end, float)
    npts = max(1, -(-(exactness + 1) // 2))
    s, w = _gauss_legendre_unit(npts)
    length = float(np.hypot(*(b - a)))
    # t is kept exactly rather than recovered from the points, which loses
    # about eps/length relative accuracy on short facets
    return QuadratureRule(a + s[:, None] * (b - a), length * w, exactness, s - 0.5)


def monomial_mass_matrix(cell, k: int, rule: QuadratureRule | None = None,
                         basis: ScaledMonomialBasis2D | None = None) -> np.ndarray:
    """H[a, b] = int_E m_a m_b, with the scaled basis centered at the cell centroid."""
    cell = np.asarray(cell, float)
    if basis is None:
        basis = cell_basis(cell, k)
    if rule is None:
        rule = polygon_quadrature(cell, 2 * k)
    if rule.exactness < 2 * k:
        raise ValueError("mass matrix needs quadrature exactness >= 2k")
    M = eval_basis(basis, rule.points)
    H = (M * rule.weights[:, None]).T @ M
    return 0.5 * (H + H.T)


def diameter(poly) -> float:
    poly = np.asarray(poly, float)
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def cell_basis(cell, k: int) -> ScaledMonomialBasis2D:
    cell = np.asarray(cell, float)
    return ScaledMonomialBasis2D(k, polygon_centroid(cell), diameter(cell))
