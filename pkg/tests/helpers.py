"""Independent oracles and sample geometry shared by the tests."""
import numpy as np

from vemcip.mesh import build_topology, generate_octag, generate_voronoi
from vemcip.polybasis import dim_poly

# acceptance verdict lines, echoed in the terminal summary
VERDICTS: list[str] = []


def green_monomial_integral(poly, a, b, center=(0.0, 0.0), scale=1.0):
    """Exact integral of ((x-cx)/s)^a ((y-cy)/s)^b over a polygon.

    Divergence theorem with the field (X^{a+1} Y^b / (a+1), 0) and a 1D
    Gauss-Legendre rule per edge, so it shares no code with the 2D rules.
    """
    P = (np.asarray(poly, float) - np.asarray(center)) / scale
    t, w = np.polynomial.legendre.leggauss(a + b + 2)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = 0.0
    for i in range(len(P)):
        p, q = P[i], P[(i + 1) % len(P)]
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        total += np.sum(w * x ** (a + 1) * y**b) / (a + 1) * (q[1] - p[1])
    return total * scale**2


def random_cells(family, count, seed=0):
    """Cells drawn from generated meshes of the given family."""
    rng = np.random.default_rng(seed)
    mesh = generate_octag(6, 0.2, seed) if family == "octag" else generate_voronoi(80, 2, seed)
    idx = rng.choice(mesh.n_cells, size=count, replace=count > mesh.n_cells)
    return [mesh.cell_coords(c) for c in idx]


def random_poly_coeffs(rng, k):
    return rng.uniform(-1, 1, dim_poly(k))


def unit_square_mesh():
    return build_topology([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]], name="square")
