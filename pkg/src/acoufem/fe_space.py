"""Reference elements, quadrature and equation numbering.

Order-1 nodal Lagrange bases on the supported shapes, Gauss quadrature
(tensorized on quad/hex, tabulated symmetric rules on tri/tet), the
reference-to-physical Jacobian, and the map from mesh nodes to free
equations / Dirichlet slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateElementError
from .mesh import SHAPE_DIM, SHAPE_NNODES, Element, Mesh

# Reference node coordinates, one row per basis function.  Lines, quads
# and hexes live on [-1,1]^d; triangles and tets are unit simplices.
REFERENCE_NODES = {
    "point1": np.zeros((1, 0)),
    "line2": np.array([[-1.0], [1.0]]),
    "tri3": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "quad4": np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
    "tet4": np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    ),
    "hex8": np.array(
        [
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
        ]
    ),
}

MAX_QUADRATURE_DEGREE = 5


@dataclass(frozen=True)
class QuadratureRule:
    """Integration points (rows) and weights on the reference element."""

    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class ReferenceElement:
    """Order-1 Lagrange reference element with a quadrature rule attached.

    ``basis_at_qp[q]`` and ``grad_at_qp[q]`` tabulate shape values and
    reference gradients at quadrature point ``q``.
    """

    shape: str
    order: int
    n_basis: int
    quadrature: QuadratureRule
    basis_at_qp: np.ndarray = field(repr=False, compare=False)
    grad_at_qp: np.ndarray = field(repr=False, compare=False)


def reference_shape_values(shape: str, xi) -> np.ndarray:
    """Linear/bi-/tri-linear Lagrange shape values at reference point xi.

    Values outside the reference element are extrapolated, not checked.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if shape == "point1":
        return np.ones(1)
    if shape == "line2":
        return np.array([0.5 * (1 - xi[0]), 0.5 * (1 + xi[0])])
    if shape == "tri3":
        return np.array([1 - xi[0] - xi[1], xi[0], xi[1]])
    if shape == "quad4":
        ref = REFERENCE_NODES[shape]
        return 0.25 * (1 + ref[:, 0] * xi[0]) * (1 + ref[:, 1] * xi[1])
    if shape == "tet4":
        return np.array([1 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]])
    if shape == "hex8":
        ref = REFERENCE_NODES[shape]
        return (
            0.125
            * (1 + ref[:, 0] * xi[0])
            * (1 + ref[:, 1] * xi[1])
            * (1 + ref[:, 2] * xi[2])
        )
    raise ValueError(f"unknown element shape '{shape}'")


def reference_shape_gradients(shape: str, xi) -> np.ndarray:
    """Shape-function gradients w.r.t. reference coordinates,
    one row per basis function."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if shape == "point1":
        return np.zeros((1, 0))
    if shape == "line2":
        return np.array([[-0.5], [0.5]])
    if shape == "tri3":
        return np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if shape == "quad4":
        ref = REFERENCE_NODES[shape]
        return 0.25 * np.column_stack(
            [
                ref[:, 0] * (1 + ref[:, 1] * xi[1]),
                ref[:, 1] * (1 + ref[:, 0] * xi[0]),
            ]
        )
    if shape == "tet4":
        return np.array(
            [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
    if shape == "hex8":
        ref = REFERENCE_NODES[shape]
        gx = ref[:, 0] * (1 + ref[:, 1] * xi[1]) * (1 + ref[:, 2] * xi[2])
        gy = ref[:, 1] * (1 + ref[:, 0] * xi[0]) * (1 + ref[:, 2] * xi[2])
        gz = ref[:, 2] * (1 + ref[:, 0] * xi[0]) * (1 + ref[:, 1] * xi[1])
        return 0.125 * np.column_stack([gx, gy, gz])
    raise ValueError(f"unknown element shape '{shape}'")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# Symmetric triangle rules on the unit triangle (area 1/2), keyed by the
# highest exactly integrated total degree.  Entries: (barycentric point
# groups, absolute weight per point).
def _tri_points(groups):
    pts, wts = [], []
    for kind, a, w in groups:
        if kind == "centroid":
            pts.append((1 / 3, 1 / 3))
            wts.append(w)
        else:  # three-point orbit (1-2a, a, a)
            pts += [(a, a), (1 - 2 * a, a), (a, 1 - 2 * a)]
            wts += [w, w, w]
    return np.array(pts), np.array(wts)


_TRI_RULES = {
    1: _tri_points([("centroid", None, 0.5)]),
    2: _tri_points([("orbit", 1 / 6, 1 / 6)]),
    4: _tri_points(
        [
            ("orbit", 0.445948490915965, 0.223381589678011 / 2),
            ("orbit", 0.091576213509771, 0.109951743655322 / 2),
        ]
    ),
    5: _tri_points(
        [
            ("centroid", None, 0.225 / 2),
            ("orbit", 0.470142064105115, 0.132394152788506 / 2),
            ("orbit", 0.101286507323456, 0.125939180544827 / 2),
        ]
    ),
}


def _tet_orbit4(b):
    # Four points: (1-3b, b, b, b) and permutations, in xyz coordinates.
    a = 1 - 3 * b
    return [(b, b, b), (a, b, b), (b, a, b), (b, b, a)]


def _tet_orbit6(a):
    # Six points with barycentric pairs (a, a, b, b), b = 1/2 - a.
    b = 0.5 - a
    return [
        (a, a, b),
        (a, b, a),
        (a, b, b),
        (b, a, a),
        (b, a, b),
        (b, b, a),
    ]


def _tet_rule(groups):
    pts, wts = [], []
    for points, w in groups:
        pts += points
        wts += [w] * len(points)
    return np.array(pts), np.array(wts)


_TET_RULES = {
    1: _tet_rule([([(0.25, 0.25, 0.25)], 1 / 6)]),
    2: _tet_rule([(_tet_orbit4((5 - math.sqrt(5)) / 20), 1 / 24)]),
    3: _tet_rule(
        [
            ([(0.25, 0.25, 0.25)], -2 / 15),
            (_tet_orbit4(1 / 6), 3 / 40),
        ]
    ),
    # Keast 14-point rule, exact through total degree 5.
    5: _tet_rule(
        [
            (_tet_orbit6(0.045503704125649649492), 7.0910034628469110730e-03),
            (_tet_orbit4(0.092735250310891226402), 0.012248840519393658257),
            (_tet_orbit4(0.310885919263300609797), 0.018781320953002641800),
        ]
    ),
}


def _gauss_1d(degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = degree // 2 + 1  # n-point Gauss is exact to degree 2n-1
    return np.polynomial.legendre.leggauss(n)


def _tensor_rule(degree: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss_1d(degree)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    wts = np.ones(len(pts))
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts *= g.ravel()
    return pts, wts


def quadrature_rule(shape: str, poly_degree: int) -> QuadratureRule:
    """Quadrature exact for polynomials of degree <= ``poly_degree``
    (total degree on simplices, per-axis on tensor shapes)."""
    if poly_degree > MAX_QUADRATURE_DEGREE:
        raise ConfigError(
            f"quadrature degree {poly_degree} not supported "
            f"(max {MAX_QUADRATURE_DEGREE})"
        )
    poly_degree = max(poly_degree, 1)
    if shape == "point1":
        return QuadratureRule(np.zeros((1, 0)), np.ones(1))
    if shape == "line2":
        x, w = _gauss_1d(poly_degree)
        return QuadratureRule(x.reshape(-1, 1), w)
    if shape == "quad4":
        pts, wts = _tensor_rule(poly_degree, 2)
        return QuadratureRule(pts, wts)
    if shape == "hex8":
        pts, wts = _tensor_rule(poly_degree, 3)
        return QuadratureRule(pts, wts)
    if shape == "tri3":
        key = min(d for d in _TRI_RULES if d >= poly_degree)
        pts, wts = _TRI_RULES[key]
        return QuadratureRule(pts.copy(), wts.copy())
    if shape == "tet4":
        key = min(d for d in _TET_RULES if d >= poly_degree)
        pts, wts = _TET_RULES[key]
        return QuadratureRule(pts.copy(), wts.copy())
    raise ValueError(f"unknown element shape '{shape}'")


def make_reference_element(shape: str, poly_degree: int = 2) -> ReferenceElement:
    """Reference element with tabulated basis values/gradients at the
    quadrature points of the given degree (default 2, exact for all the
    affine mass/stiffness integrands of order-1 bases)."""
    rule = quadrature_rule(shape, poly_degree)
    basis = np.array([reference_shape_values(shape, xi) for xi in rule.points])
    grads = np.array([reference_shape_gradients(shape, xi) for xi in rule.points])
    return ReferenceElement(
        shape=shape,
        order=1,
        n_basis=SHAPE_NNODES[shape],
        quadrature=rule,
        basis_at_qp=basis,
        grad_at_qp=grads,
    )


# ---------------------------------------------------------------------------
# Geometry mapping
# ---------------------------------------------------------------------------

def element_jacobian(element: Element, mesh: Mesh, xi):
    """Jacobian of the reference-to-physical map at reference point xi.

    Returns ``(J, detJ, invJ)``.  For volume elements ``detJ`` is the
    volume measure factor and ``invJ`` maps reference gradients to
    physical ones (``grad_phys = grad_ref @ invJ``).  For surface
    elements ``detJ`` is the surface measure factor and ``invJ`` is
    None; point1 elements get measure 1 (point evaluation).
    """
    edim = SHAPE_DIM[element.shape]
    if edim == 0:
        return np.zeros((mesh.dim, 0)), 1.0, None
    coords = mesh.coords[list(element.connectivity)][:, : mesh.dim]
    grads = reference_shape_gradients(element.shape, xi)
    jac = coords.T @ grads  # (mesh.dim, edim)
    if edim == mesh.dim:
        det = float(np.linalg.det(jac))
        if det <= 0:
            raise DegenerateElementError(element.id, det)
        return jac, det, np.linalg.inv(jac)
    gram = jac.T @ jac
    det = float(np.linalg.det(gram))
    if det <= 0:
        raise DegenerateElementError(element.id, det)
    return jac, math.sqrt(det), None


# ---------------------------------------------------------------------------
# Equation numbering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DofMap:
    """Node-to-equation map with Dirichlet bookkeeping.

    ``eq_of_node[i]`` is the free equation index of node ``i`` when
    ``is_dirichlet[i]`` is False, otherwise the Dirichlet slot index.
    Both numberings run in ascending node order without gaps.
    """

    n_nodes: int
    eq_of_node: np.ndarray
    is_dirichlet: np.ndarray
    n_free: int
    n_dirichlet: int

    def free_nodes(self) -> np.ndarray:
        return np.nonzero(~self.is_dirichlet)[0]

    def dirichlet_nodes(self) -> np.ndarray:
        return np.nonzero(self.is_dirichlet)[0]


def build_dof_map(mesh: Mesh, dirichlet_regions: list[str]) -> DofMap:
    """Number free equations, constraining every node that lies on one of
    the named Dirichlet boundary regions.

    Raises :class:`RegionLookupError` for unknown names and
    :class:`ConfigError` when a volume region is listed (Dirichlet data
    lives on boundaries of dimension < mesh dimension).
    """
    constrained = np.zeros(mesh.n_nodes, dtype=bool)
    for name in dirichlet_regions:
        region = mesh.region(name)
        if region.dim >= mesh.dim:
            raise ConfigError(
                f"region '{name}' has dimension {region.dim}; Dirichlet "
                f"conditions need a boundary region of dimension < {mesh.dim}"
            )
        for e in mesh.elements:
            if e.region_id == region.id:
                constrained[list(e.connectivity)] = True

    eq = np.empty(mesh.n_nodes, dtype=np.int64)
    eq[~constrained] = np.arange(int((~constrained).sum()))
    eq[constrained] = np.arange(int(constrained.sum()))
    return DofMap(
        n_nodes=mesh.n_nodes,
        eq_of_node=eq,
        is_dirichlet=constrained,
        n_free=int((~constrained).sum()),
        n_dirichlet=int(constrained.sum()),
    )
