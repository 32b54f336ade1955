"""Element-level bilinear/linear forms and their global assembly.

The two bilinear forms of the pressure weak form (mass weighted by
1/c^2, stiffness from the gradient product) are integrated per element
and summed into a global CSR matrix over all mesh nodes; boundary
conditions are eliminated later, in the analysis layer.  Assembly order
is ascending element id so repeated runs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ExpressionDomainError, MaterialError
from .fe_space import DofMap, ReferenceElement, element_jacobian, make_reference_element
from .mesh import SHAPE_DIM, Element, Mesh
from .sparse_linalg import SparseMatrix

ASSEMBLY_KINDS = ("mass", "stiffness")
LOAD_KINDS = ("neumann", "source")


@dataclass(frozen=True)
class ElementMatrix:
    """Dense symmetric element contribution to a global bilinear form."""

    values: np.ndarray
    element_id: int


@dataclass(frozen=True)
class LoadVector:
    """Right-hand side over the full node index space (pre-elimination)."""

    values: np.ndarray


def mass_element_matrix(
    element: Element, mesh: Mesh, ref: ReferenceElement, c: float
) -> ElementMatrix:
    """m_ab = int_e (1/c^2) N_a N_b dOmega (c = speed of sound)."""
    if c <= 0:
        raise MaterialError(f"speed of sound must be positive, got {c}")
    out = np.zeros((ref.n_basis, ref.n_basis))
    for q, w in enumerate(ref.quadrature.weights):
        _, det, _ = element_jacobian(element, mesh, ref.quadrature.points[q])
        basis = ref.basis_at_qp[q]
        out += (w * det / c**2) * np.outer(basis, basis)
    return ElementMatrix(out, element.id)


def stiffness_element_matrix(
    element: Element, mesh: Mesh, ref: ReferenceElement
) -> ElementMatrix:
    """k_ab = int_e grad N_a . grad N_b dOmega (physical gradients)."""
    out = np.zeros((ref.n_basis, ref.n_basis))
    for q, w in enumerate(ref.quadrature.weights):
        _, det, inv = element_jacobian(element, mesh, ref.quadrature.points[q])
        grad = ref.grad_at_qp[q] @ inv
        out += (w * det) * (grad @ grad.T)
    return ElementMatrix(out, element.id)


def neumann_surface_vector_element(
    surface_element: Element,
    mesh: Mesh,
    ref: ReferenceElement,
    g: Callable[[float, float, float], float],
) -> np.ndarray:
    """r_a = int_s N_a g(x) ds over a boundary element.

    In 1D the boundary is a point and the integral degenerates to a
    point evaluation with weight 1.
    """
    coords = mesh.coords[list(surface_element.connectivity)]
    out = np.zeros(ref.n_basis)
    for q, w in enumerate(ref.quadrature.weights):
        _, measure, _ = element_jacobian(
            surface_element, mesh, ref.quadrature.points[q]
        )
        basis = ref.basis_at_qp[q]
        x, y, z = basis @ coords
        out += (w * measure * g(x, y, z)) * basis
    return out


def volume_source_vector_element(
    element: Element,
    mesh: Mesh,
    ref: ReferenceElement,
    f: Callable[[float, float, float], float],
) -> np.ndarray:
    """r_a = int_e N_a f(x) dOmega."""
    coords = mesh.coords[list(element.connectivity)]
    out = np.zeros(ref.n_basis)
    for q, w in enumerate(ref.quadrature.weights):
        _, det, _ = element_jacobian(element, mesh, ref.quadrature.points[q])
        basis = ref.basis_at_qp[q]
        x, y, z = basis @ coords
        out += (w * det * f(x, y, z)) * basis
    return out


# ---------------------------------------------------------------------------
# Global assembly
# ---------------------------------------------------------------------------

def _volume_elements(mesh: Mesh) -> list[Element]:
    return sorted(
        (e for e in mesh.elements if SHAPE_DIM[e.shape] == mesh.dim),
        key=lambda e: e.id,
    )


def _adjacency_pattern(n: int, elements) -> tuple[np.ndarray, np.ndarray]:
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for e in elements:
        for a in e.connectivity:
            neighbors[a].update(e.connectivity)
    offsets = np.zeros(n + 1, dtype=np.int64)
    cols = []
    for i, adj in enumerate(neighbors):
        row = sorted(adj)
        cols.extend(row)
        offsets[i + 1] = offsets[i] + len(row)
    return offsets, np.array(cols, dtype=np.int64)


def assemble_bilinear(
    mesh: Mesh,
    dofmap: DofMap,
    materials: dict[str, float],
    kind: str,
) -> SparseMatrix:
    """Assemble the global mass or stiffness matrix over all node indices.

    ``materials`` maps every volume region name to its speed of sound;
    a volume region without a binding raises :class:`ConfigError`.
    Element contributions are summed in ascending element-id order.
    """
    if kind not in ASSEMBLY_KINDS:
        raise ValueError(f"kind must be one of {ASSEMBLY_KINDS}, got '{kind}'")
    n = dofmap.n_nodes
    elements = _volume_elements(mesh)
    offsets, cols = _adjacency_pattern(n, elements)
    values = np.zeros(len(cols))
    refs: dict[str, ReferenceElement] = {}
    speed: dict[int, float] = {}
    for e in elements:
        if e.region_id not in speed:
            region = mesh.region_of(e)
            if region.name not in materials:
                raise ConfigError(
                    f"volume region '{region.name}' has no material binding"
                )
            speed[e.region_id] = materials[region.name]
        if e.shape not in refs:
            refs[e.shape] = make_reference_element(e.shape)
        ref = refs[e.shape]
        if kind == "mass":
            local = mass_element_matrix(e, mesh, ref, speed[e.region_id]).values
        else:
            local = stiffness_element_matrix(e, mesh, ref).values
        for a, row in enumerate(e.connectivity):
            lo, hi = offsets[row], offsets[row + 1]
            slots = lo + np.searchsorted(cols[lo:hi], e.connectivity)
            values[slots] += local[a]
    return SparseMatrix(
        n=n, row_offsets=offsets, col_indices=cols, values=values, symmetric=True
    )


def assemble_linear(
    mesh: Mesh,
    dofmap: DofMap,
    loads: list[tuple[str, str, object]],
    t: float = 0.0,
    freq: float = 0.0,
) -> LoadVector:
    """Assemble the right-hand side from (region, kind, expression) loads.

    ``kind`` is "neumann" (boundary flux, region of dimension
    mesh_dim - 1) or "source" (volume term).  Expressions are evaluated
    per quadrature point with the given time ``t`` and frequency
    ``freq`` bound; evaluation failures propagate with the region name.
    """
    from .expressions import evaluate_expression

    out = np.zeros(dofmap.n_nodes)
    refs: dict[str, ReferenceElement] = {}
    for region_name, kind, expr in loads:
        region = mesh.region(region_name)
        if kind == "neumann":
            if region.dim != mesh.dim - 1:
                raise ConfigError(
                    f"neumann load needs a boundary region of dimension "
                    f"{mesh.dim - 1}; region '{region_name}' has dimension "
                    f"{region.dim}"
                )
        elif kind == "source":
            if region.dim != mesh.dim:
                raise ConfigError(
                    f"volume source needs a region of dimension {mesh.dim}; "
                    f"region '{region_name}' has dimension {region.dim}"
                )
        else:
            raise ValueError(f"load kind must be one of {LOAD_KINDS}, got '{kind}'")

        def g(x, y, z, _expr=expr, _name=region_name):
            try:
                return evaluate_expression(_expr, x=x, y=y, z=z, t=t, f=freq)
            except ExpressionDomainError as err:
                raise ExpressionDomainError(
                    f"load on region '{_name}': {err}"
                ) from err

        for e in mesh.elements:
            if e.region_id != region.id:
                continue
            if e.shape not in refs:
                refs[e.shape] = make_reference_element(e.shape)
            ref = refs[e.shape]
            if kind == "neumann":
                local = neumann_surface_vector_element(e, mesh, ref, g)
            else:
                local = volume_source_vector_element(e, mesh, ref, g)
            out[list(e.connectivity)] += local
    return LoadVector(out)
