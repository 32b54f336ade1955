"""Unstructured meshes with named regions.

Meshes come from two sources: a Gmsh MSH 2.2 ASCII file (the only
supported exchange format) or the built-in interval/grid generators used
for benchmarks and tests.  Node ids are remapped to dense 0-based indices
at load time; element connectivity always stores those dense indices.
All mesh objects are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MeshConsistencyError,
    MeshParseError,
    RegionLookupError,
    UnsupportedElementError,
)

# Supported element shapes: node count and topological dimension.
SHAPE_NNODES = {
    "point1": 1,
    "line2": 2,
    "tri3": 3,
    "quad4": 4,
    "tet4": 4,
    "hex8": 8,
}
SHAPE_DIM = {
    "point1": 0,
    "line2": 1,
    "tri3": 2,
    "quad4": 2,
    "tet4": 3,
    "hex8": 3,
}

# Gmsh MSH 2.2 element type codes for the supported subset.
MSH_TYPE_TO_SHAPE = {
    1: "line2",
    2: "tri3",
    3: "quad4",
    4: "tet4",
    5: "hex8",
    15: "point1",
}
SHAPE_TO_MSH_TYPE = {v: k for k, v in MSH_TYPE_TO_SHAPE.items()}


@dataclass(frozen=True)
class Node:
    """Mesh node; ``id`` is the original (1-based) file id."""

    id: int
    coords: tuple[float, float, float]


@dataclass(frozen=True)
class Element:
    """Mesh element; ``connectivity`` holds dense 0-based node indices."""

    id: int
    shape: str
    connectivity: tuple[int, ...]
    region_id: int


@dataclass(frozen=True)
class Region:
    """Named element group (volume domain or boundary)."""

    id: int
    name: str
    dim: int


@dataclass(frozen=True)
class Mesh:
    """Immutable unstructured mesh.

    ``dim`` is the topological dimension of the volume elements; surface
    regions used for boundary conditions have dimension ``dim - 1``.
    """

    dim: int
    nodes: tuple[Node, ...]
    elements: tuple[Element, ...]
    regions: tuple[Region, ...]
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xyz = np.array([n.coords for n in self.nodes], dtype=float)
        xyz = xyz.reshape(len(self.nodes), 3)
        object.__setattr__(self, "coords", xyz)
        object.__setattr__(
            self, "_region_by_name", {r.name: r for r in self.regions}
        )
        object.__setattr__(self, "_region_by_id", {r.id: r for r in self.regions})

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def region(self, name: str) -> Region:
        try:
            return self._region_by_name[name]
        except KeyError:
            raise RegionLookupError(name, [r.name for r in self.regions]) from None

    def region_of(self, element: Element) -> Region:
        try:
            return self._region_by_id[element.region_id]
        except KeyError:
            raise MeshConsistencyError(
                f"element {element.id} references unknown region id "
                f"{element.region_id}"
            ) from None

    def region_names(self) -> list[str]:
        return [r.name for r in self.regions]


def extract_region(mesh: Mesh, name: str) -> list[Element]:
    """All elements of the named region, in file/generation order."""
    region = mesh.region(name)
    return [e for e in mesh.elements if e.region_id == region.id]


# ---------------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII reader / writer
# ---------------------------------------------------------------------------

def parse_mesh(text: str) -> Mesh:
    """Parse a Gmsh MSH 2.2 ASCII file (supported element subset only).

    Sections ``$MeshFormat``, ``$PhysicalNames``, ``$Nodes`` and
    ``$Elements`` are honoured; physical-group ids become regions named
    from ``$PhysicalNames`` (unnamed groups get ``physical_<id>``).  Node
    ids are remapped to dense 0-based indices; original ids are kept on
    the :class:`Node` for diagnostics.

    Raises :class:`MeshParseError` (with a line number) on malformed
    input, :class:`UnsupportedElementError` for element type codes
    outside the subset, :class:`MeshConsistencyError` for dangling node
    references.
    """
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[str, int]:
        nonlocal pos
        while pos < len(lines):
            raw = lines[pos]
            pos += 1
            stripped = raw.strip()
            if stripped:
                return stripped, pos
        raise MeshParseError("unexpected end of file", len(lines))

    def expect(token: str):
        line, lineno = next_line()
        if line != token:
            raise MeshParseError(f"expected '{token}', got '{line}'", lineno)

    expect("$MeshFormat")
    version, lineno = next_line()
    if version.split() != ["2.2", "0", "8"]:
        raise MeshParseError(
            f"unsupported mesh format '{version}' (only '2.2 0 8')", lineno
        )
    expect("$EndMeshFormat")

    physical_names: dict[int, tuple[int, str]] = {}
    section, lineno = next_line()
    if section == "$PhysicalNames":
        count_line, lineno = next_line()
        try:
            n_names = int(count_line)
        except ValueError:
            raise MeshParseError(
                f"bad physical-name count '{count_line}'", lineno
            ) from None
        for _ in range(n_names):
            entry, lineno = next_line()
            parts = entry.split(maxsplit=2)
            if len(parts) != 3 or not parts[2].startswith('"'):
                raise MeshParseError(f"bad physical name entry '{entry}'", lineno)
            physical_names[int(parts[1])] = (int(parts[0]), parts[2].strip('"'))
        expect("$EndPhysicalNames")
        section, lineno = next_line()

    if section != "$Nodes":
        raise MeshParseError(f"expected '$Nodes', got '{section}'", lineno)
    count_line, lineno = next_line()
    try:
        n_nodes = int(count_line)
    except ValueError:
        raise MeshParseError(f"bad node count '{count_line}'", lineno) from None
    nodes = []
    id_to_index: dict[int, int] = {}
    for i in range(n_nodes):
        entry, lineno = next_line()
        parts = entry.split()
        if len(parts) != 4:
            raise MeshParseError(f"bad node entry '{entry}'", lineno)
        nid = int(parts[0])
        if nid in id_to_index:
            raise MeshParseError(f"duplicate node id {nid}", lineno)
        id_to_index[nid] = i
        nodes.append(Node(nid, (float(parts[1]), float(parts[2]), float(parts[3]))))
    expect("$EndNodes")

    expect("$Elements")
    count_line, lineno = next_line()
    try:
        n_elements = int(count_line)
    except ValueError:
        raise MeshParseError(f"bad element count '{count_line}'", lineno) from None
    elements = []
    region_dims: dict[int, int] = {}
    for _ in range(n_elements):
        entry, lineno = next_line()
        parts = [int(p) for p in entry.split()]
        if len(parts) < 3:
            raise MeshParseError(f"bad element entry '{entry}'", lineno)
        eid, etype, n_tags = parts[0], parts[1], parts[2]
        if etype not in MSH_TYPE_TO_SHAPE:
            raise UnsupportedElementError(
                f"unsupported element type code {etype}", lineno
            )
        shape = MSH_TYPE_TO_SHAPE[etype]
        tags = parts[3 : 3 + n_tags]
        conn_ids = parts[3 + n_tags :]
        if len(conn_ids) != SHAPE_NNODES[shape]:
            raise MeshParseError(
                f"element {eid}: {shape} needs {SHAPE_NNODES[shape]} nodes, "
                f"got {len(conn_ids)}",
                lineno,
            )
        region_id = tags[0] if tags else 0
        conn = []
        for nid in conn_ids:
            if nid not in id_to_index:
                raise MeshConsistencyError(
                    f"element {eid} references missing node {nid}"
                )
            conn.append(id_to_index[nid])
        elements.append(Element(eid, shape, tuple(conn), region_id))
        dim = SHAPE_DIM[shape]
        region_dims[region_id] = max(region_dims.get(region_id, dim), dim)
    expect("$EndElements")

    if not elements:
        raise MeshParseError("mesh contains no elements", len(lines))

    regions = []
    for rid in sorted(region_dims):
        if rid in physical_names:
            dim, name = physical_names[rid]
        else:
            dim, name = region_dims[rid], f"physical_{rid}"
        regions.append(Region(rid, name, dim))
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise MeshConsistencyError(f"duplicate region names in {names}")

    mesh_dim = max(SHAPE_DIM[e.shape] for e in elements)
    return Mesh(mesh_dim, tuple(nodes), tuple(elements), tuple(regions))


def write_msh(mesh: Mesh) -> str:
    """Serialize to MSH 2.2 ASCII; inverse of :func:`parse_mesh` on the
    retained subset (coordinates, connectivity, region names)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    out.append("$PhysicalNames")
    out.append(str(len(mesh.regions)))
    for r in mesh.regions:
        out.append(f'{r.dim} {r.id} "{r.name}"')
    out.append("$EndPhysicalNames")
    out.append("$Nodes")
    out.append(str(mesh.n_nodes))
    for i, node in enumerate(mesh.nodes):
        x, y, z = node.coords
        out.append(f"{i + 1} {x:.17g} {y:.17g} {z:.17g}")
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(len(mesh.elements)))
    for e in mesh.elements:
        conn = " ".join(str(i + 1) for i in e.connectivity)
        out.append(
            f"{e.id} {SHAPE_TO_MSH_TYPE[e.shape]} 2 {e.region_id} {e.region_id} {conn}"
        )
    out.append("$EndElements")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Structured generators
# ---------------------------------------------------------------------------

def generate_interval_mesh(
    length: float, n: int, region: str, left: str, right: str
) -> Mesh:
    """Uniform 1D mesh of ``n`` line2 elements on [0, length] with point1
    boundary elements in regions ``left`` and ``right``."""
    if n < 1:
        raise ValueError(f"element count must be >= 1, got {n}")
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    nodes = tuple(
        Node(i + 1, (length * i / n, 0.0, 0.0)) for i in range(n + 1)
    )
    elements = [
        Element(i + 1, "line2", (i, i + 1), 1) for i in range(n)
    ]
    elements.append(Element(n + 1, "point1", (0,), 2))
    elements.append(Element(n + 2, "point1", (n,), 3))
    regions = (
        Region(1, region, 1),
        Region(2, left, 0),
        Region(3, right, 0),
    )
    return Mesh(1, nodes, tuple(elements), regions)


def generate_grid_mesh(
    lx: float,
    ly: float,
    nx: int,
    ny: int,
    region: str,
    side_names: tuple[str, str, str, str],
) -> Mesh:
    """Structured quad4 grid on [0,lx] x [0,ly] with line2 boundary
    regions named ``side_names`` = (left, right, bottom, top)."""
    if nx < 1 or ny < 1:
        raise ValueError(f"grid must have nx, ny >= 1, got ({nx}, {ny})")
    if lx <= 0 or ly <= 0:
        raise ValueError(f"dimensions must be positive, got ({lx}, {ly})")
    if len(side_names) != 4:
        raise ValueError("side_names must hold exactly 4 names")

    def nidx(i: int, j: int) -> int:
        return j * (nx + 1) + i

    nodes = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            nodes.append(
                Node(nidx(i, j) + 1, (lx * i / nx, ly * j / ny, 0.0))
            )

    elements = []
    eid = 1
    for j in range(ny):
        for i in range(nx):
            conn = (nidx(i, j), nidx(i + 1, j), nidx(i + 1, j + 1), nidx(i, j + 1))
            elements.append(Element(eid, "quad4", conn, 1))
            eid += 1
    # Boundary segments, region ids 2..5 = left, right, bottom, top.
    for j in range(ny):
        elements.append(Element(eid, "line2", (nidx(0, j), nidx(0, j + 1)), 2))
        eid += 1
    for j in range(ny):
        elements.append(Element(eid, "line2", (nidx(nx, j), nidx(nx, j + 1)), 3))
        eid += 1
    for i in range(nx):
        elements.append(Element(eid, "line2", (nidx(i, 0), nidx(i + 1, 0)), 4))
        eid += 1
    for i in range(nx):
        elements.append(Element(eid, "line2", (nidx(i, ny), nidx(i + 1, ny)), 5))
        eid += 1

    regions = (Region(1, region, 2),) + tuple(
        Region(i + 2, name, 1) for i, name in enumerate(side_names)
    )
    return Mesh(2, tuple(nodes), tuple(elements), regions)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_mesh(mesh: Mesh) -> list[str]:
    """Check all mesh invariants; returns one diagnostic per violation.

    An empty list means the mesh is valid.  Violations never raise: this
    is the inspection path, suitable for ``--dry-run`` reporting.
    """
    from . import fe_space  # local import, fe_space depends on this module

    diags = []
    n = mesh.n_nodes
    region_ids = {r.id for r in mesh.regions}

    volume_node_sets = []
    for e in mesh.elements:
        if len(e.connectivity) != SHAPE_NNODES[e.shape]:
            diags.append(
                f"element {e.id}: {e.shape} connectivity has "
                f"{len(e.connectivity)} nodes, expected {SHAPE_NNODES[e.shape]}"
            )
            continue
        bad = [i for i in e.connectivity if not 0 <= i < n]
        if bad:
            diags.append(f"element {e.id}: dangling node index {bad[0]}")
            continue
        if e.region_id not in region_ids:
            diags.append(f"element {e.id}: unresolved region id {e.region_id}")
        if SHAPE_DIM[e.shape] == mesh.dim:
            volume_node_sets.append(set(e.connectivity))
            ref = fe_space.make_reference_element(e.shape)
            for q in range(len(ref.quadrature.weights)):
                try:
                    fe_space.element_jacobian(e, mesh, ref.quadrature.points[q])
                except Exception as err:
                    diags.append(f"element {e.id}: {err}")
                    break

    if not any(r.dim == mesh.dim for r in mesh.regions):
        diags.append("mesh has no volume region")
    names = [r.name for r in mesh.regions]
    if len(set(names)) != len(names):
        diags.append(f"region names not unique: {names}")

    for e in mesh.elements:
        if SHAPE_DIM[e.shape] == mesh.dim:
            continue
        if any(not 0 <= i < n for i in e.connectivity):
            continue  # dangling index already reported
        eset = set(e.connectivity)
        if not any(eset <= vset for vset in volume_node_sets):
            diags.append(
                f"element {e.id}: boundary element not contained in any "
                "volume element"
            )
    return diags
