"""Result persistence: VTK legacy ASCII fields and CSV probe histories.

All numbers are printed with 17 significant digits so float64 values
survive a write/read round trip, and output is bitwise deterministic
for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import Mesh

# VTK legacy cell type codes for the supported shapes (point1 elements
# carry no field topology and are skipped).
VTK_CELL_TYPE = {
    "line2": 3,
    "tri3": 5,
    "quad4": 9,
    "tet4": 10,
    "hex8": 12,
}


@dataclass(frozen=True)
class ProbeHistory:
    """Sampled trace of a nodal field at the mesh node nearest to
    ``location`` (Euclidean distance, ties to the lowest node index)."""

    location: tuple[float, float, float]
    node_index: int
    abscissae: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.abscissae) != len(self.values):
            raise ValueError(
                f"series length mismatch: {len(self.abscissae)} abscissae, "
                f"{len(self.values)} values"
            )
        if np.any(np.diff(self.abscissae) <= 0):
            raise ValueError("probe abscissae must be strictly increasing")


def nearest_node_index(mesh: Mesh, point) -> int:
    """Index of the mesh node nearest to ``point`` (lowest index wins
    ties)."""
    p = np.zeros(3)
    p[: len(point)] = point
    dist = np.linalg.norm(mesh.coords - p, axis=1)
    return int(np.argmin(dist))


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_vtk_unstructured(mesh: Mesh, field, path) -> None:
    """Write one nodal scalar field as VTK legacy ASCII 3.0.

    ``field`` needs ``name`` and ``nodal_values`` (length n_nodes).
    Cells cover all line/surface/volume elements; point1 markers are
    skipped (no VTK topology in the supported code table).
    """
    values = np.asarray(field.nodal_values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise ValueError(
            f"field has {values.shape} values for {mesh.n_nodes} nodes"
        )
    cells = [e for e in mesh.elements if e.shape in VTK_CELL_TYPE]
    lines = [
        "# vtk DataFile Version 3.0",
        f"{field.name}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y, z in mesh.coords:
        lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}")
    total = sum(1 + len(e.connectivity) for e in cells)
    lines.append(f"CELLS {len(cells)} {total}")
    for e in cells:
        lines.append(
            f"{len(e.connectivity)} " + " ".join(str(i) for i in e.connectivity)
        )
    lines.append(f"CELL_TYPES {len(cells)}")
    for e in cells:
        lines.append(str(VTK_CELL_TYPE[e.shape]))
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append(f"SCALARS {field.name} double 1")
    lines.append("LOOKUP_TABLE default")
    for v in values:
        lines.append(_fmt(v))
    try:
        Path(path).write_text("\n".join(lines) + "\n", newline="\n")
    except OSError as err:
        raise OSError(f"cannot write VTK file '{path}': {err}") from err


def write_probe_csv(histories, path) -> None:
    """Write probe histories as CSV with header ``t_or_f,probe_0,...``.

    All histories must share identical abscissae.
    """
    histories = list(histories)
    if not histories:
        raise ValueError("no probe histories to write")
    base = histories[0].abscissae
    for h in histories[1:]:
        if not np.array_equal(h.abscissae, base):
            raise RuntimeError("probe histories have misaligned abscissae")
    header = "t_or_f," + ",".join(f"probe_{i}" for i in range(len(histories)))
    lines = [header]
    for row, t in enumerate(base):
        vals = ",".join(_fmt(h.values[row]) for h in histories)
        lines.append(f"{_fmt(t)},{vals}")
    try:
        Path(path).write_text("\n".join(lines) + "\n", newline="\n")
    except OSError as err:
        raise OSError(f"cannot write CSV file '{path}': {err}") from err
