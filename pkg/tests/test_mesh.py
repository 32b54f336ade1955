import numpy as np
import pytest

from acoufem import (
    extract_region,
    generate_grid_mesh,
    generate_interval_mesh,
    make_reference_element,
    parse_mesh,
    validate_mesh,
    write_msh,
)
from acoufem.errors import (
    MeshConsistencyError,
    MeshParseError,
    RegionLookupError,
    UnsupportedElementError,
)
from acoufem.fe_space import element_jacobian
from acoufem.mesh import Element, Mesh, Node, Region

MINIMAL_LINE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
1
1 1 "duct"
$EndPhysicalNames
$Nodes
2
1 0 0 0
2 1 0 0
$EndNodes
$Elements
1
1 1 2 1 1 1 2
$EndElements
"""

UNIT_SQUARE_TRIS = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
1
2 1 "square"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
2
1 2 2 1 1 1 2 3
2 2 2 1 1 1 3 4
$EndElements
"""


def mesh_measure(mesh):
    """Domain measure by quadrature (the generated-mesh invariant)."""
    total = 0.0
    for e in mesh.elements:
        ref = make_reference_element(e.shape)
        if ref.quadrature.points.shape[1] != mesh.dim:
            continue
        for q, w in enumerate(ref.quadrature.weights):
            _, det, _ = element_jacobian(e, mesh, ref.quadrature.points[q])
            total += w * det
    return total


class TestParseMesh:
    def test_minimal_line_file(self):
        mesh = parse_mesh(MINIMAL_LINE)
        assert mesh.dim == 1
        assert mesh.n_nodes == 2
        assert len(mesh.elements) == 1
        assert mesh.region("duct").dim == 1
        assert mesh.elements[0].connectivity == (0, 1)

    def test_unsupported_prism_names_code(self):
        text = MINIMAL_LINE.replace("1 1 2 1 1 1 2", "1 6 2 1 1 1 2")
        with pytest.raises(UnsupportedElementError, match="6"):
            parse_mesh(text)

    def test_second_order_elements_rejected(self):
        text = MINIMAL_LINE.replace("1 1 2 1 1 1 2", "1 8 2 1 1 1 2")
        with pytest.raises(UnsupportedElementError):
            parse_mesh(text)

    def test_unit_square_area_via_jacobians(self):
        mesh = parse_mesh(UNIT_SQUARE_TRIS)
        assert mesh.dim == 2
        assert abs(mesh_measure(mesh) - 1.0) < 1e-14

    def test_malformed_header_carries_line_number(self):
        with pytest.raises(MeshParseError, match="line 1"):
            parse_mesh("$NodeFormat\n2.2 0 8\n")

    def test_wrong_version_rejected(self):
        with pytest.raises(MeshParseError, match="4.1"):
            parse_mesh(MINIMAL_LINE.replace("2.2 0 8", "4.1 0 8"))

    def test_missing_node_reference(self):
        text = MINIMAL_LINE.replace("1 1 2 1 1 1 2", "1 1 2 1 1 1 9")
        with pytest.raises(MeshConsistencyError, match="missing node 9"):
            parse_mesh(text)

    def test_unnamed_physical_group_gets_fallback_name(self):
        text = MINIMAL_LINE.replace(
            '$PhysicalNames\n1\n1 1 "duct"\n$EndPhysicalNames\n', ""
        )
        mesh = parse_mesh(text)
        assert mesh.region_names() == ["physical_1"]

    def test_roundtrip_is_idempotent(self):
        mesh = generate_grid_mesh(2.0, 1.0, 3, 2, "m", ("l", "r", "b", "t"))
        twice = parse_mesh(write_msh(mesh))
        assert twice.n_nodes == mesh.n_nodes
        assert np.allclose(twice.coords, mesh.coords)
        assert [e.connectivity for e in twice.elements] == [
            e.connectivity for e in mesh.elements
        ]
        assert twice.region_names() == mesh.region_names()
        assert write_msh(twice) == write_msh(mesh)


class TestGenerators:
    def test_single_interval(self):
        mesh = generate_interval_mesh(1.0, 1, "d", "L", "R")
        assert mesh.n_nodes == 2
        assert sorted(mesh.coords[:, 0]) == [0.0, 1.0]
        assert sum(e.shape == "line2" for e in mesh.elements) == 1

    def test_interval_spacing(self):
        mesh = generate_interval_mesh(2.0, 4, "d", "L", "R")
        assert mesh.n_nodes == 5
        assert np.allclose(np.diff(mesh.coords[:5, 0]), 0.5)

    def test_interval_length_sum(self):
        mesh = generate_interval_mesh(1.0, 100, "d", "L", "R")
        assert abs(mesh_measure(mesh) - 1.0) < 1e-14

    @pytest.mark.parametrize("bad", [(0.0, 1), (1.0, 0), (-2.0, 3)])
    def test_interval_bad_arguments(self, bad):
        length, n = bad
        with pytest.raises(ValueError):
            generate_interval_mesh(length, n, "d", "L", "R")

    def test_unit_grid(self):
        mesh = generate_grid_mesh(1.0, 1.0, 1, 1, "m", ("l", "r", "b", "t"))
        assert mesh.n_nodes == 4
        assert sum(e.shape == "quad4" for e in mesh.elements) == 1
        assert sum(e.shape == "line2" for e in mesh.elements) == 4

    def test_grid_counts(self):
        mesh = generate_grid_mesh(1.0, 1.0, 2, 2, "m", ("l", "r", "b", "t"))
        assert mesh.n_nodes == 9
        assert sum(e.shape == "quad4" for e in mesh.elements) == 4
        assert sum(e.shape == "line2" for e in mesh.elements) == 8

    def test_grid_area(self):
        mesh = generate_grid_mesh(3.0, 2.0, 30, 20, "m", ("l", "r", "b", "t"))
        assert abs(mesh_measure(mesh) - 6.0) < 1e-12

    def test_grid_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_grid_mesh(1.0, 1.0, 0, 2, "m", ("l", "r", "b", "t"))
        with pytest.raises(ValueError):
            generate_grid_mesh(-1.0, 1.0, 2, 2, "m", ("l", "r", "b", "t"))


class TestExtractRegion:
    def test_left_side_of_grid(self):
        mesh = generate_grid_mesh(1.0, 1.0, 3, 3, "m", ("l", "r", "b", "t"))
        left = extract_region(mesh, "l")
        assert len(left) == 3
        for e in left:
            assert np.allclose(mesh.coords[list(e.connectivity)][:, 0], 0.0)

    def test_volume_region_returns_all_quads(self):
        mesh = generate_grid_mesh(1.0, 1.0, 3, 3, "m", ("l", "r", "b", "t"))
        assert len(extract_region(mesh, "m")) == 9

    def test_unknown_name_lists_available(self):
        mesh = generate_grid_mesh(1.0, 1.0, 2, 2, "m", ("l", "r", "b", "t"))
        with pytest.raises(RegionLookupError) as err:
            extract_region(mesh, "lefft")
        for name in ("m", "l", "r", "b", "t"):
            assert f"'{name}'" in str(err.value)


class TestValidateMesh:
    def test_generated_grid_is_clean(self):
        mesh = generate_grid_mesh(1.0, 1.0, 4, 3, "m", ("l", "r", "b", "t"))
        assert validate_mesh(mesh) == []

    def test_swapped_tri_nodes_flag_negative_jacobian(self):
        nodes = (
            Node(1, (0.0, 0.0, 0.0)),
            Node(2, (1.0, 0.0, 0.0)),
            Node(3, (0.0, 1.0, 0.0)),
        )
        elements = (Element(1, "tri3", (0, 2, 1), 1),)  # clockwise
        mesh = Mesh(2, nodes, elements, (Region(1, "m", 2),))
        diags = validate_mesh(mesh)
        assert len(diags) == 1
        assert "element 1" in diags[0] and "detJ" in diags[0]

    def test_dangling_node_index(self):
        nodes = (Node(1, (0.0, 0.0, 0.0)), Node(2, (1.0, 0.0, 0.0)))
        elements = (Element(7, "line2", (0, 2), 1),)
        mesh = Mesh(1, nodes, elements, (Region(1, "m", 1),))
        diags = validate_mesh(mesh)
        assert any("element 7" in d and "dangling" in d for d in diags)

    def test_boundary_containment_of_generated_meshes(self):
        for mesh in (
            generate_interval_mesh(1.0, 7, "d", "L", "R"),
            generate_grid_mesh(2.0, 1.0, 4, 2, "m", ("l", "r", "b", "t")),
        ):
            volume_sets = [
                set(e.connectivity)
                for e in mesh.elements
                if mesh.region_of(e).dim == mesh.dim
            ]
            for e in mesh.elements:
                if mesh.region_of(e).dim < mesh.dim:
                    assert any(
                        set(e.connectivity) <= vs for vs in volume_sets
                    )

    @pytest.mark.parametrize(
        "factory,measure",
        [
            (lambda: generate_interval_mesh(2.5, 13, "d", "L", "R"), 2.5),
            (
                lambda: generate_grid_mesh(1.5, 0.5, 7, 5, "m", ("a", "b", "c", "d")),
                0.75,
            ),
        ],
    )
    def test_measure_matches_analytic(self, factory, measure):
        mesh = factory()
        assert abs(mesh_measure(mesh) - measure) / measure < 1e-12


TET_CUBE_CORNER = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
3 1 "solid"
2 2 "base"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
2
1 4 2 1 1 1 2 3 4
2 2 2 2 2 1 2 3
$EndElements
"""


class TestParse3d:
    def test_tet_with_boundary_tri(self):
        mesh = parse_mesh(TET_CUBE_CORNER)
        assert mesh.dim == 3
        assert mesh.region("solid").dim == 3
        assert mesh.region("base").dim == 2
        assert abs(mesh_measure(mesh) - 1 / 6) < 1e-15
        assert validate_mesh(mesh) == []

    def test_hex_code_roundtrip(self):
        corners = [
            (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
            (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
        ]
        nodes = tuple(Node(i + 1, tuple(map(float, c))) for i, c in enumerate(corners))
        mesh = Mesh(
            3,
            nodes,
            (Element(1, "hex8", tuple(range(8)), 1),),
            (Region(1, "cube", 3),),
        )
        again = parse_mesh(write_msh(mesh))
        assert again.elements[0].shape == "hex8"
        assert abs(mesh_measure(again) - 1.0) < 1e-14
