"""acoufem: a miniature finite element solver for the scalar acoustic
wave equation.

Mesh in (Gmsh MSH 2.2 or built-in generators), XML simulation config
in, assembled sparse system M p'' + K p = f solved in static, transient
(Newmark), time-harmonic or eigenfrequency mode, results out as VTK
fields, CSV probe histories and PNG report figures.
"""

from .analysis import (
    AnalysisSpec,
    BcSet,
    EigenfrequencySpec,
    HarmonicSpec,
    InitialConditions,
    ResultField,
    StaticSpec,
    TransientSpec,
    apply_dirichlet,
    run_eigenfrequency,
    run_harmonic,
    run_static,
    run_transient_newmark,
)
from .errors import AcoufemError
from .expressions import Expression, evaluate_expression, parse_expression
from .fe_space import (
    DofMap,
    QuadratureRule,
    ReferenceElement,
    build_dof_map,
    element_jacobian,
    make_reference_element,
    quadrature_rule,
    reference_shape_gradients,
    reference_shape_values,
)
from .integrators import (
    ElementMatrix,
    LoadVector,
    assemble_bilinear,
    assemble_linear,
    mass_element_matrix,
    neumann_surface_vector_element,
    stiffness_element_matrix,
    volume_source_vector_element,
)
from .mesh import (
    Element,
    Mesh,
    Node,
    Region,
    extract_region,
    generate_grid_mesh,
    generate_interval_mesh,
    parse_mesh,
    validate_mesh,
    write_msh,
)
from .results_io import (
    ProbeHistory,
    nearest_node_index,
    write_probe_csv,
    write_vtk_unstructured,
)
from .sim_config import (
    Material,
    SequenceStep,
    SimulationConfig,
    parse_material_file,
    parse_simulation_file,
    serialize_simulation_file,
)
from .sparse_linalg import (
    EigenPair,
    SparseMatrix,
    generalized_eigen_smallest,
    solve_linear,
    spmv,
)
from .cli import RunReport, parse_cli, run_simulation

__version__ = "0.1.0"
