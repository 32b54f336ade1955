import math

import numpy as np
import pytest

from acoufem import (
    BcSet,
    EigenfrequencySpec,
    HarmonicSpec,
    InitialConditions,
    StaticSpec,
    TransientSpec,
    apply_dirichlet,
    assemble_bilinear,
    build_dof_map,
    generate_grid_mesh,
    generate_interval_mesh,
    parse_expression,
    run_eigenfrequency,
    run_harmonic,
    run_static,
    run_transient_newmark,
    spmv,
)
from acoufem.analysis import dirichlet_values
from acoufem.errors import ConfigError


def duct(n, dirichlet=(), c=1.0):
    mesh = generate_interval_mesh(1.0, n, "duct", "left", "right")
    dm = build_dof_map(mesh, list(dirichlet))
    mass = assemble_bilinear(mesh, dm, {"duct": c}, "mass")
    stiff = assemble_bilinear(mesh, dm, {"duct": c}, "stiffness")
    return mesh, dm, mass, stiff


class TestSpecs:
    def test_transient_validation(self):
        with pytest.raises(ConfigError):
            TransientSpec(dt=0.0, n_steps=5)
        with pytest.raises(ConfigError):
            TransientSpec(dt=0.1, n_steps=5, beta=0.7)
        with pytest.raises(ConfigError):
            TransientSpec(dt=0.1, n_steps=5, gamma=1.5)
        spec = TransientSpec(dt=0.1, n_steps=5)
        assert (spec.beta, spec.gamma) == (0.25, 0.5)

    def test_harmonic_validation(self):
        with pytest.raises(ConfigError):
            HarmonicSpec(frequencies=())
        with pytest.raises(ConfigError):
            HarmonicSpec(frequencies=(1.0, -2.0))
        with pytest.raises(ConfigError):
            HarmonicSpec(frequencies=(2.0, 1.0))

    def test_eigen_validation(self):
        with pytest.raises(ConfigError):
            EigenfrequencySpec(k=0)
        assert StaticSpec().kind == "static"


class TestApplyDirichlet:
    def test_no_constraints_is_identity(self):
        mesh, dm, mass, stiff = duct(4)
        rhs = np.arange(5.0)
        k_ff, m_ff, rhs_f = apply_dirichlet(stiff, mass, rhs, dm, np.zeros(0))
        assert np.array_equal(k_ff.to_dense(), stiff.to_dense())
        assert np.array_equal(m_ff.to_dense(), mass.to_dense())
        assert np.array_equal(rhs_f, rhs)

    def test_three_node_hand_elimination(self):
        # Two elements of h = 0.5: K = [[2,-2,0],[-2,4,-2],[0,-2,2]].
        # Constrain p(0) = 1: free system [[4,-2],[-2,2]] with rhs
        # picking up -K_fc * 1 = (2, 0).
        mesh, dm_all, _, stiff = duct(2)
        dm = build_dof_map(mesh, ["left"])
        k_ff, _, rhs_f = apply_dirichlet(
            stiff, None, np.zeros(3), dm, np.array([1.0])
        )
        assert np.allclose(k_ff.to_dense(), [[4.0, -2.0], [-2.0, 2.0]])
        assert np.allclose(rhs_f, [2.0, 0.0])
        # the reduced solve reproduces the constant field p = 1
        p_f = np.linalg.solve(k_ff.to_dense(), rhs_f)
        assert np.allclose(p_f, [1.0, 1.0], atol=1e-14)

    def test_all_nodes_constrained(self):
        mesh = generate_interval_mesh(1.0, 1, "d", "L", "R")
        dm = build_dof_map(mesh, ["L", "R"])
        stiff = assemble_bilinear(mesh, dm, {"d": 1.0}, "stiffness")
        k_ff, _, rhs_f = apply_dirichlet(
            stiff, None, np.zeros(2), dm, np.array([3.0, 4.0])
        )
        assert k_ff.n == 0
        assert rhs_f.shape == (0,)

    def test_elimination_preserves_symmetry(self):
        mesh = generate_grid_mesh(1.0, 1.0, 4, 4, "m", ("l", "r", "b", "t"))
        dm = build_dof_map(mesh, ["l", "b"])
        stiff = assemble_bilinear(mesh, dm, {"m": 1.0}, "stiffness")
        mass = assemble_bilinear(mesh, dm, {"m": 1.0}, "mass")
        k_ff, m_ff, _ = apply_dirichlet(
            stiff, mass, np.zeros(mesh.n_nodes), dm, np.zeros(dm.n_dirichlet)
        )
        for a in (k_ff.to_dense(), m_ff.to_dense()):
            assert np.abs(a - a.T).max() <= 1e-13

    def test_prescribed_values_override_order(self):
        mesh, _, _, _ = duct(4)
        dm = build_dof_map(mesh, ["left", "right"])
        bcs = BcSet(
            dirichlet=(("left", parse_expression("1")), ("right", parse_expression("2")))
        )
        vals = dirichlet_values(mesh, dm, bcs)
        slots = dm.eq_of_node
        assert vals[slots[0]] == 1.0
        assert vals[slots[4]] == 2.0


class TestRunStatic:
    def test_constant_field(self):
        mesh, _, _, _ = duct(8)
        bcs = BcSet(
            dirichlet=(("left", parse_expression("1")), ("right", parse_expression("1")))
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        out = run_static(mesh, dm, stiff, np.zeros(mesh.n_nodes), bcs)
        assert np.abs(out.nodal_values - 1.0).max() < 1e-12

    def test_linear_ramp(self):
        mesh, _, _, _ = duct(10)
        bcs = BcSet(
            dirichlet=(("left", parse_expression("0")), ("right", parse_expression("1")))
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        out = run_static(mesh, dm, stiff, np.zeros(mesh.n_nodes), bcs)
        assert np.abs(out.nodal_values - mesh.coords[:, 0]).max() < 1e-12

    def test_requires_dirichlet(self):
        mesh, dm, _, stiff = duct(4)
        with pytest.raises(ConfigError, match="[Dd]irichlet"):
            run_static(mesh, dm, stiff, np.zeros(mesh.n_nodes), BcSet())

    @pytest.mark.parametrize("field", ["1", "x", "y", "1 + 2*x + 3*y"])
    def test_patch_fields_on_grid(self, field):
        mesh = generate_grid_mesh(1.0, 1.0, 5, 4, "m", ("l", "r", "b", "t"))
        expr = parse_expression(field)
        bcs = BcSet(dirichlet=tuple((s, expr) for s in ("l", "r", "b", "t")))
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        stiff = assemble_bilinear(mesh, dm, {"m": 1.0}, "stiffness")
        out = run_static(mesh, dm, stiff, np.zeros(mesh.n_nodes), bcs)
        exact = np.array(
            [expr(x=x, y=y, z=z) for x, y, z in mesh.coords]
        )
        assert np.abs(out.nodal_values - exact).max() <= 1e-11


class TestRunTransient:
    def test_zero_everything_stays_zero(self):
        mesh, dm, mass, stiff = duct(10)
        spec = TransientSpec(dt=0.01, n_steps=20)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), InitialConditions(),
            probes=((0.0, 0.0, 0.0),),
        )
        assert np.abs(out.snapshots[-1].nodal_values).max() == 0.0
        assert np.abs(out.probe_histories[0].values).max() == 0.0

    def test_probe_history_abscissae(self):
        mesh, dm, mass, stiff = duct(10)
        spec = TransientSpec(dt=0.5, n_steps=4)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), InitialConditions(),
            probes=((0.0, 0.0, 0.0),),
        )
        assert np.allclose(out.probe_histories[0].abscissae, [0, 0.5, 1.0, 1.5, 2.0])

    def test_time_dependent_dirichlet_followed_exactly(self):
        mesh, _, _, _ = duct(5)
        bcs = BcSet(
            dirichlet=(
                ("left", parse_expression("sin(2*t)")),
                ("right", parse_expression("0")),
            )
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        spec = TransientSpec(dt=0.05, n_steps=10)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, bcs, InitialConditions(),
            probes=((0.0, 0.0, 0.0),), record_state=True,
        )
        h = out.probe_histories[0]
        assert np.allclose(h.values, np.sin(2 * h.abscissae), atol=1e-14)

    def test_standing_wave_accuracy(self):
        mesh, dm, mass, stiff = duct(50)
        ics = InitialConditions(p0=parse_expression("cos(pi*x)"))
        spec = TransientSpec(dt=2e-3, n_steps=100)  # to t = 0.2
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), ics, record_state=True
        )
        t, p, _v = out.states[-1]
        exact = np.cos(np.pi * mesh.coords[:, 0]) * math.cos(math.pi * t)
        assert np.abs(p - exact).max() < 5e-3

    def test_energy_conservation_with_default_newmark(self):
        mesh, dm, mass, stiff = duct(40)
        ics = InitialConditions(p0=parse_expression("cos(pi*x)"))
        spec = TransientSpec(dt=0.01, n_steps=200)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), ics, record_state=True
        )
        energies = [
            0.5 * v @ spmv(mass, v) + 0.5 * p @ spmv(stiff, p)
            for _t, p, v in out.states
        ]
        e0 = energies[0]
        assert max(abs(e - e0) / e0 for e in energies) <= 1e-8

    def test_snapshot_stride(self):
        mesh, dm, mass, stiff = duct(4)
        spec = TransientSpec(dt=0.1, n_steps=10)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), InitialConditions(),
            store_every=5,
        )
        times = [s.time_or_freq for s in out.snapshots]
        assert times == [0.0, 0.5, 1.0]

    def test_initial_values_injection(self):
        mesh, dm, mass, stiff = duct(6)
        start = np.linspace(0.0, 1.0, mesh.n_nodes)
        spec = TransientSpec(dt=0.01, n_steps=1)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, BcSet(), InitialConditions(),
            initial_values=start, record_state=True,
        )
        assert np.array_equal(out.states[0][1], start)


class TestRunHarmonic:
    def test_zero_load_zero_response(self):
        mesh, _, _, _ = duct(20)
        bcs = BcSet(dirichlet=(("right", parse_expression("0")),))
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        out = run_harmonic(
            mesh, dm, mass, stiff, HarmonicSpec(frequencies=(0.05,)), bcs
        )
        assert np.abs(out.fields[0].nodal_values).max() == 0.0

    def test_duct_response_matches_analytic(self):
        mesh, _, _, _ = duct(200)
        bcs = BcSet(
            dirichlet=(("right", parse_expression("0")),),
            neumann=(("left", parse_expression("1")),),
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        out = run_harmonic(
            mesh, dm, mass, stiff, HarmonicSpec(frequencies=(0.1,)), bcs
        )
        k = 2 * math.pi * 0.1
        exact = math.tan(k) / k
        value = out.fields[0].nodal_values[0]
        assert abs(value - exact) / exact < 1e-3

    def test_resonance_reported_sweep_continues(self):
        mesh, _, _, _ = duct(200)
        bcs = BcSet(
            dirichlet=(("right", parse_expression("0")),),
            neumann=(("left", parse_expression("1")),),
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        out = run_harmonic(
            mesh, dm, mass, stiff,
            HarmonicSpec(frequencies=(0.1, 0.25, 0.35)), bcs,
        )
        assert [f.time_or_freq for f in out.fields] == [0.1, 0.35]
        assert len(out.failures) == 1 and out.failures[0][0] == 0.25

    def test_threaded_sweep_matches_serial(self):
        mesh, _, _, _ = duct(60)
        bcs = BcSet(
            dirichlet=(("right", parse_expression("0")),),
            neumann=(("left", parse_expression("1")),),
        )
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        spec = HarmonicSpec(frequencies=(0.05, 0.1, 0.15, 0.2))
        serial = run_harmonic(mesh, dm, mass, stiff, spec, bcs)
        threaded = run_harmonic(mesh, dm, mass, stiff, spec, bcs, threads=4)
        for a, b in zip(serial.fields, threaded.fields):
            assert a.time_or_freq == b.time_or_freq
            assert np.allclose(a.nodal_values, b.nodal_values, atol=1e-12)


class TestRunEigenfrequency:
    def test_neumann_duct_modes(self):
        mesh, dm, mass, stiff = duct(100)
        modes = run_eigenfrequency(mesh, dm, mass, stiff, EigenfrequencySpec(k=2))
        assert modes[0][0] == 0.0  # clamped constant mode
        assert abs(modes[1][0] - 0.5) / 0.5 < 1e-3

    def test_dirichlet_duct_mode_shape(self):
        mesh, _, _, _ = duct(100)
        dm = build_dof_map(mesh, ["left", "right"])
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        modes = run_eigenfrequency(mesh, dm, mass, stiff, EigenfrequencySpec(k=1))
        freq, field = modes[0]
        assert abs(freq - 0.5) / 0.5 < 1e-3
        x = mesh.coords[:, 0]
        shape = np.sin(np.pi * x)
        shape /= math.sqrt(shape @ spmv(mass, shape))  # M-normalized
        assert np.abs(field.nodal_values - shape).max() < 1e-3
        assert field.nodal_values[np.argmax(np.abs(field.nodal_values))] > 0

    def test_speed_doubles_frequencies(self):
        _, dm, mass1, stiff1 = duct(60, c=1.0)
        mesh, dm2, mass2, stiff2 = duct(60, c=2.0)
        spec = EigenfrequencySpec(k=3)
        f1 = [f for f, _ in run_eigenfrequency(mesh, dm, mass1, stiff1, spec)]
        f2 = [f for f, _ in run_eigenfrequency(mesh, dm2, mass2, stiff2, spec)]
        for a, b in zip(f1[1:], f2[1:]):
            assert abs(b - 2 * a) / (2 * a) < 1e-9

    def test_k_exceeding_free_count(self):
        mesh, dm, mass, stiff = duct(3)
        with pytest.raises(ConfigError):
            run_eigenfrequency(mesh, dm, mass, stiff, EigenfrequencySpec(k=10))


class TestPatch3d:
    def test_linear_field_on_hex_block(self):
        """Patch test in 3D: a linear field on a 2x2x2 hex block with the
        entire boundary clamped (one interior node remains free)."""
        from acoufem.mesh import Element, Mesh, Node, Region

        n = 2
        nodes = tuple(
            Node(1 + i + (n + 1) * (j + (n + 1) * k),
                 (i / n, j / n, k / n))
            for k in range(n + 1)
            for j in range(n + 1)
            for i in range(n + 1)
        )

        def nid(i, j, k):
            return i + (n + 1) * (j + (n + 1) * k)

        elements = []
        for k in range(n):
            for j in range(n):
                for i in range(n):
                    elements.append(
                        Element(
                            len(elements) + 1,
                            "hex8",
                            (
                                nid(i, j, k), nid(i + 1, j, k),
                                nid(i + 1, j + 1, k), nid(i, j + 1, k),
                                nid(i, j, k + 1), nid(i + 1, j, k + 1),
                                nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1),
                            ),
                            1,
                        )
                    )
        # all six faces as quad4 boundary elements in one "skin" region
        for a in range(n):
            for b in range(n):
                faces = [
                    (nid(0, a, b), nid(0, a + 1, b), nid(0, a + 1, b + 1), nid(0, a, b + 1)),
                    (nid(n, a, b), nid(n, a + 1, b), nid(n, a + 1, b + 1), nid(n, a, b + 1)),
                    (nid(a, 0, b), nid(a + 1, 0, b), nid(a + 1, 0, b + 1), nid(a, 0, b + 1)),
                    (nid(a, n, b), nid(a + 1, n, b), nid(a + 1, n, b + 1), nid(a, n, b + 1)),
                    (nid(a, b, 0), nid(a + 1, b, 0), nid(a + 1, b + 1, 0), nid(a, b + 1, 0)),
                    (nid(a, b, n), nid(a + 1, b, n), nid(a + 1, b + 1, n), nid(a, b + 1, n)),
                ]
                for conn in faces:
                    elements.append(Element(len(elements) + 1, "quad4", conn, 2))
        mesh = Mesh(
            3, nodes, tuple(elements), (Region(1, "m", 3), Region(2, "skin", 2))
        )

        expr = parse_expression("1 + 2*x + 3*y - z")
        bcs = BcSet(dirichlet=(("skin", expr),))
        dm = build_dof_map(mesh, bcs.dirichlet_regions())
        assert dm.n_free == 1  # the center node
        stiff = assemble_bilinear(mesh, dm, {"m": 1.0}, "stiffness")
        out = run_static(mesh, dm, stiff, np.zeros(mesh.n_nodes), bcs)
        exact = np.array([expr(x=x, y=y, z=z) for x, y, z in mesh.coords])
        assert np.abs(out.nodal_values - exact).max() <= 1e-11


class TestTransientLoads:
    def test_uniform_source_gives_quadratic_rise(self):
        """All-Neumann duct with a uniform unit source: the exact
        solution is the spatially constant field t^2/2 (c = 1), which
        average-acceleration Newmark integrates exactly."""
        mesh, dm, mass, stiff = duct(20)
        bcs = BcSet(sources=(("duct", parse_expression("1")),))
        spec = TransientSpec(dt=0.05, n_steps=40)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, bcs, InitialConditions(),
            probes=((0.5, 0.0, 0.0),),
        )
        h = out.probe_histories[0]
        assert np.abs(h.values - h.abscissae**2 / 2).max() < 1e-10
        final = out.snapshots[-1].nodal_values
        assert np.abs(final - final[0]).max() < 1e-10  # stays uniform

    def test_time_varying_neumann_smoke(self):
        mesh, _, _, _ = duct(10)
        bcs = BcSet(
            dirichlet=(("right", parse_expression("0")),),
            neumann=(("left", parse_expression("sin(10*t)")),),
        )
        dm = build_dof_map(mesh, ["right"])
        mass = assemble_bilinear(mesh, dm, {"duct": 1.0}, "mass")
        stiff = assemble_bilinear(mesh, dm, {"duct": 1.0}, "stiffness")
        spec = TransientSpec(dt=0.01, n_steps=50)
        out = run_transient_newmark(
            mesh, dm, mass, stiff, spec, bcs, InitialConditions(),
            probes=((0.0, 0.0, 0.0),),
        )
        values = out.probe_histories[0].values
        assert np.all(np.isfinite(values))
        assert np.abs(values).max() > 0  # the flux actually drives the field


class TestEigenShift:
    def test_shift_inside_first_gap_keeps_smallest_modes(self):
        mesh, dm, mass, stiff = duct(60)
        unshifted = run_eigenfrequency(
            mesh, dm, mass, stiff, EigenfrequencySpec(k=3)
        )
        shifted = run_eigenfrequency(
            mesh, dm, mass, stiff, EigenfrequencySpec(k=3, shift=0.5)
        )
        for (fa, _), (fb, _) in zip(unshifted, shifted):
            assert abs(fa - fb) <= 1e-8 * max(fa, 1e-6)
