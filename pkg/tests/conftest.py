import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

import acoufem


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {verdict}", flush=True)


@pytest.fixture
def duct100():
    """Unit duct, 100 elements, c = 1, with its mass/stiffness pair."""
    mesh = acoufem.generate_interval_mesh(1.0, 100, "duct", "left", "right")
    dofmap = acoufem.build_dof_map(mesh, [])
    mass = acoufem.assemble_bilinear(mesh, dofmap, {"duct": 1.0}, "mass")
    stiffness = acoufem.assemble_bilinear(mesh, dofmap, {"duct": 1.0}, "stiffness")
    return mesh, dofmap, mass, stiffness


@pytest.fixture
def tutorials_dir():
    return Path(__file__).parent.parent / "tutorials"
