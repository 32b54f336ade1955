"""Command-line driver.

Life cycle of a run: parse config -> parse materials -> load and
validate the mesh -> per sequence step: build the dof map, assemble,
eliminate boundary conditions, solve, store results.  Logs go to
stderr, prefixed with step index and phase; outputs land in
``--output-dir`` (default: next to the config file).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis, report, results_io
from .errors import AcoufemError
from .fe_space import build_dof_map
from .integrators import assemble_bilinear, assemble_linear
from .mesh import Mesh, parse_mesh, validate_mesh
from .sim_config import (
    SequenceStep,
    SimulationConfig,
    parse_material_file,
    parse_simulation_file,
)

log = logging.getLogger("acoufem")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


@dataclass
class Overrides:
    output_dir: str | None = None
    log_level: str = "info"
    threads: int = 1
    dry_run: bool = False
    plots: bool = True


@dataclass
class StepReport:
    index: int
    kind: str
    n_free: int = 0
    n_dirichlet: int = 0
    timings: dict = field(default_factory=dict)
    solver_iterations: int = 0
    success: bool = False
    error: str | None = None


@dataclass
class RunReport:
    parse_seconds: float = 0.0
    steps: list[StepReport] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return bool(self.steps) and all(s.success for s in self.steps)


def parse_cli(argv) -> tuple[str, Overrides]:
    """Parse command-line arguments into (config_path, overrides)."""
    parser = argparse.ArgumentParser(
        prog="acoufem",
        description="Finite element solver for the scalar acoustic wave "
        "equation (static, transient, harmonic, eigenfrequency).",
    )
    parser.add_argument("config", help="simulation XML file")
    parser.add_argument(
        "--output-dir",
        default=None,
        help="directory for result files (default: the config's directory)",
    )
    parser.add_argument(
        "--log-level",
        choices=sorted(LOG_LEVELS),
        default="info",
        help="logging verbosity (default info)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker cap for the harmonic frequency sweep (default 1)",
    )
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="validate config and mesh, assemble and solve nothing",
    )
    parser.add_argument(
        "--no-plots",
        action="store_true",
        help="skip the PNG report figures",
    )
    args = parser.parse_args(argv)
    return args.config, Overrides(
        output_dir=args.output_dir,
        log_level=args.log_level,
        threads=args.threads,
        dry_run=args.dry_run,
        plots=not args.no_plots,
    )


def _check_regions(config: SimulationConfig, mesh: Mesh) -> None:
    volume_regions = {r.name for r in mesh.regions if r.dim == mesh.dim}
    for step in config.sequence_steps:
        covered = set()
        for name in step.pde.regions:
            region = mesh.region(name)  # raises RegionLookupError
            if region.dim != mesh.dim:
                raise AcoufemError(
                    f"step {step.index}: PDE region '{name}' is not a volume "
                    f"region (dimension {region.dim}, mesh dimension {mesh.dim})"
                )
            covered.add(name)
        missing = volume_regions - covered
        if missing:
            raise AcoufemError(
                f"step {step.index}: PDE must cover all volume regions; "
                f"missing {sorted(missing)}"
            )
    expected = 2 if config.geometry_type == "plane" else 3
    if not (mesh.dim == expected or (expected == 2 and mesh.dim == 1)):
        raise AcoufemError(
            f"geometryType '{config.geometry_type}' expects a mesh of "
            f"dimension {expected}{' (or 1)' if expected == 2 else ''}, "
            f"got {mesh.dim}"
        )


def _initial_state_field(step, previous_fields, step_kinds):
    src = step.initial_state_from_step
    if src is None:
        return None
    if step_kinds.get(src) not in ("static", "eigenfrequency"):
        raise AcoufemError(
            f"step {step.index}: initialStateFromStep must name a static or "
            f"eigenfrequency step, step {src} is "
            f"'{step_kinds.get(src, 'missing')}'"
        )
    fields = previous_fields.get(src)
    if not fields:
        raise AcoufemError(
            f"step {step.index}: step {src} stored no field to reuse"
        )
    return fields[0]


def _store_stride(step: SequenceStep) -> int | None:
    for f_res in step.pde.store_results:
        if f_res.every is not None:
            return f_res.every
    return None


def _run_step(
    step: SequenceStep,
    mesh: Mesh,
    materials,
    config: SimulationConfig,
    out_dir: Path,
    overrides: Overrides,
    previous_fields: dict,
    step_report: StepReport,
):
    step_kinds = {s.index: s.analysis.kind for s in config.sequence_steps}
    idx = step.index
    region_c = {
        name: materials[mat_name].c
        for name, mat_name in config.region_material.items()
        if mat_name in materials
    }
    for name, mat_name in config.region_material.items():
        if mat_name not in materials:
            raise AcoufemError(
                f"step {idx}: region '{name}' is bound to unknown material "
                f"'{mat_name}'"
            )

    t0 = time.perf_counter()
    dofmap = build_dof_map(mesh, step.pde.bcs.dirichlet_regions())
    step_report.n_free = dofmap.n_free
    step_report.n_dirichlet = dofmap.n_dirichlet
    log.info(
        "[step %d/assembly] %d free equations, %d constrained",
        idx,
        dofmap.n_free,
        dofmap.n_dirichlet,
    )
    mass = assemble_bilinear(mesh, dofmap, region_c, "mass")
    stiffness = assemble_bilinear(mesh, dofmap, region_c, "stiffness")
    step_report.timings["assembly"] = time.perf_counter() - t0

    stats: dict = {}
    spec = step.analysis
    t0 = time.perf_counter()
    fields: list[analysis.ResultField] = []
    histories: tuple = ()
    eigenfreqs: list[float] = []
    failures: tuple = ()

    if spec.kind == "static":
        rhs = assemble_linear(mesh, dofmap, step.pde.bcs.loads())
        result = analysis.run_static(
            mesh, dofmap, stiffness, rhs.values, step.pde.bcs, stats=stats
        )
        fields = [result]
        if config.probes:
            histories = analysis.sample_probes(mesh, config.probes, fields)
    elif spec.kind == "transient":
        init_field = _initial_state_field(step, previous_fields, step_kinds)
        result = analysis.run_transient_newmark(
            mesh,
            dofmap,
            mass,
            stiffness,
            spec,
            step.pde.bcs,
            step.pde.ics,
            probes=config.probes,
            store_every=_store_stride(step),
            initial_values=None if init_field is None else init_field.nodal_values,
            stats=stats,
        )
        fields = list(result.snapshots)
        histories = result.probe_histories
    elif spec.kind == "harmonic":
        result = analysis.run_harmonic(
            mesh,
            dofmap,
            mass,
            stiffness,
            spec,
            step.pde.bcs,
            probes=config.probes,
            threads=overrides.threads,
            stats=stats,
        )
        fields = list(result.fields)
        histories = result.probe_histories
        failures = result.failures
        for freq, message in failures:
            log.error("[step %d/solve] frequency %g failed: %s", idx, freq, message)
        if failures and not fields:
            raise AcoufemError(
                f"step {idx}: every frequency failed "
                f"({failures[0][1]})"
            )
    elif spec.kind == "eigenfrequency":
        modes = analysis.run_eigenfrequency(
            mesh, dofmap, mass, stiffness, spec, stats=stats
        )
        eigenfreqs = [freq for freq, _ in modes]
        fields = [mode for _, mode in modes]
        for i, freq in enumerate(eigenfreqs):
            log.info("[step %d/solve] eigenfrequency %d: %.9g Hz", idx, i, freq)
        if config.probes:
            keep = _strictly_increasing(eigenfreqs)
            histories = analysis.sample_probes(
                mesh, config.probes, [fields[i] for i in keep]
            )
    else:  # pragma: no cover - config parsing rejects other kinds
        raise AcoufemError(f"unsupported analysis kind '{spec.kind}'")
    step_report.timings["solve"] = time.perf_counter() - t0
    step_report.solver_iterations = stats.get("iterations", 0)

    t0 = time.perf_counter()
    written = _write_outputs(
        step, mesh, config, out_dir, overrides, fields, histories, eigenfreqs
    )
    step_report.timings["output"] = time.perf_counter() - t0
    for path in written:
        log.info("[step %d/output] wrote %s", idx, path)
    previous_fields[idx] = fields
    return failures


def _strictly_increasing(values) -> list[int]:
    keep: list[int] = []
    last = None
    for i, v in enumerate(values):
        if last is None or v > last:
            keep.append(i)
            last = v
    return keep


def _write_outputs(step, mesh, config, out_dir, overrides, fields, histories,
                   eigenfreqs):
    written = []
    idx = step.index
    store_fields = bool(step.pde.store_results)
    if config.vtk_output and store_fields:
        for seq, fld in enumerate(fields):
            path = out_dir / f"step{idx}_{fld.name}_{seq:04d}.vtk"
            results_io.write_vtk_unstructured(mesh, fld, path)
            written.append(path)
    if histories:
        path = out_dir / f"step{idx}_probes.csv"
        results_io.write_probe_csv(histories, path)
        written.append(path)
        if overrides.plots:
            png = out_dir / f"step{idx}_probes.png"
            xlabel = "f [Hz]" if step.analysis.kind in ("harmonic", "eigenfrequency") else "t [s]"
            report.probe_history_figure(histories, png, xlabel=xlabel)
            written.append(png)
    if eigenfreqs and overrides.plots:
        png = out_dir / f"step{idx}_eigenfrequencies.png"
        report.eigenfrequency_figure(eigenfreqs, png)
        written.append(png)
    return written


def run_simulation(config_path, overrides: Overrides | None = None) -> RunReport:
    """Execute a full simulation run; returns the report (never raises
    for simulation failures, which are logged and flagged instead)."""
    overrides = overrides or Overrides()
    rep = RunReport()
    config_path = Path(config_path)
    t0 = time.perf_counter()
    try:
        config = parse_simulation_file(
            config_path.read_text(encoding="utf-8")
        )
        base = config_path.parent
        materials = parse_material_file(
            (base / config.material_file_path).read_text(encoding="utf-8")
        )
        mesh = parse_mesh((base / config.input_mesh_path).read_text(encoding="utf-8"))
        diagnostics = validate_mesh(mesh)
        if diagnostics:
            raise AcoufemError(
                "mesh validation failed: " + "; ".join(diagnostics)
            )
        _check_regions(config, mesh)
    except (AcoufemError, OSError) as err:
        rep.parse_seconds = time.perf_counter() - t0
        log.error("[setup/parse] %s", err)
        rep.steps.append(
            StepReport(index=0, kind="setup", success=False, error=str(err))
        )
        return rep
    rep.parse_seconds = time.perf_counter() - t0
    log.info(
        "[setup/parse] config '%s': mesh %d nodes / %d elements, %d step(s)",
        config_path.name,
        mesh.n_nodes,
        len(mesh.elements),
        len(config.sequence_steps),
    )

    if overrides.dry_run:
        for step in config.sequence_steps:
            dofmap = build_dof_map(mesh, step.pde.bcs.dirichlet_regions())
            rep.steps.append(
                StepReport(
                    index=step.index,
                    kind=step.analysis.kind,
                    n_free=dofmap.n_free,
                    n_dirichlet=dofmap.n_dirichlet,
                    success=True,
                )
            )
            log.info(
                "[step %d/dry-run] %s analysis validated",
                step.index,
                step.analysis.kind,
            )
        return rep

    out_dir = Path(overrides.output_dir) if overrides.output_dir else config_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    previous_fields: dict[int, list] = {}
    for step in config.sequence_steps:
        step_report = StepReport(index=step.index, kind=step.analysis.kind)
        rep.steps.append(step_report)
        try:
            _run_step(
                step, mesh, materials, config, out_dir, overrides,
                previous_fields, step_report,
            )
            step_report.success = True
        except (AcoufemError, OSError) as err:
            step_report.error = str(err)
            log.error("[step %d/%s] %s", step.index, step.analysis.kind, err)
            remaining = [
                s.index for s in config.sequence_steps if s.index > step.index
            ]
            if remaining:
                log.error(
                    "[step %d] skipping remaining steps %s", step.index, remaining
                )
            break
    return rep


def main(argv=None) -> int:
    try:
        config_path, overrides = parse_cli(
            sys.argv[1:] if argv is None else argv
        )
    except SystemExit as err:
        return int(err.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=LOG_LEVELS[overrides.log_level],
        format="%(levelname)s %(message)s",
    )
    rep = run_simulation(config_path, overrides)
    for step in rep.steps:
        status = "ok" if step.success else f"FAILED ({step.error})"
        timing = " ".join(
            f"{k}={v:.3f}s" for k, v in sorted(step.timings.items())
        )
        log.info(
            "[step %d] %s: %s %s", step.index, step.kind, status, timing
        )
    return 0 if rep.success else 1


if __name__ == "__main__":
    sys.exit(main())
