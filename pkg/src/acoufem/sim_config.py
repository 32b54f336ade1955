"""Simulation and material XML files.

The simulation file follows the three-part layout (fileFormats /
domain / sequenceStep) described in README.md; parsing is strict:
unknown elements or attributes are rejected with the offending element
path.  Analytic expressions in attribute values are compiled on the
spot, so every malformed input fails at parse time with a location.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .analysis import (
    AnalysisSpec,
    BcSet,
    EigenfrequencySpec,
    HarmonicSpec,
    InitialConditions,
    StaticSpec,
    TransientSpec,
)
from .errors import ConfigError, ExpressionParseError, MaterialError
from .expressions import Expression, parse_expression

log = logging.getLogger("acoufem")

ANALYSIS_KINDS = ("static", "transient", "harmonic", "eigenfrequency")
GEOMETRY_TYPES = ("plane", "3d")
RESULT_NAMES = ("acouPressure",)


@dataclass(frozen=True)
class Material:
    """Acoustic material; only the speed of sound enters the PDE."""

    name: str
    c: float
    density: float | None = None


@dataclass(frozen=True)
class StoreField:
    name: str
    every: int | None = None


@dataclass(frozen=True)
class AcousticPde:
    regions: tuple[str, ...]
    bcs: BcSet
    ics: InitialConditions
    store_results: tuple[StoreField, ...]


@dataclass(frozen=True)
class SequenceStep:
    index: int
    analysis: AnalysisSpec
    pde: AcousticPde
    initial_state_from_step: int | None = None


@dataclass(frozen=True)
class SimulationConfig:
    input_mesh_path: str
    material_file_path: str
    vtk_output: bool
    probes: tuple[tuple[float, float, float], ...]
    geometry_type: str
    region_material: dict[str, str]
    sequence_steps: tuple[SequenceStep, ...]

    def __eq__(self, other):
        if not isinstance(other, SimulationConfig):
            return NotImplemented
        return (
            self.input_mesh_path == other.input_mesh_path
            and self.material_file_path == other.material_file_path
            and self.vtk_output == other.vtk_output
            and self.probes == other.probes
            and self.geometry_type == other.geometry_type
            and self.region_material == other.region_material
            and self.sequence_steps == other.sequence_steps
        )


# ---------------------------------------------------------------------------
# Strict-mode walking helpers
# ---------------------------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _check_children(elem, path: str, allowed: tuple[str, ...]):
    for child in elem:
        if _local(child.tag) not in allowed:
            raise ConfigError(
                f"unknown element '{_local(child.tag)}' "
                f"(allowed: {', '.join(allowed) or 'none'})",
                path=f"{path}/{_local(child.tag)}",
            )


def _check_attrs(elem, path: str, allowed: tuple[str, ...]):
    for name in elem.attrib:
        if name.startswith("{"):
            continue  # namespaced attributes (e.g. xsi:schemaLocation)
        if name not in allowed:
            raise ConfigError(
                f"unknown attribute '{name}' "
                f"(allowed: {', '.join(allowed) or 'none'})",
                path=f"{path}@{name}",
            )


def _children(elem, tag: str):
    return [c for c in elem if _local(c.tag) == tag]


def _one_child(elem, tag: str, path: str):
    found = _children(elem, tag)
    if len(found) != 1:
        raise ConfigError(
            f"expected exactly one '{tag}' element, found {len(found)}",
            path=f"{path}/{tag}",
        )
    return found[0]


def _req_attr(elem, name: str, path: str) -> str:
    value = elem.get(name)
    if value is None:
        raise ConfigError(f"missing required attribute '{name}'", path=path)
    return value


def _float_attr(elem, name: str, path: str, default=None) -> float | None:
    value = elem.get(name)
    if value is None:
        return default
    try:
        return float(value)
    except ValueError:
        raise ConfigError(
            f"attribute '{name}' is not a number: '{value}'", path=path
        ) from None


def _int_attr(elem, name: str, path: str, default=None) -> int | None:
    value = elem.get(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(
            f"attribute '{name}' is not an integer: '{value}'", path=path
        ) from None


def _expr_attr(elem, name: str, path: str, default=None) -> Expression | None:
    value = elem.get(name)
    if value is None:
        return default
    try:
        return parse_expression(value)
    except ExpressionParseError as err:
        raise ConfigError(f"bad expression '{value}': {err}", path=path) from err


# ---------------------------------------------------------------------------
# Simulation file
# ---------------------------------------------------------------------------

def parse_simulation_file(text: str) -> SimulationConfig:
    """Parse and validate the simulation XML.

    Raises :class:`ConfigError` with either the XML line/column (syntax
    errors) or the element path (structural errors).  The analysis kind
    "multiharmonic" is recognized and explicitly rejected.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as err:
        line, col = err.position
        raise ConfigError(
            f"XML syntax error at line {line}, column {col}: {err.msg}"
        ) from err
    if _local(root.tag) != "cfsSimulation":
        raise ConfigError(
            f"root element must be 'cfsSimulation', got '{_local(root.tag)}'",
            path=_local(root.tag),
        )
    path = "cfsSimulation"
    _check_children(root, path, ("fileFormats", "domain", "sequenceStep"))
    _check_attrs(root, path, ())

    formats = _one_child(root, "fileFormats", path)
    mesh_path, material_path, vtk_output, probes = _parse_file_formats(
        formats, f"{path}/fileFormats"
    )

    domain = _one_child(root, "domain", path)
    geometry, region_material = _parse_domain(domain, f"{path}/domain")

    step_elems = _children(root, "sequenceStep")
    if not step_elems:
        raise ConfigError(
            "at least one sequence step is required",
            path=f"{path}/sequenceStep",
        )
    steps = []
    for i, elem in enumerate(step_elems):
        step = _parse_sequence_step(elem, f"{path}/sequenceStep[{i + 1}]")
        steps.append(step)
    indices = [s.index for s in steps]
    if indices != list(range(1, len(steps) + 1)):
        raise ConfigError(
            f"sequence step indices must be 1, 2, ... in order, got {indices}",
            path=f"{path}/sequenceStep",
        )
    for step in steps:
        src = step.initial_state_from_step
        if src is not None and not 1 <= src < step.index:
            raise ConfigError(
                f"step {step.index}: initialStateFromStep must name an "
                f"earlier step, got {src}",
                path=f"{path}/sequenceStep[{step.index}]",
            )
        for region in step.pde.regions:
            if region not in region_material:
                raise ConfigError(
                    f"PDE region '{region}' has no material assignment",
                    path=f"{path}/domain/regionList",
                )
    return SimulationConfig(
        input_mesh_path=mesh_path,
        material_file_path=material_path,
        vtk_output=vtk_output,
        probes=tuple(probes),
        geometry_type=geometry,
        region_material=region_material,
        sequence_steps=tuple(steps),
    )


def _parse_file_formats(elem, path):
    _check_children(elem, path, ("input", "output", "materialData"))
    _check_attrs(elem, path, ())
    inp = _one_child(elem, "input", path)
    _check_children(inp, f"{path}/input", ("mesh",))
    _check_attrs(inp, f"{path}/input", ())
    mesh_elem = _one_child(inp, "mesh", f"{path}/input")
    _check_attrs(mesh_elem, f"{path}/input/mesh", ("file",))
    mesh_path = _req_attr(mesh_elem, "file", f"{path}/input/mesh")

    mat = _one_child(elem, "materialData", path)
    _check_attrs(mat, f"{path}/materialData", ("file", "format"))
    material_path = _req_attr(mat, "file", f"{path}/materialData")
    fmt = mat.get("format", "xml")
    if fmt != "xml":
        raise ConfigError(
            f"unsupported material format '{fmt}' (only 'xml')",
            path=f"{path}/materialData",
        )

    vtk_output = False
    probes = []
    outputs = _children(elem, "output")
    if len(outputs) > 1:
        raise ConfigError(
            "at most one 'output' element", path=f"{path}/output"
        )
    if outputs:
        out = outputs[0]
        _check_children(out, f"{path}/output", ("vtk", "probe"))
        _check_attrs(out, f"{path}/output", ())
        vtk_output = bool(_children(out, "vtk"))
        for probe in _children(out, "probe"):
            ppath = f"{path}/output/probe"
            _check_attrs(probe, ppath, ("x", "y", "z"))
            probes.append(
                (
                    _float_attr(probe, "x", ppath, 0.0),
                    _float_attr(probe, "y", ppath, 0.0),
                    _float_attr(probe, "z", ppath, 0.0),
                )
            )
    return mesh_path, material_path, vtk_output, probes


def _parse_domain(elem, path):
    _check_children(elem, path, ("regionList",))
    _check_attrs(elem, path, ("geometryType",))
    geometry = _req_attr(elem, "geometryType", path)
    if geometry not in GEOMETRY_TYPES:
        raise ConfigError(
            f"unsupported geometryType '{geometry}' "
            f"(supported: {', '.join(GEOMETRY_TYPES)})",
            path=path,
        )
    region_list = _one_child(elem, "regionList", path)
    _check_children(region_list, f"{path}/regionList", ("region",))
    region_material = {}
    for region in _children(region_list, "region"):
        rpath = f"{path}/regionList/region"
        _check_attrs(region, rpath, ("name", "material"))
        name = _req_attr(region, "name", rpath)
        if name in region_material:
            raise ConfigError(f"duplicate region '{name}'", path=rpath)
        region_material[name] = _req_attr(region, "material", rpath)
    if not region_material:
        raise ConfigError(
            "at least one region assignment is required",
            path=f"{path}/regionList/region",
        )
    return geometry, region_material


def _parse_analysis(elem, path) -> AnalysisSpec:
    kinds = [c for c in elem]
    if len(kinds) != 1:
        raise ConfigError(
            f"analysis must contain exactly one kind element, found "
            f"{len(kinds)}",
            path=path,
        )
    kind_elem = kinds[0]
    kind = _local(kind_elem.tag)
    kpath = f"{path}/{kind}"
    if kind == "multiharmonic":
        raise ConfigError(
            "analysis 'multiharmonic' is not supported "
            f"(supported kinds: {', '.join(ANALYSIS_KINDS)})",
            path=kpath,
        )
    if kind == "static":
        _check_attrs(kind_elem, kpath, ())
        _check_children(kind_elem, kpath, ())
        return StaticSpec()
    if kind == "transient":
        _check_attrs(kind_elem, kpath, ("dt", "steps", "beta", "gamma"))
        _check_children(kind_elem, kpath, ())
        dt = _float_attr(kind_elem, "dt", kpath)
        steps = _int_attr(kind_elem, "steps", kpath)
        if dt is None or steps is None:
            raise ConfigError(
                "transient analysis needs 'dt' and 'steps'", path=kpath
            )
        beta = _float_attr(kind_elem, "beta", kpath, 0.25)
        gamma = _float_attr(kind_elem, "gamma", kpath, 0.5)
        return TransientSpec(dt=dt, n_steps=steps, beta=beta, gamma=gamma)
    if kind == "harmonic":
        _check_attrs(kind_elem, kpath, ())
        _check_children(kind_elem, kpath, ("frequency",))
        freqs = []
        for f_elem in _children(kind_elem, "frequency"):
            fpath = f"{kpath}/frequency"
            _check_attrs(f_elem, fpath, ("value",))
            value = _float_attr(f_elem, "value", fpath)
            if value is None:
                raise ConfigError("frequency needs a 'value'", path=fpath)
            freqs.append(value)
        if not freqs:
            raise ConfigError(
                "harmonic analysis needs at least one frequency",
                path=f"{kpath}/frequency",
            )
        return HarmonicSpec(frequencies=tuple(freqs))
    if kind == "eigenfrequency":
        _check_attrs(kind_elem, kpath, ("k", "shift"))
        _check_children(kind_elem, kpath, ())
        k = _int_attr(kind_elem, "k", kpath)
        if k is None:
            raise ConfigError("eigenfrequency analysis needs 'k'", path=kpath)
        return EigenfrequencySpec(k=k, shift=_float_attr(kind_elem, "shift", kpath))
    raise ConfigError(
        f"unknown analysis kind '{kind}' "
        f"(supported: {', '.join(ANALYSIS_KINDS)})",
        path=kpath,
    )


def _parse_acoustic(elem, path) -> AcousticPde:
    _check_children(
        elem, path, ("regionList", "bcsAndLoads", "initialConditions", "storeResults")
    )
    _check_attrs(elem, path, ())
    region_list = _one_child(elem, "regionList", path)
    _check_children(region_list, f"{path}/regionList", ("region",))
    regions = []
    for region in _children(region_list, "region"):
        rpath = f"{path}/regionList/region"
        _check_attrs(region, rpath, ("name",))
        regions.append(_req_attr(region, "name", rpath))
    if not regions:
        raise ConfigError(
            "the PDE needs at least one region",
            path=f"{path}/regionList/region",
        )

    dirichlet, neumann, sources = [], [], []
    for bcl in _children(elem, "bcsAndLoads"):
        bpath = f"{path}/bcsAndLoads"
        _check_children(bcl, bpath, ("dirichlet", "neumann", "source"))
        _check_attrs(bcl, bpath, ())
        for child in bcl:
            tag = _local(child.tag)
            cpath = f"{bpath}/{tag}"
            _check_attrs(child, cpath, ("region", "value"))
            region = _req_attr(child, "region", cpath)
            expr = _expr_attr(child, "value", cpath)
            if expr is None:
                raise ConfigError("missing required attribute 'value'", path=cpath)
            {"dirichlet": dirichlet, "neumann": neumann, "source": sources}[
                tag
            ].append((region, expr))

    ics = InitialConditions()
    ic_elems = _children(elem, "initialConditions")
    if len(ic_elems) > 1:
        raise ConfigError(
            "at most one 'initialConditions' element",
            path=f"{path}/initialConditions",
        )
    if ic_elems:
        ipath = f"{path}/initialConditions"
        _check_attrs(ic_elems[0], ipath, ("pressure", "pressureRate"))
        _check_children(ic_elems[0], ipath, ())
        ics = InitialConditions(
            p0=_expr_attr(ic_elems[0], "pressure", ipath),
            dp0=_expr_attr(ic_elems[0], "pressureRate", ipath),
        )

    store = []
    for sr in _children(elem, "storeResults"):
        spath = f"{path}/storeResults"
        _check_children(sr, spath, ("field",))
        _check_attrs(sr, spath, ())
        for f_elem in _children(sr, "field"):
            fpath = f"{spath}/field"
            _check_attrs(f_elem, fpath, ("name", "every"))
            name = _req_attr(f_elem, "name", fpath)
            if name not in RESULT_NAMES:
                raise ConfigError(
                    f"unknown result '{name}' "
                    f"(available: {', '.join(RESULT_NAMES)})",
                    path=fpath,
                )
            every = _int_attr(f_elem, "every", fpath)
            if every is not None and every < 1:
                raise ConfigError(
                    f"'every' must be >= 1, got {every}", path=fpath
                )
            store.append(StoreField(name=name, every=every))

    return AcousticPde(
        regions=tuple(regions),
        bcs=BcSet(
            dirichlet=tuple(dirichlet),
            neumann=tuple(neumann),
            sources=tuple(sources),
        ),
        ics=ics,
        store_results=tuple(store),
    )


def _parse_sequence_step(elem, path) -> SequenceStep:
    _check_children(elem, path, ("analysis", "pdeList"))
    _check_attrs(elem, path, ("index", "initialStateFromStep"))
    index = _int_attr(elem, "index", path)
    if index is None:
        raise ConfigError("missing required attribute 'index'", path=path)
    analysis = _parse_analysis(_one_child(elem, "analysis", path), f"{path}/analysis")
    pde_list = _one_child(elem, "pdeList", path)
    pdes = list(pde_list)
    if len(pdes) != 1:
        raise ConfigError(
            f"pdeList must contain exactly one PDE, found {len(pdes)}",
            path=f"{path}/pdeList",
        )
    if _local(pdes[0].tag) != "acoustic":
        raise ConfigError(
            f"unsupported PDE '{_local(pdes[0].tag)}' (only 'acoustic')",
            path=f"{path}/pdeList/{_local(pdes[0].tag)}",
        )
    pde = _parse_acoustic(pdes[0], f"{path}/pdeList/acoustic")
    return SequenceStep(
        index=index,
        analysis=analysis,
        pde=pde,
        initial_state_from_step=_int_attr(elem, "initialStateFromStep", path),
    )


# ---------------------------------------------------------------------------
# Serialization (canonical form; inverse of parse on the retained data)
# ---------------------------------------------------------------------------

def serialize_simulation_file(config: SimulationConfig) -> str:
    out = ['<?xml version="1.0"?>', "<cfsSimulation>"]
    out.append("  <fileFormats>")
    out.append("    <input>")
    out.append(f'      <mesh file="{config.input_mesh_path}"/>')
    out.append("    </input>")
    if config.vtk_output or config.probes:
        out.append("    <output>")
        if config.vtk_output:
            out.append("      <vtk/>")
        for x, y, z in config.probes:
            out.append(f'      <probe x="{x:.17g}" y="{y:.17g}" z="{z:.17g}"/>')
        out.append("    </output>")
    out.append(
        f'    <materialData file="{config.material_file_path}" format="xml"/>'
    )
    out.append("  </fileFormats>")
    out.append(f'  <domain geometryType="{config.geometry_type}">')
    out.append("    <regionList>")
    for name, material in config.region_material.items():
        out.append(f'      <region name="{name}" material="{material}"/>')
    out.append("    </regionList>")
    out.append("  </domain>")
    for step in config.sequence_steps:
        attrs = f' index="{step.index}"'
        if step.initial_state_from_step is not None:
            attrs += f' initialStateFromStep="{step.initial_state_from_step}"'
        out.append(f"  <sequenceStep{attrs}>")
        out.append("    <analysis>")
        out.append(f"      {_serialize_analysis(step.analysis)}")
        out.append("    </analysis>")
        out.append("    <pdeList>")
        out.append("      <acoustic>")
        out.append("        <regionList>")
        for region in step.pde.regions:
            out.append(f'          <region name="{region}"/>')
        out.append("        </regionList>")
        bcs = step.pde.bcs
        if bcs.dirichlet or bcs.neumann or bcs.sources:
            out.append("        <bcsAndLoads>")
            for tag, entries in (
                ("dirichlet", bcs.dirichlet),
                ("neumann", bcs.neumann),
                ("source", bcs.sources),
            ):
                for region, expr in entries:
                    out.append(
                        f'          <{tag} region="{region}" '
                        f'value="{expr.source}"/>'
                    )
            out.append("        </bcsAndLoads>")
        ics = step.pde.ics
        if ics.p0 is not None or ics.dp0 is not None:
            attrs = ""
            if ics.p0 is not None:
                attrs += f' pressure="{ics.p0.source}"'
            if ics.dp0 is not None:
                attrs += f' pressureRate="{ics.dp0.source}"'
            out.append(f"        <initialConditions{attrs}/>")
        if step.pde.store_results:
            out.append("        <storeResults>")
            for f_res in step.pde.store_results:
                attrs = f' name="{f_res.name}"'
                if f_res.every is not None:
                    attrs += f' every="{f_res.every}"'
                out.append(f"          <field{attrs}/>")
            out.append("        </storeResults>")
        out.append("      </acoustic>")
        out.append("    </pdeList>")
        out.append("  </sequenceStep>")
    out.append("</cfsSimulation>")
    return "\n".join(out) + "\n"


def _serialize_analysis(spec: AnalysisSpec) -> str:
    if isinstance(spec, StaticSpec):
        return "<static/>"
    if isinstance(spec, TransientSpec):
        return (
            f'<transient dt="{spec.dt:.17g}" steps="{spec.n_steps}" '
            f'beta="{spec.beta:.17g}" gamma="{spec.gamma:.17g}"/>'
        )
    if isinstance(spec, HarmonicSpec):
        freqs = "".join(
            f'<frequency value="{f:.17g}"/>' for f in spec.frequencies
        )
        return f"<harmonic>{freqs}</harmonic>"
    if isinstance(spec, EigenfrequencySpec):
        attrs = f' k="{spec.k}"'
        if spec.shift is not None:
            attrs += f' shift="{spec.shift:.17g}"'
        return f"<eigenfrequency{attrs}/>"
    raise TypeError(f"unknown analysis spec {type(spec)!r}")


# ---------------------------------------------------------------------------
# Material file
# ---------------------------------------------------------------------------

def parse_material_file(text: str) -> dict[str, Material]:
    """Parse the material XML into a name -> Material map.

    The speed of sound comes from a ``speedOfSound`` element (``value``
    attribute or element text, SI units); an optional ``density`` is
    parsed and ignored with a logged notice since the pressure equation
    does not use it.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as err:
        line, col = err.position
        raise MaterialError(
            f"XML syntax error at line {line}, column {col}: {err.msg}"
        ) from err
    if _local(root.tag) != "cfsMaterialDataBase":
        raise MaterialError(
            f"root element must be 'cfsMaterialDataBase', got "
            f"'{_local(root.tag)}'",
            path=_local(root.tag),
        )
    path = "cfsMaterialDataBase"
    _check_children(root, path, ("material",))
    _check_attrs(root, path, ())
    materials: dict[str, Material] = {}
    for mat in _children(root, "material"):
        mpath = f"{path}/material"
        _check_attrs(mat, mpath, ("name",))
        name = _req_attr(mat, "name", mpath)
        mpath = f"{path}/material[{name}]"
        _check_children(mat, mpath, ("speedOfSound", "density"))
        if name in materials:
            raise MaterialError(f"duplicate material '{name}'", path=mpath)
        c = _scalar_element(mat, "speedOfSound", mpath)
        if c is None:
            raise MaterialError(
                f"material '{name}' is missing 'speedOfSound'", path=mpath
            )
        if c <= 0:
            raise MaterialError(
                f"material '{name}': speed of sound must be positive, got {c}",
                path=mpath,
            )
        density = _scalar_element(mat, "density", mpath)
        if density is not None:
            log.info(
                "material '%s': density %g parsed and ignored "
                "(pressure formulation uses only the speed of sound)",
                name,
                density,
            )
        materials[name] = Material(name=name, c=c, density=density)
    if not materials:
        raise MaterialError("no materials defined", path=path)
    return materials


def _scalar_element(parent, tag: str, path: str) -> float | None:
    elems = _children(parent, tag)
    if not elems:
        return None
    if len(elems) > 1:
        raise MaterialError(f"multiple '{tag}' elements", path=f"{path}/{tag}")
    elem = elems[0]
    _check_attrs(elem, f"{path}/{tag}", ("value",))
    raw = elem.get("value")
    if raw is None:
        raw = (elem.text or "").strip()
    if not raw:
        raise MaterialError(f"'{tag}' has no value", path=f"{path}/{tag}")
    try:
        return float(raw)
    except ValueError:
        raise MaterialError(
            f"'{tag}' is not a number: '{raw}'", path=f"{path}/{tag}"
        ) from None
