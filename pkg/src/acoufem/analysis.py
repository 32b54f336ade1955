"""Analysis drivers: static, transient (Newmark), time-harmonic and
eigenfrequency, plus Dirichlet elimination and initial conditions.

All drivers work on matrices assembled over the full node space and
apply symmetric row/column elimination internally, so the integrators
stay boundary-condition agnostic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EigenSolverError, SolverError
from .expressions import Expression, evaluate_expression
from .fe_space import DofMap
from .integrators import assemble_linear
from .mesh import Mesh
from .results_io import ProbeHistory, nearest_node_index
from .sparse_linalg import (
    LuFactorization,
    SparseMatrix,
    generalized_eigen_smallest,
    linear_combination,
    solve_linear,
    spmv,
)

RESULT_NAME = "acouPressure"
NEWMARK_BETA_DEFAULT = 0.25
NEWMARK_GAMMA_DEFAULT = 0.5
STATIC_SOLVE_TOL = 1e-12
EIGEN_ZERO_CLAMP = 1e-9


# ---------------------------------------------------------------------------
# Specs and data carriers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaticSpec:
    kind: str = field(default="static", init=False)


@dataclass(frozen=True)
class TransientSpec:
    dt: float
    n_steps: int
    beta: float = NEWMARK_BETA_DEFAULT
    gamma: float = NEWMARK_GAMMA_DEFAULT
    kind: str = field(default="transient", init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigError(f"need at least one step, got {self.n_steps}")
        if not 0 <= self.beta <= 0.5:
            raise ConfigError(f"beta must be in [0, 0.5], got {self.beta}")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class HarmonicSpec:
    frequencies: tuple[float, ...]
    kind: str = field(default="harmonic", init=False)

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if not freqs:
            raise ConfigError("harmonic analysis needs at least one frequency")
        if any(f <= 0 for f in freqs):
            raise ConfigError(f"frequencies must be positive, got {freqs}")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigError(
                f"frequencies must be strictly increasing, got {freqs}"
            )


@dataclass(frozen=True)
class EigenfrequencySpec:
    k: int
    shift: float | None = None
    kind: str = field(default="eigenfrequency", init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"mode count must be >= 1, got {self.k}")


AnalysisSpec = StaticSpec | TransientSpec | HarmonicSpec | EigenfrequencySpec


@dataclass(frozen=True)
class BcSet:
    """Boundary conditions and loads, each (region name, expression)."""

    dirichlet: tuple[tuple[str, Expression], ...] = ()
    neumann: tuple[tuple[str, Expression], ...] = ()
    sources: tuple[tuple[str, Expression], ...] = ()

    def dirichlet_regions(self) -> list[str]:
        return [name for name, _ in self.dirichlet]

    def loads(self) -> list[tuple[str, str, Expression]]:
        out = [(name, "neumann", e) for name, e in self.neumann]
        out += [(name, "source", e) for name, e in self.sources]
        return out


@dataclass(frozen=True)
class InitialConditions:
    """Initial pressure and pressure rate; None means zero."""

    p0: Expression | None = None
    dp0: Expression | None = None


@dataclass(frozen=True)
class ResultField:
    """Nodal solution snapshot at one time or frequency."""

    name: str
    time_or_freq: float
    nodal_values: np.ndarray


@dataclass(frozen=True)
class TransientResult:
    snapshots: tuple[ResultField, ...]
    probe_histories: tuple[ProbeHistory, ...]
    states: tuple[tuple[float, np.ndarray, np.ndarray], ...] | None


@dataclass(frozen=True)
class HarmonicResult:
    fields: tuple[ResultField, ...]
    failures: tuple[tuple[float, str], ...]
    probe_histories: tuple[ProbeHistory, ...]


# ---------------------------------------------------------------------------
# Dirichlet handling
# ---------------------------------------------------------------------------

def dirichlet_values(
    mesh: Mesh,
    dofmap: DofMap,
    bcs: BcSet,
    t: float = 0.0,
    freq: float = 0.0,
) -> np.ndarray:
    """Prescribed values per Dirichlet slot; later listings override
    earlier ones on shared nodes."""
    values = np.zeros(dofmap.n_dirichlet)
    for region_name, expr in bcs.dirichlet:
        region = mesh.region(region_name)
        for e in mesh.elements:
            if e.region_id != region.id:
                continue
            for node in e.connectivity:
                if not dofmap.is_dirichlet[node]:
                    raise ValueError(
                        f"node {node} of Dirichlet region '{region_name}' is "
                        "not constrained; the dof map was built with "
                        "different regions"
                    )
                x, y, z = mesh.coords[node]
                values[dofmap.eq_of_node[node]] = evaluate_expression(
                    expr, x=x, y=y, z=z, t=t, f=freq
                )
    return values


def apply_dirichlet(
    k: SparseMatrix,
    m: SparseMatrix | None,
    rhs: np.ndarray,
    dofmap: DofMap,
    prescribed: np.ndarray,
    prescribed_accel: np.ndarray | None = None,
):
    """Symmetric elimination of constrained equations.

    Keeps the free x free blocks; the right-hand side picks up
    ``-K_fc p_c`` and, when both ``m`` and ``prescribed_accel`` are
    given, ``-M_fc a_c``.  Returns ``(k_ff, m_ff, rhs_f)`` with ``m_ff``
    None when no mass matrix was passed.
    """
    free = dofmap.free_nodes()
    con = dofmap.dirichlet_nodes()
    k_ff = SparseMatrix.from_scipy(k.submatrix(free, free), symmetric=True)
    rhs_f = np.asarray(rhs, dtype=float)[free].copy()
    if len(con):
        rhs_f -= k.submatrix(free, con) @ prescribed
    m_ff = None
    if m is not None:
        m_ff = SparseMatrix.from_scipy(m.submatrix(free, free), symmetric=True)
        if len(con) and prescribed_accel is not None:
            rhs_f -= m.submatrix(free, con) @ prescribed_accel
    return k_ff, m_ff, rhs_f


def _scatter(dofmap: DofMap, free_values: np.ndarray, con_values) -> np.ndarray:
    full = np.zeros(dofmap.n_nodes)
    full[dofmap.free_nodes()] = free_values
    con = dofmap.dirichlet_nodes()
    if len(con):
        full[con] = con_values
    return full


def _probe_histories(mesh, probes, abscissae, series) -> tuple[ProbeHistory, ...]:
    out = []
    for j, location in enumerate(probes):
        node = nearest_node_index(mesh, location)
        out.append(
            ProbeHistory(
                location=tuple(float(v) for v in location),
                node_index=node,
                abscissae=np.asarray(abscissae, dtype=float),
                values=np.asarray([row[j] for row in series], dtype=float),
            )
        )
    return tuple(out)


def sample_probes(mesh, probes, fields) -> tuple[ProbeHistory, ...]:
    """Probe histories sampled from result fields, abscissa = each
    field's time/frequency (must be strictly increasing)."""
    nodes = [nearest_node_index(mesh, p) for p in probes]
    abscissae = [fld.time_or_freq for fld in fields]
    series = [[fld.nodal_values[i] for i in nodes] for fld in fields]
    return _probe_histories(mesh, probes, abscissae, series)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def run_static(
    mesh: Mesh,
    dofmap: DofMap,
    k: SparseMatrix,
    rhs: np.ndarray,
    bcs: BcSet,
    stats: dict | None = None,
) -> ResultField:
    """Solve K_ff p_f = rhs_f with prescribed boundary pressures.

    A pure-Neumann static problem is singular, so at least one Dirichlet
    node is required.  The solve is refined to near machine precision
    (the patch test demands nodal errors around 1e-11).
    """
    if dofmap.n_dirichlet == 0:
        raise ConfigError("static analysis requires Dirichlet data")
    p_c = dirichlet_values(mesh, dofmap, bcs)
    k_ff, _, rhs_f = apply_dirichlet(k, None, rhs, dofmap, p_c)
    p_f = np.zeros(0)
    if dofmap.n_free:
        p_f = solve_linear(k_ff, rhs_f, spd_hint=True, tol=STATIC_SOLVE_TOL,
                           stats=stats)
        rhs_scale = float(np.linalg.norm(rhs_f)) or 1.0
        for _ in range(2):  # iterative refinement
            r = rhs_f - spmv(k_ff, p_f)
            if float(np.linalg.norm(r)) <= 1e-15 * rhs_scale:
                break
            p_f = p_f + solve_linear(k_ff, r, spd_hint=True, tol=1e-10,
                                     stats=stats)
    return ResultField(RESULT_NAME, 0.0, _scatter(dofmap, p_f, p_c))


def run_transient_newmark(
    mesh: Mesh,
    dofmap: DofMap,
    m: SparseMatrix,
    k: SparseMatrix,
    spec: TransientSpec,
    bcs: BcSet,
    ics: InitialConditions,
    probes: tuple[tuple[float, float, float], ...] = (),
    store_every: int | None = None,
    record_state: bool = False,
    initial_values: np.ndarray | None = None,
    stats: dict | None = None,
) -> TransientResult:
    """Newmark time integration of M p'' + K p = rhs(t).

    The prescribed-value accelerations on the Dirichlet boundary come
    from second differences of the boundary expression (one-sided at
    t=0).  ``store_every`` keeps every n-th snapshot (plus first and
    last); by default only the final state is kept.  ``record_state``
    additionally returns (t, p, dp/dt) tuples for every step.
    ``initial_values`` injects a nodal start field (a stored result from
    an earlier sequence step), overriding the expression in ``ics``.
    """
    dt, beta, gamma = spec.dt, spec.beta, spec.gamma
    free = dofmap.free_nodes()
    con = dofmap.dirichlet_nodes()
    k_fc = k.submatrix(free, con)
    m_fc = m.submatrix(free, con)
    k_ff = SparseMatrix.from_scipy(k.submatrix(free, free), symmetric=True)
    m_ff = SparseMatrix.from_scipy(m.submatrix(free, free), symmetric=True)

    loads = bcs.loads()

    def rhs_free(t: float) -> np.ndarray:
        if not loads:
            return np.zeros(dofmap.n_free)
        return assemble_linear(mesh, dofmap, loads, t=t).values[free]

    def pc(t: float) -> np.ndarray:
        return dirichlet_values(mesh, dofmap, bcs, t=t)

    def ac(t: float) -> np.ndarray:
        if t == 0.0:
            return (pc(0.0) - 2 * pc(dt) + pc(2 * dt)) / dt**2
        return (pc(t + dt) - 2 * pc(t) + pc(t - dt)) / dt**2

    def vc(t: float) -> np.ndarray:
        if t == 0.0:
            return (-3 * pc(0.0) + 4 * pc(dt) - pc(2 * dt)) / (2 * dt)
        return (pc(t + dt) - pc(t - dt)) / (2 * dt)

    def eval_nodal(expr: Expression | None) -> np.ndarray:
        if expr is None:
            return np.zeros(dofmap.n_nodes)
        return np.array(
            [
                evaluate_expression(expr, x=xc, y=yc, z=zc, t=0.0)
                for xc, yc, zc in mesh.coords
            ]
        )

    if initial_values is not None:
        p = np.asarray(initial_values, dtype=float).copy()
        if p.shape != (dofmap.n_nodes,):
            raise ValueError(
                f"initial state has {p.shape} values for {dofmap.n_nodes} nodes"
            )
    else:
        p = eval_nodal(ics.p0)
    v = eval_nodal(ics.dp0)
    a = np.zeros(dofmap.n_nodes)
    if len(con):
        p[con] = pc(0.0)
        v[con] = vc(0.0)
        a[con] = ac(0.0)

    try:
        m_lu = LuFactorization(m_ff)
        a[free] = m_lu.solve(
            rhs_free(0.0) - spmv(k, p)[free] - (m_fc @ a[con] if len(con) else 0.0)
        )
        lhs = linear_combination(1.0, m_ff, beta * dt**2, k_ff)
        lhs_lu = LuFactorization(lhs)
    except SolverError as err:
        raise SolverError(f"transient setup failed: {err}") from err

    probe_nodes = [nearest_node_index(mesh, pt) for pt in probes]
    times = [0.0]
    probe_series = [[p[i] for i in probe_nodes]]
    states = [(0.0, p.copy(), v.copy())] if record_state else None
    snapshots = []
    if store_every is not None:
        snapshots.append(ResultField(RESULT_NAME, 0.0, p.copy()))

    p_f, v_f, a_f = p[free].copy(), v[free].copy(), a[free].copy()
    for n in range(spec.n_steps):
        t_next = (n + 1) * dt
        pred = p_f + dt * v_f + dt**2 * (0.5 - beta) * a_f
        b = rhs_free(t_next) - spmv(k_ff, pred)
        if len(con):
            pc_next, ac_next, vc_next = pc(t_next), ac(t_next), vc(t_next)
            b -= k_fc @ pc_next + m_fc @ ac_next
        try:
            a_new = lhs_lu.solve(b)
        except SolverError as err:
            raise SolverError(
                f"transient step {n + 1} (t = {t_next:g}) failed: {err}"
            ) from err
        p_f = pred + beta * dt**2 * a_new
        v_f = v_f + dt * ((1 - gamma) * a_f + gamma * a_new)
        a_f = a_new
        p[free], v[free] = p_f, v_f
        if len(con):
            p[con], v[con] = pc_next, vc_next
        times.append(t_next)
        probe_series.append([p[i] for i in probe_nodes])
        if record_state:
            states.append((t_next, p.copy(), v.copy()))
        last = n == spec.n_steps - 1
        if (store_every is not None and (n + 1) % store_every == 0) or last:
            snapshots.append(ResultField(RESULT_NAME, t_next, p.copy()))
    if stats is not None:
        stats["iterations"] = stats.get("iterations", 0) + spec.n_steps

    return TransientResult(
        snapshots=tuple(snapshots),
        probe_histories=_probe_histories(mesh, probes, times, probe_series),
        states=tuple(states) if record_state else None,
    )


def _harmonic_single(mesh, dofmap, m, k, bcs, freq, stats):
    omega = 2 * math.pi * freq
    rhs = assemble_linear(mesh, dofmap, bcs.loads(), t=0.0, freq=freq).values
    p_c = dirichlet_values(mesh, dofmap, bcs, t=0.0, freq=freq)
    free = dofmap.free_nodes()
    con = dofmap.dirichlet_nodes()
    a_op = linear_combination(1.0, k, -(omega**2), m)
    a_ff = SparseMatrix.from_scipy(a_op.submatrix(free, free), symmetric=True)
    b = rhs[free]
    if len(con):
        b = b - a_op.submatrix(free, con) @ p_c
    p_f = solve_linear(a_ff, b, spd_hint=False, stats=stats)
    return ResultField(RESULT_NAME, freq, _scatter(dofmap, p_f, p_c))


def run_harmonic(
    mesh: Mesh,
    dofmap: DofMap,
    m: SparseMatrix,
    k: SparseMatrix,
    spec: HarmonicSpec,
    bcs: BcSet,
    probes: tuple[tuple[float, float, float], ...] = (),
    threads: int = 1,
    stats: dict | None = None,
) -> HarmonicResult:
    """Frequency sweep of (K - omega^2 M) p = rhs.

    A frequency that lands on a resonance makes the symmetric-indefinite
    solve fail; the failure is recorded and the sweep continues.
    """

    def solve_one(freq):
        try:
            return _harmonic_single(mesh, dofmap, m, k, bcs, freq, stats)
        except SolverError as err:
            return (freq, str(err))

    if threads > 1 and len(spec.frequencies) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, spec.frequencies))
    else:
        results = [solve_one(f) for f in spec.frequencies]

    fields, failures = [], []
    for item in results:
        if isinstance(item, ResultField):
            fields.append(item)
        else:
            failures.append(item)

    return HarmonicResult(
        fields=tuple(fields),
        failures=tuple(failures),
        probe_histories=sample_probes(mesh, probes, fields),
    )


def run_eigenfrequency(
    mesh: Mesh,
    dofmap: DofMap,
    m: SparseMatrix,
    k: SparseMatrix,
    spec: EigenfrequencySpec,
    stats: dict | None = None,
) -> list[tuple[float, ResultField]]:
    """Smallest eigenfrequencies f_i = sqrt(lambda_i) / (2 pi) and their
    M-normalized mode shapes (zero on the Dirichlet boundary).

    Eigenvalues within 1e-9 * lambda_max of zero are clamped to zero so
    the pure-Neumann constant mode reports exactly f = 0.
    """
    free = dofmap.free_nodes()
    k_ff = SparseMatrix.from_scipy(k.submatrix(free, free), symmetric=True)
    m_ff = SparseMatrix.from_scipy(m.submatrix(free, free), symmetric=True)
    if spec.k > dofmap.n_free:
        raise ConfigError(
            f"requested {spec.k} modes but only {dofmap.n_free} free equations"
        )
    pairs = generalized_eigen_smallest(
        k_ff, m_ff, spec.k, shift=spec.shift or 0.0
    )
    if stats is not None:
        stats["iterations"] = stats.get("iterations", 0) + len(pairs)
    lams = np.array([p.eigenvalue for p in pairs])
    lam_max = float(np.max(np.abs(lams))) or 1.0
    out = []
    for pair in pairs:
        lam = pair.eigenvalue
        if abs(lam) <= EIGEN_ZERO_CLAMP * lam_max:
            lam = 0.0
        elif lam < 0:
            raise EigenSolverError(
                f"significantly negative eigenvalue {lam:g} "
                "(stiffness matrix not positive semidefinite?)"
            )
        freq = math.sqrt(lam) / (2 * math.pi)
        full = _scatter(dofmap, pair.vector, np.zeros(dofmap.n_dirichlet))
        idx = int(np.argmax(np.abs(full)))
        if full[idx] < 0:
            full = -full
        out.append((freq, ResultField(RESULT_NAME, freq, full)))
    return out
