"""Compressed-sparse-row matrices, linear solves, and the generalized
eigenvalue solver.

All iterations are deterministic: fixed starting vectors, serial
reductions, no randomness.  SPD systems go through Jacobi-preconditioned
conjugate gradients; symmetric-indefinite ones through MINRES, which
also provides the resonance detection for time-harmonic sweeps (a
near-singular system exhausts the iteration cap instead of converging).
Direct LU factorization (SuperLU) backs the repeated solves of the
transient stepper and the shift-invert eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import EigenSolverError, SolverError

DEFAULT_SOLVE_TOL = 1e-10


@dataclass
class SparseMatrix:
    """Square CSR matrix; column indices sorted and unique per row."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _row_of_entry: np.ndarray | None = field(
        default=None, repr=False, compare=False
    )

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_of_entry(self) -> np.ndarray:
        """Row index of every stored entry (cached)."""
        if self._row_of_entry is None:
            counts = np.diff(self.row_offsets)
            self._row_of_entry = np.repeat(
                np.arange(self.n, dtype=np.int64), counts
            )
        return self._row_of_entry

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.n)
        for i in range(self.n):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            k = np.searchsorted(self.col_indices[lo:hi], i)
            if k < hi - lo and self.col_indices[lo + k] == i:
                diag[i] = self.values[lo + k]
        return diag

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, mat, symmetric: bool = False) -> "SparseMatrix":
        csr = scipy.sparse.csr_matrix(mat)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got {csr.shape}")
        return cls(
            n=csr.shape[0],
            row_offsets=csr.indptr.astype(np.int64),
            col_indices=csr.indices.astype(np.int64),
            values=csr.data.astype(float),
            symmetric=symmetric,
        )

    @classmethod
    def from_dense(cls, a, symmetric: bool = False) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.csr_matrix(np.asarray(a, dtype=float)),
                              symmetric=symmetric)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(
            n=n,
            row_offsets=np.arange(n + 1, dtype=np.int64),
            col_indices=np.arange(n, dtype=np.int64),
            values=np.ones(n),
            symmetric=True,
        )

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> "SparseMatrix":
        """Rectangular slice returned as scipy CSR (used for the
        free/constrained splits of Dirichlet elimination)."""
        return self.to_scipy()[np.ix_(rows, cols)].tocsr()


def linear_combination(
    alpha: float, a: SparseMatrix, beta: float, b: SparseMatrix
) -> SparseMatrix:
    """alpha*A + beta*B with the symmetric flag propagated."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    out = alpha * a.to_scipy() + beta * b.to_scipy()
    return SparseMatrix.from_scipy(out, symmetric=a.symmetric and b.symmetric)


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x with left-to-right per-row accumulation (deterministic)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (a.n,):
        raise ValueError(f"vector length {x.shape} does not match n={a.n}")
    if a.nnz == 0:
        return np.zeros(a.n)
    prods = a.values * x[a.col_indices]
    # bincount accumulates in entry order, i.e. left to right per row
    return np.bincount(a.row_of_entry(), weights=prods, minlength=a.n)


# ---------------------------------------------------------------------------
# Linear solves
# ---------------------------------------------------------------------------

def _jacobi_pcg(a, b, tol, max_iter, stats):
    diag = a.diagonal()
    if np.any(diag == 0) or not np.all(np.isfinite(diag)):
        inv_diag = np.ones(a.n)  # fall back to unpreconditioned CG
    else:
        inv_diag = 1.0 / diag
    b_norm = float(np.linalg.norm(b))
    x = np.zeros(a.n)
    if b_norm == 0.0:
        return x
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    res = b_norm
    for it in range(max_iter):
        res = float(np.linalg.norm(r))
        if res <= tol * b_norm:
            if stats is not None:
                stats["iterations"] = stats.get("iterations", 0) + it
            return x
        ap = spmv(a, p)
        pap = float(p @ ap)
        if pap <= 0 or not np.isfinite(pap):
            raise SolverError(
                f"conjugate gradient breakdown at iteration {it} "
                "(matrix not positive definite?)",
                residual=res / b_norm,
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"conjugate gradient did not converge in {max_iter} iterations",
        residual=float(np.linalg.norm(r)) / b_norm,
    )


def _minres(a, b, tol, max_iter, stats):
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(a.n)
    mat = a.to_scipy()
    iterations = [0]

    def count(_xk):
        iterations[0] += 1

    # Restart on the residual system: a single MINRES pass stalls around
    # the Lanczos rounding floor, one or two restarts recover the full
    # tolerance.  Near-singular (resonant) systems never get there and
    # exhaust the iteration budget instead.
    x = np.zeros(a.n)
    res = b_norm
    for _ in range(4):
        r = b - spmv(a, x)
        res = float(np.linalg.norm(r))
        if not np.isfinite(res) or res <= tol * b_norm:
            break
        budget = max_iter - iterations[0]
        if budget <= 0:
            break
        dx, _info = scipy.sparse.linalg.minres(
            mat, r, rtol=min(tol, 1e-12), maxiter=budget, callback=count
        )
        x = x + dx
    if stats is not None:
        stats["iterations"] = stats.get("iterations", 0) + iterations[0]
    if not np.isfinite(res) or res > tol * b_norm:
        raise SolverError(
            f"MINRES did not reach tolerance in {iterations[0]} iterations "
            "(near-singular system?)",
            residual=res / b_norm,
        )
    return x


def solve_linear(
    a: SparseMatrix,
    b: np.ndarray,
    spd_hint: bool = False,
    tol: float = DEFAULT_SOLVE_TOL,
    stats: dict | None = None,
) -> np.ndarray:
    """Solve A x = b to ||Ax - b|| <= tol * ||b||.

    ``spd_hint`` selects Jacobi-preconditioned CG; otherwise MINRES
    (the system is symmetric indefinite in the harmonic case).  Both are
    capped at 20*n iterations and raise :class:`SolverError` carrying
    the final relative residual on non-convergence.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (a.n,):
        raise ValueError(f"rhs length {b.shape} does not match n={a.n}")
    max_iter = 20 * a.n
    if spd_hint:
        return _jacobi_pcg(a, b, tol, max_iter, stats)
    return _minres(a, b, tol, max_iter, stats)


class LuFactorization:
    """Sparse LU of a real matrix, for repeated right-hand sides.

    Solves are iteratively refined until the normwise backward error
    ||Ax - b|| / (||A||_inf ||x|| + ||b||) drops below ``tol``; failure
    to get there surfaces as :class:`SolverError`.  A numerically
    consistent solve of a singular matrix can pass this test, so
    singularity detection belongs to the caller (residual against b).
    """

    def __init__(self, a: SparseMatrix):
        self.matrix = a
        row_abs = np.bincount(
            a.row_of_entry(), weights=np.abs(a.values), minlength=a.n
        )
        self.norm_inf = float(row_abs.max()) if a.nnz else 0.0
        try:
            self._lu = scipy.sparse.linalg.splu(a.to_scipy().tocsc())
        except RuntimeError as err:  # exactly singular
            raise SolverError(f"LU factorization failed: {err}") from err

    def solve(self, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        b_norm = float(np.linalg.norm(b))
        if b_norm == 0.0:
            return np.zeros(self.matrix.n)
        x = self._lu.solve(b)
        backward = np.inf
        for _ in range(4):  # iterative refinement
            r = b - spmv(self.matrix, x)
            scale = self.norm_inf * float(np.linalg.norm(x)) + b_norm
            backward = float(np.linalg.norm(r)) / scale
            if not np.isfinite(backward):
                break
            if backward <= tol:
                return x
            x = x + self._lu.solve(r)
        raise SolverError(
            "factored solve lost accuracy (matrix numerically singular?)",
            residual=backward,
        )


# ---------------------------------------------------------------------------
# Generalized eigenvalue problem K v = lambda M v
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue and M-normalized eigenvector (v' M v = 1)."""

    eigenvalue: float
    vector: np.ndarray


def _start_block(n: int, m: int) -> np.ndarray:
    """Deterministic starting block: alternating-sign first column,
    smooth cosine patterns after that."""
    v = np.empty((n, m))
    v[:, 0] = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    idx = np.arange(n) + 0.5
    for j in range(1, m):
        v[:, j] = np.cos(np.pi * j * idx / n)
    return v


def _m_orthonormalize(v: np.ndarray, m_mat: SparseMatrix) -> np.ndarray:
    """Modified Gram-Schmidt in the M inner product, applied twice."""
    v = v.copy()
    n, cols = v.shape
    mv = np.empty_like(v)
    for j in range(cols):
        for _ in range(2):
            for i in range(j):
                v[:, j] -= (mv[:, i] @ v[:, j]) * v[:, i]
        mvj = spmv(m_mat, v[:, j])
        norm = float(v[:, j] @ mvj)
        if norm <= 0 or not np.isfinite(norm):
            raise EigenSolverError(
                f"iteration block became M-degenerate at column {j}"
            )
        v[:, j] /= np.sqrt(norm)
        mv[:, j] = spmv(m_mat, v[:, j])
    return v


def generalized_eigen_smallest(
    k_mat: SparseMatrix,
    m_mat: SparseMatrix,
    k: int,
    shift: float = 0.0,
) -> list[EigenPair]:
    """Smallest k eigenpairs of K v = lambda M v, lambda ascending.

    Shift-invert subspace iteration with M-orthogonal deflation and
    Rayleigh-Ritz extraction.  K must be symmetric positive semidefinite
    (post Dirichlet elimination) and M symmetric positive definite.  A
    singular shifted operator (the pure-Neumann constant mode at
    shift 0) is retried once with an automatic spectral offset that
    leaves the recovered eigenvalues untouched.

    The shift is a convergence device: the iteration amplifies modes
    with eigenvalues near it, so the smallest-k guarantee requires it
    to stay below the (k+1)-th eigenvalue; the default 0 always
    qualifies for a positive semidefinite pencil.
    """
    n = k_mat.n
    if m_mat.n != n:
        raise ValueError(f"dimension mismatch: K is {n}, M is {m_mat.n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")

    trace_k = float(k_mat.diagonal().sum())
    trace_m = float(m_mat.diagonal().sum())
    tau_auto = -(trace_k / trace_m) * 1e-6 - 1e-12
    sigma = shift
    lu = None
    for attempt in range(2):
        try:
            op = linear_combination(1.0, k_mat, -sigma, m_mat)
            lu = LuFactorization(op)
            # Probe along the constant direction (null space of a
            # pure-Neumann stiffness matrix): a singular operator cannot
            # reach a small residual relative to b here.
            b_probe = spmv(m_mat, np.ones(n) / np.sqrt(n))
            x_probe = lu.solve(b_probe)
            res = np.linalg.norm(spmv(op, x_probe) - b_probe)
            if res > 1e-8 * np.linalg.norm(b_probe):
                raise SolverError("singular shift", residual=float(res))
            break
        except SolverError:
            if attempt == 1:
                raise EigenSolverError(
                    f"shifted operator singular at both shift {shift:g} and "
                    f"retry shift {sigma:g}"
                ) from None
            sigma = sigma - tau_auto

    block = min(n, k + max(2, k // 2))
    v = _m_orthonormalize(_start_block(n, block), m_mat)
    inner_tol = 1e-12
    target = 1e-9  # margin under the 1e-8 pair invariant
    max_outer = 200
    for _ in range(max_outer):
        y = np.column_stack(
            [lu.solve(spmv(m_mat, v[:, j]), tol=inner_tol) for j in range(block)]
        )
        v = _m_orthonormalize(y, m_mat)
        kv = np.column_stack([spmv(k_mat, v[:, j]) for j in range(block)])
        mv = np.column_stack([spmv(m_mat, v[:, j]) for j in range(block)])
        a_red = v.T @ kv
        b_red = v.T @ mv
        lams, w = scipy.linalg.eigh(a_red, b_red)
        v = v @ w
        kv = kv @ w
        mv = mv @ w
        lam_scale = float(np.max(np.abs(lams))) or 1.0
        worst = 0.0
        for j in range(k):
            resid = np.linalg.norm(kv[:, j] - lams[j] * mv[:, j])
            denom = max(np.linalg.norm(kv[:, j]), lam_scale * np.linalg.norm(mv[:, j]))
            worst = max(worst, resid / denom)
        if worst <= target:
            return [EigenPair(float(lams[j]), v[:, j].copy()) for j in range(k)]
    raise EigenSolverError(
        f"subspace iteration did not converge in {max_outer} sweeps",
        residual=worst,
    )
