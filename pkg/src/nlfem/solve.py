"""Linear and time-dependent solvers on assembled nonlocal matrices.

Covers the constrained-value problem (with optional negative shift), the
shifted wave/Helmholtz-type problem with a refraction coefficient, the
generalized eigenproblem, semi-implicit phase-field stepping, and the error
and conditioning measurements used by the studies.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .assembly import (MassMatrix, StiffnessMatrix, assemble_infinite_horizon,
                       assemble_stiffness, mass_matrix)
from .kernels import Kernel
from .mesh import Mesh1D

__all__ = [
    "BvpProblem", "AllenCahnProblem", "Solution", "AllenCahnResult",
    "ErrorNorms", "SpectrumSummary", "rhs_from_function", "solve_bvp",
    "solve_helmholtz", "eig_generalized", "condition_and_extremes",
    "allen_cahn_run", "error_norms",
]

_RESIDUAL_TOL = 1e-10
_GAUSS3_X = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class Solution:
    """Interior nodal values with the implied zero constraint values."""

    mesh: Mesh1D
    values: np.ndarray

    def full_values(self):
        out = np.zeros(self.mesh.nodes.size)
        out[1:-1] = self.values
        return out

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.full_values(), left=0.0, right=0.0)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("x,u\n")
            for x, u in zip(self.mesh.nodes, self.full_values()):
                fh.write(f"{x:.17g},{u:.17g}\n")


@dataclass(frozen=True)
class BvpProblem:
    """Steady problem S u = rhs(f), or (S + |shift| M) u = rhs for shift < 0."""

    mesh: Mesh1D
    kernel: Kernel
    forcing: Union[Callable, np.ndarray]
    shift: float = 0.0

    def __post_init__(self):
        if self.shift > 0:
            raise ValueError("shift must be <= 0")


@dataclass(frozen=True)
class AllenCahnProblem:
    """Semi-implicit phase-field evolution with double-well nonlinearity u^3 - u."""

    mesh: Mesh1D
    kernel: Kernel
    eps: float
    tau: float
    t_final: float
    u0: Callable

    def __post_init__(self):
        if self.tau <= 0 or self.t_final < self.tau or self.eps <= 0:
            raise ValueError("need tau > 0, t_final >= tau, eps > 0")


@dataclass(frozen=True)
class AllenCahnResult:
    mesh: Mesh1D
    times: np.ndarray                  # snapshot times actually captured
    snapshots: list                    # interior values per snapshot time
    max_history: np.ndarray            # rows (t_n, max|U^n|), including t = 0

    def final(self) -> Solution:
        return Solution(self.mesh, self.snapshots[-1])

    def history_to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("t,maxabs\n")
            for t, m in self.max_history:
                fh.write(f"{t:.17g},{m:.17g}\n")


@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    linf: float


@dataclass(frozen=True)
class SpectrumSummary:
    lambda_min: float
    lambda_max: float
    cond: float
    iterations: int


def rhs_from_function(mesh: Mesh1D, f) -> np.ndarray:
    """Load vector of the interpolated forcing: entries (I_h f, hat_k).

    Includes the couplings to the boundary nodes, where the interpolant
    carries f's value even though the solution is constrained to zero.
    Accepts a callable (vectorized over nodes) or a precomputed nodal array
    (full length N + 2, or interior length N with boundary values dropped).
    """
    n = mesh.n_interior
    if callable(f):
        fvals = np.asarray(f(mesh.nodes), dtype=float)
        if fvals.shape != mesh.nodes.shape:
            fvals = np.full(mesh.nodes.shape, float(f(mesh.nodes[0])))
    else:
        fvals = np.asarray(f, dtype=float)
        if fvals.size == n:
            fvals = np.concatenate(([0.0], fvals, [0.0]))
        elif fvals.size != n + 2:
            raise ValueError("nodal forcing must have interior or full length")
    rhs = mass_matrix(mesh).matvec(fvals[1:-1])
    h = mesh.elements
    rhs[0] += h[0] / 6.0 * fvals[0]
    rhs[-1] += h[-1] / 6.0 * fvals[-1]
    return rhs


def _banded_lower(values, hb):
    n = values.shape[0]
    ab = np.zeros((hb + 1, n))
    for r in range(hb + 1):
        ab[r, :n - r] = np.diagonal(values, -r)
    return ab


def _solve_spd(values, hb, rhs):
    n = values.shape[0]
    if 0 < hb < n / 4:
        return scipy.linalg.solveh_banded(_banded_lower(values, hb), rhs, lower=True)
    c_and_low = scipy.linalg.cho_factor(values)
    return scipy.linalg.cho_solve(c_and_low, rhs)


class SpdOperator:
    """Factorized SPD matrix for repeated solves (time stepping, iterations)."""

    def __init__(self, values, half_bandwidth=None):
        self.values = values
        n = values.shape[0]
        hb = half_bandwidth if half_bandwidth is not None else n - 1
        if 0 < hb < n / 4:
            self._band = scipy.linalg.cholesky_banded(_banded_lower(values, hb), lower=True)
            self._dense = None
        else:
            self._band = None
            self._dense = scipy.linalg.cho_factor(values)

    def solve(self, rhs):
        if self._band is not None:
            return scipy.linalg.cho_solve_banded((self._band, True), rhs)
        return scipy.linalg.cho_solve(self._dense, rhs)


def _default_matrix(mesh, kernel):
    if kernel.has_moments:
        return assemble_stiffness(mesh, kernel)
    return assemble_infinite_horizon(mesh, kernel.alpha)


def _check_residual(values, u, rhs, what, fatal=True):
    residual = float(np.abs(values @ u - rhs).max())
    bound = _RESIDUAL_TOL * max(float(np.abs(rhs).max()), 1e-300)
    if residual > bound:
        message = f"{what}: residual {residual:.3e} exceeds {bound:.3e}"
        if fatal:
            raise ArithmeticError(message)
        warnings.warn(message)
    return residual


def solve_constrained(matrix: StiffnessMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve S u = rhs for an already-assembled load vector."""
    u = _solve_spd(matrix.values, matrix.half_bandwidth, rhs)
    _check_residual(matrix.values, u, rhs, "constrained solve")
    return u


def solve_bvp(problem: BvpProblem, matrix: Optional[StiffnessMatrix] = None) -> Solution:
    """Solve the steady constrained problem by symmetric factorization."""
    mesh = problem.mesh
    S = matrix if matrix is not None else _default_matrix(mesh, problem.kernel)
    values = S.values
    hb = S.half_bandwidth
    if problem.shift < 0:
        values = values + abs(problem.shift) * mass_matrix(mesh).to_dense()
        hb = max(hb, 1)
    rhs = rhs_from_function(mesh, problem.forcing)
    u = _solve_spd(values, hb, rhs)
    _check_residual(values, u, rhs, "bvp solve")
    return Solution(mesh, u)


def solve_helmholtz(mesh: Mesh1D, kernel: Kernel, k2: float, n_coeff, f,
                    matrix: Optional[StiffnessMatrix] = None) -> Solution:
    """Solve (S + k^2 M_n) u = rhs with the n(x)-weighted mass matrix.

    The sign convention makes the local limit u'' = k^2 n(x) u - f: solutions
    oscillate where n < 0 and behave exponentially where n > 0, and for
    constant n > 0 the system is the coercive negative-shift problem.  With
    sign-changing n the matrix can be indefinite; near-singular systems are
    reported (with a condition estimate) but still returned.
    """
    if k2 <= 0:
        raise ValueError("k2 must be positive")
    S = matrix if matrix is not None else _default_matrix(mesh, kernel)
    n_coeff = n_coeff if n_coeff is not None else (lambda x: np.zeros_like(x))
    weighted = mass_matrix(mesh, n_coeff)
    values = S.values + k2 * weighted.to_dense()
    rhs = rhs_from_function(mesh, f)
    hb = max(S.half_bandwidth, 1)
    n = values.shape[0]
    if 0 < hb < n / 4:
        ab = np.zeros((2 * hb + 1, n))
        for r in range(-hb, hb + 1):
            if r >= 0:
                ab[hb - r, r:] = np.diagonal(values, r)
            else:
                ab[hb - r, :n + r] = np.diagonal(values, r)
        u = scipy.linalg.solve_banded((hb, hb), ab, rhs)
        _check_residual(values, u, rhs, "helmholtz solve", fatal=False)
    else:
        lu, piv = scipy.linalg.lu_factor(values)
        u = scipy.linalg.lu_solve((lu, piv), rhs)
        pivots = np.abs(np.diagonal(lu))
        estimate = float(pivots.max() / max(pivots.min(), 1e-300))
        if estimate > 1e12:
            warnings.warn(f"helmholtz system is near-singular "
                          f"(pivot-ratio condition estimate {estimate:.3e})")
        _check_residual(values, u, rhs, "helmholtz solve", fatal=False)
    return Solution(mesh, u)


def eig_generalized(S: StiffnessMatrix, M: MassMatrix, count: int):
    """Smallest ``count`` eigenpairs of S u = lambda M u.

    Reduction through the mass Cholesky factor to a standard symmetric
    problem, then a dense symmetric solve; eigenvalues ascend and the vectors
    are M-orthonormal.
    """
    n = S.n
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}")
    values, vectors = scipy.linalg.eigh(S.values, M.to_dense(),
                                        subset_by_index=[0, count - 1])
    return values, vectors


def _power_iteration(matvec, v, rtol, maxit):
    rayleigh = 0.0
    for it in range(1, maxit + 1):
        w = matvec(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0, it
        v = w / norm
        new = float(v @ matvec(v))
        if it > 1 and abs(new - rayleigh) <= rtol * abs(new):
            return new, it
        rayleigh = new
    warnings.warn(f"power iteration stagnated after {maxit} steps at {rayleigh:.6e}")
    return rayleigh, maxit


def condition_and_extremes(S, rtol: float = 1e-8, maxit: int = 20000) -> SpectrumSummary:
    """Extreme eigenvalues and condition number of a symmetric matrix.

    lambda_max by power iteration, lambda_min by inverse iteration on a
    Cholesky factorization; both stop on a relative Rayleigh-quotient change
    below ``rtol``.  Deterministic start vectors (no randomness anywhere).
    """
    values = S.values if isinstance(S, StiffnessMatrix) else np.asarray(S, dtype=float)
    hb = S.half_bandwidth if isinstance(S, StiffnessMatrix) else values.shape[0] - 1
    n = values.shape[0]
    start = np.ones(n) + 0.5 * np.cos(np.pi * np.arange(n))
    start /= np.linalg.norm(start)
    lam_max, it_max = _power_iteration(lambda v: values @ v, start, rtol, maxit)
    op = SpdOperator(values, hb)
    lam_min_inv, it_min = _power_iteration(op.solve, start, rtol, maxit)
    lam_min = 1.0 / lam_min_inv
    return SpectrumSummary(lambda_min=lam_min, lambda_max=lam_max,
                           cond=lam_max / lam_min, iterations=it_max + it_min)


def allen_cahn_run(problem: AllenCahnProblem, snapshot_times: Sequence[float] = ()) -> AllenCahnResult:
    """March (M + tau eps^2 S) U^n = M (U^{n-1} - tau f(U^{n-1})) to t_final.

    The nonlinearity f(u) = u^3 - u is applied nodewise; the system matrix is
    factorized once and reused.  Aborts on non-finite state with the step
    index.  Snapshot times snap to the nearest step.
    """
    mesh = problem.mesh
    S = _default_matrix(mesh, problem.kernel)
    M = mass_matrix(mesh)
    tau = problem.tau
    system = M.to_dense() + tau * problem.eps ** 2 * S.values
    op = SpdOperator(system, max(S.half_bandwidth, 1))
    u = np.asarray(problem.u0(mesh.interior), dtype=float)
    steps = int(round(problem.t_final / tau))
    wanted = sorted(set(snapshot_times))
    capture = {min(max(int(round(t / tau)), 0), steps) for t in wanted}
    history = np.empty((steps + 1, 2))
    history[0] = (0.0, float(np.abs(u).max()))
    times, snaps = [], []
    if 0 in capture:
        times.append(0.0)
        snaps.append(u.copy())
    for step in range(1, steps + 1):
        nonlinear = u ** 3 - u
        rhs = M.matvec(u - tau * nonlinear)
        if not np.all(np.isfinite(rhs)):
            raise ArithmeticError(f"state became non-finite at step {step}")
        u = op.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise ArithmeticError(f"state became non-finite at step {step}")
        history[step] = (step * tau, float(np.abs(u).max()))
        if step in capture:
            times.append(step * tau)
            snaps.append(u.copy())
    if not snaps:
        times.append(steps * tau)
        snaps.append(u.copy())
    return AllenCahnResult(mesh=mesh, times=np.asarray(times), snapshots=snaps,
                           max_history=history)


def error_norms(u: Solution, reference, nodal: bool = False) -> ErrorNorms:
    """Max-norm over nodes plus an L2 distance to the reference.

    ``reference`` is a callable or a Solution on the same mesh.  The default
    L2 is the continuous norm by elementwise 3-point Gauss of the
    piecewise-linear solution against the reference; ``nodal=True`` switches
    to the lumped (trapezoid-weighted) nodal l2, the right notion when the
    reference is discontinuous and its interpolation barrier would dominate.
    """
    mesh = u.mesh
    if isinstance(reference, Solution):
        if reference.mesh is not mesh and not np.array_equal(reference.mesh.nodes, mesh.nodes):
            raise ValueError("reference solution lives on a different mesh")
        ref_full = reference.full_values()
        ref = lambda x: np.interp(x, mesh.nodes, ref_full)
    else:
        ref = reference
    nodes = mesh.nodes
    full = u.full_values()
    err_nodes = full[1:-1] - np.asarray(ref(nodes[1:-1]), dtype=float)
    linf = float(np.abs(err_nodes).max())
    if nodal:
        h = mesh.elements
        weights = 0.5 * (h[:-1] + h[1:])
        return ErrorNorms(l2=float(np.sqrt(np.sum(weights * err_nodes ** 2))), linf=linf)
    lo = nodes[:-1]
    hi = nodes[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = mid[:, None] + half[:, None] * _GAUSS3_X
    uh = np.interp(x, nodes, full)
    diff = uh - np.asarray(ref(x), dtype=float)
    l2sq = float(np.sum(half[:, None] * _GAUSS3_W * diff ** 2))
    return ErrorNorms(l2=math.sqrt(max(l2sq, 0.0)), linf=linf)
