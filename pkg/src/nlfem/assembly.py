"""Semi-analytic stiffness assembly for the 1D nonlocal diffusion operator.

Every stiffness entry is a 3x3 stencil contraction of the piecewise-cubic
profile

    interaction_cubic(z, s) = -(|z+s|^3 - 2|z|^3 + |z-s|^3) / 12

integrated against the kernel.  Because the profile is cubic in s between
breakpoints located exactly at the stencil distances, the s-integral reduces
to a finite sum of closed-form kernel moments: no quadrature error whatsoever
for power-law and box kernels.  Fast paths cover the three structural limits
(uniform
meshes -> symmetric Toeplitz, horizons below the smallest element ->
pentadiagonal perturbation of the local matrix, infinite horizon -> dense
fractional matrix).

Interior unknowns are indexed 1..N against the full node list x_0..x_{N+1};
all returned matrices are the N x N interior blocks.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
import scipy.linalg

from .kernels import Kernel, fractional_constant, truncated_infinite
from .mesh import Mesh1D

__all__ = [
    "interaction_cubic", "stencil_weights", "LocalGeometry", "local_geometry",
    "stiffness_entry", "assemble_stiffness", "uniform_profile",
    "toeplitz_coefficients", "assemble_toeplitz", "assemble_local",
    "assemble_small_horizon", "assemble_infinite_horizon",
    "assemble_truncated_infinite", "StiffnessMatrix", "MassMatrix",
    "mass_matrix", "small_horizon_coefficient", "dump_coordinate",
    "load_coordinate",
]

_ETA = np.array([1.0, -4.0, 6.0, -4.0, 1.0])  # second-difference stencil squared


def interaction_cubic(z, s):
    """Piecewise-cubic interaction profile, resolved into its two branches.

    Equals -z*s^2/2 for s <= z and -(s^3 + 3*s*z^2 - z^3)/6 for s >= z
    (the branches agree at s = z).  Even in z; callers pass |z|.
    Vectorized in both arguments.
    """
    z = np.asarray(z)
    s = np.asarray(s)
    near = -0.5 * z * s * s
    far = -(s * s * s + 3.0 * s * z * z - z * z * z) / 6.0
    out = np.where(s <= z, near, far)
    return out if out.ndim else float(out)


def stencil_weights(mesh: Mesh1D, j: int):
    """Hat-function weight vector (1/h_j, -1/h_j - 1/h_{j+1}, 1/h_{j+1}).

    The entries sum to zero and annihilate affine nodal data; that second
    difference structure is what produces the matrix band and the limit
    identities.
    """
    n = mesh.n_interior
    if not 1 <= j <= n:
        raise IndexError(f"interior index {j} outside 1..{n}")
    h = mesh.elements
    left = 1.0 / h[j - 1]
    right = 1.0 / h[j]
    return np.array([left, -left - right, right])


@dataclass(frozen=True)
class LocalGeometry:
    """Stencil weights of a pair of interior nodes and their distance matrix."""

    row_weights: np.ndarray   # weights of node j
    col_weights: np.ndarray   # weights of node k
    distances: np.ndarray     # 3x3, |x_{j+r} - x_{k+c}| for r, c in {-1, 0, 1}


def local_geometry(mesh: Mesh1D, j: int, k: int) -> LocalGeometry:
    n = mesh.n_interior
    if not (1 <= j <= n and 1 <= k <= n):
        raise IndexError(f"interior indices ({j}, {k}) outside 1..{n}")
    xj = mesh.nodes[j - 1:j + 2]
    xk = mesh.nodes[k - 1:k + 2]
    return LocalGeometry(row_weights=stencil_weights(mesh, j),
                         col_weights=stencil_weights(mesh, k),
                         distances=np.abs(xj[:, None] - xk[None, :]))


def _contract_cells(dists, weights, kernel: Kernel):
    """Integrate sum_i w_i * interaction_cubic(d_i, s) * rho(s) over (0, delta).

    Panels run between consecutive distinct distances inside (0, delta); on
    each panel every cell contributes fixed cubic coefficients (s^2 below its
    distance; s^0, s^1, s^3 above it), so the integral is a coefficient/moment
    dot product.  Panels touching s = 0 only ever receive s^2 and s^3
    coefficients, which keeps singular kernel moments away from the origin.
    Accumulation runs in extended precision: the stencil contraction cancels
    several digits for well-separated pairs.
    """
    delta = kernel.delta
    d_unique, inverse = np.unique(np.asarray(dists, dtype=float), return_inverse=True)
    w = np.bincount(inverse, weights=np.asarray(weights, dtype=float))
    inner = d_unique[(d_unique > 0.0) & (d_unique < delta)]
    edges = np.concatenate(([0.0], inner, [delta]))
    lo = edges[:-1]
    hi = edges[1:]
    coeffs = np.zeros((4, lo.size), dtype=np.longdouble)
    for dv, wv in zip(d_unique, w):
        wv = np.longdouble(wv)
        if dv == 0.0:
            coeffs[3, :] -= wv / 6.0
        elif dv >= delta:
            coeffs[2, :] -= wv * np.longdouble(dv) / 2.0
        else:
            cut = int(np.searchsorted(edges, dv))
            dl = np.longdouble(dv)
            coeffs[2, :cut] -= wv * dl / 2.0
            coeffs[0, cut:] += wv * dl ** 3 / 6.0
            coeffs[1, cut:] -= wv * dl * dl / 2.0
            coeffs[3, cut:] -= wv / 6.0
    moments = kernel.panel_moments(lo, hi)
    return float(np.sum(coeffs * moments))


def _separated(mesh, delta, j, k):
    a, b = (j, k) if j <= k else (k, j)
    return b - a >= 2 and mesh.nodes[b - 1] - mesh.nodes[a + 1] >= delta


def stiffness_entry(mesh: Mesh1D, kernel: Kernel, j: int, k: int) -> float:
    """Exact stiffness entry for the interior node pair (j, k), 1-based.

    Zero (exactly) when the hat supports are at least one horizon apart.
    Rejects infinite-horizon kernels; use :func:`assemble_infinite_horizon`.
    """
    if not kernel.has_moments:
        raise ValueError("kernel has no finite horizon; use assemble_infinite_horizon")
    if _separated(mesh, kernel.delta, j, k):
        return 0.0
    geom = local_geometry(mesh, j, k)
    weights = np.outer(geom.row_weights, geom.col_weights).ravel()
    return _contract_cells(geom.distances.ravel(), weights, kernel)


class StiffnessMatrix:
    """Symmetric interior stiffness matrix with bandwidth metadata.

    Stores the dense array; ``storage`` reports whether the banded
    representation is the economical one (half-bandwidth below n/4), and
    ``banded_lower`` extracts it for the banded solvers.  ``toeplitz`` holds
    the generating vector when the matrix came off the uniform-mesh path.
    """

    def __init__(self, values: np.ndarray, half_bandwidth: Optional[int] = None,
                 toeplitz: Optional[np.ndarray] = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("stiffness matrix must be square")
        self.values = values
        self.toeplitz = None if toeplitz is None else np.asarray(toeplitz, dtype=float)
        if half_bandwidth is None:
            half_bandwidth = self._measure_bandwidth(values)
        self.half_bandwidth = int(half_bandwidth)

    @staticmethod
    def _measure_bandwidth(values):
        n = values.shape[0]
        for offset in range(n - 1, 0, -1):
            if np.any(np.diagonal(values, offset) != 0.0):
                return offset
        return 0

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def storage(self):
        return "banded" if self.half_bandwidth < self.n / 4 else "dense"

    def banded_lower(self):
        """Lower band form ab[r, c] = A[c + r, c] for the banded solvers."""
        hb = self.half_bandwidth
        n = self.n
        ab = np.zeros((hb + 1, n))
        for r in range(hb + 1):
            ab[r, :n - r] = np.diagonal(self.values, -r)
        return ab

    def matvec(self, v):
        return self.values @ v

    def max_norm(self):
        return float(np.abs(self.values).max())

    def smallest_eigenvalue(self):
        return float(scipy.linalg.eigvalsh(self.values, subset_by_index=[0, 0])[0])


def assemble_stiffness(mesh: Mesh1D, kernel: Kernel, workers: int = 1) -> StiffnessMatrix:
    """Assemble the full interior stiffness matrix by panel-moment contraction.

    Rows are independent (pure entry evaluations into disjoint slices) and may
    be computed by a thread pool; the result is identical for any ``workers``.
    Only k >= j is computed, the lower triangle mirrored exactly.
    """
    if not kernel.has_moments:
        raise ValueError("kernel has no finite horizon; use assemble_infinite_horizon")
    n = mesh.n_interior
    nodes = mesh.nodes
    delta = kernel.delta
    values = np.zeros((n, n))
    band = [0]

    def fill_row(j):
        row_band = 0
        for k in range(j, n + 1):
            if k - j >= 2 and nodes[k - 1] - nodes[j + 1] >= delta:
                break
            entry = stiffness_entry(mesh, kernel, j, k)
            values[j - 1, k - 1] = entry
            if entry != 0.0:
                row_band = k - j
        return row_band

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            band = list(pool.map(fill_row, range(1, n + 1)))
    else:
        band = [fill_row(j) for j in range(1, n + 1)]
    upper = np.triu(values, 1)
    values += upper.T
    return StiffnessMatrix(values, half_bandwidth=max(band))


def uniform_profile(p: int, tau):
    """Closed piecewise-cubic profile of the uniform-mesh generating integrand.

    Conventionally scaled so the p = 0 profile plateaus at 16 for tau >= 2;
    the Toeplitz coefficients integrate profile/12 against the kernel (see
    :func:`toeplitz_coefficients`).  Vanishes outside (p - 2, p + 2) for
    p >= 2.
    """
    if p < 0:
        raise ValueError("diagonal offset p must be nonnegative")
    tau = np.asarray(tau, dtype=float)
    acc = np.zeros_like(tau)
    for i, eta in zip(range(-2, 3), _ETA):
        acc = acc + eta * interaction_cubic(abs(p + i), tau)
    out = 12.0 * acc
    if p >= 2:
        # The cubes cancel identically outside (p-2, p+2); clip the float residue.
        out = np.where((tau <= p - 2) | (tau >= p + 2), 0.0, out)
    return out if out.ndim else float(out)


def toeplitz_coefficients(h: float, n: int, kernel: Kernel):
    """Generating vector t_0..t_{n-1} of the uniform-mesh stiffness matrix.

    Uses the same panel-moment contraction as the general assembler, applied
    to the five distances |p + i| * h with second-difference-squared weights;
    t_p = 0 exactly once p >= delta/h + 2.
    """
    if not kernel.has_moments:
        raise ValueError("kernel has no finite horizon; use assemble_infinite_horizon")
    if h <= 0:
        raise ValueError("spacing h must be positive")
    t = np.zeros(n)
    cutoff = kernel.delta / h + 2.0
    offsets = np.arange(-2, 3)
    weights = _ETA / h ** 2
    for p in range(n):
        if p >= cutoff:
            break
        t[p] = _contract_cells(np.abs(p + offsets) * h, weights, kernel)
    return t


def assemble_toeplitz(mesh: Mesh1D, kernel: Kernel) -> StiffnessMatrix:
    """Uniform-mesh stiffness matrix in symmetric Toeplitz form."""
    if not mesh.is_uniform():
        raise ValueError("the Toeplitz path requires a uniform mesh")
    n = mesh.n_interior
    h = (mesh.b - mesh.a) / (n + 1)
    t = toeplitz_coefficients(h, n, kernel)
    nonzero = np.nonzero(t)[0]
    hb = int(nonzero.max()) if nonzero.size else 0
    return StiffnessMatrix(scipy.linalg.toeplitz(t), half_bandwidth=hb, toeplitz=t)


def assemble_local(mesh: Mesh1D) -> StiffnessMatrix:
    """Tridiagonal stiffness matrix of the local (second-derivative) limit."""
    h = mesh.elements
    inv = 1.0 / h
    diag = inv[:-1] + inv[1:]
    off = -inv[1:-1]
    values = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return StiffnessMatrix(values, half_bandwidth=1)


def small_horizon_coefficient(alpha: float) -> float:
    """Perturbation coefficient (2 - alpha) / (6 * (3 - alpha)) of the small-horizon identity."""
    return (2.0 - alpha) / (6.0 * (3.0 - alpha))


def assemble_small_horizon(mesh: Mesh1D, alpha: float, delta: float) -> StiffnessMatrix:
    """Pentadiagonal stiffness matrix for horizons below the smallest element.

    Implements the identity S = S_0 - c * delta * (T^2 restricted), where T is
    the local operator on the *full* node set (boundary rows included); the
    boundary coupling of T^2 is what makes the corner entries match the exact
    assembly.  Accepts alpha in [-1, 2]; the coefficient vanishes at alpha = 2
    and the identity degenerates to S = S_0.
    """
    if not -1.0 <= alpha <= 2.0:
        raise ValueError(f"small-horizon identity requires alpha in [-1, 2]; got {alpha}")
    h = mesh.elements
    if delta > h.min():
        raise ValueError(f"small-horizon path needs delta <= h_min = {h.min():.6g}; got {delta}")
    inv = 1.0 / h                      # 1/h_1 .. 1/h_{N+1}
    # Full-node tridiagonal operator: diag_full[j] drops the missing outside element.
    diag_full = np.concatenate(([inv[0]], inv[:-1] + inv[1:], [inv[-1]]))
    off_full = -inv                    # T[j, j+1], j = 0..N
    p_diag = off_full[:-1] ** 2 + diag_full[1:-1] ** 2 + off_full[1:] ** 2
    p_off1 = off_full[1:-1] * (diag_full[1:-2] + diag_full[2:-1])
    p_off2 = off_full[1:-2] * off_full[2:-1]
    c = small_horizon_coefficient(alpha) * delta
    n = mesh.n_interior
    values = np.zeros((n, n))
    values[np.arange(n), np.arange(n)] = diag_full[1:-1] - c * p_diag
    idx = np.arange(n - 1)
    values[idx, idx + 1] = off_full[1:-1] - c * p_off1
    values[idx + 1, idx] = values[idx, idx + 1]
    idx = np.arange(n - 2)
    values[idx, idx + 2] = -c * p_off2
    values[idx + 2, idx] = values[idx, idx + 2]
    return StiffnessMatrix(values, half_bandwidth=2 if n > 2 else n - 1)


def _infinite_constant(alpha):
    if alpha == 1.0:
        # The generic constant is singular here, but the stencil contraction
        # annihilates the quadratic term of the distance power, leaving the
        # finite limit 1/(2*pi) against d^2 * ln d.
        return 1.0 / (2.0 * math.pi)
    return 1.0 / (2.0 * math.gamma(4.0 - alpha) * math.cos(alpha * math.pi / 2.0))


def assemble_infinite_horizon(mesh: Mesh1D, alpha: float) -> StiffnessMatrix:
    """Dense stiffness matrix of the infinite-horizon (fractional) limit.

    Entries are closed-form stencil contractions of d^{3-alpha} (of
    d^2 * ln d at alpha = 1), with the convention 0^{3-alpha} = 0 and
    0^2 ln 0 = 0.  Contraction runs in extended precision row by row.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"infinite-horizon assembly requires alpha in (0, 2); got {alpha}")
    x = mesh.nodes.astype(np.longdouble)
    n = mesh.n_interior
    windows = sliding_window_view(x, 3)            # window k-1 = (x_{k-1}, x_k, x_{k+1})
    h = np.diff(x)
    weights = np.empty((n, 3), dtype=np.longdouble)
    weights[:, 0] = 1.0 / h[:-1]
    weights[:, 2] = 1.0 / h[1:]
    weights[:, 1] = -weights[:, 0] - weights[:, 2]
    chat = np.longdouble(_infinite_constant(alpha))
    exponent = np.longdouble(3.0 - alpha)
    values = np.zeros((n, n))
    for j in range(n):
        d = np.abs(windows[j][None, :, None] - windows[j:][:, None, :])
        if alpha == 1.0:
            f = np.where(d > 0, d * d * np.log(np.where(d > 0, d, 1.0)), np.longdouble(0.0))
        else:
            f = d ** exponent
        row = chat * np.einsum("r,krc,kc->k", weights[j], f, weights[j:])
        values[j, j:] = row.astype(float)
        values[j:, j] = values[j, j:]
    return StiffnessMatrix(values, half_bandwidth=n - 1)


def assemble_truncated_infinite(mesh: Mesh1D, alpha: float, delta: float) -> StiffnessMatrix:
    """Stiffness matrix for the infinite-horizon kernel cut off at ``delta``.

    Once the horizon covers every stencil pair (delta >= b - a), the
    truncation deficit of each entry is the constant tail
    ∫_delta^inf rho(s) ds times the stencil contraction of d^3/6 — which
    collapses to exactly twice the mass matrix.  That gives the exact identity
    S_delta = S_inf - c_t * M with c_t = 2 * C_alpha * delta^{-alpha} / alpha,
    used here as a fast path; smaller horizons fall back to the generic
    assembler.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"truncated-infinite assembly requires alpha in (0, 2); got {alpha}")
    if delta < mesh.b - mesh.a:
        return assemble_stiffness(mesh, truncated_infinite(alpha, delta))
    s_inf = assemble_infinite_horizon(mesh, alpha)
    c_tail = 2.0 * fractional_constant(alpha) * delta ** (-alpha) / alpha
    values = s_inf.values - c_tail * mass_matrix(mesh).to_dense()
    return StiffnessMatrix(values, half_bandwidth=s_inf.half_bandwidth)


class MassMatrix:
    """Symmetric tridiagonal interior mass matrix, optionally n(x)-weighted."""

    def __init__(self, diag, off):
        self.diag = np.asarray(diag, dtype=float)
        self.off = np.asarray(off, dtype=float)
        if self.off.size != self.diag.size - 1:
            raise ValueError("off-diagonal length must be n - 1")

    @property
    def n(self):
        return self.diag.size

    def to_dense(self):
        return (np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1))

    def matvec(self, v):
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def row_sums(self):
        return self.matvec(np.ones(self.n))

    def smallest_eigenvalue(self):
        return float(scipy.linalg.eigvalsh(self.to_dense(), subset_by_index=[0, 0])[0])


def mass_matrix(mesh: Mesh1D, weight=None) -> MassMatrix:
    """FE mass matrix; 2-point Gauss per element when a weight n(x) is given.

    Unweighted rows integrate the hats exactly: diag (h_j + h_{j+1})/3 and
    off-diagonal h_{j+1}/6.  Two-point Gauss is exact for any weight that is
    constant per element (place mesh nodes on the discontinuities).
    """
    h = mesh.elements
    n = mesh.n_interior
    if weight is None:
        diag = (h[:-1] + h[1:]) / 3.0
        off = h[1:-1] / 6.0
        return MassMatrix(diag, off)
    diag = np.zeros(n)
    off = np.zeros(n - 1)
    gauss_t = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
    nodes = mesh.nodes
    for e in range(n + 1):                      # element e spans nodes[e] .. nodes[e+1]
        xl, xr = nodes[e], nodes[e + 1]
        he = xr - xl
        xg = xl + he * gauss_t
        wvals = np.asarray(weight(xg), dtype=float)
        phi_r = gauss_t                          # rises toward the right node
        phi_l = 1.0 - gauss_t
        left = e - 1                             # interior index of the left node, 0-based
        right = e
        if left >= 0:
            diag[left] += 0.5 * he * np.dot(wvals, phi_l * phi_l)
        if right < n:
            diag[right] += 0.5 * he * np.dot(wvals, phi_r * phi_r)
        if left >= 0 and right < n:
            off[left] += 0.5 * he * np.dot(wvals, phi_l * phi_r)
    return MassMatrix(diag, off)


def dump_coordinate(matrix: StiffnessMatrix, path):
    """Write ``i j value`` triples (1-based, upper triangle mirrored included)."""
    values = matrix.values
    n = matrix.n
    with open(path, "w", newline="\n") as fh:
        for i in range(n):
            for j in range(n):
                v = values[i, j]
                if v != 0.0:
                    fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def load_coordinate(path, n=None):
    """Read a coordinate-format dump back into a dense array."""
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            rows.append(int(parts[0]) - 1)
            cols.append(int(parts[1]) - 1)
            vals.append(float(parts[2]))
    if n is None:
        n = max(max(rows), max(cols)) + 1
    out = np.zeros((n, n))
    out[rows, cols] = vals
    return out


def dump_toeplitz(matrix: StiffnessMatrix, path):
    """Write ``p t_p`` pairs of the generating vector."""
    if matrix.toeplitz is None:
        raise ValueError("matrix does not carry a Toeplitz generating vector")
    with open(path, "w", newline="\n") as fh:
        for p, t in enumerate(matrix.toeplitz):
            fh.write(f"{p} {t:.17g}\n")
