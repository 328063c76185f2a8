"""Independent references for validating the semi-analytic assembly.

Nothing here shares code with the panel-moment path: entries are recomputed
by nested quadrature of the defining double integral, the operator is applied
pointwise by quadrature, and the fractional limit has its closed-form
solution.  Pure functions; safe to evaluate in parallel.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel
from .mesh import Mesh1D
from .quadrature import integrate_panels

__all__ = ["QuadratureSpec", "entry_bruteforce", "apply_nonlocal",
           "exact_fractional_poisson"]

_GAUSS3_X = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances of the brute-force integrators."""

    rtol: float = 1e-9
    max_depth: int = 40
    grading: float = 0.5        # geometric ratio toward the kernel singularity

    def __post_init__(self):
        if not 1e-14 < self.rtol < 1e-3:
            raise ValueError("rtol must lie in (1e-14, 1e-3)")
        if not 0 < self.max_depth <= 40:
            raise ValueError("max_depth must lie in 1..40")
        if not 0.0 < self.grading < 1.0:
            raise ValueError("grading ratio must lie in (0, 1)")


def _singular_strength(kernel: Kernel):
    # Exponent of the vanishing tail integral near s = 0: the symmetrized
    # integrand is O(s^2), the kernel at worst s^{-1-alpha}.
    if kernel.variant in ("fractional", "fractional_infinite"):
        return 2.0 - kernel.alpha
    if kernel.variant == "custom":
        return 0.5
    return 3.0


def _hat(x, left, center, right):
    return np.interp(x, [left, center, right], [0.0, 1.0, 0.0], left=0.0, right=0.0)


def _pair_correlation(mesh, j, k, svals):
    """∫ (hat_j(x+s) - hat_j(x)) (hat_k(x+s) - hat_k(x)) dx for a batch of s.

    The integrand is piecewise quadratic with breakpoints at the six stencil
    nodes and their copies shifted by -s, so per-interval 3-point Gauss is
    exact; x runs over the whole line (the hats are zero-extended).
    """
    nodes = mesh.nodes
    xj = nodes[j - 1:j + 2]
    xk = nodes[k - 1:k + 2]
    base = np.concatenate([xj, xk])
    s = np.asarray(svals, dtype=float)
    pts = np.concatenate([np.broadcast_to(base, (s.size, 6)),
                          base[None, :] - s[:, None]], axis=1)
    pts = np.sort(pts, axis=1)
    lo = pts[:, :-1]
    hi = pts[:, 1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = mid[:, :, None] + half[:, :, None] * _GAUSS3_X
    w = half[:, :, None] * _GAUSS3_W
    xs = x + s[:, None, None]
    fj = _hat(xs, *xj) - _hat(x, *xj)
    fk = _hat(xs, *xk) - _hat(x, *xk)
    return np.einsum("spq,spq->s", fj * fk, w)


def entry_bruteforce(mesh: Mesh1D, kernel: Kernel, j: int, k: int,
                     spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Stiffness entry by nested adaptive quadrature of the double integral.

    The inner x-integral is split at every basis breakpoint and shifted copy
    (exact per piece); the outer s-integral is split at the stencil distances
    and graded geometrically toward the kernel singularity at s = 0.
    """
    if not kernel.has_moments and not math.isfinite(kernel.delta):
        raise ValueError("brute-force entries need a finite horizon")
    n = mesh.n_interior
    if not (1 <= j <= n and 1 <= k <= n):
        raise IndexError(f"interior indices ({j}, {k}) outside 1..{n}")
    delta = kernel.delta

    def f(s):
        return _pair_correlation(mesh, j, k, s) * kernel.density(s)

    xj = mesh.nodes[j - 1:j + 2]
    xk = mesh.nodes[k - 1:k + 2]
    dists = np.abs(xj[:, None] - xk[None, :]).ravel()
    cuts = np.unique(dists[(dists > 0) & (dists < delta)])
    points = np.concatenate(([0.0], cuts, [delta]))
    value, _ = integrate_panels(f, points, rtol=spec.rtol, max_depth=spec.max_depth,
                                singular_strength=_singular_strength(kernel),
                                grading_ratio=spec.grading)
    return value


def _zero_extended(u, a, b):
    def call(y):
        y = np.asarray(y, dtype=float)
        inside = (y > a) & (y < b)
        safe = np.where(inside, y, 0.5 * (a + b))
        return np.where(inside, np.asarray(u(safe), dtype=float), 0.0)
    return call


def apply_nonlocal(u, kernel: Kernel, x: float, domain,
                   breakpoints=(), spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Pointwise action ∫_0^delta (2u(x) - u(x+s) - u(x-s)) rho(s) ds.

    ``u`` is zero-extended outside ``domain``; the symmetrized difference is
    O(s^2) for smooth u, which tames every admissible kernel singularity.
    Quadrature panels are split wherever x ± s crosses the domain ends or a
    listed breakpoint of u.  ``u`` must accept arrays.
    """
    a, b = domain
    if not a <= x <= b:
        raise ValueError(f"evaluation point {x} outside [{a}, {b}]")
    if not math.isfinite(kernel.delta):
        raise ValueError("pointwise application needs a finite horizon")
    uext = _zero_extended(u, a, b)
    ux = float(uext(np.asarray([x]))[0]) if a < x < b else 0.0

    def f(s):
        return (2.0 * ux - uext(x + s) - uext(x - s)) * kernel.density(s)

    delta = kernel.delta
    marks = [abs(x - p) for p in (a, b, *breakpoints)]
    cuts = np.unique([m for m in marks if 0.0 < m < delta])
    points = np.concatenate(([0.0], cuts, [delta]))
    value, _ = integrate_panels(f, points, rtol=spec.rtol, max_depth=spec.max_depth,
                                singular_strength=_singular_strength(kernel),
                                grading_ratio=spec.grading)
    return value


def exact_fractional_poisson(alpha: float, x) -> float:
    """Solution of the order-alpha/2 fractional Poisson problem on (-1, 1).

    u(x) = C(alpha) (1 - x^2)^{alpha/2} with
    C(alpha) = 2^{-alpha} sqrt(pi) / (Gamma((1+alpha)/2) Gamma(1+alpha/2)),
    the unit-forcing solution with zero exterior values.  alpha = 2 reproduces
    the local solution (1 - x^2)/2.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"order alpha must lie in (0, 2]; got {alpha}")
    c = (2.0 ** (-alpha) * math.sqrt(math.pi)
         / (math.gamma((1.0 + alpha) / 2.0) * math.gamma(1.0 + alpha / 2.0)))
    x = np.asarray(x, dtype=float)
    bump = np.clip(1.0 - x * x, 0.0, None)
    out = c * bump ** (alpha / 2.0)
    return out if out.ndim else float(out)
