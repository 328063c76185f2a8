"""Interaction kernels and their closed-form moments.

The assembler never samples a kernel pointwise: it consumes the moments
mu_m(a, b) = ∫_a^b s^m rho(s) ds for m = 0..3, which are available in closed
form for the power-law and box kernels and by adaptive quadrature for custom
ones.  That is what removes all quadrature error from assembly.

Variants
--------
fractional(alpha, delta)
    rho(s) = C s^{-1-alpha} on (0, delta], C = (2-alpha)/delta^{2-alpha}, so
    that the second moment over (0, delta) is exactly 1.  alpha in [-1, 2).
box(delta)
    rho(s) = 3/delta^3 on (0, delta]; unit second moment in closed form.
fractional_infinite(alpha)
    rho(s) = C_alpha s^{-1-alpha} on (0, inf), alpha in (0, 2), with the
    constant that turns the interaction operator into the fractional
    Laplacian of order alpha/2.  No moment path; consumed only by the
    dedicated infinite-horizon assembler.
truncated_infinite(alpha, delta)
    The previous kernel cut off at a finite horizon (same constant, so the
    second moment is *not* normalized).
custom(delta, rho)
    Arbitrary nonnegative rho; moments by adaptive panel quadrature.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .quadrature import integrate_panels

__all__ = ["Kernel", "fractional", "box", "fractional_infinite",
           "truncated_infinite", "custom_kernel", "fractional_constant"]

_LOG_BRANCH_TOL = 1e-10
_CUSTOM_RTOL = 1e-12


def fractional_constant(alpha):
    """Coefficient C_alpha of the infinite-horizon power-law kernel."""
    return (2.0 ** (alpha - 1.0) * alpha * math.gamma((1.0 + alpha) / 2.0)
            / (math.sqrt(math.pi) * math.gamma(1.0 - alpha / 2.0)))


@dataclass(frozen=True)
class Kernel:
    """Radial interaction weight rho(s) with horizon ``delta``.

    Immutable; safe to share across threads.  Use the module-level
    constructors rather than instantiating directly.
    """

    variant: str
    delta: float
    alpha: Optional[float] = None
    coefficient: float = 1.0
    rho: Optional[Callable] = None
    normalized: bool = True

    @property
    def has_moments(self):
        """Whether the panel-moment assembly path applies (finite horizon)."""
        return math.isfinite(self.delta)

    def density(self, s):
        """Pointwise rho(s); zero outside the support (not an error)."""
        s = np.asarray(s, dtype=float)
        if self.variant == "box":
            out = np.where((s > 0) & (s <= self.delta), self.coefficient, 0.0)
        elif self.variant in ("fractional", "fractional_infinite"):
            inside = (s > 0) & (s <= self.delta)
            out = np.where(inside, self.coefficient * np.where(inside, s, 1.0) ** (-1.0 - self.alpha), 0.0)
        elif self.variant == "custom":
            out = np.where((s > 0) & (s <= self.delta), self.rho(s), 0.0)
        else:  # pragma: no cover - constructors forbid this
            raise ValueError(f"unknown kernel variant '{self.variant}'")
        return out if out.ndim else float(out)

    def moment(self, m, a, b):
        """Exact mu_m(a, b) = ∫_a^b s^m rho(s) ds for m in 0..3.

        Requires [a, b] inside [0, delta]; for power-law kernels a divergent
        request (a = 0 with m <= alpha) is rejected.
        """
        if m not in (0, 1, 2, 3):
            raise ValueError("moment order m must be one of 0, 1, 2, 3")
        if a < 0 or b < a or b > self.delta * (1 + 1e-12):
            raise ValueError("moment interval must satisfy 0 <= a <= b <= delta")
        if self.variant == "fractional" and a == 0.0 and m - self.alpha <= _LOG_BRANCH_TOL:
            raise ValueError(
                f"divergent moment: m={m} <= alpha={self.alpha} needs a > 0")
        if self.variant == "fractional_infinite":
            raise ValueError("the infinite-horizon kernel has no moment path")
        lo = np.asarray([a], dtype=float)
        hi = np.asarray([b], dtype=float)
        return float(self.panel_moments(lo, hi)[m, 0])

    def panel_moments(self, lo, hi):
        """Batched moments: (4, npanels) longdouble array of mu_m(lo_i, hi_i).

        Rows m = 0, 1 are only meaningful where lo > 0 (they are set to zero
        on panels touching the origin; the assembler guarantees their
        polynomial coefficients vanish there).
        """
        lo = np.asarray(lo, dtype=np.longdouble)
        hi = np.asarray(hi, dtype=np.longdouble)
        out = np.zeros((4, lo.size), dtype=np.longdouble)
        if self.variant == "box":
            c = np.longdouble(self.coefficient)
            for m in range(4):
                out[m] = c * (hi ** (m + 1) - lo ** (m + 1)) / (m + 1)
            return out
        if self.variant == "fractional":
            c = np.longdouble(self.coefficient)
            alpha = np.longdouble(self.alpha)
            positive = lo > 0
            for m in range(4):
                e = m - alpha
                if abs(float(e)) < _LOG_BRANCH_TOL:
                    out[m, positive] = c * np.log(hi[positive] / lo[positive])
                elif float(e) > 0:
                    hi_p = hi ** e
                    lo_p = np.where(lo > 0, lo, 0.0) ** e
                    out[m] = c * (hi_p - lo_p) / e
                else:
                    out[m, positive] = c * (hi[positive] ** e - lo[positive] ** e) / e
            return out
        if self.variant == "custom":
            for i, (a, b) in enumerate(zip(lo, hi)):
                for m in range(4):
                    out[m, i] = self._custom_moment(m, float(a), float(b))
            return out
        raise ValueError("kernel has no moment path")

    def _custom_moment(self, m, a, b):
        if b <= a:
            return 0.0
        f = lambda s: s ** m * self.rho(s)
        # m >= 2 tames any integrable kernel singularity at the origin.
        strength = 0.5 if a == 0.0 else None
        value, _ = integrate_panels(f, [a, b], rtol=_CUSTOM_RTOL,
                                    singular_strength=strength)
        return value


def _check_alpha(alpha, low, high, label):
    if not low <= alpha < high:
        raise ValueError(f"{label} requires alpha in [{low}, {high}); got {alpha}")


def fractional(alpha, delta):
    """Truncated power-law kernel with unit second moment."""
    _check_alpha(alpha, -1.0, 2.0, "the truncated fractional kernel")
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError(f"horizon delta must be positive and finite; got {delta}")
    coefficient = (2.0 - alpha) / delta ** (2.0 - alpha)
    kernel = Kernel(variant="fractional", delta=float(delta), alpha=float(alpha),
                    coefficient=coefficient)
    second = kernel.moment(2, 0.0, delta)
    if abs(second - 1.0) > 1e-13:
        raise ValueError(f"second-moment normalization failed: mu_2 = {second!r}")
    return kernel


def box(delta):
    """Constant kernel 3/delta^3 on (0, delta]; unit second moment exactly."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError(f"horizon delta must be positive and finite; got {delta}")
    return Kernel(variant="box", delta=float(delta), coefficient=3.0 / delta ** 3)


def fractional_infinite(alpha):
    """Infinite-horizon power-law kernel (fractional Laplacian of order alpha/2)."""
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"the infinite-horizon kernel requires alpha in (0, 2); got {alpha}")
    return Kernel(variant="fractional_infinite", delta=math.inf, alpha=float(alpha),
                  coefficient=fractional_constant(alpha), normalized=False)


def truncated_infinite(alpha, delta):
    """Infinite-horizon kernel cut off at a finite horizon (not renormalized)."""
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"the truncated infinite kernel requires alpha in (0, 2); got {alpha}")
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError(f"horizon delta must be positive and finite; got {delta}")
    return Kernel(variant="fractional", delta=float(delta), alpha=float(alpha),
                  coefficient=fractional_constant(alpha), normalized=False)


def custom_kernel(delta, rho):
    """Kernel from a pointwise nonnegative ``rho``; moments by quadrature."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError(f"horizon delta must be positive and finite; got {delta}")
    probe = np.linspace(delta / 64.0, delta, 32)
    if np.any(np.asarray(rho(probe)) < 0):
        raise ValueError("custom kernels must be nonnegative on (0, delta]")
    return Kernel(variant="custom", delta=float(delta), rho=rho, normalized=False)
