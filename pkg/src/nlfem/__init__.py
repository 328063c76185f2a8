"""Semi-analytic 1D finite elements for nonlocal diffusion operators.

Stiffness matrices on arbitrary nonuniform meshes are assembled exactly
(panel-moment contraction, no quadrature error for power-law and box
kernels), with closed fast paths for uniform meshes (Toeplitz), horizons
below the smallest element, and the infinite-horizon fractional limit.
Solvers cover constrained-value, shifted/refraction, eigenvalue and
phase-field problems; the studies module reproduces the convergence,
limiting-case and conditioning experiments.
"""

from .mesh import (Mesh1D, MeshSpec, MeshStats, generate_mesh, mesh_stats,
                   uniform_mesh, graded_boundary_mesh, graded_center_mesh,
                   geometric_mesh, shishkin_mesh)
from .kernels import (Kernel, fractional, box, fractional_infinite,
                      truncated_infinite, custom_kernel, fractional_constant)
from .assembly import (StiffnessMatrix, MassMatrix, interaction_cubic,
                       stencil_weights, LocalGeometry, local_geometry,
                       stiffness_entry, assemble_stiffness, uniform_profile,
                       toeplitz_coefficients, assemble_toeplitz,
                       assemble_local, assemble_small_horizon,
                       assemble_infinite_horizon, assemble_truncated_infinite,
                       mass_matrix, small_horizon_coefficient)
from .oracle import (QuadratureSpec, entry_bruteforce, apply_nonlocal,
                     exact_fractional_poisson)
from .solve import (BvpProblem, AllenCahnProblem, Solution, AllenCahnResult,
                    ErrorNorms, SpectrumSummary, rhs_from_function, solve_bvp,
                    solve_helmholtz, eig_generalized, condition_and_extremes,
                    allen_cahn_run, error_norms)
from .studies import (RateFit, StudyReport, estimate_rates, resolve_function,
                      forcing_from_reference)

__version__ = "0.1.0"
