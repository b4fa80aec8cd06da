"""Unfitted divergence-free Stokes discretization on level-set domains.

The package solves the Stokes equations on a domain given implicitly as
{phi < 0} inside a fixed background box.  The background mesh never fits the
boundary: a barycentric (Alfeld) split of the cut cells carries an
isoparametric Scott-Vogelius pair, so the discrete velocity is pointwise
divergence free, with Nitsche boundary terms, a pressure-trace multiplier
and ghost penalties supplying stability on the cut band.

Typical use goes through the study drivers:

    from cutstokes import StudyConfig, run_convergence
    rows = run_convergence(StudyConfig(example=1, levels=3))

or, for a custom geometry, through the level pipeline in `harness.solve_level`
whose stages (mesh -> level set -> deformation -> quadrature -> spaces ->
forms -> solve -> postprocess) are all importable from their modules.
"""

from .meshing import (MacroMesh, AlfeldMesh, ElementSets,
                      build_background_mesh, refine_uniform, alfeld_split,
                      classify_elements, EmptyActiveDomainError)
from .geometry import (LevelSet, DiscreteLevelSet, IsoDeformation,
                       CutQuadrature, GeometryError, interpolate_p1,
                       build_deformation, build_quadratures, cut_subdivide)
from .spaces import (VelocitySpace, PressureSpace, MultiplierSpace,
                     ContinuousPressureSpace, VelocityField, ScalarField,
                     interpolate_velocity, interpolate_scalar)
from .forms import (FormParams, SaddleSystem, assemble_a, assemble_b,
                    assemble_c, assemble_ghost_penalty, assemble_j,
                    assemble_rhs, pressure_mean_vector, build_saddle_system)
from .solver import (Solution, SingularSystemError, solve_saddle,
                     solve_direct, condition_estimate)
from .postprocess import recover_pressure
from .harness import (ExactCase, StudyConfig, ResultRow, exact_example1,
                      exact_example2, solve_level, run_convergence,
                      run_interface_sweep, compute_eoc, fit_rate)

__version__ = "0.1.0"

__all__ = [
    "MacroMesh", "AlfeldMesh", "ElementSets", "build_background_mesh",
    "refine_uniform", "alfeld_split", "classify_elements",
    "EmptyActiveDomainError",
    "LevelSet", "DiscreteLevelSet", "IsoDeformation", "CutQuadrature",
    "GeometryError", "interpolate_p1", "build_deformation",
    "build_quadratures", "cut_subdivide",
    "VelocitySpace", "PressureSpace", "MultiplierSpace",
    "ContinuousPressureSpace", "VelocityField", "ScalarField",
    "interpolate_velocity", "interpolate_scalar",
    "FormParams", "SaddleSystem", "assemble_a", "assemble_b", "assemble_c",
    "assemble_ghost_penalty", "assemble_j", "assemble_rhs",
    "pressure_mean_vector", "build_saddle_system",
    "Solution", "SingularSystemError", "solve_saddle", "solve_direct",
    "condition_estimate",
    "recover_pressure",
    "ExactCase", "StudyConfig", "ResultRow", "exact_example1",
    "exact_example2", "solve_level", "run_convergence",
    "run_interface_sweep", "compute_eoc", "fit_rate",
    "__version__",
]
