"""Deterministic spherical-harmonics moment solver for radiative transfer.

Pipeline: build the real-valued moment equations symbolically for any
truncation order (equations), compile them to staggered-grid finite
difference stencils via expression-tree manipulation (cas, stencil),
assemble and solve the sparse system in normal form (solver), and
post-process to collocated coefficient grids and radiance (solver,
problems, cli).
"""

from .cas import (CanonicalForm, Expr, FieldSample, Num, Sym, Unknown, add,
                  evaluate, expand_fold, factorize_canonical, mul,
                  parse_pretty, render, substitute)
from .equations import (EquationSet, build_cda, build_pn, dump_equations,
                        num_unknowns, sh_flat_index, sh_index_from_flat)
from .problems import (ProblemSpec, floor_sigma_t, make_checkerboard,
                       make_heterogeneous, make_pointsource,
                       mc_fluence_oracle)
from .sh import (assoc_legendre, complex_sh, coupling, lambda_l,
                 project_function, real_sh)
from .solver import (SolveReport, SolutionField, SparseSystem, assemble,
                     fluence, reconstruct_radiance, solve_normal_cg,
                     unstagger)
from .stencil import (StaggeredPlacement, StencilProgram, assign_placement,
                      compile_program, discretize, dump_program)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
