"""Mortar domain decomposition for mixed linear elasticity.

Mixed finite elements with weakly enforced stress symmetry on rectangular
multiblock grids, glued across (possibly non-matching) interfaces by a
coarse mortar displacement space.  The coupled problem is reduced to an SPD
interface system solved by conjugate gradients, optionally accelerated by a
precomputed multiscale stress basis.
"""

from .geometry import (Decomposition, InterfaceSegment, MortarGrid, Rect,
                       SubdomainMesh, build_checkerboard, build_mortar_grids)
from .interface import (CgReport, ConvergenceError, InterfaceOperatorM1,
                        InterfaceOperatorM2, MultiscaleBasis, build_msb,
                        cg_solve)
from .spaces import (MaterialField, MortarSpace, SubdomainSpace,
                     check_mortar_solvability)
from .subdomain import FloatingSubdomainError, MixedField, factorize
from .verification import (ErrorReport, ManufacturedCase, RunResult,
                           SolvabilityError, compute_errors, convergence_study,
                           fit_exponent, load_porosity, make_case,
                           recover_global, save_porosity, solve_method2,
                           solve_mortar, synthesize_porosity)

__version__ = "0.1.0"
