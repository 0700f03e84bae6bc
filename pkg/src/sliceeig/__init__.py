"""Spectrum-slicing eigensolvers for sparse symmetric matrices and pencils.

All eigenpairs of ``A x = lambda B x`` in an interval are computed by
splitting the interval with a spectral-density estimate and running
polynomial- or rational-filtered Lanczos on each slice.
"""

from .dos import DosConfig, DosCurve, dos_count, dos_generalized, kpm_dos, lan_dos
from .errors import (ConvergenceError, DimensionError, FactorizationError, MatrixMarketError,
                     NotSPDError, SliceEigError, SubspaceTooSmallError, SymmetryError)
from .krylov import InnerProduct, SpectralBounds, lan_bounds, lan_tr_bounds, lanczos_run
from .matrix import (CsrMatrix, gen_laplacian, laplacian_analytic_eigs, read_matrix_market,
                     write_matrix_market)
from .operators import (ChebSolver, Counters, ShiftedFactor, SpdFactor, factor_shifted, factor_spd,
                        ls_pol_approx)
from .pipeline import RunManifest, RunReport, run_solve
from .polyfilter import PolynomialFilter, apply_pol, find_pol
from .ratfilter import RationalFilter, apply_rat, find_ratf
from .slicer import SliceSet, slice_spectrum
from .solvers import (DeflationSet, EigenResults, SolverConfig, cheb_lan_nr, cheb_lan_tr, cheb_si,
                      rat_lan_nr, rat_lan_tr, rayleigh_and_residual, transform_with_cholesky)

__version__ = "0.1.0"

__all__ = [
    "ChebSolver", "ConvergenceError", "Counters", "CsrMatrix", "DeflationSet", "DimensionError",
    "DosConfig", "DosCurve", "EigenResults", "FactorizationError", "InnerProduct",
    "MatrixMarketError", "NotSPDError", "PolynomialFilter", "RationalFilter", "RunManifest",
    "RunReport", "ShiftedFactor", "SliceEigError", "SliceSet", "SolverConfig", "SpdFactor",
    "SpectralBounds", "SubspaceTooSmallError", "SymmetryError", "apply_pol", "apply_rat",
    "cheb_lan_nr", "cheb_lan_tr", "cheb_si", "dos_count", "dos_generalized", "factor_shifted",
    "factor_spd", "find_pol", "find_ratf", "gen_laplacian", "kpm_dos", "lan_bounds", "lan_dos",
    "lan_tr_bounds", "lanczos_run", "laplacian_analytic_eigs", "ls_pol_approx", "rat_lan_nr",
    "rat_lan_tr", "rayleigh_and_residual", "read_matrix_market", "run_solve", "slice_spectrum",
    "transform_with_cholesky", "write_matrix_market",
]
