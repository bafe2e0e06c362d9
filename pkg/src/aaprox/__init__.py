"""Anderson-accelerated proximal gradient and Bregman proximal gradient."""

from . import _threads  # noqa: F401  (thread defaults before numpy loads BLAS)

from .anderson import (AAConfig, AndersonEngine, ExtrapolationCoefficients,
                       FixedPointReport, QrWindow, ResidualHistory,
                       enforce_coefficient_bound, run_anderson,
                       solve_coefficients)
from .bregman import (BregmanProblem, Kernel, UnsupportedProxError, bpg_step,
                      bregman_descent_check, bregman_distance, bregman_prox,
                      burg_kernel, energy_kernel, fermi_dirac_kernel,
                      hellinger_kernel, polynomial_kernel, run_bpg,
                      run_guarded_aa_bpg, shannon_kernel)
from .problems import (CompositeProblem, DomainError, KlLoss,
                       LeastSquaresLoss, LogisticLoss, NonsmoothTerm,
                       QuadraticLoss, box_indicator, kl_loss, l1_term,
                       least_squares_loss, logistic_loss, nonneg_indicator,
                       operator_norm_sq, project_box, project_nonneg,
                       prox_l1, simplex_indicator, zero_term)
from .solvers import (IterationTrace, SolveReport, descent_check, g_map,
                      pga_step, run_aa_pga, run_guarded_aa_pga,
                      run_nesterov_pga, run_pga)
from .counterexample import (closed_form_step, grad_f, run_counterexample,
                             value_f)
from .datasets import (DatasetMatrix, generate_kl_instance,
                       generate_logreg_instance, generate_nnls_instance,
                       load_dense_csv, parse_libsvm, write_libsvm)

__version__ = "0.1.0"
