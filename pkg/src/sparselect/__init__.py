"""Multi-penalty l1 regularization with sparsity-level-guided penalty selection."""

from .experiments import (ExperimentConfig, Metrics, build_problem,
                          run_experiment, sensitivity_sweep)
from .fidelity import (CompositePlan, CompositePlanRequired, FilteredLS,
                       HingeComposite, LeastSquares, OrthogonalLS,
                       make_composite_plan, prox_fidelity, subgradient_residual)
from .problem import Problem
from .prox import (block_soft_threshold, clear_factor_cache,
                   conjugate_prox_from_primal, project_constraint, prox_hinge,
                   prox_filtered_quadratic, prox_quadratic,
                   prox_quadratic_orthogonal, soft_threshold)
from .selector import (AssumptionReport, CertificateTable, NotBlockSeparableError,
                       SelectionResult, SelectorConfig, certificates,
                       closed_form_select, count_sparsity, select,
                       sparsity_pattern_check, update_lambda, verify_assumptions)
from .signals import (add_awgn, build_daubechies_matrix, build_first_difference,
                      build_highpass_filter, daubechies_filter, gen_csd_signal,
                      gen_doppler, wavelet_block_sizes)
from .solver import (ConditionReport, DivergenceError, FppaParams, FppaResult,
                     FppaState, check_convergence_condition,
                     fixed_point_residuals, solve)
from .transforms import (BlockLayout, DegenerateTransformError, TransformBlock,
                         TransformStack, assemble_stack, dense_block,
                         difference_block, identity_block, selector_block)

__version__ = "0.1.0"
