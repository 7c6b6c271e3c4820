"""Hit-ratio objectives and optimal placement solvers."""

from .core import (AccessModel, PlacementVector, SolveReport, as_counts, g_base,
                   g_sch1, g_sch2, grad_base, grad_sch1, grad_sch2, p_miss)
from .extras import femto_hit_probability, integerize, load_placement, save_placement, save_report
from .projection import project_capped_simplex
from .uaware import (SolverOptions, hessian_case1, hessian_case2, solve_u_aware_case1,
                     solve_u_aware_case2)
from .waterfill import (analytic_gain_case1, base_miss_rate, interior_bounds, kkt_residual,
                        solve_baseline, waterfill)

__all__ = [
    'AccessModel', 'PlacementVector', 'SolveReport', 'SolverOptions',
    'as_counts', 'p_miss', 'g_base', 'g_sch1', 'g_sch2',
    'grad_base', 'grad_sch1', 'grad_sch2',
    'solve_baseline', 'waterfill', 'kkt_residual', 'interior_bounds',
    'base_miss_rate', 'analytic_gain_case1',
    'solve_u_aware_case1', 'solve_u_aware_case2', 'hessian_case1', 'hessian_case2',
    'project_capped_simplex', 'femto_hit_probability', 'integerize',
    'save_placement', 'load_placement', 'save_report',
]
