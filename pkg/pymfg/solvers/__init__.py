from .fbsde import (CostEstimate, DecouplingField, FbsdeSolverError, LatticeConfig, PathEnsemble, evaluate_cost,
                    simulate_forward, solve_frozen_fbsde)
from .fixedpoint import (FixedPointConfig, MfgSolution, RegularityReport, check_value_function, compare_solutions,
                         phi_map, solve_mfg)
from .hamiltonian import HamiltonianSolverError, alpha_bound, hamiltonian_value, minimize_hamiltonian
from .lq_oracle import LqOracleError, RiccatiSolution, lq_cost, solve_lq_riccati
from .smp import FeedbackPerturbation, SmpGapReport, random_feedback_perturbations, smp_gap_check

__all__ = [
    # hamiltonian.py
    'HamiltonianSolverError',
    'hamiltonian_value',
    'minimize_hamiltonian',
    'alpha_bound',
    # fbsde.py
    'LatticeConfig',
    'DecouplingField',
    'PathEnsemble',
    'CostEstimate',
    'FbsdeSolverError',
    'solve_frozen_fbsde',
    'simulate_forward',
    'evaluate_cost',
    # smp.py
    'FeedbackPerturbation',
    'SmpGapReport',
    'random_feedback_perturbations',
    'smp_gap_check',
    # fixedpoint.py
    'FixedPointConfig',
    'MfgSolution',
    'RegularityReport',
    'phi_map',
    'solve_mfg',
    'check_value_function',
    'compare_solutions',
    # lq_oracle.py
    'LqOracleError',
    'RiccatiSolution',
    'solve_lq_riccati',
    'lq_cost',
]
