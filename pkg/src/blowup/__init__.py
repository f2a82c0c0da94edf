"""Blow-up (large) solutions of ``u_t - Δu + |u|^{q-1} u = 0``.

Modules
-------
numcore      grids, tridiagonal solves, damped Newton
profile      self-similar singular profile ``H_N`` and ``V_N``
elliptic     radial large solutions of ``-Δu + u^q = 0``
parabolic    monotone backward-Euler solver, truncation ladders, exhaustions
graphdomain  graph domains in the plane and the shifted comparison problems
verify       check suites and reports
cli          ``blowup`` command line
"""

from .elliptic import BallLargeSolution, RadialProblem, solve_ball_large
from .exceptions import BlowupError
from .parabolic import DomainSpec, EvolveSpec, Field, evolve, k_ladder_limit
from .profile import ProfileParams, SelfSimilarProfile, evaluate_V, lambda_nq, solve_profile
from .verify import CheckResult, Report, run_suite

__version__ = "0.1.0"

__all__ = [
    "BallLargeSolution", "BlowupError", "CheckResult", "DomainSpec", "EvolveSpec", "Field",
    "ProfileParams", "RadialProblem", "Report", "SelfSimilarProfile", "evaluate_V", "evolve",
    "k_ladder_limit", "lambda_nq", "run_suite", "solve_ball_large", "solve_profile",
]
