"""Radial large solutions of ``-Delta u + u^q = 0``.

``exterior_singular`` is the explicit singular solution outside the origin.
``solve_ball_large`` computes the large solution of the ball as the monotone
limit of Dirichlet problems with boundary value ``k`` on a grid graded
toward the sphere.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgument, LadderNotConverged, MonotonicityViolation
from .mesh import radial_nodes
from .numcore import Grid1D, NewtonConfig, geometric_ratio_for, make_graded_grid, newton_solve
from .profile import lambda_nq, similarity_exponent, subcritical

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (1e1, 1e2, 1e3, 1e4)


def exterior_singular(N: int, q: float, x_norm) -> float:
    """``lambda_nq * |x|**(-2/(q-1))``."""
    lam = lambda_nq(N, q)
    x_norm = np.asarray(x_norm, dtype=float)
    if np.any(x_norm <= 0):
        raise InvalidArgument("the singular solution is undefined at the origin")
    out = lam * x_norm ** (-similarity_exponent(q))
    return out if out.ndim else float(out)


def ball_grid(radius: float = 1.0, n: int = 800, last_width: float = 1e-8, gap: float = 1e-9) -> Grid1D:
    """Grid on ``[0, radius*(1-gap)]`` with cells shrinking geometrically toward the sphere."""
    b = radius * (1 - gap)
    ratio = geometric_ratio_for(0.0, b, n, last_width * radius)
    return make_graded_grid(0.0, b, n, ratio)


@dataclass(frozen=True)
class RadialProblem:
    N: int
    q: float
    radius: float = 1.0
    grid: Grid1D | None = None
    k_ladder: tuple = DEFAULT_LADDER

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgument("N must be a positive integer")
        if not self.q > 1:
            raise InvalidArgument("q must exceed 1")
        if not self.radius > 0:
            raise InvalidArgument("radius must be positive")
        grid = self.grid if self.grid is not None else ball_grid(self.radius)
        if grid.nodes[0] != 0 or not grid.nodes[-1] < self.radius:
            raise InvalidArgument("ball grid must start at 0 and stop short of the radius")
        ladder = tuple(float(k) for k in self.k_ladder)
        if len(ladder) < 1 or np.any(np.diff(ladder) <= 0) or ladder[0] <= 0:
            raise InvalidArgument("k_ladder must be strictly increasing and positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "k_ladder", ladder)


@dataclass(frozen=True)
class RadialSolution:
    problem: RadialProblem
    values_per_k: np.ndarray
    limit_values: np.ndarray
    center_value: float
    ladder: tuple = ()
    increments: tuple = field(default=())

    @property
    def r(self) -> np.ndarray:
        return self.problem.grid.nodes


def _solve_level(nodes, q, k, cfg, initial=None):
    A, B = nodes.operator
    lower, diag, upper = nodes.tridiagonal
    bvec = np.asarray(B @ np.array([k])).ravel()

    def solve(scale, start):
        # rows in units of u relative to ``scale``; keeps roundoff near the sphere at O(eps)
        w = 1.0 / ((diag + 1.0) * scale)

        def residual(u):
            return w * (A @ u + bvec + np.abs(u) ** (q - 1) * u)

        def jacobian(u):
            return w[1:] * lower, w * (diag + q * np.abs(u) ** (q - 1)), w[:-1] * upper

        return newton_solve(residual, jacobian, start, cfg, polish=2)

    start = np.full(nodes.unknown_index.size, float(k)) if initial is None else initial
    u = solve(np.full_like(diag, float(k)), start)
    # second pass weighted by the solution itself, so interior values are resolved to
    # relative precision rather than to precision relative to k
    return solve(np.maximum(1.0, np.abs(u)), u)


def extrapolate_ladder(levels: np.ndarray) -> np.ndarray:
    """Geometric (Aitken-type) extrapolation of a monotone ladder, never below the top level."""
    top = levels[-1]
    if len(levels) < 3:
        return top.copy()
    d1 = levels[-1] - levels[-2]
    d0 = levels[-2] - levels[-3]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(d0 > 0, d1 / d0, 0.0)
    rho = np.clip(np.nan_to_num(rho), 0.0, 0.9)
    return top + np.maximum(d1, 0.0) * rho / (1 - rho)


def solve_ball_large(p: RadialProblem, cfg: NewtonConfig | None = None, *,
                     tolerance: float = 1e-4, interior_fraction: float = 0.9,
                     extend: bool = True, max_level: float = 1e14) -> RadialSolution:
    """Large solution of the ball by the boundary-value ladder ``k -> infinity``.

    Convergence is measured on ``r <= interior_fraction * radius`` as the
    nodewise relative increment between the two highest levels. With
    ``extend=True`` further decades are appended to the ladder (up to
    ``max_level``) until the increment drops below ``tolerance``.
    """
    cfg = cfg or NewtonConfig(max_iterations=200, residual_tolerance=1e-13)
    nodes = radial_nodes(p.grid, p.N)
    r = p.grid.nodes
    sub = r[nodes.unknown_index] <= interior_fraction * p.radius
    ladder = list(p.k_ladder)
    levels = []
    increments = []
    u = None
    i = 0
    while True:
        k = ladder[i]
        u = _solve_level(nodes, p.q, k, cfg)
        full = np.append(u, k)
        if levels:
            viol = float(np.max((levels[-1] - full) / np.maximum(1.0, np.abs(full))))
            if viol > 1e-12:
                raise MonotonicityViolation(f"ladder decreased by {viol:.3e} at k={k:g}", viol)
            inc = float(np.max(np.abs(full[:-1][sub] - levels[-1][:-1][sub]) / np.abs(full[:-1][sub])))
            increments.append(inc)
            logger.debug("ball ladder k=%g increment %.3e", k, inc)
        levels.append(full)
        i += 1
        if i < len(ladder):
            continue
        if increments and increments[-1] <= tolerance:
            break
        if extend and ladder[-1] * 10 <= max_level:
            ladder.append(ladder[-1] * 10)
            continue
        raise LadderNotConverged(
            f"ladder increment {increments[-1] if increments else float('nan'):.3e} "
            f"exceeds {tolerance:g} at k={ladder[-1]:g}",
            increments[-1] if increments else float("nan"))
    levels = np.array(levels)
    limit = extrapolate_ladder(levels)
    return RadialSolution(p, levels, limit, float(limit[0]), tuple(ladder), tuple(increments))


def ball_rescaled_bound(N: int, q: float, rho, sol: RadialSolution):
    """Stationary envelope ``rho**(-2/(q-1)) * P(0)`` of the ball of radius ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise InvalidArgument("rho must be positive")
    if sol.problem.N != N or sol.problem.q != q:
        raise InvalidArgument("solution was computed for a different (N, q)")
    scale = sol.problem.radius ** similarity_exponent(q)
    out = sol.center_value * scale * rho ** (-similarity_exponent(q))
    return out if out.ndim else float(out)


def first_integral_center(q: float, radius: float = 1.0) -> float:
    """Centre value of the 1-D large solution from the first integral of ``u'' = u^q``.

    With ``u(0) = p`` the blow-up distance is
    ``p**((1-q)/2) * int_1^inf ds / sqrt(2 (s**(q+1) - 1) / (q+1))``.
    """
    from scipy.integrate import quad

    def integrand(s):
        return 1.0 / np.sqrt(2.0 * (s ** (q + 1) - 1.0) / (q + 1))

    # split the integrable endpoint singularity from the algebraic tail
    head, _ = quad(integrand, 1.0, 2.0, limit=200)
    tail, _ = quad(integrand, 2.0, np.inf, limit=200)
    total = head + tail
    return float((total / radius) ** (2.0 / (q - 1)))


def export_radial(sol: RadialSolution, csv_path, json_path=None) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r"] + [f"u_k{j + 1}" for j in range(len(sol.ladder))] + ["limit"])
        for i, r in enumerate(sol.r):
            writer.writerow([repr(float(r))] + [repr(float(v)) for v in sol.values_per_k[:, i]]
                            + [repr(float(sol.limit_values[i]))])
    if json_path is None:
        json_path = csv_path.with_suffix(".json")
    N, q = sol.problem.N, sol.problem.q
    summary = {"N": N, "q": q, "radius": sol.problem.radius, "center_value": sol.center_value,
               "lambda_nq": lambda_nq(N, q) if subcritical(N, q) else None,
               "ladder": list(sol.ladder)}
    Path(json_path).write_text(json.dumps(summary, indent=2) + "\n")


class BallLargeSolution(BaseEstimator):
    """Estimator wrapper around :func:`solve_ball_large`; ``predict`` interpolates u(r)."""

    def __init__(self, N=1, q=3.0, radius=1.0, n_nodes=800, k_ladder=DEFAULT_LADDER,
                 tolerance=1e-4):
        self.N = N
        self.q = q
        self.radius = radius
        self.n_nodes = n_nodes
        self.k_ladder = k_ladder
        self.tolerance = tolerance

    def fit(self, X=None, y=None):
        grid = ball_grid(float(self.radius), int(self.n_nodes))
        problem = RadialProblem(int(self.N), float(self.q), float(self.radius), grid,
                                tuple(self.k_ladder))
        self.solution_ = solve_ball_large(problem, tolerance=float(self.tolerance))
        self.center_value_ = self.solution_.center_value
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X, ensure_2d=False)
        r = np.abs(np.ravel(X))
        if np.any(r >= self.radius):
            raise InvalidArgument("points must lie inside the ball")
        return np.interp(r, self.solution_.r, self.solution_.limit_values)
