"""Grids, banded linear solves and a damped Newton iteration.

Everything here is a pure function of its inputs. The linear algebra is
restricted to what the solvers need: tridiagonal systems for 1-D and radial
problems and 5-point sparse systems on tensor grids in 2-D.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .exceptions import InvalidArgument, NoConvergence, SingularMatrix

logger = logging.getLogger(__name__)

OUTSIDE = 0
INTERIOR = 1
BOUNDARY = 2


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes whose cell widths grow by ``grading_ratio``."""

    nodes: np.ndarray
    grading_ratio: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgument("a grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidArgument("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    def __len__(self):
        return self.nodes.size


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid with a per-node flag (outside / interior / boundary).

    ``mask`` has shape ``(len(x_grid), len(y_grid))``; values ``>= BOUNDARY``
    are boundary nodes (callers may use distinct codes per boundary piece).
    """

    x_grid: Grid1D
    y_grid: Grid1D
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = (len(self.x_grid), len(self.y_grid))
        mask = self.mask
        if mask is None:
            mask = np.full(shape, INTERIOR, dtype=np.int16)
            mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = BOUNDARY
        mask = np.asarray(mask, dtype=np.int16)
        if mask.shape != shape:
            raise InvalidArgument(f"mask shape {mask.shape} does not match grid {shape}")
        bad = interior_without_support(mask)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise InvalidArgument(f"interior node ({i}, {j}) has an outside neighbour")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.mask.shape


def interior_without_support(mask: np.ndarray) -> np.ndarray:
    """Interior nodes that have an axis neighbour outside the domain (or off-grid)."""
    inside = mask != OUTSIDE
    padded = np.pad(inside, 1, constant_values=False)
    supported = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                 & padded[1:-1, :-2] & padded[1:-1, 2:])
    return (mask == INTERIOR) & ~supported


@dataclass(frozen=True)
class NewtonConfig:
    max_iterations: int = 50
    residual_tolerance: float = 1e-11
    damping_floor: float = 1.0 / 1024

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise InvalidArgument("max_iterations must be positive")
        if not self.residual_tolerance > 0:
            raise InvalidArgument("residual_tolerance must be > 0")
        if not 0 < self.damping_floor <= 1:
            raise InvalidArgument("damping_floor must lie in (0, 1]")


def make_graded_grid(a: float, b: float, n: int, ratio: float = 1.0) -> Grid1D:
    """Grid on ``[a, b]`` with ``n`` nodes and geometric cell widths.

    Consecutive widths satisfy ``w[i+1] = ratio * w[i]``; ``ratio < 1``
    concentrates nodes near ``b``, ``ratio > 1`` near ``a``.
    """
    if not a < b:
        raise InvalidArgument(f"need a < b, got a={a}, b={b}")
    if int(n) != n or n < 2:
        raise InvalidArgument(f"need an integer n >= 2, got {n}")
    if not ratio > 0:
        raise InvalidArgument(f"grading ratio must be positive, got {ratio}")
    n = int(n)
    powers = ratio ** np.arange(n - 1, dtype=float)
    widths = (b - a) * powers / powers.sum()
    nodes = np.empty(n)
    nodes[0] = a
    nodes[1:] = a + np.cumsum(widths)
    nodes[-1] = b
    return Grid1D(nodes, float(ratio))


def geometric_ratio_for(a: float, b: float, n: int, last_width: float) -> float:
    """Grading ratio giving a grid on [a, b] whose final cell has ``last_width``."""
    from scipy.optimize import brentq

    length = b - a
    if not 0 < last_width < length:
        raise InvalidArgument("last_width must lie in (0, b - a)")
    m = n - 1

    def excess(log_ratio):
        r = np.exp(log_ratio)
        powers = r ** np.arange(m, dtype=float)
        return np.log(length * powers[-1] / powers.sum()) - np.log(last_width)

    if abs(excess(0.0)) < 1e-14:
        return 1.0
    lo, hi = (-50.0 / m, 0.0) if excess(0.0) > 0 else (0.0, 50.0 / m)
    return float(np.exp(brentq(excess, lo, hi, xtol=1e-15)))


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve ``T x = rhs`` for the tridiagonal ``T``.

    ``lower`` and ``upper`` hold the sub- and super-diagonal (length n-1).
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.size != n - 1 or upper.size != n - 1 or rhs.shape[0] != n:
        raise InvalidArgument("inconsistent tridiagonal system sizes")
    if n == 1:
        if diag[0] == 0 or not np.isfinite(diag[0]):
            raise SingularMatrix("zero pivot")
        return rhs / diag[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    try:
        x = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(f"tridiagonal factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("tridiagonal solve produced non-finite values (pivot underflow)")
    return x


def tridiagonal_parts(matrix):
    """Split a sparse matrix of bandwidth one into (lower, diag, upper)."""
    m = scipy.sparse.dia_matrix(matrix)
    n = m.shape[0]
    parts = {0: np.zeros(n), -1: np.zeros(n - 1), 1: np.zeros(n - 1)}
    for offset, data in zip(m.offsets, m.data):
        if offset == 0:
            parts[0] = data[:n].copy()
        elif offset == -1:
            parts[-1] = data[: n - 1].copy()
        elif offset == 1:
            parts[1] = data[1:n].copy()
        elif np.any(data):
            return None
    return parts[-1], parts[0], parts[1]


def _is_tridiagonal(matrix) -> bool:
    coo = scipy.sparse.coo_matrix(matrix)
    return coo.nnz == 0 or int(np.max(np.abs(coo.row - coo.col))) <= 1


def factorize(jac) -> Callable:
    """Return ``solve(rhs)`` for any Jacobian form accepted by :func:`solve_linear`."""
    if isinstance(jac, tuple):
        parts = tuple(np.asarray(p, dtype=float) for p in jac)
        return lambda rhs: solve_tridiagonal(*parts, rhs)
    if scipy.sparse.issparse(jac):
        if jac.shape[0] > 1 and _is_tridiagonal(jac):
            parts = tridiagonal_parts(jac)
            return lambda rhs: solve_tridiagonal(*parts, rhs)
        try:
            lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(jac))
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc

        def solve(rhs):
            x = lu.solve(np.asarray(rhs, dtype=float))
            if not np.all(np.isfinite(x)):
                raise SingularMatrix("sparse solve produced non-finite values")
            return x

        return solve
    jac = np.asarray(jac, dtype=float)
    if jac.ndim == 0:
        if jac == 0:
            raise SingularMatrix("zero derivative")
        return lambda rhs: np.asarray(rhs, dtype=float) / jac
    try:
        lu_piv = scipy.linalg.lu_factor(jac, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularMatrix(str(exc)) from exc
    if np.any(np.diag(lu_piv[0]) == 0):
        raise SingularMatrix("singular dense Jacobian")
    return lambda rhs: scipy.linalg.lu_solve(lu_piv, rhs)


def solve_linear(jac, rhs) -> np.ndarray:
    """Solve with whichever Jacobian representation a residual supplies.

    Accepted forms: a scalar, a ``(lower, diag, upper)`` tuple, a scipy
    sparse matrix (tridiagonal fast path, sparse LU otherwise) or a dense
    array.
    """
    return factorize(jac)(rhs)


def _norm(r) -> float:
    return float(np.max(np.abs(r))) if np.size(r) else 0.0


def newton_solve(
    residual: Callable,
    jacobian: Callable,
    initial,
    cfg: NewtonConfig | None = None,
    admissible: Callable | None = None,
    polish: int = 0,
):
    """Damped Newton iteration for ``residual(x) = 0``.

    The step is halved while the max-norm of the residual fails to decrease
    (or while ``admissible(x)`` is false); the iteration gives up once the
    damping factor would drop below ``cfg.damping_floor``. After the
    tolerance is met, up to ``polish`` further full steps are taken while they
    do not increase the residual, which drives converged iterates to roundoff.

    Raises
    ------
    NoConvergence
        After ``cfg.max_iterations`` iterations or when damping is exhausted.
    """
    cfg = cfg or NewtonConfig()
    x = np.array(initial, dtype=float, copy=True)
    solver = None
    r = residual(x)
    rnorm = _norm(r)
    for it in range(int(cfg.max_iterations)):
        if rnorm <= cfg.residual_tolerance:
            return _polish(residual, jacobian, x, rnorm, polish, solver)
        solver = factorize(jacobian(x))
        dx = solver(-np.asarray(r, dtype=float))
        lam = 1.0
        while True:
            trial = x + lam * dx
            ok = admissible is None or bool(admissible(trial))
            if ok:
                r_trial = residual(trial)
                r_trial_norm = _norm(r_trial)
                if np.isfinite(r_trial_norm) and r_trial_norm < rnorm:
                    break
            lam *= 0.5
            if lam < cfg.damping_floor:
                raise NoConvergence(
                    f"damping exhausted at iteration {it} (residual {rnorm:.3e})",
                    residual=rnorm, iterations=it)
        x, r, rnorm = trial, r_trial, r_trial_norm
        logger.debug("newton iteration %d: residual %.3e (damping %.4g)", it, rnorm, lam)
    if rnorm <= cfg.residual_tolerance:
        return _polish(residual, jacobian, x, rnorm, polish, solver)
    raise NoConvergence(
        f"no convergence after {cfg.max_iterations} iterations (residual {rnorm:.3e})",
        residual=rnorm, iterations=int(cfg.max_iterations))


def _polish(residual, jacobian, x, rnorm, steps, solver=None):
    # chord steps with the last factorization; the residual is already tiny
    for _ in range(steps):
        if rnorm == 0:
            break
        try:
            if solver is None:
                solver = factorize(jacobian(x))
            trial = x + solver(-np.asarray(residual(x), dtype=float))
        except SingularMatrix:
            break
        tnorm = _norm(residual(trial))
        if not tnorm <= rnorm:
            break
        x, rnorm = trial, tnorm
    return x


def finite_difference_jacobian(residual: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Dense central-difference Jacobian, used to audit analytic Jacobians."""
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(residual(x), dtype=float)
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step * max(1.0, abs(x[j]))
        jac[:, j] = (np.asarray(residual(x + e)) - np.asarray(residual(x - e))) / (2 * e[j])
    return jac


def as_dense(jac) -> np.ndarray:
    """Dense copy of any Jacobian representation accepted by :func:`solve_linear`."""
    if isinstance(jac, tuple):
        lower, diag, upper = (np.asarray(p, dtype=float) for p in jac)
        return np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
    if scipy.sparse.issparse(jac):
        return jac.toarray()
    return np.atleast_2d(np.asarray(jac, dtype=float))


def worker_count() -> int:
    """Thread cap from ``BLOWUP_THREADS`` (default 1, i.e. sequential)."""
    raw = os.environ.get("BLOWUP_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidArgument(f"BLOWUP_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise InvalidArgument("BLOWUP_THREADS must be at least 1")
    return n


def parallel_map(fn: Callable, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]`` on a thread pool; result order follows ``items``."""
    items = list(items)
    workers = worker_count() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
