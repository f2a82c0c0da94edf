"""Self-similar singular profile of the heat equation with absorption.

The profile ``H`` solves

    H'' + ((N-1)/r + r/2) H' + H/(q-1) - H^q = 0,   r > 0,

blowing up like ``lambda_nq * r**(-2/(q-1))`` at the origin and decaying like
``c * r**(2/(q-1)-N) * exp(-r**2/4)`` at infinity. It generates the singular
solution ``V(x, t) = t**(-1/(q-1)) * H(|x|/sqrt(t))``.

Numerically we write ``H = phi * Y`` where ``phi`` interpolates both
asymptotic regimes, and discretize the equation for ``Y`` in ``s = log r``
with three-point differences. ``Y`` is O(1) on the whole grid, so the
Newton iteration works on well-scaled unknowns.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (InsufficientNodes, InvalidArgument, NonpositiveSolution,
                         NoConvergence, OutOfRange, UnderflowTail)
from .numcore import Grid1D, NewtonConfig, make_graded_grid, newton_solve


def subcritical(N: int, q: float) -> bool:
    """True iff ``1 < q < N/(N-2)`` (no upper threshold when ``N <= 2``)."""
    if int(N) != N or N < 1:
        raise InvalidArgument(f"dimension must be a positive integer, got {N}")
    if not q > 1:
        raise InvalidArgument(f"exponent must exceed 1, got q={q}")
    if N <= 2:
        return True
    return q < N / (N - 2)


def lambda_nq(N: int, q: float) -> float:
    """Amplitude of the singular stationary solution ``lambda * |x|**(-2/(q-1))``."""
    if not subcritical(N, q):
        raise InvalidArgument(
            f"q={q} is supercritical for N={N}: need q < N/(N-2) = {N / (N - 2):g}")
    alpha = 2.0 / (q - 1.0)
    bracket = alpha * (2.0 * q / (q - 1.0) - N)
    if bracket <= 0:
        raise InvalidArgument(f"no singular solution for N={N}, q={q}")
    return float(bracket ** (1.0 / (q - 1.0)))


def similarity_exponent(q: float) -> float:
    return 2.0 / (q - 1.0)


def log_grid(r_min: float, r_max: float, n: int) -> Grid1D:
    """Geometric grid ``r_min * g**i``: uniform in ``log r``."""
    return make_graded_grid(r_min, r_max, n, (r_max / r_min) ** (1.0 / (n - 1)))


@dataclass(frozen=True)
class ProfileParams:
    N: int
    q: float
    r_min: float = 1e-3
    r_max: float = 12.0
    grid: Grid1D | None = None

    def __post_init__(self):
        if not subcritical(self.N, self.q):
            raise InvalidArgument(
                f"q={self.q} is supercritical for N={self.N}: "
                f"the profile requires q < N/(N-2) = {self.N / (self.N - 2):g}")
        if not 0 < self.r_min < 1 < self.r_max:
            raise InvalidArgument("need 0 < r_min < 1 < r_max")
        grid = self.grid if self.grid is not None else log_grid(self.r_min, self.r_max, 400)
        if abs(grid.a - self.r_min) > 1e-12 * self.r_min or abs(grid.b - self.r_max) > 1e-12 * self.r_max:
            raise InvalidArgument("profile grid must span [r_min, r_max]")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class Profile:
    params: ProfileParams
    values: np.ndarray
    lambda_fit: float = float("nan")
    c_fit: float = float("nan")
    scaled: np.ndarray | None = field(default=None, repr=False)

    @property
    def r(self) -> np.ndarray:
        return self.params.grid.nodes

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def q(self) -> float:
        return self.params.q

    def is_monotone_decreasing(self) -> bool:
        """Recorded diagnostic only; decrease of H is not part of the contract."""
        return bool(np.all(np.diff(self.values) < 0))


class _Coefficients:
    """Coefficients of the ``Y`` equation ``Y'' + P Y' + Q Y - S |Y|^(q-1) Y = 0`` in log r."""

    def __init__(self, N, q, r):
        alpha = similarity_exponent(q)
        beta = (2 * alpha - N) / 2
        r2 = r * r
        dlog = -alpha / r + 2 * beta * r / (1 + r2) - r / 2
        d2log = alpha / r2 + 2 * beta * (1 - r2) / (1 + r2) ** 2 - 0.5
        drift = (N - 1) / r + r / 2
        self.P = r * (2 * dlog + drift) - 1
        self.Q = r2 * (d2log + dlog ** 2 + drift * dlog + 1 / (q - 1))
        self.S = (1 + r2) ** (beta * (q - 1)) * np.exp(-(q - 1) * r2 / 4)
        self.phi = r ** (-alpha) * (1 + r2) ** beta * np.exp(-r2 / 4)
        # d(log Y)/d(log r) implied by the leading-order tail law
        self.robin = 2 * beta / (1 + r2[-1])


def solve_profile(params: ProfileParams, cfg: NewtonConfig | None = None) -> Profile:
    """Finite-difference solution of the profile equation on ``params.grid``.

    Dirichlet data ``H(r_min) = lambda * r_min**(-2/(q-1))`` at the inner
    cutoff; at ``r_max`` the logarithmic derivative matches the Gaussian tail,
    ``H'/H = -r/2 + (2/(q-1) - N)/r``.
    """
    cfg = cfg or NewtonConfig(max_iterations=100, residual_tolerance=1e-10)
    N, q = params.N, params.q
    r = params.grid.nodes
    n = r.size
    if n < 4:
        raise InsufficientNodes("profile grid needs at least 4 nodes")
    lam = lambda_nq(N, q)
    coef = _Coefficients(N, q, r)
    P, Q, S = coef.P, coef.Q, coef.S
    y_inner = lam * params.r_min ** (-similarity_exponent(q)) / coef.phi[0]

    s = np.log(r)
    hm = np.diff(s)[:-1]
    hp = np.diff(s)[1:]
    hsum = hp + hm
    h = s[-1] - s[-2]
    g = coef.robin
    Pi, Qi, Si = P[1:-1], Q[1:-1], S[1:-1]
    c_lo = 2 / (hm * hsum) - Pi * hp / (hm * hsum)
    c_up = 2 / (hp * hsum) + Pi * hm / (hp * hsum)
    c_mid = -2 / (hp * hm) + Pi * (hp - hm) / (hp * hm)

    def full(y):
        return np.concatenate(([y_inner], y))

    def residual(y):
        Y = full(y)
        res = np.empty(n - 1)
        Ym, Yc, Yp = Y[:-2], Y[1:-1], Y[2:]
        res[:-1] = c_lo * Ym + c_mid * Yc + c_up * Yp + Qi * Yc - Si * np.abs(Yc) ** (q - 1) * Yc
        # ghost node eliminated with the Robin condition
        yl, yl2 = Y[-1], Y[-2]
        res[-1] = ((2 * yl2 - 2 * yl + 2 * h * g * yl) / h ** 2 + P[-1] * g * yl + Q[-1] * yl
                   - S[-1] * abs(yl) ** (q - 1) * yl)
        return res

    def jacobian(y):
        Y = full(y)
        Yc = Y[1:-1]
        diag = np.empty(n - 1)
        diag[:-1] = c_mid + Qi - q * Si * np.abs(Yc) ** (q - 1)
        diag[-1] = -2 / h ** 2 + 2 * g / h + P[-1] * g + Q[-1] - q * S[-1] * abs(Y[-1]) ** (q - 1)
        lower = np.concatenate((c_lo[1:], [2 / h ** 2]))
        return lower, diag, c_up.copy()

    # unknown normalised by the inner value, rows scaled by their mesh factor,
    # so the tolerance is relative and roundoff stays O(eps) for q near 1
    weights = np.concatenate((hm * hp / 2, [h * h / 2]))

    def scaled_residual(z):
        return weights * residual(y_inner * z) / y_inner

    def scaled_jacobian(z):
        lower, diag, upper = jacobian(y_inner * z)
        return weights[1:] * lower, weights * diag, weights[:-1] * upper

    try:
        z = newton_solve(scaled_residual, scaled_jacobian, np.ones(n - 1), cfg,
                         admissible=lambda z: bool(np.all(z > 0)), polish=2)
        y = y_inner * z
    except NoConvergence as exc:
        if "damping" in str(exc):
            raise NonpositiveSolution(str(exc), exc.residual, exc.iterations) from exc
        raise
    Y = full(y)
    values = coef.phi * Y
    if not np.all(values > 0):
        raise NonpositiveSolution("profile lost positivity")
    values.setflags(write=False)
    Y.setflags(write=False)
    prof = Profile(params, values, scaled=Y)
    lam_fit = fit_inner_constant(prof)
    try:
        c_fit = fit_outer_constant(prof)
    except (InsufficientNodes, UnderflowTail):
        c_fit = float("nan")
    return Profile(params, values, lam_fit, c_fit, scaled=Y)


def fit_inner_constant(p: Profile, decade: float = 10.0) -> float:
    """Least-squares constant fitted to ``r**(2/(q-1)) * H`` over ``[r_min, 10 r_min]``."""
    r = p.r
    mask = r <= decade * r[0] * (1 + 1e-12)
    if mask.sum() < 5:
        raise InsufficientNodes(f"only {int(mask.sum())} nodes in the innermost decade; need 5")
    samples = r[mask] ** similarity_exponent(p.q) * p.values[mask]
    return float(np.mean(samples))


def fit_outer_constant(p: Profile, window: tuple[float, float] = (0.6, 0.9)) -> float:
    """Least-squares constant fitted to ``H * exp(r**2/4) * r**(N - 2/(q-1))`` on the tail window."""
    r = p.r
    lo, hi = window
    r_max = p.params.r_max
    mask = (r >= lo * r_max * (1 - 1e-12)) & (r <= hi * r_max * (1 + 1e-12))
    if mask.sum() < 5:
        raise InsufficientNodes(f"only {int(mask.sum())} nodes in the tail window; need 5")
    H = p.values[mask]
    if np.any(H < np.finfo(float).tiny):
        raise UnderflowTail("profile underflows inside the tail window")
    rw = r[mask]
    with np.errstate(over="raise"):
        try:
            samples = H * np.exp(rw * rw / 4) * rw ** (p.N - similarity_exponent(p.q))
        except FloatingPointError as exc:
            raise UnderflowTail("tail rescaling overflows") from exc
    return float(np.mean(samples))


def _interpolant(p: Profile) -> PchipInterpolator:
    interp = getattr(p, "_pchip", None)
    if interp is None:
        interp = PchipInterpolator(np.log(p.r), np.log(p.values), extrapolate=False)
        object.__setattr__(p, "_pchip", interp)
    return interp


def profile_value(p: Profile, r, extend: bool = False):
    """Interpolated ``H(r)``; monotone cubic in (log r, log H).

    With ``extend=True`` points outside the grid use the asymptotic laws
    (``lambda_fit * r**(-2/(q-1))`` inside, the Gaussian tail with ``c_fit``
    outside) instead of raising.
    """
    r = np.asarray(r, dtype=float)
    lo, hi = p.r[0], p.r[-1]
    slack = 1e-12
    below = r < lo * (1 - slack)
    above = r > hi * (1 + slack)
    if (below.any() or above.any()) and not extend:
        raise OutOfRange(f"similarity variable outside [{lo:g}, {hi:g}]")
    rc = np.clip(r, lo, hi)
    out = np.exp(_interpolant(p)(np.log(rc)))
    # exact node values where the clipped argument sits on a node
    if out.ndim:
        idx = np.searchsorted(p.r, rc)
        idx = np.clip(idx, 0, p.r.size - 1)
        hit = p.r[idx] == rc
        out[hit] = p.values[idx[hit]]
    if extend:
        alpha = similarity_exponent(p.q)
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            inner = p.lambda_fit * np.where(r > 0, r, np.inf) ** (-alpha)
            inner = np.where(r > 0, inner, np.inf)
            tail_c = p.c_fit if np.isfinite(p.c_fit) else p.values[-1] / (
                hi ** (alpha - p.N) * np.exp(-hi * hi / 4))
            outer = tail_c * np.maximum(r, hi) ** (alpha - p.N) * np.exp(-np.maximum(r, hi) ** 2 / 4)
        out = np.where(below, inner, np.where(above, outer, out))
    return out if out.ndim else float(out)


def evaluate_V(p: Profile, x_norm, t, extend: bool = False):
    """Singular self-similar solution ``t**(-1/(q-1)) * H(x_norm / sqrt(t))``."""
    x_norm = np.asarray(x_norm, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidArgument("time must be positive")
    if np.any(x_norm < 0):
        raise InvalidArgument("x_norm must be nonnegative")
    r = x_norm / np.sqrt(t)
    return t ** (-1.0 / (p.q - 1.0)) * profile_value(p, r, extend=extend)


def export_profile(p: Profile, csv_path, json_path=None) -> None:
    """Write ``r,H`` CSV (round-trip precision) and a JSON sidecar."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "H"])
        for r, h in zip(p.r, p.values):
            writer.writerow([repr(float(r)), repr(float(h))])
    if json_path is None:
        json_path = csv_path.with_suffix(".json")
    meta = {"N": p.N, "q": p.q, "r_min": p.params.r_min, "r_max": p.params.r_max,
            "lambda_fit": p.lambda_fit, "c_fit": p.c_fit}
    Path(json_path).write_text(json.dumps(meta, indent=2) + "\n")


def load_profile(csv_path, json_path=None) -> Profile:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    meta = json.loads(json_path.read_text())
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    params = ProfileParams(int(meta["N"]), float(meta["q"]), float(meta["r_min"]),
                           float(meta["r_max"]), Grid1D(data[:, 0]))
    return Profile(params, data[:, 1], float(meta["lambda_fit"]), float(meta["c_fit"]))


class SelfSimilarProfile(BaseEstimator):
    """Estimator wrapper: ``fit`` solves the profile, ``predict`` evaluates V.

    Parameters
    ----------
    N, q : dimension and absorption exponent (subcritical pair).
    r_min, r_max : cutoffs of the similarity variable.
    n_nodes : number of log-uniform grid nodes.

    ``predict`` takes an array of shape (m, 2) with columns ``(|x|, t)``.
    """

    def __init__(self, N=1, q=2.0, r_min=1e-3, r_max=12.0, n_nodes=400,
                 max_iterations=100, residual_tolerance=1e-10):
        self.N = N
        self.q = q
        self.r_min = r_min
        self.r_max = r_max
        self.n_nodes = n_nodes
        self.max_iterations = max_iterations
        self.residual_tolerance = residual_tolerance

    def fit(self, X=None, y=None):
        params = ProfileParams(int(self.N), float(self.q), float(self.r_min), float(self.r_max),
                               log_grid(float(self.r_min), float(self.r_max), int(self.n_nodes)))
        cfg = NewtonConfig(int(self.max_iterations), float(self.residual_tolerance))
        self.profile_ = solve_profile(params, cfg)
        self.lambda_ = self.profile_.lambda_fit
        self.c_ = self.profile_.c_fit
        return self

    def predict(self, X):
        check_is_fitted(self, "profile_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != 2:
            raise InvalidArgument("predict expects columns (|x|, t)")
        return evaluate_V(self.profile_, X[:, 0], X[:, 1])
