"""Check suites over the profile, elliptic, parabolic and graph-domain layers.

Each check returns a :class:`CheckResult` with a signed ``max_violation``
(``<= 0`` when the inequality holds outright) and the tolerance it is judged
against. :func:`run_suite` bundles the checks of a named suite into a
:class:`Report` whose ``config_digest`` identifies the effective
configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .elliptic import RadialProblem, ball_grid, first_integral_center, solve_ball_large
from .exceptions import GridMisalignment, InvalidArgument, OutOfRange, UnknownSuite
from .graphdomain import (GraphDomain, check_translation_bounds, domination_violation,
                          find_delta_eps, graph_time_grid, nesting_report, sandwich_violation,
                          shifted_family, sigma_monotonicity, solve_large, solve_v_sigma,
                          solve_w_sigma, time_monotonicity, w6_violation)
from .mesh import interval_nodes
from .numcore import Grid1D
from .parabolic import (BoundaryMode, DomainSpec, EvolveSpec, Field, blowup, evolve, exhaustion,
                        fixed, interior_subgrid, k_ladder_limit, lateral_blowup_minima,
                        make_time_grid, maximal_solution, minimal_solution, u0_from,
                        unit_ball_evolution, universal_bound_violation)
from .profile import (Profile, ProfileParams, evaluate_V, fit_inner_constant, fit_outer_constant,
                      lambda_nq, log_grid, profile_value, similarity_exponent, solve_profile)

logger = logging.getLogger(__name__)

SUITES = ("profile", "elliptic", "parabolic", "section3", "section4", "all")

# anchors are the reference strings the checks are filed under
ANCHORS = {
    "lambda": 'Eq. (5.5), "an expression which exists since"',
    "profile": ('Eq. (5.2), "H\'\'+((N−1)/r + r/2)H\'+H/(q−1)−H^q=0"; boundary behavior Eq. (5.4) '
                '"λ_{N,q} r^{−2/(q−1)}(1+O(r))" and Eq. (5.3) "c_{N,q} r^{2/(q−1)−N} e^{−r²/4}"'),
    "inner": 'Eq. (5.4), "λ_{N,q} r^{−2/(q−1)}(1+O(r))"',
    "outer": 'Eq. (5.3), "c_{N,q} r^{2/(q−1)−N} e^{−r²/4}"',
    "ball": ('Eq. (3.7), "bounded from above by the unique solution P of"; construction by truncation '
             'mirrors §2 scheme (2.3), "increasing limit when k→∞"'),
    "ladder": 'scheme (2.3) and Theorem 2.2 proof, "increasing limit when k→∞"',
    "maximal": 'Theorem 2.2, "there exists a maximal solution"',
    "minimal": 'Theorem 2.3, "there exists a minimal nonnegative solution"',
    "evolve": 'Eq. (1.3), "∂ₜu−Δu+|u|^{q−1}u=0"',
    "scaling": '§5, "T_ℓ leaves the equation" (Eq. 5.7 context, "T_ℓ[u](x,t)=ℓ^{2/(q−1)}u(ℓx,ℓ²t)")',
    "contraction": 'Theorem 2.4, Eqs. (2.10)/(2.11), "ū_f−u_f ≤ ū₀−u₀"',
    "sandwich": 'Eq. (3.5) and §3 Step 1 heading, "Step 1: bilateral estimates"',
    "unit_ball": 'Eq. (3.4), "for r<ρ(x) the solution"; values u_1(0,s)',
    "nesting": ('houses φ_σ, "φ(x\')−σ/2 ≤ φ_σ(x\') ≤ φ(x\')+σ/2"; nesting Eq. (4.2), '
                '"G_{σ,R}⊂G_{σ\',R}⊂G_R⊂G\'_{σ\',R}⊂G\'_{σ,R}"'),
    "translation": ('Lemma 4.2, "For σ>σ\'>0 there holds"; (P3)(i) "v_σ(x\',x_N−2σ,t) ≤ u(x\',x_N,t)"; '
                    '(P3)(ii) "u ≤ v_σ(x,t)+w_σ(x,t)"'),
    "v_sigma": ('Eqs. (4.4)–(4.8); boundary law "lim v_σ = ∞" on Γ_{1,σ} and '
                '"v_σ(x,t)=0 on Γ_{2,σ}"'),
    "w_sigma": ('Eqs. (4.9)–(4.11); boundary law "(i) w_σ(x,t)=0" on Γ′_{1,σ} and '
                '"(i′) lim w_σ = ∞" on Γ′_{2,σ}'),
    "w_tilde": ('§4 proof of Prop. 4.4, "The function w̃ a super solution"; definition '
                '"w̃(x,t)=W(x_N,t)+Σ(W(x_j−R,t)+W(R−x_j,t))"'),
    "delta": 'Prop. 4.4, "there exists δ_ε>0 such that"; Eq. (4.18), "w₀(x,t) ≤ ε v₀(x,t+τ)"',
}

DEFAULT_CONFIG = {
    "tolerance_scale": 1.0,
    "profile_nodes": 400,
    "ball_nodes": 800,
    "ladder_tolerance": 1e-4,
    "interval_nodes": 101,
    "dt_max": 0.002,
    "sandwich_nodes": 201,
    "sandwich_dt": 5e-4,
    "sandwich_t_end": 0.25,
    "sandwich_time_ratio": 1.025,
    "graph_h": 0.02,
    "graph_t_end": 0.1,
    "tau": 0.01,
    "eps": 0.5,
    "R_prime": 0.5,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    paper_anchor: str
    max_violation: float
    tolerance: float
    passed: bool
    runtime_seconds: float = 0.0

    def __post_init__(self):
        if self.passed != (self.max_violation <= self.tolerance):
            raise InvalidArgument("passed must equal max_violation <= tolerance")


@dataclass(frozen=True)
class Report:
    suite: str
    results: list
    config_digest: str
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.results:
            raise InvalidArgument("a report needs at least one result")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"suite": self.suite,
                "results": [_finite(asdict(r)) for r in self.results],
                "config_digest": self.config_digest}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["suite", "name", "paper_anchor", "max_violation", "tolerance",
                             "passed", "runtime_seconds"])
            for r in self.results:
                writer.writerow([self.suite, r.name, r.paper_anchor, repr(float(r.max_violation)),
                                 repr(float(r.tolerance)), str(r.passed).lower(),
                                 repr(float(r.runtime_seconds))])


def _finite(d: dict) -> dict:
    # JSON has no infinities; report them as the largest double
    for key, value in d.items():
        if isinstance(value, float) and not math.isfinite(value):
            d[key] = math.copysign(np.finfo(float).max, value) if not math.isnan(value) else None
    return d


def result(name: str, anchor: str, violation: float, tolerance: float, runtime: float = 0.0) -> CheckResult:
    violation = float(violation)
    if math.isnan(violation):
        violation = math.inf
    return CheckResult(name, ANCHORS.get(anchor, anchor), violation, float(tolerance),
                       violation <= tolerance, float(runtime))


def config_digest(suite: str, config: dict) -> str:
    canonical = json.dumps({"suite": suite, "config": config}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def effective_config(config: dict | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    for key, value in (config or {}).items():
        if key not in DEFAULT_CONFIG:
            raise InvalidArgument(f"unknown verify setting {key!r}")
        cfg[key] = type(DEFAULT_CONFIG[key])(value)
    if not cfg["tolerance_scale"] > 0:
        raise InvalidArgument("tolerance_scale must be positive")
    return cfg


def _trend(base: float, refined: float) -> float:
    """Growth of the positive part of a violation under refinement (``<= 0`` when it does not grow)."""
    return max(refined, 0.0) - max(base, 0.0)


def _rel(lower, upper) -> float:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    both = np.isfinite(lower) & np.isfinite(upper)
    if not both.any():
        return -math.inf
    return float(np.max((lower[both] - upper[both]) / np.maximum(1.0, np.abs(upper[both]))))


# --------------------------------------------------------------------------- named checks

def check_sandwich(N: int, q: float, profile: Profile, ball_solution, fld: Field,
                   tolerance: float = 1e-2, mask: np.ndarray | None = None) -> CheckResult:
    """``V_N(rho, t) <= u(x, t) <= rho**(-2/(q-1)) * u_1(0, t / rho**2)`` on the ball.

    ``fld`` is the zero-data blow-up solution of the unit ball; its centre
    history supplies ``u_1(0, s)`` and ``P(0)`` of ``ball_solution`` stands in
    beyond the last time level (``u_1(0, .)`` increases to it). Nodes default
    to the interior subgrid on which the ladder limit is certified.
    """
    t0 = time.perf_counter()
    if profile.N != N or profile.q != q or ball_solution.problem.N != N or ball_solution.problem.q != q:
        raise InvalidArgument("profile, ball solution and field must share (N, q)")
    nodes = fld.nodes
    if nodes.radial_dim != N:
        raise InvalidArgument("the field must be a radial solve in dimension N")
    if mask is None:
        mask = interior_subgrid(nodes, fld.spec.blowup_pieces)
    if abs(nodes.axes[0][-1] - 1.0) > 1e-12:
        raise InvalidArgument("the field must live on the unit ball")
    rho = 1.0 - nodes.axes[0][mask]
    times = fld.times
    centre = fld.values[:, 0]
    alpha = similarity_exponent(q)
    worst = -math.inf
    for n in range(1, times.size):
        t = times[n]
        u = fld.values[n][mask]
        try:
            lower = evaluate_V(profile, rho, t, extend=True)
        except OutOfRange as exc:
            raise OutOfRange(f"similarity argument outside the profile at t={t:g}: {exc}") from exc
        s = t / rho ** 2
        c = np.where(s <= times[-1], np.interp(s, times, centre), ball_solution.center_value)
        upper = rho ** (-alpha) * c
        worst = max(worst, _rel(lower, u), _rel(u, upper))
    return result(f"sandwich N={N} q={q:g}", "sandwich", worst, tolerance, time.perf_counter() - t0)


def check_scaling(field_pair, ell: float = 2.0, tolerance: float = 5e-2) -> CheckResult:
    """Discrepancy between ``u`` and ``ell**(2/(q-1)) * u_ell(ell x, ell**2 t)``.

    ``field_pair = (u, u_ell)``; every node ``ell * x`` and every level
    ``ell**2 * t`` of the unit-scale field must exist on the scaled field.
    Compared at the snapshot times of ``u`` (all levels if it has none) on
    its interior subgrid, relative to ``max(1, |u|)``.
    """
    t0 = time.perf_counter()
    u, u_ell = field_pair
    q = u.spec.q
    if u_ell.spec.q != q:
        raise InvalidArgument("both fields must use the same q")
    x = u.nodes.axes[0]
    xs = u_ell.nodes.axes[0]
    ix = np.clip(np.searchsorted(xs, ell * x), 0, xs.size - 1)
    if not np.allclose(xs[ix], ell * x, rtol=1e-12, atol=1e-15):
        raise GridMisalignment("scaled grid does not contain ell * x for every node x")
    snaps = u.spec.snapshot_times or tuple(u.times[1:])
    it = [u.index_of(s) for s in snaps]
    its = np.clip(np.searchsorted(u_ell.times, ell ** 2 * u.times[it]), 0, u_ell.times.size - 1)
    if not np.allclose(u_ell.times[its], ell ** 2 * u.times[it], rtol=1e-12, atol=1e-15):
        raise GridMisalignment("scaled time grid does not contain ell**2 * t")
    mask = interior_subgrid(u.nodes, u.spec.blowup_pieces) if u.spec.blowup_pieces else u.nodes.unknown_mask
    factor = ell ** similarity_exponent(q)
    worst = 0.0
    for n, m in zip(it, its):
        a = u.values[n][mask]
        b = factor * u_ell.values[m][ix][mask]
        worst = max(worst, float(np.max(np.abs(b - a) / np.maximum(1.0, np.abs(a)))))
    return result(f"scaling ell={ell:g}", "scaling", worst, tolerance, time.perf_counter() - t0)


def check_contraction(u_f: Field, u_min: Field, u0: Field, ubar_f: Field, ubar_0: Field,
                      tolerance: float = 1e-8) -> CheckResult:
    """``u_f - u_min <= u0 <= u_f`` and ``ubar_f - u_f <= ubar_0 - u0`` at every node and level."""
    t0 = time.perf_counter()
    fields = (u_f, u_min, u0, ubar_f, ubar_0)
    shape = u_f.values.shape
    if any(f.values.shape != shape or not np.array_equal(f.times, u_f.times) for f in fields):
        raise InvalidArgument("all five fields must share the grid and the time grid")
    m = u_f.nodes.unknown_mask
    d1_low = _rel((u_f.values - u_min.values)[:, m], u0.values[:, m])
    d1_up = _rel(u0.values[:, m], u_f.values[:, m])
    d2 = _rel((ubar_f.values - u_f.values)[:, m], (ubar_0.values - u0.values)[:, m])
    worst = max(d1_low, d1_up, d2)
    return result("contraction D1/D2", "contraction", worst, tolerance, time.perf_counter() - t0)


# --------------------------------------------------------------------------- reference runs

def _refine(a: np.ndarray) -> np.ndarray:
    return np.sort(np.concatenate([a, 0.5 * (a[1:] + a[:-1])]))


def scaling_pair(n: int = 101, dt_max: float = 0.002, ell: float = 2.0, q: float = 3.0,
                 t_end: float = 0.1, snapshots=(0.025, 0.05, 0.1), edge_width: float = 1e-8):
    """Blow-up solutions of ``(0, 1)`` and ``(0, ell)`` for :func:`check_scaling`.

    The scaled solve uses the unit grid with midpoints inserted, stretched by
    ``ell`` (times by ``ell**2``), so the comparison is between two
    resolutions and measures consistency rather than an exact identity.
    """
    x = DomainSpec("interval", (0.0, 1.0), n=n, edge_width=edge_width).nodes.axes[0]
    tg = make_time_grid(t_end, dt_max=dt_max, dt_min=dt_max * 1e-3, include=snapshots)

    def run(nodes, grid, snaps):
        d = DomainSpec.from_nodes(interval_nodes(Grid1D(nodes)))
        spec = EvolveSpec(d, q, 0.0, BoundaryMode.uniform(blowup()), float(grid[-1]), grid, snaps)
        return k_ladder_limit(spec, extend=True, max_level=1e16)

    u = run(x, tg, tuple(snapshots))
    u_ell = run(ell * _refine(x), ell ** 2 * _refine(tg), tuple(ell ** 2 * s for s in snapshots))
    return u, u_ell


def bump(x, centre: float = 0.5, half_width: float = 0.2, height: float = 5.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x - centre) < half_width,
                    height * np.cos(0.5 * np.pi * (x - centre) / half_width) ** 2, 0.0)


def contraction_fields(n: int = 201, q: float = 3.0, t_end: float = 0.1, dt_max: float = 0.002,
                       boundary_value: float = 10.0, depths=(6, 3, 0), edge_width: float = 1e-8,
                       initial: Callable | None = None):
    """``(u_f, u_min, u0, ubar_f, ubar_0)`` on ``(0, 1)``.

    ``f = initial(x)`` (default :func:`bump`). ``u_f`` takes the constant
    boundary value ``boundary_value``; the maximal and minimal solutions and
    ``u0`` come from one exhaustion.
    """
    d = DomainSpec("interval", (0.0, 1.0), n=n, edge_width=edge_width)
    f = (initial or bump)(d.nodes.axes[0])
    tg = make_time_grid(t_end, dt_max=dt_max, include=(t_end,))
    members = exhaustion(d, depths)
    u_f = evolve(EvolveSpec(d, q, f, BoundaryMode.uniform(fixed(boundary_value)), t_end, tg))
    u_min = minimal_solution(d, q, f, members, t_end, tg)
    u0 = u0_from(d, q, u_f, u_min, members)
    ubar_f = maximal_solution(d, q, f, members, t_end=t_end, time_grid=tg)
    ubar_0 = maximal_solution(d, q, 0.0, members, t_end=t_end, time_grid=tg)
    return u_f, u_min, u0, ubar_f, ubar_0


def ball_field(N: int, q: float, n: int, dt_max: float, t_end: float, time_ratio: float = 1.05) -> Field:
    _, fld = unit_ball_evolution(N, q, [t_end], n=n, dt_max=dt_max, time_ratio=time_ratio,
                                 return_field=True)
    return fld


# --------------------------------------------------------------------------- suites

PROFILE_CASES = ((1, 2.0), (2, 2.0), (3, 2.0), (3, 2.5))
SANDWICH_CASES = ((1, 3.0), (3, 2.0))
BALL_CASES = ((1, 3.0), (3, 2.0), (3, 2.5), (1, 2.0), (2, 3.0))


class _Suite:
    """Collects results, timing each check."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.scale = cfg["tolerance_scale"]
        self.results = []
        self.cache = {}

    def add(self, name: str, anchor: str, fn: Callable[[], float], tolerance: float) -> None:
        t0 = time.perf_counter()
        violation = fn()
        res = result(name, anchor, violation, tolerance * self.scale, time.perf_counter() - t0)
        logger.info("%s: %s (%.3e vs %.3e)", name, "PASS" if res.passed else "FAIL",
                    res.max_violation, res.tolerance)
        self.results.append(res)

    def keep(self, res: CheckResult, tolerance: float) -> CheckResult:
        res = result(res.name, res.paper_anchor, res.max_violation, tolerance * self.scale,
                     res.runtime_seconds)
        self.results.append(res)
        return res

    def profile(self, N, q, r_min=1e-3, r_max=12.0, nodes=None) -> Profile:
        nodes = nodes or self.cfg["profile_nodes"]
        key = ("profile", N, q, r_min, r_max, nodes)
        if key not in self.cache:
            self.cache[key] = solve_profile(ProfileParams(N, q, r_min, r_max, log_grid(r_min, r_max, nodes)))
        return self.cache[key]

    def ball(self, N, q):
        key = ("ball", N, q)
        if key not in self.cache:
            grid = ball_grid(1.0, self.cfg["ball_nodes"])
            self.cache[key] = solve_ball_large(RadialProblem(N, q, 1.0, grid),
                                               tolerance=self.cfg["ladder_tolerance"])
        return self.cache[key]


def _profile_suite(s: _Suite) -> None:
    s.add("lambda closed form (3,2)=2 and (1,2)=6", "lambda",
          lambda: max(abs(lambda_nq(3, 2.0) - 2.0), abs(lambda_nq(1, 2.0) - 6.0)), 0.0)
    for N, q in PROFILE_CASES:
        def inner(N=N, q=q):
            p = s.profile(N, q)
            lam = lambda_nq(N, q)
            return abs(p.r[0] ** similarity_exponent(q) * p.values[0] - lam) / lam
        s.add(f"inner asymptote N={N} q={q:g}", "inner", inner, 2e-2)
    for N, q in PROFILE_CASES:
        def decay(N=N, q=q):
            p = s.profile(N, q)
            return p.r[-1] ** similarity_exponent(q) * p.values[-1]
        s.add(f"outer decay N={N} q={q:g}", "outer", decay, 1e-6)

        def stability(N=N, q=q):
            p = s.profile(N, q)
            a = fit_outer_constant(p, (0.5, 0.8))
            b = fit_outer_constant(p, (0.6, 0.9))
            return abs(a - b) / abs(b)
        s.add(f"outer constant window stability N={N} q={q:g}", "outer", stability, 5e-2)
    for N, q in PROFILE_CASES:
        def cutoff(N=N, q=q):
            base = s.profile(N, q)
            nodes = s.cfg["profile_nodes"]
            # same log spacing on the wider interval
            extra = int(round(nodes * np.log(24.0 / 5e-4) / np.log(12.0 / 1e-3)))
            wide = s.profile(N, q, 5e-4, 24.0, extra)
            r = np.geomspace(0.05, 5.0, 200)
            a = profile_value(base, r)
            b = profile_value(wide, r)
            return float(np.max(np.abs(a - b) / b))
        s.add(f"cutoff sensitivity N={N} q={q:g}", "profile", cutoff, 5e-3)
    for N, q in PROFILE_CASES:
        s.add(f"inner constant fit N={N} q={q:g}", "inner",
              lambda N=N, q=q: abs(fit_inner_constant(s.profile(N, q)) / lambda_nq(N, q) - 1), 2e-2)


def _elliptic_suite(s: _Suite) -> None:
    for N, q in BALL_CASES:
        s.add(f"P(0) exceeds lambda N={N} q={q:g}", "ball",
              lambda N=N, q=q: 1.0 - s.ball(N, q).center_value / lambda_nq(N, q), 0.0)
    for q in (3.0, 2.0):
        s.add(f"1-D P(0) against first integral q={q:g}", "ball",
              lambda q=q: abs(s.ball(1, q).center_value / first_integral_center(q) - 1), 1e-2)
    for N, q in BALL_CASES:
        s.add(f"ball ladder converged N={N} q={q:g}", "ladder",
              lambda N=N, q=q: s.ball(N, q).increments[-1], s.cfg["ladder_tolerance"])


def _parabolic_suite(s: _Suite) -> None:
    cfg = s.cfg
    fields = {}

    def contraction():
        fields["c"] = contraction_fields(n=2 * cfg["interval_nodes"] - 1, dt_max=cfg["dt_max"])
        res = check_contraction(*fields["c"])
        return res.max_violation
    s.add("contraction D1/D2", "contraction", contraction, 1e-8)
    u_f, u_min, u0, ubar_f, ubar_0 = fields["c"]
    s.add("k-ladder monotone (maximal, f = bump)", "ladder",
          lambda: max(m.diagnostics["monotonicity_violation"] for m in ubar_f.diagnostics["members"]), 1e-10)
    s.add("exhaustion decreasing (maximal)", "maximal", lambda: ubar_f.diagnostics["exhaustion_violation"], 1e-10)
    s.add("exhaustion increasing (minimal)", "minimal", lambda: u_min.diagnostics["exhaustion_violation"], 1e-10)
    s.add("exhaustion increasing (u0)", "minimal", lambda: u0.diagnostics["exhaustion_violation"], 1e-10)
    s.add("minimal below maximal", "minimal", lambda: _rel(u_min.values, ubar_f.values), 1e-10)

    def bound():
        worst = -math.inf
        for m in u_min.diagnostics["members"]:
            worst = max(worst, universal_bound_violation(m))
        return worst
    s.add("universal bound (zero lateral data)", "evolve", bound, 0.0)

    def lateral():
        # minima near the boundary must grow as the strip narrows
        mins = lateral_blowup_minima(ubar_0, [0.1, 0.01, 1e-3, 1e-4], 0.01)
        return float(np.max(-np.diff(mins) / np.maximum(1.0, mins[1:])))
    s.add("lateral blow-up minima increase as delta shrinks", "ladder", lateral, 0.0)

    pairs = {}

    def scaling(refined):
        n = cfg["interval_nodes"]
        dt = cfg["dt_max"]
        if refined:
            n, dt = 2 * n - 1, dt / 2
        pairs[refined] = check_scaling(scaling_pair(n=n, dt_max=dt))
        return pairs[refined].max_violation
    s.add("scaling ell=2 base grid", "scaling", lambda: scaling(False), 5e-2)
    s.add("scaling ell=2 refined grid", "scaling", lambda: scaling(True), 5e-2)
    s.add("scaling refinement trend", "scaling",
          lambda: _trend(pairs[False].max_violation, pairs[True].max_violation), 0.0)


def _section3_suite(s: _Suite) -> None:
    cfg = s.cfg
    for N, q in SANDWICH_CASES:
        found = {}

        def sandwich(refined, N=N, q=q, found=found):
            n, dt, ratio = cfg["sandwich_nodes"], cfg["sandwich_dt"], cfg["sandwich_time_ratio"]
            if refined:
                n, dt, ratio = 2 * n - 1, dt / 2, 1 + (ratio - 1) / 2
            fld = ball_field(N, q, n, dt, cfg["sandwich_t_end"], ratio)
            found[refined] = check_sandwich(N, q, s.profile(N, q), s.ball(N, q), fld).max_violation
            return found[refined]
        s.add(f"sandwich N={N} q={q:g}", "sandwich", lambda f=sandwich: f(False), 1e-2)
        s.add(f"sandwich N={N} q={q:g} refined", "sandwich", lambda f=sandwich: f(True), 1e-2)
        s.add(f"sandwich N={N} q={q:g} refinement trend", "sandwich",
              lambda found=found: _trend(found[False], found[True]), 0.0)
    s_values = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
    for N, q in SANDWICH_CASES:
        centre = {}

        def run(N=N, q=q, centre=centre):
            c = unit_ball_evolution(N, q, s_values)
            centre["c"] = c
            return float(np.max(-np.diff(c) / np.maximum(1.0, c[1:])))
        s.add(f"u_1(0,s) increasing N={N} q={q:g}", "unit_ball", run, 0.0)

        def limit(N=N, q=q, centre=centre):
            gap = np.abs(centre["c"] / s.ball(N, q).center_value - 1)
            ok = np.nonzero(gap > 1e-2)[0]
            s_star = s_values[ok[-1] + 1] if ok.size and ok[-1] + 1 < len(s_values) else (
                s_values[0] if not ok.size else math.inf)
            logger.info("u_1(0,s) within 1%% of P(0) for s >= %s (N=%d, q=%g)", s_star, N, q)
            return float(gap[-1])
        s.add(f"u_1(0,s) approaches P(0) N={N} q={q:g}", "unit_ball", limit, 1e-2)


def _section4_suite(s: _Suite) -> None:
    cfg = s.cfg
    q = 3.0
    d = GraphDomain(1.0, lambda x: 1.0 + 0.2 * np.sin(3.0 * x), h=cfg["graph_h"])
    tau = cfg["tau"]
    tg = graph_time_grid(cfg["graph_t_end"], tau)
    run = {}

    def nesting():
        run["family"] = fam = shifted_family(d)
        rep = nesting_report(d, fam)
        return 0.0 if rep["nested"] and rep["strict"] else 1.0
    s.add("mask nesting strict", "nesting", nesting, 0.0)
    fam = run["family"]

    def fields():
        run["u"] = solve_large(d, q, tg)
        run["v"] = [solve_v_sigma(d, sh, q, tg) for sh in fam]
        run["w"] = [solve_w_sigma(d, sh, q, tg) for sh in fam]
        return max(max(f.diagnostics["monotonicity_violation"] for f in [run["u"]] + run["v"] + run["w"]),
                   0.0)
    s.add("graph k-ladders monotone", "ladder", fields, 1e-10)
    u, vs, ws = run["u"], run["v"], run["w"]
    reports = [check_translation_bounds(d, sh, q, u, v, w) for sh, v, w in zip(fam, vs, ws)]
    s.add("(P3)(i) translated v below u", "translation", lambda: max(r.p3_lower for r in reports), 1e-8)
    s.add("(P3)(ii) u below v + w", "translation", lambda: max(r.p3_upper for r in reports), 1e-8)
    s.add("(P4) sandwich with smallest shift", "translation",
          lambda: sandwich_violation(d, u, vs[-1], ws[-1], fam[-1]), 1e-8)
    s.add("v monotone in sigma", "v_sigma", lambda: sigma_monotonicity(vs, outer=False), 1e-10)
    s.add("w monotone in sigma", "w_sigma", lambda: sigma_monotonicity(ws, outer=True), 1e-10)
    s.add("v0, w0 monotone in time", "translation",
          lambda: max(time_monotonicity(vs[-1]), time_monotonicity(ws[-1])), 1e-10)
    profile_1d = s.profile(1, q)
    s.add("w_tilde dominates w_sigma", "w_tilde",
          lambda: max(domination_violation(d, q, profile_1d, w) for w in ws), 1e-2)
    found = {}

    def delta():
        found["r"] = find_delta_eps(d, q, cfg["eps"], tau, vs[-1], ws[-1], cfg["R_prime"])
        logger.info("delta_eps = %g for eps = %g", found["r"].delta, cfg["eps"])
        return 0.0 if found["r"].found else 1.0
    s.add(f"delta_eps found for eps={cfg['eps']:g}", "delta", delta, 0.0)
    s.add("(W6) on the strip", "delta",
          lambda: w6_violation(d, cfg["eps"], tau, found["r"].delta, u, u, cfg["R_prime"]), 1e-8)


_SUITE_FUNCS = {"profile": _profile_suite, "elliptic": _elliptic_suite, "parabolic": _parabolic_suite,
                "section3": _section3_suite, "section4": _section4_suite}


def run_suite(name: str, config: dict | None = None) -> Report:
    """Run the named suite (``profile``, ``elliptic``, ``parabolic``, ``section3``, ``section4`` or ``all``)."""
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; expected one of {SUITES}")
    cfg = effective_config(config)
    s = _Suite(cfg)
    for part in (_SUITE_FUNCS if name == "all" else {name: _SUITE_FUNCS[name]}).values():
        part(s)
    return Report(name, list(s.results), config_digest(name, cfg), cfg)
