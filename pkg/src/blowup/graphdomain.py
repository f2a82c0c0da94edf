"""Graph domains in the plane and the localized comparison functions built on them.

The base domain is ``G_R = {|x| < R, 0 < y < phi(x)}`` on a uniform square
grid. For each shift ``sigma`` a smoothed graph ``phi_sigma`` defines the inner
domain ``{0 < y < phi_sigma - sigma}`` and the outer domain
``{0 < y < phi_sigma + sigma}``. Boundary nodes are split into the pieces
``top`` (above the graph), ``sides`` (``|x| = R``), ``bottom`` (``y = 0``) and
``corner`` (side nodes at or above the graph height, always given zero data).

``v_sigma`` blows up on the inner top and vanishes elsewhere; ``w_sigma`` blows
up on the outer sides and bottom and vanishes on the top.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import (BandViolation, GridMisalignment, InvalidArgument, SnapshotMismatch)
from .mesh import NodeSet
from .numcore import INTERIOR, NewtonConfig
from .parabolic import (BoundaryMode, DomainSpec, EvolveSpec, Field, blowup, k_ladder_limit,
                        uniform_time_grid, zero)
from .profile import Profile, evaluate_V, lambda_nq, similarity_exponent

TOP, SIDES, BOTTOM, CORNER = 2, 3, 4, 5
PIECES = {TOP: "top", SIDES: "sides", BOTTOM: "bottom", CORNER: "corner"}
GLYPHS = {0: ".", INTERIOR: "#", TOP: "B1", SIDES: "B2", BOTTOM: "B2", CORNER: "B2"}


@dataclass(frozen=True, eq=False)
class GraphDomain:
    """``G_R`` under the graph of ``phi`` on a uniform grid of spacing ``h``.

    ``headroom`` is the extra height above ``max(phi)`` kept on the grid so
    that the outer domains of every shift fit.
    """

    R: float
    phi: Callable
    h: float = 0.02
    headroom: float = 0.2

    def __post_init__(self):
        if not self.R > 0 or not self.h > 0:
            raise InvalidArgument("R and h must be positive")
        m = self.R / self.h
        if abs(m - round(m)) > 1e-9:
            raise GridMisalignment("R must be a whole number of cells")
        vals = self.phi_values
        if not np.all(np.isfinite(vals)) or np.min(vals) <= 0:
            raise InvalidArgument("phi must be finite and positive on [-R, R]")

    @property
    def x(self) -> np.ndarray:
        m = int(round(self.R / self.h))
        return np.linspace(-self.R, self.R, 2 * m + 1)

    @property
    def y(self) -> np.ndarray:
        n = int(np.ceil((self.R1 + self.headroom) / self.h))
        return np.arange(n + 1) * self.h

    @property
    def phi_values(self) -> np.ndarray:
        return np.asarray(self.phi(self.x), dtype=float) * np.ones_like(self.x)

    @property
    def R0(self) -> float:
        return float(np.min(self.phi_values))

    @property
    def R1(self) -> float:
        return float(np.max(self.phi_values))

    def nodes_under(self, top: np.ndarray) -> NodeSet:
        """Node set of ``{|x| < R, 0 < y < top(x)}`` with the four named pieces."""
        x, y = self.x, self.y
        top = np.asarray(top, dtype=float)
        if top.shape != x.shape:
            raise InvalidArgument("top must be sampled at the x nodes")
        if np.max(top) >= y[-1]:
            raise InvalidArgument("graph leaves the grid; increase headroom")
        X, Y = np.meshgrid(x, y, indexing="ij")
        tol = 1e-9 * self.h
        inner = (np.abs(X) < self.R - tol) & (Y > tol) & (Y < top[:, None] - tol)
        nbr = np.zeros_like(inner)
        nbr[1:, :] |= inner[:-1, :]
        nbr[:-1, :] |= inner[1:, :]
        nbr[:, 1:] |= inner[:, :-1]
        nbr[:, :-1] |= inner[:, 1:]
        bnd = nbr & ~inner
        labels = np.zeros(X.shape, dtype=np.int16)
        labels[inner] = INTERIOR
        side = bnd & (np.abs(X) >= self.R - tol)
        edge_top = np.where(X[:, 0] < 0, top[0], top[-1])[:, None]
        labels[bnd] = TOP
        labels[side & (Y < edge_top - tol)] = SIDES
        labels[side & (Y >= edge_top - tol)] = CORNER
        labels[bnd & ~side & (Y <= tol)] = BOTTOM
        present = {c: n for c, n in PIECES.items() if np.any(labels == c)}
        return NodeSet((x, y), labels, present)

    @property
    def base(self) -> NodeSet:
        return self.nodes_under(self.phi_values)


def _bump(width_cells: int) -> np.ndarray:
    s = np.linspace(-1, 1, 2 * width_cells + 3)[1:-1]
    k = np.exp(-1.0 / (1.0 - s ** 2))
    return k / k.sum()


def mollify(values: np.ndarray, width_cells: int) -> np.ndarray:
    """Discrete convolution with a compactly supported bump (reflecting ends)."""
    if width_cells <= 0:
        return values.copy()
    k = _bump(width_cells)
    pad = np.pad(values, width_cells, mode="reflect")
    return np.convolve(pad, k, mode="valid")


def smooth_phi(d: GraphDomain, sigma: float, finer: tuple | None = None) -> np.ndarray:
    """``phi_sigma`` at the x nodes, within ``sigma/2`` of ``phi``.

    The kernel is the widest bump (at most ``sigma``) keeping the band. With
    ``finer = (sigma_prime, phi_sigma_prime)`` for a smaller shift, values are
    clipped so that ``phi_sigma - sigma < phi_sigma' - sigma'`` and
    ``phi_sigma' + sigma' < phi_sigma + sigma`` hold strictly.

    Raises
    ------
    BandViolation
        If no value satisfies both the band and the ordering constraints.
    """
    if not 0 < sigma < d.R0 / 4:
        raise InvalidArgument("sigma must lie in (0, R0/4)")
    phi = d.phi_values
    band = 0.5 * sigma
    width = max(int(np.floor(sigma / d.h)), 0)
    while True:
        sm = mollify(phi, width)
        if np.max(np.abs(sm - phi)) <= band * (1 - 1e-9) or width == 0:
            break
        width //= 2
    lo, hi = phi - band, phi + band
    if finer is not None:
        s_prime, p_prime = finer
        if not s_prime < sigma:
            raise InvalidArgument("finer shift must be smaller")
        gap = sigma - s_prime
        slack = 1e-6 * gap
        lo = np.maximum(lo, p_prime - gap + slack)
        hi = np.minimum(hi, p_prime + gap - slack)
    if np.any(lo > hi):
        raise BandViolation("band and ordering constraints are incompatible")
    return np.clip(sm, lo, hi)


@dataclass(frozen=True, eq=False)
class ShiftedDomains:
    sigma: float
    phi_sigma: np.ndarray
    inner: NodeSet
    outer: NodeSet

    @property
    def cells(self) -> int:
        return int(round(self.sigma / (self.inner.axes[1][1] - self.inner.axes[1][0])))


def shifted_family(d: GraphDomain, sigma_cells=(8, 4, 2, 1)) -> list:
    """Shifted domains for ``sigma = m*h``; returned in the given (decreasing) order.

    Smoothed graphs are built from the smallest shift upward so that the
    monotone-family ordering holds by construction.
    """
    cells = [int(m) for m in sigma_cells]
    if any(b >= a for a, b in zip(cells, cells[1:])) or cells[-1] < 1:
        raise InvalidArgument("sigma_cells must be strictly decreasing positive integers")
    built = {}
    finer = None
    for m in sorted(cells):
        sigma = m * d.h
        ps = smooth_phi(d, sigma, finer)
        built[m] = ShiftedDomains(sigma, ps, d.nodes_under(ps - sigma), d.nodes_under(ps + sigma))
        finer = (sigma, ps)
    return [built[m] for m in cells]


def nesting_report(d: GraphDomain, family) -> dict:
    """Checks the chain inner(s) < inner(s') < base < outer(s') < outer(s) for s > s'.

    Inclusion is tested on interior node sets; ``strict`` requires each
    inclusion to add at least one node.
    """
    base = d.base.labels == INTERIOR
    ok = True
    strict = True
    for big_s, small_s in zip(family, family[1:]):
        chain = [big_s.inner.labels == INTERIOR, small_s.inner.labels == INTERIOR, base,
                 small_s.outer.labels == INTERIOR, big_s.outer.labels == INTERIOR]
        for a, b in zip(chain, chain[1:]):
            ok &= not np.any(a & ~b)
            strict &= bool(np.any(b & ~a))
    return {"nested": bool(ok), "strict": bool(strict)}


def resolved_ladder(q: float, h: float, levels: int = 4, bottom: float = 10.0) -> tuple:
    """Geometric ladder from ``bottom`` up to the largest level a grid of spacing ``h`` resolves.

    The top is ``lambda_{1,q} * h**(-2/(q-1))``, the one-dimensional large
    solution one cell away from its boundary. Higher boundary levels are not
    resolved on a uniform grid: the discrete solution then behaves as if the
    boundary had moved inward and exceeds every continuum solution nearby.
    """
    if not h > 0 or levels < 1:
        raise InvalidArgument("h must be positive and levels at least 1")
    top = lambda_nq(1, q) * h ** (-similarity_exponent(q))
    if top <= bottom or levels == 1:
        return (float(top),)
    return tuple(float(k) for k in np.geomspace(bottom, top, levels))


def _spec(d: GraphDomain, nodes: NodeSet, q: float, tags: dict, time_grid, ladder) -> EvolveSpec:
    ladder = resolved_ladder(q, d.h) if ladder is None else ladder
    mode = {p: (blowup(ladder) if tags.get(p) == "blowup" else zero()) for p in set(nodes.pieces.values())}
    t_end = float(time_grid[-1])
    return EvolveSpec(DomainSpec("masked_2d", nodes), q, 0.0, BoundaryMode(mode), t_end, time_grid)


def graph_time_grid(t_end: float, tau: float) -> np.ndarray:
    """Uniform grid with step ``tau/4`` so that ``t`` and ``t + tau`` are both time levels."""
    return uniform_time_grid(t_end, tau / 4)


def _run(spec, cfg, ladder_kw):
    kw = dict(extend=False, require_convergence=False)
    kw.update(ladder_kw)
    return k_ladder_limit(spec, cfg, **kw)


def solve_large(d: GraphDomain, q: float, time_grid, ladder=None,
                cfg: NewtonConfig | None = None, **ladder_kw) -> Field:
    """Large solution of ``G_R`` with zero initial data (blow-up on every piece)."""
    nodes = d.base
    tags = {p: "blowup" for p in nodes.pieces.values()}
    return _run(_spec(d, nodes, q, tags, time_grid, ladder), cfg, ladder_kw)


def solve_v_sigma(d: GraphDomain, s: ShiftedDomains, q: float, time_grid, ladder=None,
                  cfg: NewtonConfig | None = None, **ladder_kw) -> Field:
    """Blow-up on the inner top, zero on sides, bottom and corners."""
    return _run(_spec(d, s.inner, q, {"top": "blowup"}, time_grid, ladder), cfg, ladder_kw)


def solve_w_sigma(d: GraphDomain, s: ShiftedDomains, q: float, time_grid, ladder=None,
                  cfg: NewtonConfig | None = None, **ladder_kw) -> Field:
    """Zero on the outer top and corners, blow-up on sides and bottom."""
    tags = {"sides": "blowup", "bottom": "blowup"}
    return _run(_spec(d, s.outer, q, tags, time_grid, ladder), cfg, ladder_kw)


def superposition_supersolution(d: GraphDomain, q: float, profile_1d: Profile, x, y, t):
    """``V1(y, t) + V1(x + R, t) + V1(R - x, t)`` from the one-dimensional profile."""
    if profile_1d.N != 1 or profile_1d.q != q:
        raise InvalidArgument("superposition needs the N = 1 profile for the same q")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y, t).shape)
    for dist in (y, x + d.R, d.R - x):
        dist = np.broadcast_to(dist, out.shape)
        term = np.full(out.shape, np.inf)
        pos = dist > 0
        term[pos] = evaluate_V(profile_1d, dist[pos], np.broadcast_to(t, out.shape)[pos], extend=True)
        out = out + term
    return out


def _translate_up(values: np.ndarray, cells: int) -> np.ndarray:
    """``out[:, j] = values[:, j - cells]`` (NaN where undefined)."""
    out = np.full_like(values, np.nan)
    out[..., cells:] = values[..., : values.shape[-1] - cells]
    return out


def _relative_excess(lower, upper, scale_floor=1.0) -> float:
    both = np.isfinite(lower) & np.isfinite(upper)
    if not both.any():
        return 0.0
    lo, up = lower[both], upper[both]
    return float(np.max((lo - up) / np.maximum(scale_floor, np.abs(up))))


@dataclass(frozen=True)
class TranslationReport:
    p3_lower: float
    p3_upper: float


def check_translation_bounds(d: GraphDomain, s: ShiftedDomains, q: float, u: Field, v_sigma: Field,
                             w_sigma: Field) -> TranslationReport:
    """Signed relative violations of ``v_s(x, y - 2s) <= u`` and ``u <= v_s + w_s``.

    The translated ``v_s`` is extended by zero outside its domain; the upper
    bound is checked on the inner domain.
    """
    m2 = 2 * s.sigma / d.h
    if abs(m2 - round(m2)) > 1e-9:
        raise GridMisalignment("2*sigma must be a whole number of vertical cells")
    if not (np.array_equal(u.times, v_sigma.times) and np.array_equal(u.times, w_sigma.times)):
        raise SnapshotMismatch("fields must share the time grid")
    base_int = u.nodes.labels == INTERIOR
    v = np.where(v_sigma.nodes.inside, v_sigma.values, 0.0)
    v_up = np.nan_to_num(_translate_up(v, int(round(m2))), nan=0.0)
    lower = np.where(base_int, v_up, np.nan)
    p3_lower = _relative_excess(lower, np.where(base_int, u.values, np.nan))
    inner_int = v_sigma.nodes.labels == INTERIOR
    total = np.where(inner_int, v_sigma.values + w_sigma.values, np.nan)
    p3_upper = _relative_excess(np.where(inner_int, u.values, np.nan), total)
    return TranslationReport(p3_lower, p3_upper)


def sandwich_violation(d: GraphDomain, u: Field, v0: Field, w0: Field, s0: ShiftedDomains) -> float:
    """``v0(x, y - 2 s0) <= u <= v0 + w0`` with the smallest-shift fields standing in for the limits."""
    rep = check_translation_bounds(d, s0, u.spec.q, u, v0, w0)
    return max(rep.p3_lower, rep.p3_upper)


def sigma_monotonicity(fields_by_sigma, outer: bool) -> float:
    """Violation of ``f_{s'} <= f_s`` (s > s') on the smaller domain, for consecutive shifts."""
    worst = -np.inf
    for big, small in zip(fields_by_sigma, fields_by_sigma[1:]):
        common = (small.nodes.labels == INTERIOR) if outer else (big.nodes.labels == INTERIOR)
        worst = max(worst, _relative_excess(np.where(common, small.values, np.nan),
                                            np.where(common, big.values, np.nan)))
    return worst


def time_monotonicity(fld: Field) -> float:
    """Largest relative decrease in time at any node."""
    worst = -np.inf
    for a, b in zip(fld.values, fld.values[1:]):
        worst = max(worst, _relative_excess(a, b))
    return worst


def domination_violation(d: GraphDomain, q: float, profile_1d: Profile, w_sigma: Field,
                         margin_cells: int = 3, t_min: float = 0.0) -> float:
    """Excess of ``w_sigma`` over the superposition, relative to ``max(1, w~)``.

    Only nodes at least ``margin_cells`` from the blow-up pieces and time
    levels ``t >= t_min`` enter.
    """
    nodes = w_sigma.nodes
    dist = nodes.distance_in_cells(["sides", "bottom"])
    mask = (nodes.labels == INTERIOR) & (dist >= margin_cells)
    X, Y = nodes.coordinates()
    worst = -np.inf
    for n in range(1, w_sigma.times.size):
        t = w_sigma.times[n]
        if t < t_min:
            continue
        wt = superposition_supersolution(d, q, profile_1d, X[mask], Y[mask], t)
        worst = max(worst, _relative_excess(w_sigma.values[n][mask], wt))
    return worst


def _strip(d: GraphDomain, nodes: NodeSet, R_prime: float):
    X, Y = nodes.coordinates()
    depth = np.asarray(d.phi(X), dtype=float) - Y
    sel = (np.abs(X) < R_prime) & (depth > 0) & (nodes.labels == INTERIOR)
    return sel, depth


@dataclass(frozen=True)
class DeltaResult:
    delta: float
    found: bool
    first_failure_depth: float


def find_delta_eps(d: GraphDomain, q: float, eps: float, tau: float, v0: Field, w0: Field,
                   R_prime: float) -> DeltaResult:
    """Largest grid depth ``delta`` with ``w0(t) <= eps * v0(t + tau)`` on the strip under the graph.

    The strip is ``{|x| < R', phi(x) - delta <= y < phi(x)}`` on the base grid.
    Strip nodes above the domain of ``v0`` count as satisfied (``v0`` blows up there).
    """
    if not eps > 0 or not tau > 0:
        raise InvalidArgument("eps and tau must be positive")
    if not 0 < R_prime < d.R:
        raise InvalidArgument("R_prime must lie in (0, R)")
    if not np.array_equal(v0.times, w0.times):
        raise SnapshotMismatch("v0 and w0 must share the time grid")
    times = v0.times
    shift = int(round(tau / (times[1] - times[0])))
    if shift < 1 or not np.allclose(times[shift:] - times[:-shift], tau, rtol=1e-9, atol=1e-15):
        raise SnapshotMismatch("t + tau is not a time level for every t")
    sel, depth = _strip(d, d.base, R_prime)
    v_ok = v0.nodes.inside & sel
    fail_depth = np.inf
    for n in range(times.size - shift):
        w = w0.values[n]
        v = v0.values[n + shift]
        bad = sel & v_ok & (w > eps * v)
        if bad.any():
            fail_depth = min(fail_depth, float(np.min(depth[bad])))
    max_depth = float(np.max(depth[sel]))
    if np.isinf(fail_depth):
        return DeltaResult(np.floor(max_depth / d.h) * d.h, True, np.inf)
    j = int(np.ceil(fail_depth / d.h - 1e-9)) - 1
    delta = j * d.h
    # the strip of depth delta must contain no failing node
    if delta >= fail_depth:
        delta -= d.h
    return DeltaResult(max(delta, 0.0), delta > 0, fail_depth)


def w6_violation(d: GraphDomain, eps: float, tau: float, delta: float, u: Field, ubar0: Field,
                 R_prime: float) -> float:
    """Relative violation of ``(1 + eps) u(t + tau) >= ubar0(t)`` on the strip of depth ``delta``."""
    times = u.times
    shift = int(round(tau / (times[1] - times[0])))
    sel, depth = _strip(d, d.base, R_prime)
    sel &= depth <= delta + 1e-12
    worst = -np.inf
    for n in range(times.size - shift):
        lhs = (1 + eps) * u.values[n + shift][sel]
        rhs = ubar0.values[n][sel]
        worst = max(worst, _relative_excess(rhs, lhs))
    return worst


def export_mask(nodes: NodeSet, path) -> None:
    """Grid map with one row per y level (top first): ``.`` outside, ``#`` interior, ``B1``/``B2`` pieces."""
    names = nodes.pieces
    rows = []
    for j in range(nodes.shape[1] - 1, -1, -1):
        tokens = []
        for i in range(nodes.shape[0]):
            code = int(nodes.labels[i, j])
            if code >= 2:
                tokens.append("B1" if names.get(code) == "top" else "B2")
            else:
                tokens.append(GLYPHS[code])
        rows.append(" ".join(tokens))
    Path(path).write_text("\n".join(rows) + "\n")


def read_mask(path) -> np.ndarray:
    """Inverse of :func:`export_mask` up to piece names: 0 outside, 1 interior, 2 for B1, 3 for B2."""
    code = {".": 0, "#": 1, "B1": 2, "B2": 3}
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    arr = np.array([[code[t] for t in r] for r in rows], dtype=np.int16)
    return arr[::-1].T
