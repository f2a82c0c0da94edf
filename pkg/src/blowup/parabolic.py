"""Monotone implicit evolution of ``u_t - Delta u + |u|^(q-1) u = 0``.

Each time step is backward Euler with the absorption treated fully
implicitly::

    u_new - u_old + dt * (A u_new + B g_new + |u_new|^(q-1) u_new) = 0

where ``(A, B)`` is the finite-volume ``-Laplacian`` of :mod:`blowup.mesh`.
``I + dt*A`` is an M-matrix and the absorption is monotone, so the discrete
comparison principle holds exactly. Blow-up boundary data is reached through
truncation ladders (:func:`k_ladder_limit`) and maximal / minimal solutions
through exhaustions by eroded sub-domains.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse
from scipy import ndimage

from .exceptions import (BlowupOverflow, ExhaustionNotNested, InvalidArgument, LadderNotConverged,
                         MonotonicityViolation, NegativeBoundaryData, NoConvergence,
                         SnapshotMismatch)
from .mesh import NodeSet, interval_nodes, radial_nodes, rectangle_nodes
from .numcore import (BOUNDARY, Grid1D, Grid2D, NewtonConfig, geometric_ratio_for, make_graded_grid,
                      newton_solve, parallel_map)

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (1e1, 1e2, 1e3, 1e4)
OVERFLOW = 1e300
MONOTONE_TOL = 1e-10
KINDS = ("interval", "radial_ball", "rectangle", "masked_2d")


# --------------------------------------------------------------------------- domains

def two_sided_grid(a: float, b: float, n: int, grading=1.0) -> Grid1D:
    """Grid on ``[a, b]`` whose cells shrink geometrically toward both ends.

    ``grading`` is a ratio ``>= 1`` (or a pair, one per side); the cell width
    grows by that factor per cell away from the corresponding end.
    """
    g_lo, g_hi = (grading, grading) if np.isscalar(grading) else tuple(grading)
    if g_lo < 1 or g_hi < 1:
        raise InvalidArgument("grading ratios must be >= 1")
    if g_lo == 1 and g_hi == 1:
        return make_graded_grid(a, b, n, 1.0)
    if n < 3 or n % 2 == 0:
        raise InvalidArgument("a two-sided graded grid needs an odd node count >= 3")
    half = (n + 1) // 2
    mid = 0.5 * (a + b)
    left = make_graded_grid(a, mid, half, g_lo).nodes
    right = make_graded_grid(a, mid, half, g_hi).nodes
    right = (a + b) - right[::-1]
    nodes = np.concatenate([left, right[1:]])
    return Grid1D(nodes, 1.0 if g_lo == g_hi == 1 else float(max(g_lo, g_hi)))


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Spatial domain of an evolution.

    Parameters
    ----------
    kind : ``interval``, ``radial_ball``, ``rectangle`` or ``masked_2d``.
    geometry : ``(a, b)`` for an interval, ``radius`` for a ball,
        ``(x0, x1, y0, y1)`` for a rectangle, a :class:`~blowup.numcore.Grid2D`
        or :class:`~blowup.mesh.NodeSet` for a masked domain. Any kind also
        accepts a ready :class:`NodeSet` (used for exhaustion members).
    n : node count (a pair for 2-D kinds).
    grading : per-side grading ratio(s) ``>= 1``; cells shrink toward the boundary.
    dim : space dimension of a radial ball.
    edge_width : when given, overrides ``grading`` so that the cells touching
        the boundary have this width (1-D kinds only).
    """

    kind: str
    geometry: object
    n: object = 101
    grading: object = 1.0
    dim: int = 1
    edge_width: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown domain kind {self.kind!r}; expected one of {KINDS}")
        nodes = self.nodes
        if self.kind == "masked_2d":
            if nodes.ndim != 2:
                raise InvalidArgument("masked_2d domains are two-dimensional")
            _, count = ndimage.label(nodes.inside)
            if count != 1:
                raise InvalidArgument(f"masked domain has {count} connected components")

    @classmethod
    def from_nodes(cls, nodes: NodeSet) -> "DomainSpec":
        if nodes.radial_dim is not None:
            return cls("radial_ball", nodes, dim=nodes.radial_dim)
        return cls("interval" if nodes.ndim == 1 else "masked_2d", nodes)

    @cached_property
    def nodes(self) -> NodeSet:
        g = self.geometry
        if isinstance(g, NodeSet):
            return g
        if self.kind == "interval":
            a, b = map(float, g)
            if not a < b:
                raise InvalidArgument("interval needs a < b")
            grading = self.grading
            if self.edge_width is not None:
                n = int(self.n)
                if n < 3 or n % 2 == 0:
                    raise InvalidArgument("a two-sided graded grid needs an odd node count >= 3")
                grading = 1.0 / geometric_ratio_for(a, 0.5 * (a + b), (n + 1) // 2, self.edge_width)
            return interval_nodes(two_sided_grid(a, b, int(self.n), grading))
        if self.kind == "radial_ball":
            radius = float(np.ravel(g)[0])
            if not radius > 0:
                raise InvalidArgument("radius must be positive")
            if self.edge_width is not None:
                ratio = geometric_ratio_for(0.0, radius, int(self.n), self.edge_width)
                return radial_nodes(make_graded_grid(0.0, radius, int(self.n), ratio), int(self.dim))
            grading = float(np.ravel([self.grading])[0])
            if grading < 1:
                raise InvalidArgument("grading ratio must be >= 1")
            return radial_nodes(make_graded_grid(0.0, radius, int(self.n), 1.0 / grading), int(self.dim))
        if self.kind == "rectangle":
            x0, x1, y0, y1 = map(float, g)
            nx, ny = (self.n, self.n) if np.isscalar(self.n) else self.n
            gx, gy = (self.grading, self.grading) if np.isscalar(self.grading) else self.grading
            return rectangle_nodes(two_sided_grid(x0, x1, int(nx), gx), two_sided_grid(y0, y1, int(ny), gy))
        if isinstance(g, Grid2D):
            labels = np.where(np.asarray(g.mask) >= BOUNDARY, BOUNDARY, g.mask)
            return NodeSet((g.x_grid.nodes, g.y_grid.nodes), labels, {BOUNDARY: "boundary"})
        raise InvalidArgument("masked_2d geometry must be a Grid2D or NodeSet")

    def describe(self) -> dict:
        out = {"kind": self.kind, "shape": list(self.nodes.shape),
               "pieces": sorted(set(self.nodes.pieces.values()))}
        if not isinstance(self.geometry, (NodeSet, Grid2D)):
            out["geometry"] = np.ravel(self.geometry).astype(float).tolist()
        if self.nodes.radial_dim is not None:
            out["dim"] = self.nodes.radial_dim
        return out


def exhaustion(domain: DomainSpec, depths) -> list:
    """Nested sub-domains obtained by eroding ``m`` cells, for each ``m`` in ``depths``.

    ``depths`` must be strictly decreasing; a trailing ``0`` yields the
    full domain itself as the last member.
    """
    depths = [int(m) for m in depths]
    if any(b >= a for a, b in zip(depths, depths[1:])) or min(depths) < 0:
        raise ExhaustionNotNested("erosion depths must be strictly decreasing and nonnegative")
    members = []
    for m in depths:
        nodes = domain.nodes if m == 0 else domain.nodes.eroded(m)
        members.append(DomainSpec.from_nodes(nodes) if m else domain)
    check_nested([d.nodes for d in members])
    return members


def check_nested(members) -> None:
    for small, big in zip(members, members[1:]):
        if small.shape != big.shape:
            raise ExhaustionNotNested("exhaustion members live on different grids")
        if np.any(small.inside & ~big.inside):
            raise ExhaustionNotNested("exhaustion members are not nested")
        if not np.any(big.inside & ~small.inside) and np.array_equal(small.labels, big.labels):
            raise ExhaustionNotNested("exhaustion members must be strictly increasing")


# --------------------------------------------------------------------------- boundary data

@dataclass(frozen=True, eq=False)
class BoundaryTag:
    """Boundary condition on one piece: ``fixed``, ``zero``, ``blowup``, ``insulated`` or ``data``.

    ``data`` carries values over the full grid for every time level (used
    when boundary values are read off previously computed Fields).
    """

    kind: str
    value: float = 0.0
    ladder: tuple = ()
    data: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "zero", "blowup", "insulated", "data"):
            raise InvalidArgument(f"unknown boundary kind {self.kind!r}")
        if self.kind == "fixed" and not (np.isfinite(self.value) and self.value >= 0):
            raise InvalidArgument("fixed boundary values must be finite and >= 0")
        if self.kind == "blowup":
            ladder = tuple(float(k) for k in self.ladder)
            if not ladder or ladder[0] <= 0 or np.any(np.diff(ladder) <= 0):
                raise InvalidArgument("blowup ladders must be strictly increasing and positive")
            object.__setattr__(self, "ladder", ladder)
        if self.kind == "data":
            if self.data is None:
                raise InvalidArgument("data boundary needs values")
            if np.nanmin(self.data) < 0:
                raise NegativeBoundaryData("boundary data must be nonnegative")


def fixed(k: float) -> BoundaryTag:
    return BoundaryTag("fixed", float(k))


def zero() -> BoundaryTag:
    return BoundaryTag("zero")


def blowup(ladder=DEFAULT_LADDER) -> BoundaryTag:
    return BoundaryTag("blowup", ladder=tuple(ladder))


def insulated() -> BoundaryTag:
    return BoundaryTag("insulated")


def data(values) -> BoundaryTag:
    return BoundaryTag("data", data=np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class BoundaryMode:
    """Tags per boundary piece; pieces not listed receive ``default``."""

    tags: Mapping = field(default_factory=dict)
    default: BoundaryTag | None = None

    def tag_for(self, piece: str) -> BoundaryTag:
        if piece in self.tags:
            return self.tags[piece]
        if self.default is None:
            raise InvalidArgument(f"no boundary condition for piece {piece!r}")
        return self.default

    @classmethod
    def uniform(cls, tag: BoundaryTag) -> "BoundaryMode":
        return cls({}, tag)

    def ladders(self, pieces) -> dict:
        return {p: self.tag_for(p).ladder for p in pieces if self.tag_for(p).kind == "blowup"}

    def describe(self) -> dict:
        def one(t):
            return {"kind": t.kind, "value": t.value, "ladder": list(t.ladder)}
        out = {p: one(t) for p, t in sorted(self.tags.items())}
        if self.default is not None:
            out["*"] = one(self.default)
        return out


# --------------------------------------------------------------------------- time grids

def make_time_grid(t_end: float, dt_max: float | None = None, dt_min: float | None = None,
                   ratio: float = 1.2, include=()) -> np.ndarray:
    """Times ``0 = t_0 < ... = t_end`` refined geometrically toward ``t = 0``.

    Steps start at ``dt_min`` and grow by ``ratio`` until ``dt_max``. Extra
    times in ``include`` are inserted exactly.
    """
    if not t_end > 0:
        raise InvalidArgument("t_end must be positive")
    dt_max = t_end / 50 if dt_max is None else float(dt_max)
    dt_min = dt_max * 1e-3 if dt_min is None else float(dt_min)
    if not 0 < dt_min <= dt_max:
        raise InvalidArgument("need 0 < dt_min <= dt_max")
    if ratio < 1:
        raise InvalidArgument("ratio must be >= 1")
    times = [0.0]
    dt = dt_min
    while times[-1] + dt < t_end * (1 - 1e-12):
        times.append(times[-1] + dt)
        dt = min(dt * ratio, dt_max)
    times.append(float(t_end))
    extra = np.array(sorted(float(t) for t in include if 0 < t < t_end))
    base = np.array(times)
    if extra.size:
        # drop generated times that would leave slivers next to inserted ones
        near = np.min(np.abs(base[:, None] - extra[None, :]), axis=1) < 0.5 * dt_min
        base = base[~near | (base == 0.0) | (base == t_end)]
        extra = extra[np.abs(extra - t_end) >= 0.5 * dt_min]
    return np.unique(np.concatenate([base, extra]))


def uniform_time_grid(t_end: float, dt: float) -> np.ndarray:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * t_end:
        raise InvalidArgument("t_end must be a whole number of steps")
    return np.arange(n + 1) * dt


# --------------------------------------------------------------------------- specification

@dataclass(frozen=True, eq=False)
class EvolveSpec:
    """Full description of one parabolic solve.

    ``initial`` is a scalar, an array over the grid, or a callable of the node
    coordinates. Without ``time_grid`` a geometric grid (:func:`make_time_grid`)
    containing ``snapshot_times`` is used.
    """

    domain: DomainSpec
    q: float
    initial: object = 0.0
    boundary: BoundaryMode = field(default_factory=lambda: BoundaryMode.uniform(zero()))
    t_end: float = 1.0
    time_grid: np.ndarray | None = None
    snapshot_times: tuple | None = None

    def __post_init__(self):
        if not self.q > 1:
            raise InvalidArgument("q must exceed 1")
        if not self.t_end > 0:
            raise InvalidArgument("t_end must be positive")
        snaps = None if self.snapshot_times is None else tuple(float(t) for t in self.snapshot_times)
        grid = self.time_grid
        if grid is None:
            grid = make_time_grid(self.t_end, include=snaps or ())
        grid = np.asarray(grid, dtype=float)
        if grid[0] != 0 or np.any(np.diff(grid) <= 0):
            raise InvalidArgument("time grid must start at 0 and increase strictly")
        if abs(grid[-1] - self.t_end) > 1e-12 * self.t_end:
            raise InvalidArgument("time grid must end at t_end")
        if snaps is None:
            snaps = tuple(grid.tolist())
        for t in snaps:
            if np.min(np.abs(grid - t)) > 1e-12 * max(1.0, t):
                raise SnapshotMismatch(f"snapshot time {t!r} is not on the time grid")
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "snapshot_times", snaps)
        nodes = self.nodes
        for piece in set(nodes.pieces.values()):
            self.boundary.tag_for(piece)
        f = self.initial_values
        if np.nanmin(f) < 0:
            raise InvalidArgument("initial data must be nonnegative")

    @cached_property
    def nodes(self) -> NodeSet:
        base = self.domain.nodes
        ins = frozenset(p for p in set(base.pieces.values())
                        if self.boundary.tag_for(p).kind == "insulated")
        if not ins:
            return base
        return dataclasses.replace(base, insulated=ins)

    @cached_property
    def initial_values(self) -> np.ndarray:
        nodes = self.domain.nodes
        f = self.initial
        if callable(f):
            vals = np.asarray(f(*nodes.coordinates()), dtype=float)
        else:
            vals = np.broadcast_to(np.asarray(f, dtype=float), nodes.shape).astype(float)
        vals = np.where(nodes.inside, vals, np.nan)
        if vals.shape != nodes.shape:
            raise InvalidArgument("initial data does not match the grid")
        if np.any(np.isnan(vals[nodes.inside])):
            raise InvalidArgument("initial data has NaN inside the domain")
        return vals

    @property
    def blowup_pieces(self) -> list:
        return sorted(p for p in set(self.nodes.pieces.values())
                      if self.boundary.tag_for(p).kind == "blowup")

    def with_boundary(self, boundary: BoundaryMode) -> "EvolveSpec":
        return dataclasses.replace(self, boundary=boundary)

    def describe(self) -> dict:
        return {"domain": self.domain.describe(), "q": self.q, "t_end": self.t_end,
                "boundary": self.boundary.describe(), "steps": int(self.time_grid.size - 1)}


@dataclass(frozen=True, eq=False)
class Field:
    """Space-time solution: ``values[n]`` is the grid function at ``times[n]`` (NaN outside)."""

    spec: EvolveSpec
    times: np.ndarray
    values: np.ndarray
    provenance: str = "direct"
    diagnostics: dict = field(default_factory=dict)

    @property
    def nodes(self) -> NodeSet:
        return self.spec.nodes

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise SnapshotMismatch(f"time {t!r} is not a time level of this field")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]

    @property
    def snapshots(self) -> dict:
        return {t: self.at(t) for t in self.spec.snapshot_times}

    def max_value(self) -> float:
        return float(np.nanmax(self.values))


# --------------------------------------------------------------------------- one implicit step

def _boundary_values(spec: EvolveSpec, level: int | None, n_time: int, kmax: float) -> np.ndarray:
    """Dirichlet values at time level ``n_time`` (ordered like ``nodes.dirichlet_index``)."""
    nodes = spec.nodes
    didx = nodes.dirichlet_index
    flat_labels = nodes.labels.ravel()[didx]
    out = np.zeros(didx.size)
    for code, piece in nodes.pieces.items():
        sel = flat_labels == code
        if not sel.any():
            continue
        tag = spec.boundary.tag_for(piece)
        if tag.kind == "fixed":
            out[sel] = tag.value
        elif tag.kind == "blowup":
            if level is None:
                raise InvalidArgument("blow-up pieces need a ladder level; use k_ladder_limit")
            out[sel] = tag.ladder[level]
        elif tag.kind == "data":
            out[sel] = np.minimum(tag.data[n_time].ravel()[didx[sel]], kmax)
    return out


class _Stepper:
    """Backward-Euler step on a fixed node set."""

    def __init__(self, nodes: NodeSet, q: float, cfg: NewtonConfig):
        self.nodes = nodes
        self.q = q
        self.cfg = cfg
        self.A, self.B = nodes.operator
        self.diag = self.A.diagonal()
        self.tri = nodes.tridiagonal
        if self.tri is not None and self.tri[0].size != max(self.diag.size - 1, 0):
            self.tri = None
        self._cache = {}

    def _matrix(self, dt):
        key = float(dt)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            m = scipy.sparse.identity(self.diag.size, format="csr") + dt * self.A
            self._cache[key] = m.tocsr()
        return self._cache[key]

    def step(self, dt: float, u_old: np.ndarray, g: np.ndarray) -> np.ndarray:
        q = self.q
        bg = np.asarray(self.B @ g).ravel() if g.size else np.zeros_like(u_old)
        rows = 1.0 + dt * self.diag

        def solve(w, start):
            def residual(u):
                return w * (u - u_old + dt * (self.A @ u + bg + np.abs(u) ** (q - 1) * u))

            if self.tri is not None:
                lo, di, up = self.tri

                def jacobian(u):
                    return (w[1:] * dt * lo, w * (1 + dt * (di + q * np.abs(u) ** (q - 1))),
                            w[:-1] * dt * up)
            else:
                m = self._matrix(dt)

                def jacobian(u):
                    d = scipy.sparse.diags(w * dt * q * np.abs(u) ** (q - 1))
                    return (scipy.sparse.diags(w) @ m + d).tocsc()

            return newton_solve(residual, jacobian, start, self.cfg, polish=2)

        top = max(1.0, float(np.max(np.abs(g), initial=0.0)), float(np.max(np.abs(u_old), initial=0.0)))
        w0 = 1.0 / (rows * top)
        try:
            u = solve(w0, np.maximum(u_old, 0.0))
        except NoConvergence:
            # constant supersolution start: Newton iterates then decrease monotonically
            u = solve(w0, np.full_like(u_old, top))
        if top <= 10.0:
            return u
        # each row in units of its own terms, so every row is resolved to relative precision
        w = 1.0 / np.maximum(self._terms(dt, u, u_old, bg), np.finfo(float).tiny)
        try:
            return solve(w, u)
        except NoConvergence as exc:
            if exc.residual <= max(1e3 * self.cfg.residual_tolerance, 64 * np.finfo(float).eps):
                return u  # already at roundoff level in the new weighting
            raise

    def _terms(self, dt, u, u_old, bg):
        """Magnitude of the terms entering each row; the row's roundoff scale."""
        if not hasattr(self, "_absA"):
            self._absA = abs(self.A)
        return np.abs(u) + np.abs(u_old) + dt * (self._absA @ np.abs(u) + np.abs(bg) + np.abs(u) ** self.q)


def implicit_step(nodes: NodeSet, q: float, dt: float, u_old, g, cfg: NewtonConfig | None = None):
    """One backward-Euler step from grid function ``u_old`` with Dirichlet grid function ``g``.

    Both arguments are full-grid arrays; the result is a full-grid array (NaN outside).
    """
    cfg = cfg or NewtonConfig(max_iterations=100, residual_tolerance=1e-13)
    u_old = np.asarray(u_old, dtype=float)
    g = np.asarray(g, dtype=float)
    st = _Stepper(nodes, q, cfg)
    u = st.step(dt, u_old.ravel()[nodes.unknown_index], g.ravel()[nodes.dirichlet_index])
    out = np.full(nodes.shape, np.nan)
    out.ravel()[nodes.unknown_index] = u
    out.ravel()[nodes.dirichlet_index] = g.ravel()[nodes.dirichlet_index]
    return out


# --------------------------------------------------------------------------- evolution

def _kmax(spec: EvolveSpec) -> float:
    ladders = spec.boundary.ladders(spec.blowup_pieces)
    return max((lad[-1] for lad in ladders.values()), default=np.inf)


def evolve(spec: EvolveSpec, cfg: NewtonConfig | None = None, level: int | None = None) -> Field:
    """Backward-Euler evolution; ``level`` selects the rung of every blow-up ladder.

    Raises
    ------
    NoConvergence
        When a Newton solve fails (step index and time in the message).
    BlowupOverflow
        When values exceed ``1e300``.
    """
    cfg = cfg or NewtonConfig(max_iterations=100, residual_tolerance=1e-13)
    nodes = spec.nodes
    times = spec.time_grid
    kmax = _kmax(spec)
    f = np.minimum(spec.initial_values, kmax)
    uidx, didx = nodes.unknown_index, nodes.dirichlet_index
    values = np.full((times.size,) + nodes.shape, np.nan)
    flat = values.reshape(times.size, -1)
    u = f.ravel()[uidx].copy()
    if not np.all(np.isfinite(u)):
        raise InvalidArgument("initial data must be finite at unknown nodes (no blow-up ladder to clip at)")
    flat[0, uidx] = u
    flat[0, didx] = _boundary_values(spec, level, 0, kmax) if didx.size else []
    st = _Stepper(nodes, spec.q, cfg)
    for n in range(1, times.size):
        dt = times[n] - times[n - 1]
        g = _boundary_values(spec, level, n, kmax)
        try:
            u = st.step(dt, u, g)
        except NoConvergence as exc:
            raise NoConvergence(f"step {n} (t={times[n]:.6g}): {exc}", exc.residual, exc.iterations) from exc
        peak = float(np.max(np.abs(u), initial=0.0))
        if not np.isfinite(peak) or peak > OVERFLOW:
            raise BlowupOverflow(f"values exceed {OVERFLOW:g} at step {n} (t={times[n]:.6g})")
        flat[n, uidx] = u
        flat[n, didx] = g
    diag = {}
    if level is not None:
        diag["level"] = {p: lad[level] for p, lad in spec.boundary.ladders(spec.blowup_pieces).items()}
    return Field(spec, times.copy(), values, "direct", diag)


def _with_levels(spec: EvolveSpec, ladders: dict) -> EvolveSpec:
    tags = dict(spec.boundary.tags)
    for p, lad in ladders.items():
        tags[p] = blowup(lad)
    return spec.with_boundary(BoundaryMode(tags, spec.boundary.default))


def monotone_violation(lower: np.ndarray, upper: np.ndarray) -> float:
    """Largest relative excess of ``lower`` over ``upper`` (``<= 0`` when ordered)."""
    both = np.isfinite(lower) & np.isfinite(upper)
    if not both.any():
        return 0.0
    lo, up = lower[both], upper[both]
    return float(np.max((lo - up) / np.maximum(1.0, np.abs(up))))


def interior_subgrid(nodes: NodeSet, pieces, margin: int = 3,
                     margin_fraction: float = 0.1) -> np.ndarray:
    """Unknown nodes at least ``margin`` cells and ``margin_fraction`` of the depth away from ``pieces``.

    The depth is the largest Euclidean distance from an inside node to the
    pieces; the fractional margin keeps the subgrid meaningful on graded grids.
    """
    cells = nodes.distance_in_cells(pieces)
    dist = nodes.distance_to(pieces)
    finite = dist[np.isfinite(dist) & nodes.inside]
    depth = float(np.max(finite)) if finite.size else 0.0
    mask = nodes.unknown_mask & (cells >= margin) & (dist >= margin_fraction * depth)
    if not mask.any():
        raise InvalidArgument("no unknown node lies far enough from the blow-up pieces")
    return mask


def ladder_increment(prev: Field, top: Field, mask: np.ndarray) -> float:
    """Max over time levels ``t > 0`` of the subgrid increment relative to the subgrid max-norm."""
    worst = 0.0
    for n in range(1, top.times.size):
        a = top.values[n][mask]
        b = prev.values[n][mask]
        scale = float(np.max(np.abs(a)))
        if scale < 1e-12:
            continue
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst


def k_ladder_limit(spec: EvolveSpec, cfg: NewtonConfig | None = None, *, tolerance: float = 1e-4,
                   margin: int = 3, margin_fraction: float = 0.1, extend: bool = True,
                   max_level: float = 1e12, require_convergence: bool = True) -> Field:
    """Blow-up boundary data as the monotone limit over the truncation ladder.

    Every blow-up piece takes rung ``j`` of its ladder at level ``j``. Levels
    are checked to increase nodewise (relative ``1e-10``) and convergence is
    declared when the top-two increment on :func:`interior_subgrid` is below
    ``tolerance``. With ``extend`` the ladder grows by decades up to
    ``max_level``. The top level is returned (the monotone limit is approached
    from below).
    """
    pieces = spec.blowup_pieces
    if not pieces:
        raise InvalidArgument("k_ladder_limit needs a blow-up boundary piece")
    ladders = {p: list(lad) for p, lad in spec.boundary.ladders(pieces).items()}
    lengths = {len(v) for v in ladders.values()}
    if len(lengths) != 1:
        raise InvalidArgument("all blow-up ladders must have the same length")
    mask = interior_subgrid(spec.nodes, pieces, margin, margin_fraction)
    first = _with_levels(spec, ladders)
    fields = parallel_map(lambda j: evolve(first, cfg, j), range(lengths.pop()))
    violations = []
    increments = []

    def audit(a, b):
        viol = monotone_violation(a.values, b.values)
        violations.append(viol)
        if viol > MONOTONE_TOL:
            raise MonotonicityViolation(f"ladder level decreased by {viol:.3e}", viol)
        increments.append(ladder_increment(a, b, mask))

    for a, b in zip(fields, fields[1:]):
        audit(a, b)
    while increments and increments[-1] > tolerance and extend:
        if max(lad[-1] for lad in ladders.values()) * 10 > max_level:
            break
        for lad in ladders.values():
            lad.append(lad[-1] * 10)
        spec_j = _with_levels(spec, ladders)
        fields.append(evolve(spec_j, cfg, len(next(iter(ladders.values()))) - 1))
        audit(fields[-2], fields[-1])
    converged = bool(increments) and increments[-1] <= tolerance
    if not converged and require_convergence:
        last = increments[-1] if increments else float("nan")
        raise LadderNotConverged(f"ladder increment {last:.3e} exceeds {tolerance:g}", last)
    final_spec = _with_levels(spec, ladders)
    top = fields[-1]
    diag = {"ladder": {p: list(v) for p, v in ladders.items()}, "increments": increments,
            "monotonicity_violation": max(violations, default=0.0), "converged": converged,
            "levels": fields}
    return Field(final_spec, top.times, top.values, "k-ladder limit", diag)


def _restrict(spec: EvolveSpec, member: DomainSpec, boundary: BoundaryMode) -> EvolveSpec:
    f = np.where(member.nodes.inside, spec.initial_values, np.nan)
    return EvolveSpec(member, spec.q, np.nan_to_num(f), boundary, spec.t_end, spec.time_grid,
                      spec.snapshot_times)


def _members(domain: DomainSpec, exhaustion_members) -> list:
    out = []
    for m in exhaustion_members:
        if isinstance(m, DomainSpec):
            out.append(m)
        elif isinstance(m, NodeSet):
            out.append(DomainSpec.from_nodes(m))
        else:
            raise InvalidArgument("exhaustion members must be DomainSpec or NodeSet")
    check_nested([m.nodes for m in out])
    if np.any(out[-1].nodes.inside & ~domain.nodes.inside):
        raise ExhaustionNotNested("exhaustion leaves the domain")
    return out


def _audit_members(fields, increasing: bool) -> float:
    worst = 0.0
    for a, b in zip(fields, fields[1:]):
        common = a.nodes.inside & b.nodes.inside
        va = np.where(common, a.values, np.nan)
        vb = np.where(common, b.values, np.nan)
        viol = monotone_violation(va, vb) if increasing else monotone_violation(vb, va)
        worst = max(worst, viol)
        if viol > MONOTONE_TOL:
            word = "increase" if increasing else "decrease"
            raise MonotonicityViolation(f"exhaustion failed to {word} by {viol:.3e}", viol)
    return worst


def maximal_solution(domain: DomainSpec, q: float, f, exhaustion_members, ladder=DEFAULT_LADDER,
                     t_end: float = 1.0, time_grid=None, snapshot_times=None,
                     cfg: NewtonConfig | None = None, **ladder_kw) -> Field:
    """Maximal solution with initial trace ``f``: boundary ``k`` on each exhaustion member.

    Members run with a common ladder, so the decrease in ``n`` is exact.
    The last member's ladder limit is returned.
    """
    members = _members(domain, exhaustion_members)
    base = EvolveSpec(domain, q, f, BoundaryMode.uniform(zero()), t_end, time_grid, snapshot_times)
    bmode = BoundaryMode.uniform(blowup(ladder))
    fields = [k_ladder_limit(_restrict(base, m, bmode), cfg, **ladder_kw) for m in members]
    tops = [max(max(v) for v in fl.diagnostics["ladder"].values()) for fl in fields]
    if len(set(tops)) > 1:
        lad = list(ladder)
        while lad[-1] < max(tops):
            lad.append(lad[-1] * 10)
        bmode = BoundaryMode.uniform(blowup(lad))
        kw = dict(ladder_kw, extend=False, require_convergence=False)
        fields = [fl if top == max(tops) else k_ladder_limit(_restrict(base, m, bmode), cfg, **kw)
                  for fl, top, m in zip(fields, tops, members)]
    worst = _audit_members(fields, increasing=False)
    last = fields[-1]
    diag = dict(last.diagnostics, exhaustion_violation=worst, members=fields)
    return Field(last.spec, last.times, last.values, "exhaustion limit", diag)


def minimal_solution(domain: DomainSpec, q: float, f, exhaustion_members, t_end: float = 1.0,
                     time_grid=None, snapshot_times=None, cfg: NewtonConfig | None = None) -> Field:
    """Minimal nonnegative solution: zero boundary data on each exhaustion member, increasing in ``n``."""
    members = _members(domain, exhaustion_members)
    base = EvolveSpec(domain, q, f, BoundaryMode.uniform(zero()), t_end, time_grid, snapshot_times)
    fields = parallel_map(lambda m: evolve(_restrict(base, m, BoundaryMode.uniform(zero())), cfg),
                          members)
    worst = _audit_members(fields, increasing=True)
    last = fields[-1]
    return Field(last.spec, last.times, last.values, "exhaustion limit",
                 {"exhaustion_violation": worst, "members": fields})


def u0_from(domain: DomainSpec, q: float, u_f: Field, u_minimal: Field, exhaustion_members,
            t_end: float | None = None, cfg: NewtonConfig | None = None) -> Field:
    """Zero-trace solution with boundary data ``u_f - u_minimal`` on each exhaustion member."""
    if u_f.values.shape != u_minimal.values.shape or not np.array_equal(u_f.times, u_minimal.times):
        raise InvalidArgument("u_f and u_minimal must share the grid and the time grid")
    diff = u_f.values - u_minimal.values
    inside = domain.nodes.inside
    gap = np.nanmin(np.where(inside, diff, np.nan))
    if gap < -1e-10 * max(1.0, float(np.nanmax(np.abs(u_f.values)))):
        raise NegativeBoundaryData(f"u_f falls below the minimal solution by {-gap:.3e}")
    diff = np.maximum(np.nan_to_num(diff), 0.0)
    members = _members(domain, exhaustion_members)
    t_end = u_f.spec.t_end if t_end is None else t_end
    bmode = BoundaryMode.uniform(data(diff))
    fields = parallel_map(
        lambda m: evolve(EvolveSpec(m, q, 0.0, bmode, t_end, u_f.times, u_f.spec.snapshot_times), cfg),
        members)
    worst = _audit_members(fields, increasing=True)
    last = fields[-1]
    return Field(last.spec, last.times, last.values, "exhaustion limit",
                 {"exhaustion_violation": worst, "members": fields})


def unit_ball_evolution(N: int, q: float, s_values, n: int = 201, edge_width: float = 1e-8,
                        ladder=DEFAULT_LADDER, dt_max: float = 0.01, time_ratio: float = 1.2,
                        cfg: NewtonConfig | None = None, return_field: bool = False, **ladder_kw):
    """Centre values ``u_1(0, s)`` of the blow-up solution of the unit ball with zero initial data.

    The radial grid is graded toward the sphere down to ``edge_width`` so the
    ladder converges; decades are appended up to ``max_level`` (default 1e16).
    Steps grow by ``time_ratio`` from ``dt_max * 1e-4`` up to ``dt_max``; the
    early-time error scales with ``dt / t``, hence with ``time_ratio - 1``.
    """
    s_values = np.asarray(s_values, dtype=float)
    if np.any(s_values <= 0) or np.any(np.diff(s_values) <= 0):
        raise InvalidArgument("s_values must be positive and increasing")
    domain = DomainSpec("radial_ball", 1.0, n=n, dim=N, edge_width=edge_width)
    t_end = float(s_values[-1])
    grid = make_time_grid(t_end, dt_max=dt_max, dt_min=dt_max * 1e-4, ratio=time_ratio,
                          include=s_values)
    spec = EvolveSpec(domain, q, 0.0, BoundaryMode.uniform(blowup(ladder)), t_end, grid,
                      tuple(s_values))
    kw = dict(extend=True, max_level=1e16)
    kw.update(ladder_kw)
    fld = k_ladder_limit(spec, cfg, **kw)
    centre = np.array([fld.at(s)[0] for s in s_values])
    return (centre, fld) if return_field else centre


def lateral_blowup_minima(fld: Field, deltas, tau: float, pieces=None) -> np.ndarray:
    """``min u(x, t)`` over ``dist(x, pieces) <= delta`` and ``tau <= t <= T``, for each delta."""
    nodes = fld.nodes
    pieces = fld.spec.blowup_pieces if pieces is None else pieces
    dist = nodes.distance_to(pieces)
    sel_t = fld.times >= tau
    out = []
    for d in deltas:
        m = nodes.unknown_mask & (dist <= d)
        if not m.any():
            raise InvalidArgument(f"no unknown node within distance {d} of the blow-up boundary")
        out.append(float(np.min(fld.values[sel_t][:, m])))
    return np.array(out)


def scalar_decay(c: float, q: float, t) -> np.ndarray:
    """Exact solution of ``z' = -z^q`` with ``z(0) = c`` (``c = inf`` gives the universal bound)."""
    t = np.asarray(t, dtype=float)
    base = (0.0 if np.isinf(c) else c ** (1 - q)) + (q - 1) * t
    with np.errstate(divide="ignore"):
        return base ** (-1.0 / (q - 1))


def universal_bound_violation(fld: Field) -> float:
    """Worst relative excess of interior values over ``((q-1) t)^(-1/(q-1))`` for ``t > 0``."""
    q = fld.spec.q
    mask = fld.nodes.unknown_mask
    worst = -np.inf
    for n in range(1, fld.times.size):
        bound = float(scalar_decay(np.inf, q, fld.times[n]))
        worst = max(worst, float(np.max(fld.values[n][mask])) / bound - 1.0)
    return worst


def export_field(fld: Field, out_dir, prefix: str = "snapshot") -> Path:
    """One CSV per snapshot (``x[,y],u`` over inside nodes) plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nodes = fld.nodes
    coords = [c[nodes.inside] for c in nodes.coordinates()]
    header = ["x", "y"][: nodes.ndim] + ["u"]
    files = []
    for i, t in enumerate(fld.spec.snapshot_times):
        vals = fld.at(t)[nodes.inside]
        name = f"{prefix}_{i:04d}.csv"
        with (out_dir / name).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*coords, vals):
                w.writerow([repr(float(v)) for v in row])
        files.append({"time": float(t), "file": name})
    diag = {k: v for k, v in fld.diagnostics.items() if k not in ("levels", "members")}
    manifest = {"scheme": fld.provenance, "q": fld.spec.q, "domain": fld.spec.domain.describe(),
                "boundary": fld.spec.boundary.describe(),
                "ladder": diag.pop("ladder", None), "times": [float(t) for t in fld.times],
                "snapshots": files, "diagnostics": _jsonable(diag)}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
