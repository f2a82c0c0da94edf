"""Node sets and the monotone finite-volume Laplacian shared by all solvers.

A :class:`NodeSet` labels every node of a 1-D, radial or 2-D tensor grid as
outside, interior (an unknown) or a boundary node belonging to a named piece.
:meth:`NodeSet.operator` assembles ``-Laplacian`` restricted to the unknowns as

    (-Delta_h u)[unknown] = A @ u[unknown] + B @ u[dirichlet]

where ``A`` has a positive diagonal, nonpositive off-diagonal entries and
zero row sums together with ``B`` (which is entrywise <= 0). This is the
M-matrix structure behind the discrete comparison principle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse
from scipy import ndimage
from scipy.spatial import cKDTree

from .exceptions import ExhaustionNotNested, InvalidArgument
from .numcore import BOUNDARY, INTERIOR, OUTSIDE, Grid1D, interior_without_support

CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(eq=False)
class NodeSet:
    """Labelled nodes on a tensor grid.

    Parameters
    ----------
    axes : tuple of 1-D node arrays (one per dimension).
    labels : int array over the grid; 0 outside, 1 interior, codes >= 2 are
        boundary pieces named by ``pieces`` (code -> name).
    radial_dim : when set (1-D only) the axis is the radius of a ball in
        ``R^radial_dim`` and the first node must be the centre ``r = 0``.
    insulated : names of pieces whose nodes are unknowns with zero flux.
    """

    axes: tuple
    labels: np.ndarray
    pieces: dict = field(default_factory=dict)
    radial_dim: int | None = None
    insulated: frozenset = frozenset()

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.labels = np.asarray(self.labels, dtype=np.int16)
        shape = tuple(a.size for a in self.axes)
        if self.labels.shape != shape:
            raise InvalidArgument(f"labels shape {self.labels.shape} != grid shape {shape}")
        if self.radial_dim is not None:
            if self.ndim != 1:
                raise InvalidArgument("radial node sets are one-dimensional")
            if self.axes[0][0] != 0.0:
                raise InvalidArgument("radial grid must start at the centre r = 0")
        codes = set(np.unique(self.labels[self.labels >= BOUNDARY]).tolist())
        missing = codes - set(self.pieces)
        if missing:
            raise InvalidArgument(f"boundary codes without a piece name: {sorted(missing)}")
        unknown_ins = set(self.insulated) - set(self.pieces.values())
        if unknown_ins:
            raise InvalidArgument(f"unknown insulated pieces {sorted(unknown_ins)}")
        if self.ndim == 2:
            bad = interior_without_support(np.where(self.labels >= BOUNDARY, BOUNDARY, self.labels))
            if bad.any():
                raise InvalidArgument("an interior node has an outside neighbour")
        if not np.any(self.labels == INTERIOR):
            raise InvalidArgument("domain has empty interior")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return self.labels.shape

    def codes_of(self, name) -> list:
        return [c for c, n in self.pieces.items() if n == name]

    def piece_mask(self, name) -> np.ndarray:
        return np.isin(self.labels, self.codes_of(name))

    @cached_property
    def inside(self) -> np.ndarray:
        return self.labels != OUTSIDE

    @cached_property
    def unknown_mask(self) -> np.ndarray:
        m = self.labels == INTERIOR
        for name in self.insulated:
            m |= self.piece_mask(name)
        return m

    @cached_property
    def dirichlet_mask(self) -> np.ndarray:
        return self.inside & ~self.unknown_mask

    @cached_property
    def unknown_index(self) -> np.ndarray:
        return np.flatnonzero(self.unknown_mask.ravel())

    @cached_property
    def dirichlet_index(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet_mask.ravel())

    def coordinates(self):
        """Meshgrid coordinate arrays (``ij`` indexing)."""
        return np.meshgrid(*self.axes, indexing="ij")

    @cached_property
    def operator(self):
        """``(A, B)`` as CSR matrices over unknown / Dirichlet nodes."""
        shape = self.shape
        flat_inside = self.inside.ravel()
        unknown_pos = -np.ones(flat_inside.size, dtype=np.int64)
        unknown_pos[self.unknown_index] = np.arange(self.unknown_index.size)
        dir_pos = -np.ones(flat_inside.size, dtype=np.int64)
        dir_pos[self.dirichlet_index] = np.arange(self.dirichlet_index.size)

        rows, cols, vals, brows, bcols, bvals = [], [], [], [], [], []
        diag = np.zeros(self.unknown_index.size)
        idx = np.unravel_index(self.unknown_index, shape)
        row_ids = np.arange(self.unknown_index.size)
        for axis, nodes in enumerate(self.axes):
            i = idx[axis]
            n_ax = nodes.size
            nbr_present = {}
            spacing = {}
            nbr_flat = {}
            for step in (-1, 1):
                j = i + step
                valid = (j >= 0) & (j < n_ax)
                jc = np.clip(j, 0, n_ax - 1)
                nidx = list(idx)
                nidx[axis] = jc
                flat = np.ravel_multi_index(tuple(nidx), shape)
                present = valid & flat_inside[flat]
                nbr_present[step] = present
                nbr_flat[step] = flat
                spacing[step] = np.where(present, np.abs(nodes[jc] - nodes[i]), 0.0)
            if self.radial_dim is None:
                volume = 0.5 * (spacing[-1] + spacing[1])
                area = {-1: np.ones_like(volume), 1: np.ones_like(volume)}
            else:
                dim = self.radial_dim
                r = nodes[i]
                r_lo = np.where(nbr_present[-1], r - 0.5 * spacing[-1], r)
                r_hi = np.where(nbr_present[1], r + 0.5 * spacing[1], r)
                volume = (r_hi ** dim - r_lo ** dim) / dim
                area = {-1: r_lo ** (dim - 1), 1: r_hi ** (dim - 1)}
            if np.any(volume <= 0):
                raise InvalidArgument("an unknown node has no neighbours along an axis")
            for step in (-1, 1):
                present = nbr_present[step]
                coef = np.zeros_like(volume)
                coef[present] = area[step][present] / (spacing[step][present] * volume[present])
                diag += coef
                flat = nbr_flat[step]
                upos = unknown_pos[flat]
                dpos = dir_pos[flat]
                sel_u = present & (upos >= 0)
                sel_d = present & (dpos >= 0)
                rows.append(row_ids[sel_u])
                cols.append(upos[sel_u])
                vals.append(-coef[sel_u])
                brows.append(row_ids[sel_d])
                bcols.append(dpos[sel_d])
                bvals.append(-coef[sel_d])
        nu, nd = self.unknown_index.size, self.dirichlet_index.size
        rows.append(row_ids)
        cols.append(row_ids)
        vals.append(diag)
        A = scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nu, nu))
        B = scipy.sparse.csr_matrix(
            (np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))), shape=(nu, nd))
        return A, B

    @cached_property
    def tridiagonal(self):
        """``A`` split into diagonals when the unknowns form a 1-D chain."""
        if self.ndim != 1:
            return None
        from .numcore import tridiagonal_parts

        return tridiagonal_parts(self.operator[0])

    def distance_in_cells(self, pieces=None) -> np.ndarray:
        """Graph distance (in cells) of every node to the given boundary pieces."""
        if pieces is None:
            target = self.dirichlet_mask
        else:
            target = np.zeros(self.shape, dtype=bool)
            for name in pieces:
                target |= self.piece_mask(name)
        if not target.any():
            return np.full(self.shape, np.inf)
        if self.ndim == 1:
            pos = np.flatnonzero(target)
            k = np.arange(self.shape[0])
            return np.min(np.abs(k[:, None] - pos[None, :]), axis=1).astype(float)
        return ndimage.distance_transform_cdt(~target, metric="taxicab").astype(float)

    def distance_to(self, pieces=None) -> np.ndarray:
        """Euclidean distance of every node to the nearest node of the given pieces."""
        if pieces is None:
            target = self.dirichlet_mask
        else:
            target = np.zeros(self.shape, dtype=bool)
            for name in pieces:
                target |= self.piece_mask(name)
        if not target.any():
            return np.full(self.shape, np.inf)
        pts = np.stack([c.ravel() for c in self.coordinates()], axis=1)
        tree = cKDTree(pts[target.ravel()])
        dist, _ = tree.query(pts)
        return dist.reshape(self.shape)

    def eroded(self, m: int, piece: str = "boundary") -> "NodeSet":
        """Sub-domain obtained by removing ``m`` layers of cells.

        Nodes of the current domain adjacent to the eroded interior become the
        single boundary piece ``piece``.
        """
        if m < 0:
            raise InvalidArgument("erosion depth must be nonnegative")
        interior = self.labels == INTERIOR
        if self.radial_dim is not None:
            interior = interior | (np.arange(self.shape[0]) == 0)
        if m == 0:
            new_int = interior
        elif self.ndim == 1:
            new_int = interior.copy()
            k = np.flatnonzero(interior)
            if self.radial_dim is not None:
                new_int[k[-m:]] = False
            else:
                new_int[k[:m]] = False
                new_int[k[-m:]] = False
        else:
            new_int = ndimage.binary_erosion(interior, structure=CROSS, iterations=m)
        if not new_int.any():
            raise ExhaustionNotNested(f"erosion by {m} cells empties the domain")
        if self.ndim == 1:
            grown = new_int.copy()
            grown[1:] |= new_int[:-1]
            grown[:-1] |= new_int[1:]
        else:
            grown = ndimage.binary_dilation(new_int, structure=CROSS)
        labels = np.zeros(self.shape, dtype=np.int16)
        labels[grown & self.inside] = BOUNDARY
        labels[new_int] = INTERIOR
        if self.radial_dim is not None:
            labels[0] = INTERIOR
        return NodeSet(self.axes, labels, {BOUNDARY: piece}, self.radial_dim)


def interval_nodes(grid: Grid1D) -> NodeSet:
    labels = np.full(len(grid), INTERIOR, dtype=np.int16)
    labels[0] = 2
    labels[-1] = 3
    return NodeSet((grid.nodes,), labels, {2: "left", 3: "right"})


def radial_nodes(grid: Grid1D, dim: int) -> NodeSet:
    labels = np.full(len(grid), INTERIOR, dtype=np.int16)
    labels[-1] = 2
    return NodeSet((grid.nodes,), labels, {2: "outer"}, radial_dim=int(dim))


def rectangle_nodes(x_grid: Grid1D, y_grid: Grid1D) -> NodeSet:
    labels = np.full((len(x_grid), len(y_grid)), INTERIOR, dtype=np.int16)
    labels[:, 0] = 4
    labels[:, -1] = 5
    labels[0, :] = 2
    labels[-1, :] = 3
    return NodeSet((x_grid.nodes, y_grid.nodes), labels,
                   {2: "left", 3: "right", 4: "bottom", 5: "top"})
