"""Mixed-dimensional geometry: rooted-tree forests, Cartesian grids, supports.

The computational domain is the disjoint union of an n-dimensional
Cartesian cell grid (the porous continuum) and a forest of rooted trees
(the resolved vessel network).  Leaves of the trees ("terminals")
exchange fluid with the continuum over a compactly supported region,
represented here extensionally as the set of cells where the scaled
transfer coefficient is nonzero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .quadrature import cell_points


class NodeKind(enum.Enum):
    DIRICHLET_ROOT = "dirichlet"
    NEUMANN_ROOT = "neumann"
    INTERIOR = "interior"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class Node:
    """A network node.

    ``value`` is the prescribed pressure for Dirichlet roots, ``anchor``
    the spatial coupling point for terminals; both are None otherwise.
    """

    id: int
    kind: NodeKind
    value: float | None = None
    anchor: tuple[float, ...] | None = None

    @property
    def is_root(self) -> bool:
        return self.kind in (NodeKind.DIRICHLET_ROOT, NodeKind.NEUMANN_ROOT)


def dirichlet_root(node_id: int, value: float) -> Node:
    return Node(node_id, NodeKind.DIRICHLET_ROOT, value=float(value))


def neumann_root(node_id: int) -> Node:
    return Node(node_id, NodeKind.NEUMANN_ROOT)


def interior(node_id: int) -> Node:
    return Node(node_id, NodeKind.INTERIOR)


def terminal(node_id: int, anchor) -> Node:
    return Node(node_id, NodeKind.TERMINAL, anchor=tuple(float(a) for a in anchor))


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    k: float


@dataclass(frozen=True)
class Forest:
    """A validated forest of rooted trees with root-to-terminal edge orientation."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    tree_of: dict[int, int]  # node id -> tree id

    @property
    def n_trees(self) -> int:
        return len(set(self.tree_of.values())) if self.tree_of else 0

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    @property
    def _by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    def nodes_of_kind(self, kind: NodeKind) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.kind == kind)

    @property
    def terminals(self) -> tuple[Node, ...]:
        return self.nodes_of_kind(NodeKind.TERMINAL)

    @property
    def dirichlet_roots(self) -> tuple[Node, ...]:
        return self.nodes_of_kind(NodeKind.DIRICHLET_ROOT)

    @property
    def free_nodes(self) -> tuple[Node, ...]:
        """Nodes carrying pressure unknowns (everything but Dirichlet roots)."""
        return tuple(n for n in self.nodes if n.kind != NodeKind.DIRICHLET_ROOT)


def build_forest(nodes, edges) -> Forest:
    """Validate node/edge specs and return a Forest.

    Edges may be given in either orientation; they are reoriented to run
    from the root towards the terminals.  Raises ValueError on cycles,
    trees with root count != 1, roots or terminals of degree != 1, and
    nonpositive edge conductivities.
    """
    nodes = tuple(nodes)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids")
    by_id = {n.id: n for n in nodes}

    raw_edges = []
    for e in edges:
        tail, head, k = (e.tail, e.head, e.k) if isinstance(e, Edge) else e
        if tail not in by_id or head not in by_id:
            raise ValueError(f"edge ({tail}, {head}) references unknown node")
        if tail == head:
            raise ValueError(f"self-loop at node {tail} forms a cycle")
        if not k > 0:
            raise ValueError(f"nonpositive conductivity {k} on edge ({tail}, {head})")
        raw_edges.append((tail, head, float(k)))

    # Connected components by union-find.
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for tail, head, _ in raw_edges:
        a, b = find(tail), find(head)
        if a != b:
            parent[a] = b
    roots_of_comp: dict[int, int] = {}
    tree_of = {}
    for i in ids:
        comp = find(i)
        tree_of[i] = roots_of_comp.setdefault(comp, len(roots_of_comp))

    n_trees = len(roots_of_comp)
    if len(raw_edges) != len(nodes) - n_trees:
        raise ValueError(
            f"cycle detected: {len(raw_edges)} edges for {len(nodes)} nodes "
            f"in {n_trees} trees"
        )

    degree = {i: 0 for i in ids}
    adjacency: dict[int, list[tuple[int, int]]] = {i: [] for i in ids}
    for idx, (tail, head, _) in enumerate(raw_edges):
        degree[tail] += 1
        degree[head] += 1
        adjacency[tail].append((head, idx))
        adjacency[head].append((tail, idx))

    for tree in range(n_trees):
        members = [i for i in ids if tree_of[i] == tree]
        roots = [i for i in members if by_id[i].is_root]
        if len(roots) > 1:
            raise ValueError(f"multiple roots in one tree: nodes {sorted(roots)}")
        if len(roots) == 0:
            raise ValueError(f"tree containing node {members[0]} has no root")

    for i in ids:
        n = by_id[i]
        if (n.is_root or n.kind == NodeKind.TERMINAL) and degree[i] != 1:
            raise ValueError(
                f"{n.kind.value} node {i} has degree {degree[i]}, expected 1"
            )

    # Orient every edge away from its tree's root (BFS).
    oriented: list[Edge | None] = [None] * len(raw_edges)
    for root in (i for i in ids if by_id[i].is_root):
        stack = [root]
        seen = {root}
        while stack:
            u = stack.pop()
            for v, eidx in adjacency[u]:
                if v in seen:
                    continue
                seen.add(v)
                k = raw_edges[eidx][2]
                oriented[eidx] = Edge(u, v, k)
                stack.append(v)

    return Forest(nodes=nodes, edges=tuple(oriented), tree_of=tree_of)


@dataclass(frozen=True)
class SignedIncidence:
    """Edge-by-node signed incidence matrix with Dirichlet columns dropped.

    Row for an edge holds +1 at its tail column and -1 at its head
    column; columns of Dirichlet root nodes are omitted, so a row whose
    tail is a Dirichlet root keeps only the -1 entry.  Acting on node
    pressures the matrix is a discrete gradient; its transpose is a
    discrete divergence.
    """

    matrix: sp.csr_matrix
    node_ids: tuple[int, ...]  # column order
    edge_list: tuple[Edge, ...]  # row order


def incidence(forest: Forest) -> SignedIncidence:
    free = forest.free_nodes
    col = {n.id: j for j, n in enumerate(free)}
    rows, cols, vals = [], [], []
    for i, e in enumerate(forest.edges):
        if e.tail in col:
            rows.append(i)
            cols.append(col[e.tail])
            vals.append(1.0)
        if e.head in col:
            rows.append(i)
            cols.append(col[e.head])
            vals.append(-1.0)
    mat = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(forest.edges), len(free))
    )
    return SignedIncidence(mat, tuple(n.id for n in free), forest.edges)


class CartesianGrid:
    """Tensor-product cell grid with per-axis spacing and an active-cell mask.

    Cells are indexed in C order over the full brick; only active cells
    carry unknowns.  Faces exist between axis-adjacent active cells
    (interior faces, the flux unknowns) and on the boundary of the
    active region (zero-Neumann faces, eliminated from the system).
    """

    def __init__(self, cells, extent=None, spacing=None, origin=None, mask=None):
        self.cells = tuple(int(c) for c in cells)
        self.dim = len(self.cells)
        if not 2 <= self.dim <= 4:
            raise ValueError(f"grid dimension must be in 2..4, got {self.dim}")
        if any(c < 1 for c in self.cells):
            raise ValueError("cell counts must be positive")
        if (extent is None) == (spacing is None):
            raise ValueError("give exactly one of extent or spacing")
        if spacing is None:
            self.spacing = np.asarray(extent, dtype=float) / np.asarray(self.cells)
        else:
            self.spacing = np.asarray(spacing, dtype=float)
        if np.any(self.spacing <= 0):
            raise ValueError("spacings must be positive")
        self.origin = (
            np.zeros(self.dim) if origin is None else np.asarray(origin, dtype=float)
        )
        if mask is None:
            mask = np.ones(self.cells, dtype=bool)
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != self.cells:
            raise ValueError("mask shape does not match cell counts")

        # active cell numbering (C order)
        self.active_index = -np.ones(self.cells, dtype=np.int64)
        flat = np.flatnonzero(self.mask.ravel())
        self.active_index.ravel()[flat] = np.arange(flat.size)
        self.n_cells = flat.size
        if self.n_cells == 0:
            raise ValueError("grid has no active cells")
        self._active_multi = np.stack(
            np.unravel_index(flat, self.cells), axis=-1
        )  # (n_cells, dim)

        self.cell_volume = float(np.prod(self.spacing))
        self.face_area = self.cell_volume / self.spacing  # per axis

        self._build_faces()

    def _build_faces(self):
        """Enumerate interior faces axis by axis, C order within each axis."""
        lo_list, hi_list, axis_list = [], [], []
        idx = self.active_index
        for a in range(self.dim):
            sl_lo = [slice(None)] * self.dim
            sl_hi = [slice(None)] * self.dim
            sl_lo[a] = slice(0, self.cells[a] - 1)
            sl_hi[a] = slice(1, self.cells[a])
            lo = idx[tuple(sl_lo)].ravel()
            hi = idx[tuple(sl_hi)].ravel()
            keep = (lo >= 0) & (hi >= 0)
            lo_list.append(lo[keep])
            hi_list.append(hi[keep])
            axis_list.append(np.full(keep.sum(), a, dtype=np.int64))
        self.face_lo = np.concatenate(lo_list) if lo_list else np.zeros(0, np.int64)
        self.face_hi = np.concatenate(hi_list) if hi_list else np.zeros(0, np.int64)
        self.face_axis = (
            np.concatenate(axis_list) if axis_list else np.zeros(0, np.int64)
        )
        self.n_faces = self.face_lo.size

    @property
    def cell_multi_index(self) -> np.ndarray:
        """(n_cells, dim) integer multi-indices of the active cells."""
        return self._active_multi

    def cell_face_maps(self):
        """Per cell and axis, the interior face below/above it (-1 at walls)."""
        dn = -np.ones((self.n_cells, self.dim), dtype=np.int64)
        up = -np.ones((self.n_cells, self.dim), dtype=np.int64)
        up[self.face_lo, self.face_axis] = np.arange(self.n_faces)
        dn[self.face_hi, self.face_axis] = np.arange(self.n_faces)
        return dn, up

    def cell_centers(self) -> np.ndarray:
        return self.origin + (self._active_multi + 0.5) * self.spacing

    def face_centers(self) -> np.ndarray:
        lo_centers = self.cell_centers()[self.face_lo]
        shift = 0.5 * self.spacing[self.face_axis]
        out = lo_centers.copy()
        out[np.arange(self.n_faces), self.face_axis] += shift
        return out

    def quadrature(self, order: int = 4, cells=None):
        """Quadrature points/weights for all (or selected) active cells."""
        centers = self.cell_centers()
        if cells is not None:
            centers = centers[cells]
        return cell_points(centers, self.spacing, order)

    def locate(self, point) -> int:
        """Active index of the cell containing `point`; -1 if outside/inactive."""
        point = np.asarray(point, dtype=float)
        upper = self.origin + np.asarray(self.cells) * self.spacing
        if np.any(point < self.origin) or np.any(point > upper):
            return -1
        ijk = np.floor((point - self.origin) / self.spacing).astype(int)
        ijk = np.clip(ijk, 0, np.asarray(self.cells) - 1)
        return int(self.active_index[tuple(ijk)])


def transfer_profile(r, r0: float, r1: float, kT0: float):
    """Radial transfer permeability: kT0 inside r0, tapering to 0 at r1.

    For r0 < r1 the taper is kT0 * a0^2 (r1^2 - r^2) / r^2 with
    a0^2 = r0^2 / (r1^2 - r0^2), which is continuous at r0.  For
    r0 == r1 the profile is the sharp cutoff kT0 * 1_{r <= r0}.
    """
    if not 0 < r0 <= r1:
        raise ValueError(f"need 0 < r0 <= r1, got r0={r0}, r1={r1}")
    if not kT0 > 0:
        raise ValueError(f"need kT0 > 0, got {kT0}")
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r <= r0] = kT0
    if r1 > r0:
        a0sq = r0**2 / (r1**2 - r0**2)
        mid = (r > r0) & (r <= r1)
        rm = r[mid]
        out[mid] = kT0 * a0sq * (r1**2 - rm**2) / rm**2
    return out


def radial_cell_average(
    grid: "CartesianGrid",
    cells,
    anchor,
    axes,
    func,
    breaks=(),
    restrict=None,
    quad_order: int = 4,
    subdiv: int = 8,
):
    """Quadrature cell averages of a radial profile over selected cells.

    ``func`` maps the distance r to the anchor (measured over ``axes``)
    to a value; ``restrict`` optionally multiplies by a 0/1 factor of
    the full-dimensional point.  ``breaks`` entries are either a radius
    (kink circle) or an (inner, outer) band; cells whose distance range
    touches one get a composite rule subdivided ``subdiv``-fold along
    the radial axes, so profile kinks, cutoffs, and strongly curved
    annuli do not limit the accuracy of the averages.
    """
    from .quadrature import composite_rule

    cells = np.asarray(cells, dtype=np.int64)
    anchor = np.asarray(anchor, dtype=float)
    axes = list(axes)
    centers = grid.cell_centers()[cells]
    half = 0.5 * grid.spacing[axes]

    delta = np.abs(centers[:, axes] - anchor)
    nearest = np.maximum(delta - half, 0.0)
    farthest = delta + half
    dmin = np.sqrt((nearest**2).sum(axis=1))
    dmax = np.sqrt((farthest**2).sum(axis=1))
    straddle = np.zeros(cells.size, dtype=bool)
    for rb in breaks:
        a, b = rb if np.ndim(rb) else (rb, rb)
        straddle |= (dmin <= b) & (a <= dmax)

    out = np.zeros(cells.size)
    sub_axes = np.ones(grid.dim, dtype=int)
    sub_axes[axes] = subdiv
    for mask, rule in (
        (~straddle, None),
        (straddle, composite_rule(grid.dim, quad_order, sub_axes)),
    ):
        if not np.any(mask):
            continue
        if rule is None:
            pts, w = grid.quadrature(order=quad_order, cells=cells[mask])
        else:
            ref, w = rule
            pts = (
                grid.cell_centers()[cells[mask]][:, None, :]
                + ref[None, :, :] * grid.spacing[None, None, :]
            )
        r = np.sqrt(((pts[:, :, axes] - anchor) ** 2).sum(axis=2))
        vals = func(r)
        if restrict is not None:
            flat = pts.reshape(-1, grid.dim)
            vals = vals * np.asarray(restrict(flat), dtype=float).reshape(vals.shape)
        out[mask] = vals @ w
    return out


def _disc_strip_area(R: float, x0: float, x1: float, y0: float, y1: float) -> float:
    """Exact area of {x^2 + y^2 <= R^2} within the box [x0,x1] x [y0,y1].

    Integrates the clipped vertical extent of the disc in closed form,
    splitting at the abscissae where the circle crosses the horizontal
    box edges so every piece is analytic.
    """
    lo, hi = max(x0, -R), min(x1, R)
    if lo >= hi:
        return 0.0

    def F(x):
        x = min(max(x, -R), R)
        return 0.5 * (x * np.sqrt(max(R * R - x * x, 0.0)) + R * R * np.arcsin(x / R))

    cuts = {lo, hi}
    for yy in (y0, y1):
        if abs(yy) < R:
            xc = np.sqrt(R * R - yy * yy)
            for t in (-xc, xc):
                if lo < t < hi:
                    cuts.add(t)
    xs = sorted(cuts)
    total = 0.0
    for a, b in zip(xs, xs[1:]):
        xm = 0.5 * (a + b)
        s = np.sqrt(max(R * R - xm * xm, 0.0))
        top_is_cap = s < y1
        bot_is_cap = -s > y0
        top_mid = s if top_is_cap else y1
        bot_mid = -s if bot_is_cap else y0
        if top_mid <= bot_mid:
            continue
        total += (F(b) - F(a)) if top_is_cap else y1 * (b - a)
        total -= -(F(b) - F(a)) if bot_is_cap else y0 * (b - a)
    return total


def disc_cell_fractions(grid: "CartesianGrid", cells, center, radius: float):
    """Exact covered-area fraction of a 2D disc for each listed cell."""
    if grid.dim != 2:
        raise ValueError("exact disc overlap is implemented for 2D grids")
    cells = np.asarray(cells, dtype=np.int64)
    centers = grid.cell_centers()[cells]
    hx, hy = grid.spacing
    out = np.empty(cells.size)
    cx, cy = center
    for i, (mx, my) in enumerate(centers):
        out[i] = _disc_strip_area(
            radius, mx - cx - hx / 2, mx - cx + hx / 2, my - cy - hy / 2, my - cy + hy / 2
        )
    return out / grid.cell_volume


@dataclass(frozen=True)
class SupportRegion:
    """Cells coupled to one terminal, with the scaled coefficient per cell.

    ``ks`` holds the cellwise square root of the quadrature-averaged
    transfer coefficient, so ks^2 * volume reproduces the cell integral
    of kT; the represented region is exactly the cells where that value
    is positive.
    """

    terminal_id: int
    cell_idx: np.ndarray  # active cell indices, sorted
    ks: np.ndarray  # per-cell scaled transfer coefficient, > 0

    def integral(self, cell_volume: float) -> float:
        """Total scaled coupling mass, sum(ks * vol)."""
        return float(self.ks.sum() * cell_volume)


def build_support(
    grid: CartesianGrid,
    terminal_id: int,
    anchor,
    radii,
    kT0: float,
    radial_axes=None,
    restrict=None,
    quad_order: int = 4,
    quad_subdiv: int | None = None,
) -> SupportRegion:
    """Evaluate the scaled transfer coefficient around a terminal anchor.

    The distance to the anchor is measured over ``radial_axes`` only
    (default: all axes), so a 4D grid can carry supports that are radial
    in space and constant through the extra axis.  ``restrict`` is an
    optional predicate on quadrature points returning a 0/1 (or bool)
    factor, used e.g. to confine a support to one compartment.

    The per-cell transfer coefficient is the quadrature average of
    kT(x).  Cells touching the taper annulus [r0, r1], where the profile
    has kinks and strong curvature, are refined ``quad_subdiv``-fold
    (default 32 for up to 2 radial axes, else 4) so the coupling
    conductance the scheme sees is resolved well below discretization
    error.  The stored scaled coefficient is the cellwise square root of
    the average; cells where it vanishes are excluded.  The support is
    truncated at the domain boundary without renormalization.
    """
    r0, r1 = radii
    anchor = np.asarray(anchor, dtype=float)
    axes = tuple(range(grid.dim)) if radial_axes is None else tuple(radial_axes)
    if anchor.shape != (len(axes),):
        raise ValueError(
            f"anchor has {anchor.size} coordinates for {len(axes)} radial axes"
        )
    lo = grid.origin[list(axes)]
    hi = lo + np.asarray(grid.cells)[list(axes)] * grid.spacing[list(axes)]
    if np.any(anchor < lo) or np.any(anchor > hi):
        raise ValueError(f"anchor {anchor.tolist()} lies outside the grid")

    # Candidate cells: bounding box of the outer radius along the radial axes.
    centers = grid.cell_centers()
    half = 0.5 * grid.spacing[list(axes)]
    near = np.all(
        np.abs(centers[:, axes] - anchor) <= r1 + half + 1e-12, axis=1
    )
    cand = np.flatnonzero(near)
    if cand.size == 0:
        raise ValueError("empty support: no cells near the anchor")

    if quad_subdiv is None:
        quad_subdiv = 32 if len(axes) <= 2 else 4
    if r0 == r1 and grid.dim == 2 and restrict is None:
        # sharp cutoff: quadrature of an indicator converges poorly, but
        # the disc-cell overlap has a closed form in 2D
        kt_cell = kT0 * disc_cell_fractions(grid, cand, anchor, r1)
    else:
        kt_cell = radial_cell_average(
            grid,
            cand,
            anchor,
            axes,
            lambda r: transfer_profile(r, r0, r1, kT0),
            breaks=((r0, r1),),
            restrict=restrict,
            quad_order=quad_order,
            subdiv=quad_subdiv,
        )
    keep = kt_cell > 0.0
    if not np.any(keep):
        raise ValueError("empty support: transfer coefficient vanishes on all cells")
    order = np.argsort(cand[keep])
    return SupportRegion(
        terminal_id=terminal_id,
        cell_idx=cand[keep][order],
        ks=np.sqrt(kt_cell[keep][order]),
    )


# ---------------------------------------------------------------------------
# Plain-text forest format
#
#   nodes N trees T
#   node <id> dirichlet <pressure>
#   node <id> neumann
#   node <id> interior
#   node <id> terminal <x> <y> [...]
#   edge <tail> <head> <kN>
#
# Whitespace-delimited; '#' starts a comment.
# ---------------------------------------------------------------------------

def forest_to_text(forest: Forest) -> str:
    lines = [f"nodes {len(forest.nodes)} trees {forest.n_trees}"]
    for n in forest.nodes:
        if n.kind == NodeKind.DIRICHLET_ROOT:
            lines.append(f"node {n.id} dirichlet {n.value!r}")
        elif n.kind == NodeKind.NEUMANN_ROOT:
            lines.append(f"node {n.id} neumann")
        elif n.kind == NodeKind.INTERIOR:
            lines.append(f"node {n.id} interior")
        else:
            coords = " ".join(repr(c) for c in n.anchor)
            lines.append(f"node {n.id} terminal {coords}")
    for e in forest.edges:
        lines.append(f"edge {e.tail} {e.head} {e.k!r}")
    return "\n".join(lines) + "\n"


def forest_from_text(text: str) -> Forest:
    nodes: list[Node] = []
    edges: list[tuple[int, int, float]] = []
    header = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "nodes":
            if len(tok) != 4 or tok[2] != "trees":
                raise ValueError(f"bad header line: {raw!r}")
            header = (int(tok[1]), int(tok[3]))
        elif tok[0] == "node":
            nid, kind = int(tok[1]), tok[2]
            if kind == "dirichlet":
                nodes.append(dirichlet_root(nid, float(tok[3])))
            elif kind == "neumann":
                nodes.append(neumann_root(nid))
            elif kind == "interior":
                nodes.append(interior(nid))
            elif kind == "terminal":
                nodes.append(terminal(nid, [float(c) for c in tok[3:]]))
            else:
                raise ValueError(f"unknown node kind {kind!r}")
        elif tok[0] == "edge":
            edges.append((int(tok[1]), int(tok[2]), float(tok[3])))
        else:
            raise ValueError(f"unrecognized line: {raw!r}")
    forest = build_forest(nodes, edges)
    if header is not None:
        n_nodes, n_trees = header
        if n_nodes != len(forest.nodes) or n_trees != forest.n_trees:
            raise ValueError(
                f"header declares {n_nodes} nodes / {n_trees} trees, "
                f"found {len(forest.nodes)} / {forest.n_trees}"
            )
    return forest
