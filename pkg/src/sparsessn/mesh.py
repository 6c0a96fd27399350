"""Simplicial meshes of the unit square, unit cube and unit disk.

Node and cell orderings are deterministic so that every run on the same
mesh is bit-reproducible.
"""

from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np

from .errors import ArgumentError, MeshParseError


def simplex_volumes(nodes, cells):
    """Signed volumes of the simplices ``cells`` (positive = counterclockwise)."""
    dim = nodes.shape[1]
    p0 = nodes[cells[:, 0]]
    edges = np.stack([nodes[cells[:, k]] - p0 for k in range(1, dim + 1)], axis=1)
    return np.linalg.det(edges) / factorial(dim)


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming simplicial mesh.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    nodes : ndarray, shape (N, dim)
    cells : ndarray of int, shape (M, dim + 1)
        Positively oriented simplices.
    boundary : ndarray of bool, shape (N,)
        True for nodes on the Dirichlet boundary.
    lumped_measure : ndarray, shape (N,)
        Trapezoid-rule nodal weights, sum over incident cells of ``|T|/(dim+1)``.
    """

    dim: int
    nodes: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    lumped_measure: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, nodes, cells, boundary):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        boundary = np.asarray(boundary, dtype=bool)
        dim = nodes.shape[1]
        vol = simplex_volumes(nodes, cells)
        lumped = np.zeros(len(nodes))
        np.add.at(lumped, cells.ravel(), np.repeat(np.abs(vol) / (dim + 1), dim + 1))
        for arr in (nodes, cells, boundary, lumped):
            arr.setflags(write=False)
        return cls(dim, nodes, cells, boundary, lumped)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def volume(self):
        return float(self.lumped_measure.sum())

    def cell_volumes(self):
        return simplex_volumes(self.nodes, self.cells)

    def mesh_size(self):
        """Longest edge length."""
        h = 0.0
        for a in range(self.dim + 1):
            for b in range(a + 1, self.dim + 1):
                d = self.nodes[self.cells[:, a]] - self.nodes[self.cells[:, b]]
                h = max(h, float(np.sqrt((d * d).sum(axis=1)).max()))
        return h


def _orient(nodes, cells):
    vol = simplex_volumes(nodes, cells)
    neg = vol < 0
    cells = cells.copy()
    cells[neg, 0], cells[neg, 1] = cells[neg, 1], cells[neg, 0].copy()
    return cells


def build_box_mesh(dim, n):
    """Uniform simplicial mesh of the unit square (``dim=2``) or cube (``dim=3``).

    Squares are split along the diagonal from ``(i, j)`` to ``(i+1, j+1)``;
    cubes use the Kuhn split into 6 tetrahedra sharing the main diagonal.
    Nodes are numbered with the x index running fastest.
    """
    if dim not in (2, 3):
        raise ArgumentError(f"dim must be 2 or 3, got {dim}")
    if int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n}")
    n = int(n)
    m = n + 1
    axes = np.arange(m) / n
    grids = np.meshgrid(*([axes] * dim), indexing="ij")
    # x fastest: index = i + m*j (+ m*m*k)
    nodes = np.stack([g.transpose(*reversed(range(dim))).ravel() for g in grids], axis=1)
    lattice = np.rint(nodes * n).astype(np.int64)
    boundary = np.any((lattice == 0) | (lattice == n), axis=1)

    strides = m ** np.arange(dim)
    base_idx = np.stack(
        np.meshgrid(*([np.arange(n)] * dim), indexing="ij"), axis=-1
    ).reshape(-1, dim)
    base_idx = base_idx[np.lexsort(base_idx.T)]  # x fastest
    base = base_idx @ strides

    cells = []
    for perm in permutations(range(dim)):
        verts = [base]
        cur = base
        for ax in perm:
            cur = cur + strides[ax]
            verts.append(cur)
        cells.append(np.stack(verts, axis=1))
    # cell-major: all simplices of one box are consecutive
    cells = np.stack(cells, axis=1).reshape(-1, dim + 1)
    cells = _orient(nodes, cells)
    return Mesh.from_arrays(nodes, cells, boundary)


# Coarse seed of the unit disk: the center plus 8 equally spaced points on
# the unit circle, joined into a fan of 8 triangles.
DISK_SEED_BOUNDARY_POINTS = 8


def disk_seed():
    k = np.arange(DISK_SEED_BOUNDARY_POINTS)
    theta = 2 * np.pi * k / DISK_SEED_BOUNDARY_POINTS
    nodes = np.vstack([[0.0, 0.0], np.stack([np.cos(theta), np.sin(theta)], axis=1)])
    cells = np.stack([np.zeros_like(k), 1 + k, 1 + (k + 1) % len(k)], axis=1)
    boundary = np.r_[False, np.ones(len(k), dtype=bool)]
    return Mesh.from_arrays(nodes, cells, boundary)


def _unique_edges(cells):
    local = [(0, 1), (1, 2), (2, 0)]
    e = np.concatenate([cells[:, [a, b]] for a, b in local])
    e.sort(axis=1)
    edges, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel().reshape(len(local), len(cells)).T
    return edges, inverse, counts


def refine_red(mesh, project_to_circle=False):
    """Uniform red refinement of a triangle mesh.

    Returns the refined mesh and ``parents``, an ``(E, 2)`` array giving the
    two coarse endpoints of every new node; new node ``N + e`` sits on edge
    ``parents[e]``. Coarse nodes keep their indices. With
    ``project_to_circle`` new nodes on boundary edges are pushed radially
    onto the unit circle.
    """
    if mesh.dim != 2:
        raise ArgumentError("red refinement is only implemented for triangles")
    edges, cell_edges, counts = _unique_edges(mesh.cells)
    N = mesh.num_nodes
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    on_boundary = counts == 1
    if project_to_circle:
        r = np.sqrt((mids[on_boundary] ** 2).sum(axis=1))
        mids[on_boundary] /= r[:, None]
    nodes = np.vstack([mesh.nodes, mids])
    boundary = np.r_[mesh.boundary, on_boundary]

    a, b, c = mesh.cells.T
    mab, mbc, mca = (N + cell_edges).T
    children = np.stack(
        [
            np.stack([a, mab, mca], axis=1),
            np.stack([mab, b, mbc], axis=1),
            np.stack([mca, mbc, c], axis=1),
            np.stack([mab, mbc, mca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    children = _orient(nodes, children)
    return Mesh.from_arrays(nodes, children, boundary), edges


def build_disk_mesh(levels):
    """Unit disk mesh: :func:`disk_seed` refined ``levels`` times."""
    if int(levels) != levels or levels < 0:
        raise ArgumentError(f"levels must be a nonnegative integer, got {levels}")
    mesh = disk_seed()
    for _ in range(int(levels)):
        mesh, _ = refine_red(mesh, project_to_circle=True)
    return mesh


def prolong(values, parents):
    """P1 interpolation onto a red-refined mesh (injection + edge averaging)."""
    values = np.asarray(values, dtype=float)
    return np.r_[values, 0.5 * (values[parents[:, 0]] + values[parents[:, 1]])]


def set_measure(mesh, mask):
    """Lumped measure of the nodes selected by ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.num_nodes,):
        raise ArgumentError(
            f"mask has shape {mask.shape}, expected ({mesh.num_nodes},)"
        )
    return float(mesh.lumped_measure[mask].sum())


# --------------------------------------------------------------------------
# ASCII mesh files
# --------------------------------------------------------------------------

def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _header(lines, keyword):
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise MeshParseError(0, f"unexpected end of file, expected '{keyword}'")
    parts = line.split()
    if len(parts) != 2 or parts[0] != keyword:
        raise MeshParseError(lineno, f"expected '{keyword} <count>', got {line!r}")
    try:
        value = int(parts[1])
    except ValueError:
        raise MeshParseError(lineno, f"bad count {parts[1]!r}")
    if value < 0:
        raise MeshParseError(lineno, f"negative count {value}")
    return lineno, value


def _rows(lines, count, width, conv, what):
    out = []
    linenos = []
    for _ in range(count):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(0, f"unexpected end of file in {what} block")
        parts = line.split()
        if len(parts) != width:
            raise MeshParseError(lineno, f"expected {width} values in {what}, got {len(parts)}")
        try:
            out.append([conv(p) for p in parts])
        except ValueError:
            raise MeshParseError(lineno, f"unparsable {what} entry {line!r}")
        linenos.append(lineno)
    return out, linenos


def load_mesh(text):
    """Parse the ASCII mesh format written by :func:`write_mesh`.

    ::

        dim 2
        nodes 3
        0 0
        1 0
        0 1
        cells 1
        0 1 2
        boundary 3
        0
        1
        2

    Lines starting with ``#`` are comments.
    """
    lines = _content_lines(text)
    lineno, dim = _header(lines, "dim")
    if dim not in (2, 3):
        raise MeshParseError(lineno, f"dim must be 2 or 3, got {dim}")
    _, n_nodes = _header(lines, "nodes")
    nodes, _ = _rows(lines, n_nodes, dim, float, "nodes")
    _, n_cells = _header(lines, "cells")
    cells, cell_lines = _rows(lines, n_cells, dim + 1, int, "cells")
    _, n_bnd = _header(lines, "boundary")
    bnd, bnd_lines = _rows(lines, n_bnd, 1, int, "boundary")
    extra = next(lines, None)
    if extra is not None:
        raise MeshParseError(extra[0], "trailing content after boundary block")

    nodes = np.array(nodes, dtype=float).reshape(n_nodes, dim)
    cells = np.array(cells, dtype=np.int64).reshape(n_cells, dim + 1)
    for row, ln in zip(cells, cell_lines):
        if row.min() < 0 or row.max() >= n_nodes:
            raise MeshParseError(ln, f"cell index out of range [0, {n_nodes})")
    boundary = np.zeros(n_nodes, dtype=bool)
    for (idx,), ln in zip(bnd, bnd_lines):
        if not 0 <= idx < n_nodes:
            raise MeshParseError(ln, f"boundary index {idx} out of range [0, {n_nodes})")
        boundary[idx] = True
    if n_cells:
        vol = simplex_volumes(nodes, cells)
        bad = np.flatnonzero(vol <= 0)
        if len(bad):
            raise MeshParseError(cell_lines[bad[0]], "inverted or degenerate cell")
    return Mesh.from_arrays(nodes, cells, boundary)


def write_mesh(mesh):
    """Canonical text form of ``mesh``; ``load_mesh`` inverts it exactly."""
    out = [f"dim {mesh.dim}", f"nodes {mesh.num_nodes}"]
    out += [" ".join(repr(float(x)) for x in p) for p in mesh.nodes]
    out.append(f"cells {mesh.num_cells}")
    out += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    idx = np.flatnonzero(mesh.boundary)
    out.append(f"boundary {len(idx)}")
    out += [str(int(i)) for i in idx]
    return "\n".join(out) + "\n"


def node_fraction_measure(mesh, mask):
    """Fraction of nodes selected by ``mask`` times the mesh volume.

    A cruder set measure than :func:`set_measure` that weights every node
    equally, boundary nodes included.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.num_nodes,):
        raise ArgumentError(
            f"mask has shape {mask.shape}, expected ({mesh.num_nodes},)"
        )
    return float(np.count_nonzero(mask)) / mesh.num_nodes * mesh.volume
