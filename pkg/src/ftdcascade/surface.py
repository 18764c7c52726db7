"""Triangle meshes, cortical thickness and the graph-Laplacian frequency basis.

Per-vertex scalar maps (thickness, smoothed thickness) are plain 1-D float
arrays indexed like the mesh vertices.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial import cKDTree

from . import kernels
from .errors import DataError, NumericalError

DENSE_EIGEN_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
            raise DataError("vertices must be a non-empty (n, 3) array")
        if t.ndim != 2 or t.shape[1] != 3 or t.shape[0] == 0:
            raise DataError("triangles must be a non-empty (m, 3) array")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise DataError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise DataError("degenerate triangle with repeated vertex index")
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite vertex coordinates")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @cached_property
    def edges(self):
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def adjacency(self):
        """Unweighted symmetric adjacency of the edge graph (CSR)."""
        e = self.edges
        n = self.n_vertices
        a = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def length_graph(self):
        """Adjacency weighted by Euclidean edge length (CSR)."""
        e = self.edges
        n = self.n_vertices
        # Zero-length edges would vanish from a sparse matrix.
        w = np.maximum(self.edge_lengths, 1e-12)
        a = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    def is_connected(self):
        return connected_components(self.adjacency, directed=False)[0] == 1

    def same_topology(self, other):
        return np.array_equal(self.triangles, other.triangles)


@dataclass(frozen=True, eq=False)
class SurfacePair:
    inner: TriMesh
    outer: TriMesh

    def __post_init__(self):
        if self.inner.n_vertices != self.outer.n_vertices:
            raise DataError(f"vertex count mismatch: inner {self.inner.n_vertices}, "
                            f"outer {self.outer.n_vertices}")
        if not self.inner.same_topology(self.outer):
            raise DataError("inner and outer surfaces have different triangle topology")

    def swapped(self):
        return SurfacePair(self.outer, self.inner)


def read_mesh(path):
    """ASCII mesh: ``nv nt`` then nv lines ``x y z`` then nt lines ``i j k`` (0-based)."""
    path = Path(path)
    try:
        lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read mesh {path}: {exc}") from None
    try:
        nv, nt = int(lines[0][0]), int(lines[0][1])
        verts = np.array(lines[1:1 + nv], dtype=float)
        tris = np.array(lines[1 + nv:1 + nv + nt], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed mesh file {path}: {exc}") from None
    if verts.shape != (nv, 3) or tris.shape != (nt, 3):
        raise DataError(f"malformed mesh file {path}: counts do not match body")
    return TriMesh(verts, tris)


def write_mesh(mesh, path):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_vertices} {len(mesh.triangles)}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
    return path


def read_scalars(path):
    try:
        values = np.loadtxt(path, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read scalar file {path}: {exc}") from None
    return values


def write_scalars(values, path):
    np.savetxt(path, np.asarray(values, dtype=float), fmt="%.17g")
    return Path(path)


def icosphere(subdivisions=3, radius=1.0):
    """Geodesic sphere; ``subdivisions=3`` gives 642 vertices."""
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(np.array(verts) * radius, np.array(faces))


def plane_grid(nx, ny, spacing=1.0, z=0.0):
    """Flat rectangular grid of ``nx * ny`` vertices split into right triangles."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.full(nx * ny, float(z))])
    tris = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    return TriMesh(verts, np.array(tris))


def _candidate_triangles(points, mesh):
    """CSR lists of triangles that may hold the nearest surface point.

    Distance to the nearest vertex bounds the answer from above; a triangle
    whose centroid is farther than that bound plus its own radius cannot win.
    """
    tri_pts = mesh.vertices[mesh.triangles]
    centroids = tri_pts.mean(axis=1)
    radius = np.linalg.norm(tri_pts - centroids[:, None, :], axis=2).max()
    upper, _ = cKDTree(mesh.vertices).query(points)
    lists = cKDTree(centroids).query_ball_point(points, upper + radius * (1 + 1e-9) + 1e-12)
    counts = np.array([len(c) for c in lists], dtype=np.int64)
    indptr = np.zeros(len(points) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.fromiter((i for c in lists for i in sorted(c)), dtype=np.int64, count=indptr[-1])
    return indptr, indices


def distance_to_surface(points, mesh):
    """Euclidean distance from each point to the nearest point on ``mesh``."""
    points = np.ascontiguousarray(points, dtype=float)
    indptr, indices = _candidate_triangles(points, mesh)
    t = mesh.triangles
    v = mesh.vertices
    return kernels.nearest_triangle_distance(
        points, np.ascontiguousarray(v[t[:, 0]]), np.ascontiguousarray(v[t[:, 1]]),
        np.ascontiguousarray(v[t[:, 2]]), indptr, indices)


def compute_thickness(pair, method="nearest"):
    """Per-vertex thickness between linked inner and outer surfaces.

    ``method="nearest"`` averages inner-vertex-to-outer-surface and
    outer-vertex-to-inner-surface distances. ``method="linked"`` uses the
    straight distance between corresponding vertices.
    """
    if method == "linked":
        out = np.linalg.norm(pair.outer.vertices - pair.inner.vertices, axis=1)
    elif method == "nearest":
        d_in = distance_to_surface(pair.inner.vertices, pair.outer)
        d_out = distance_to_surface(pair.outer.vertices, pair.inner)
        out = 0.5 * (d_in + d_out)
    else:
        raise ValueError(f"unknown thickness method {method!r}")
    return out


@dataclass(frozen=True, eq=False)
class RegionAtlas:
    """Vertex-to-region assignment. Region ids are kept sorted."""

    vertex_region: np.ndarray
    names: dict

    def __post_init__(self):
        vr = np.asarray(self.vertex_region, dtype=np.int64)
        object.__setattr__(self, "vertex_region", vr)
        used = set(np.unique(vr).tolist())
        missing = [r for r in self.names if r not in used]
        if missing:
            raise DataError(f"regions without vertices: {missing}")
        unknown = used - set(self.names)
        if unknown:
            raise DataError(f"vertices assigned to undeclared regions: {sorted(unknown)}")

    @property
    def region_ids(self):
        return sorted(self.names)

    @property
    def region_names(self):
        return [self.names[r] for r in self.region_ids]

    @property
    def n_vertices(self):
        return self.vertex_region.size


def read_atlas(path, n_vertices=None):
    """Atlas CSV with columns ``vertex_id,region_id,region_name``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read atlas {path}: {exc}") from None
    if not rows:
        raise DataError(f"atlas {path} is empty")
    try:
        vids = np.array([int(r["vertex_id"]) for r in rows])
        rids = np.array([int(r["region_id"]) for r in rows])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed atlas {path}: {exc}") from None
    n = n_vertices if n_vertices is not None else int(vids.max()) + 1
    if vids.min() < 0 or vids.max() >= n:
        raise DataError("atlas references missing vertex")
    if len(np.unique(vids)) != len(vids):
        raise DataError("atlas assigns a vertex more than once")
    if len(vids) != n:
        raise DataError(f"atlas covers {len(vids)} of {n} vertices")
    vertex_region = np.empty(n, dtype=np.int64)
    vertex_region[vids] = rids
    names = {}
    for r in rows:
        names.setdefault(int(r["region_id"]), r.get("region_name") or f"region_{r['region_id']}")
    return RegionAtlas(vertex_region, names)


def write_atlas(atlas, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex_id", "region_id", "region_name"])
        for v, r in enumerate(atlas.vertex_region):
            w.writerow([v, int(r), atlas.names[int(r)]])
    return path


def coordinate_atlas(mesh, regions, axis=2):
    """Split vertices into ``regions`` equal-count bands along one axis."""
    order = np.argsort(mesh.vertices[:, axis], kind="stable")
    vertex_region = np.empty(mesh.n_vertices, dtype=np.int64)
    for r, chunk in enumerate(np.array_split(order, regions)):
        vertex_region[chunk] = r
    return RegionAtlas(vertex_region, {r: f"region_{r + 1}" for r in range(regions)})


def region_means(values, atlas):
    """Mean of ``values`` over each region's vertices, ordered by region id."""
    values = np.asarray(values, dtype=float)
    if values.size != atlas.n_vertices:
        raise DataError(f"map has {values.size} vertices, atlas covers {atlas.n_vertices}")
    ids = atlas.region_ids
    pos = np.searchsorted(ids, atlas.vertex_region)
    sums = np.bincount(pos, weights=values, minlength=len(ids))
    counts = np.bincount(pos, minlength=len(ids))
    if np.any(counts == 0):
        raise DataError("region with zero vertices")
    return sums / counts


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Lowest eigenpairs of the combinatorial graph Laplacian.

    ``length_scale`` is the mean squared edge length (mm^2); dividing the
    eigenvalues by it gives them units of mm^-2 for heat diffusion.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    length_scale: float = 1.0

    @property
    def k(self):
        return self.eigenvalues.size

    @property
    def n_vertices(self):
        return self.eigenvectors.shape[0]


def graph_laplacian(adjacency):
    a = sp.csr_matrix(adjacency, dtype=float)
    deg = np.asarray(a.sum(axis=1)).ravel()
    return (sp.diags(deg) - a).tocsr()


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def laplacian_basis(adjacency, k, max_iter=None, length_scale=1.0):
    """``k`` smallest eigenpairs of ``L = D - A`` for a connected graph."""
    n = adjacency.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if connected_components(adjacency, directed=False)[0] != 1:
        raise DataError("graph is disconnected")
    lap = graph_laplacian(adjacency)
    if n < DENSE_EIGEN_LIMIT or k >= n - 1:
        vals, vecs = eigh(lap.toarray(), subset_by_index=[0, k - 1])
    else:
        try:
            # Shift-invert just below zero keeps the factorization nonsingular.
            vals, vecs = eigsh(lap.tocsc(), k=k, sigma=-1e-3, which="LM",
                               maxiter=max_iter, v0=np.full(n, 1.0 / np.sqrt(n)))
        except ArpackNoConvergence as exc:
            raise NumericalError(f"eigensolver did not converge: {exc}") from None
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    vals = np.maximum(vals, 0.0)
    vecs = _fix_signs(vecs)
    # The kernel is exactly the constant vector on a connected graph.
    vals[0] = 0.0
    vecs[:, 0] = 1.0 / np.sqrt(n)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralBasis(vals, vecs, float(length_scale))


def build_basis(mesh, k, max_iter=None):
    if not mesh.is_connected():
        raise DataError("mesh is disconnected")
    return laplacian_basis(mesh.adjacency, k, max_iter=max_iter,
                           length_scale=float(np.mean(mesh.edge_lengths ** 2)))


def to_frequency(values, basis):
    """Coefficients of a vertex map on the basis eigenvectors."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != basis.n_vertices:
        raise DataError(f"map has {values.shape[-1]} vertices, basis has {basis.n_vertices}")
    return values @ basis.eigenvectors


def from_frequency(coefficients, basis):
    """Reconstruct a vertex map; fewer coefficients give a low-pass map."""
    c = np.asarray(coefficients, dtype=float)
    k = c.shape[-1]
    if k > basis.k:
        raise DataError(f"{k} coefficients exceed basis size {basis.k}")
    return c @ basis.eigenvectors[:, :k].T


def vertex_normals(mesh):
    """Area-weighted unit vertex normals."""
    v = mesh.vertices
    t = mesh.triangles
    fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    normals = np.zeros_like(v)
    for c in range(3):
        np.add.at(normals, t[:, c], fn)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return normals / norm


def offset_surface(inner, thickness):
    """Outer surface displaced from ``inner`` along vertex normals by ``thickness``."""
    thickness = np.asarray(thickness, dtype=float)
    if thickness.size != inner.n_vertices:
        raise DataError("one thickness value per vertex is required")
    return TriMesh(inner.vertices + vertex_normals(inner) * thickness[:, None], inner.triangles)
