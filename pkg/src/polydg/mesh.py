"""Polygonal meshes: representation, generation (Voronoi-Lloyd and dual-graph
agglomeration), face extraction, geometric metrics, and plain-text file I/O.

Cells are simple polygons stored as CCW vertex loops. Faces are straight
segments with one or two adjacent cells; collinear adjacent faces are never
merged, so agglomerated cells may carry hundreds of tiny faces. Each face can
be assigned a "flat simplex" per adjacent cell: a triangle based on the face,
contained in the cell, pairwise disjoint within the cell. Its height feeds the
shape constant C_s and the bounded-face penalty regime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import Voronoi, cKDTree

from . import geometry as geo

logger = logging.getLogger(__name__)

INTERIOR = 0
DIRICHLET = 1


class MeshError(Exception):
    pass


@dataclass
class Cell:
    """Read-only view of one mesh cell."""

    id: int
    vertex_ids: np.ndarray
    vertices: np.ndarray  # loop coordinates, CCW
    area: float
    centroid: np.ndarray
    diameter: float
    face_ids: np.ndarray
    subtriangulation: list  # list of (3, 2) coordinate arrays covering the cell
    inradius: float


@dataclass
class Face:
    """Read-only view of one mesh face."""

    id: int
    vertex_ids: tuple
    endpoints: np.ndarray  # (2, 2), ordered as traversed by the first cell
    measure: float
    normal: np.ndarray  # unit normal, outward for adjacent_cells[0]
    adjacent_cells: tuple
    tag: int
    flat_simplex_heights: tuple  # per adjacent cell; nan until assigned
    flat_simplex_apexes: tuple

    @property
    def normals(self) -> tuple:
        if len(self.adjacent_cells) == 1:
            return (self.normal,)
        return (self.normal, -self.normal)


@dataclass
class MeshMetrics:
    C_F_observed: int
    C_r_observed: float
    C_s_observed: float
    theta_observed: float
    n_cells: int
    n_faces: int
    h_max: float
    h_min: float
    total_area: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class PolyMesh:
    """Immutable-by-convention polygonal mesh.

    Topology arrays are frozen after construction; lazy geometric caches
    (subtriangulations, inradii, face simplices) fill in on demand.
    """

    dimension = 2

    def __init__(self, vertices, cell_loops, face_vertices, face_cells, face_tags,
                 domain=None, validate=True):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cell_loops = [np.asarray(l, dtype=np.int64) for l in cell_loops]
        self.face_vertices = np.asarray(face_vertices, dtype=np.int64).reshape(-1, 2)
        self.face_cells = np.asarray(face_cells, dtype=np.int64).reshape(-1, 2)
        self.face_tags = np.asarray(face_tags, dtype=np.int64).reshape(-1)
        self.domain = tuple(domain) if domain is not None else None
        self._derive()
        if validate:
            self._validate()

    # -- construction helpers -------------------------------------------------

    def _derive(self):
        V = self.vertices
        self.n_cells = len(self.cell_loops)
        self.n_faces = len(self.face_vertices)
        self.cell_areas = np.array([geo.polygon_area(V[l]) for l in self.cell_loops])
        self.cell_centroids = np.array(
            [geo.polygon_centroid(V[l]) for l in self.cell_loops]
        ).reshape(-1, 2)
        self.cell_diameters = np.array([geo.polygon_diameter(V[l]) for l in self.cell_loops])
        e = V[self.face_vertices[:, 1]] - V[self.face_vertices[:, 0]]
        self.face_lengths = np.linalg.norm(e, axis=1)
        with np.errstate(invalid="ignore"):
            self.face_normals = np.stack([e[:, 1], -e[:, 0]], axis=1) / self.face_lengths[:, None]
        faces_of = [[] for _ in range(self.n_cells)]
        for k in range(self.n_faces):
            for c in self.face_cells[k]:
                if c >= 0:
                    faces_of[c].append(k)
        self.cell_faces = [np.asarray(f, dtype=np.int64) for f in faces_of]
        # lazy caches
        self._subtris: dict[int, list] = {}
        self._inradius = np.full(self.n_cells, np.nan)
        self.flat_heights = np.full((self.n_faces, 2), np.nan)
        self.flat_apexes = np.full((self.n_faces, 2, 2), np.nan)
        for a in (self.vertices, self.face_vertices, self.face_cells, self.face_tags):
            a.setflags(write=False)

    def _validate(self):
        if np.any(self.cell_areas <= 0):
            bad = int(np.argmin(self.cell_areas))
            raise MeshError(f"cell {bad} has non-positive area {self.cell_areas[bad]}")
        if np.any(self.face_lengths <= 0):
            raise MeshError("zero-length face")
        if self.domain is not None:
            x0, y0, x1, y1 = self.domain
            target = (x1 - x0) * (y1 - y0)
            if abs(self.cell_areas.sum() - target) > 1e-10 * target:
                raise MeshError(
                    f"cell areas sum to {self.cell_areas.sum()}, domain area {target}"
                )
        interior = self.face_tags == INTERIOR
        if np.any(self.face_cells[interior, 1] < 0):
            raise MeshError("interior face with only one adjacent cell")
        if np.any(self.face_cells[~interior, 1] >= 0):
            raise MeshError("boundary face with two adjacent cells")
        if np.any(self.face_cells[:, 0] < 0):
            raise MeshError("face with no adjacent cell")
        cell_sets = [set(l.tolist()) for l in self.cell_loops]
        for k in range(self.n_faces):
            v0, v1 = self.face_vertices[k]
            owners = [c for c in self.face_cells[k] if c >= 0]
            if not any(v0 in cell_sets[c] and v1 in cell_sets[c] for c in owners):
                raise MeshError(f"face {k} endpoints missing from adjacent cell loops")

    # -- views ----------------------------------------------------------------

    def cell(self, i: int) -> Cell:
        loop = self.cell_loops[i]
        return Cell(
            id=i,
            vertex_ids=loop,
            vertices=self.vertices[loop],
            area=float(self.cell_areas[i]),
            centroid=self.cell_centroids[i],
            diameter=float(self.cell_diameters[i]),
            face_ids=self.cell_faces[i],
            subtriangulation=self.subtriangulation(i),
            inradius=self.inradius(i),
        )

    def face(self, k: int) -> Face:
        cells = tuple(int(c) for c in self.face_cells[k] if c >= 0)
        nsides = len(cells)
        return Face(
            id=k,
            vertex_ids=tuple(int(v) for v in self.face_vertices[k]),
            endpoints=self.vertices[self.face_vertices[k]],
            measure=float(self.face_lengths[k]),
            normal=self.face_normals[k],
            adjacent_cells=cells,
            tag=int(self.face_tags[k]),
            flat_simplex_heights=tuple(self.flat_heights[k, :nsides]),
            flat_simplex_apexes=tuple(self.flat_apexes[k, :nsides]),
        )

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def domain_area(self) -> float:
        if self.domain is None:
            return float(self.cell_areas.sum())
        x0, y0, x1, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    # -- lazy geometry --------------------------------------------------------

    def subtriangulation(self, i: int) -> list:
        """Triangle cover of cell i: fan for convex cells, ear clipping otherwise."""
        if i not in self._subtris:
            verts = self.vertices[self.cell_loops[i]]
            corner = geo.drop_collinear(verts)
            cv = verts[corner]
            if len(cv) == 3:
                tris = [cv]
            elif geo.is_convex(cv):
                tris = [np.array([cv[0], cv[j], cv[j + 1]]) for j in range(1, len(cv) - 1)]
            else:
                try:
                    tris = [cv[list(t)] for t in geo.ear_clip(cv)]
                except ValueError as exc:
                    raise MeshError(f"cell {i} could not be triangulated: {exc}") from exc
            cover = sum(abs(geo.polygon_area(t)) for t in tris)
            if abs(cover - self.cell_areas[i]) > 1e-12 * max(self.cell_areas[i], 1e-300):
                raise MeshError(
                    f"cell {i}: subtriangulation area {cover} != cell area {self.cell_areas[i]}"
                )
            self._subtris[i] = tris
        return self._subtris[i]

    def inradius(self, i: int) -> float:
        if np.isnan(self._inradius[i]):
            verts = self.vertices[self.cell_loops[i]]
            corner = geo.drop_collinear(verts)
            cv = verts[corner]
            if len(cv) == 3:
                r = geo.triangle_inradius(cv)
            elif geo.is_convex(cv):
                _, r = geo.chebyshev_center(cv)
            else:
                _, r = geo.deepest_point(cv)
            self._inradius[i] = r
        return float(self._inradius[i])


def subtriangulate(cell: Cell) -> list:
    """Triangle cover of a cell (positive areas summing to the cell area)."""
    return cell.subtriangulation


# -- mesh construction from cell loops ----------------------------------------


def mesh_from_cells(vertices, cell_loops, domain=None, boundary_tag=DIRICHLET) -> PolyMesh:
    """Build a mesh from CCW cell loops, extracting shared faces.

    Edges must match exactly between neighbours (no hanging nodes on this
    path; file input may still carry them).
    """
    V = np.asarray(vertices, dtype=float)
    loops = [np.asarray(l, dtype=np.int64) for l in cell_loops]
    loops = [l if geo.polygon_area(V[l]) > 0 else l[::-1].copy() for l in loops]

    lens = np.array([len(l) for l in loops])
    cell_of = np.repeat(np.arange(len(loops)), lens)
    ev0 = np.concatenate(loops)
    ev1 = np.concatenate([np.roll(l, -1) for l in loops])
    lo = np.minimum(ev0, ev1)
    hi = np.maximum(ev0, ev1)
    key = lo * np.int64(len(V)) + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    counts = np.diff(np.r_[starts, len(ks)])
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two cells")

    face_vertices, face_cells, face_tags = [], [], []
    for s, c in zip(starts, counts):
        first = order[s]
        fv = (ev0[first], ev1[first])
        if c == 1:
            face_vertices.append(fv)
            face_cells.append((cell_of[first], -1))
            face_tags.append(boundary_tag)
        else:
            second = order[s + 1]
            if not (ev0[second] == fv[1] and ev1[second] == fv[0]):
                raise MeshError("interior edge traversed in the same direction twice")
            face_vertices.append(fv)
            face_cells.append((cell_of[first], cell_of[second]))
            face_tags.append(INTERIOR)

    return PolyMesh(V, loops, np.array(face_vertices), np.array(face_cells),
                    np.array(face_tags), domain=domain)


def single_cell_mesh(vertices, domain=None) -> PolyMesh:
    V = geo.ensure_ccw(np.asarray(vertices, dtype=float))
    return mesh_from_cells(V, [np.arange(len(V))], domain=domain)


def transform_mesh(mesh: PolyMesh, scale: float = 1.0, rotation: float = 0.0,
                   translation=(0.0, 0.0)) -> PolyMesh:
    """Similarity transform of a mesh (same topology, assigned simplices mapped)."""
    c, s = np.cos(rotation), np.sin(rotation)
    R = np.array([[c, -s], [s, c]])
    V = scale * (mesh.vertices @ R.T) + np.asarray(translation, dtype=float)
    out = PolyMesh(V, [l.copy() for l in mesh.cell_loops], mesh.face_vertices.copy(),
                   mesh.face_cells.copy(), mesh.face_tags.copy(), domain=None, validate=False)
    if not np.all(np.isnan(mesh.flat_heights)):
        out.flat_heights = mesh.flat_heights * scale
        out.flat_apexes = scale * (mesh.flat_apexes @ R.T) + np.asarray(translation, dtype=float)
    return out


# -- generators ---------------------------------------------------------------


def _mirror_seeds(seeds: np.ndarray, domain) -> np.ndarray:
    x0, y0, x1, y1 = domain
    m = [seeds]
    for refl in (
        lambda p: np.column_stack([2 * x0 - p[:, 0], p[:, 1]]),
        lambda p: np.column_stack([2 * x1 - p[:, 0], p[:, 1]]),
        lambda p: np.column_stack([p[:, 0], 2 * y0 - p[:, 1]]),
        lambda p: np.column_stack([p[:, 0], 2 * y1 - p[:, 1]]),
    ):
        m.append(refl(seeds))
    return np.concatenate(m)


def _clipped_regions(seeds: np.ndarray, domain):
    """Voronoi cells of seeds clipped to the rectangle, via mirrored seeds.

    Returns (vor, list of vertex-index arrays, one CCW loop per seed). The
    mirror construction makes every original cell bounded and the clip exact.
    """
    vor = Voronoi(_mirror_seeds(seeds, domain))
    regions = []
    for i in range(len(seeds)):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or len(reg) < 3:
            raise MeshError("unbounded Voronoi region despite mirroring")
        idx = np.asarray(reg, dtype=np.int64)
        pts = vor.vertices[idx]
        ang = np.arctan2(pts[:, 1] - seeds[i, 1], pts[:, 0] - seeds[i, 0])
        idx = idx[np.argsort(ang)]
        regions.append(idx)
    return vor, regions


def generate_voronoi(domain, n_cells: int, lloyd_iters: int, seed: int) -> PolyMesh:
    """Clipped Voronoi mesh of a rectangle after Lloyd relaxation sweeps.

    Deterministic for a fixed seed; coincident seeds are jittered (logged) and
    never fail silently.
    """
    if n_cells < 1:
        raise MeshError("n_cells must be >= 1")
    if lloyd_iters < 0:
        raise MeshError("lloyd_iters must be >= 0")
    x0, y0, x1, y1 = domain
    if x1 <= x0 or y1 <= y0:
        raise MeshError(f"domain {tuple(domain)} is not an (x0, y0, x1, y1) box "
                        "with x0 < x1 and y0 < y1")
    if n_cells == 1:
        verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        return single_cell_mesh(verts, domain=domain)
    rng = np.random.default_rng(seed)
    scale = max(x1 - x0, y1 - y0)
    seeds = rng.uniform((x0, y0), (x1, y1), size=(n_cells, 2))
    for _ in range(100):
        tree = cKDTree(seeds)
        pairs = tree.query_pairs(1e-9 * scale)
        if not pairs:
            break
        logger.info("jittering %d coincident Voronoi seed pairs", len(pairs))
        bump = {i for p in pairs for i in p}
        for i in bump:
            seeds[i] += rng.uniform(-1e-6, 1e-6, size=2) * scale
        seeds = seeds.clip((x0, y0), (x1, y1))
    else:
        raise MeshError("could not separate coincident seeds")

    for _ in range(lloyd_iters):
        vor, regions = _clipped_regions(seeds, domain)
        seeds = np.array([geo.polygon_centroid(vor.vertices[r]) for r in regions])

    vor, regions = _clipped_regions(seeds, domain)
    used = np.unique(np.concatenate(regions))
    verts = vor.vertices[used]
    remap = np.full(len(vor.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    loops = [remap[r] for r in regions]
    verts, loops = _merge_close_vertices(verts, loops, 1e-9 * scale)
    return mesh_from_cells(verts, loops, domain=domain)


def _merge_close_vertices(verts, loops, tol):
    """Union-find merge of vertices within tol; drops degenerate loop entries."""
    tree = cKDTree(verts)
    pairs = tree.query_pairs(tol)
    parent = np.arange(len(verts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    root = np.array([find(i) for i in range(len(verts))])
    used = np.unique(root)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    new_verts = verts[used]
    new_loops = []
    for l in loops:
        m = remap[root[l]]
        keep = m != np.roll(m, 1)
        new_loops.append(m[keep] if keep.any() else m[:1])
    return new_verts, new_loops


def triangle_grid(n: int, domain=(0.0, 0.0, 1.0, 1.0)) -> PolyMesh:
    """Uniform criss-cross triangulation: n x n squares, alternating diagonals,
    2*n^2 triangles."""
    x0, y0, x1, y1 = domain
    if x1 <= x0 or y1 <= y0:
        raise MeshError(f"domain {tuple(domain)} is not an (x0, y0, x1, y1) box "
                        "with x0 < x1 and y0 < y1")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    loops = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                loops.append([a, b, c])
                loops.append([a, c, d])
            else:
                loops.append([a, b, d])
                loops.append([b, c, d])
    return mesh_from_cells(verts, loops, domain=domain)


# -- agglomeration ------------------------------------------------------------


def _dual_adjacency(mesh: PolyMesh):
    interior = mesh.face_tags == INTERIOR
    ci = mesh.face_cells[interior, 0]
    cj = mesh.face_cells[interior, 1]
    data = np.ones(len(ci))
    M = mesh.n_cells
    return coo_matrix((np.r_[data, data], (np.r_[ci, cj], np.r_[cj, ci])), shape=(M, M)).tocsr()

def _graph_voronoi(adj, seeds):
    _, _, sources = dijkstra(adj, directed=False, indices=seeds, unweighted=True,
                             min_only=True, return_predecessors=True)
    if np.any(sources < 0):
        raise MeshError("fine mesh dual graph is disconnected")
    inv = np.full(adj.shape[0], -1, dtype=np.int64)
    inv[seeds] = np.arange(len(seeds))
    return inv[sources]


def _trace_boundary(mesh: PolyMesh, labels: np.ndarray, agg: int, members: np.ndarray):
    """Walk the aggregate's boundary half-edges into a single CCW loop.

    Returns None when the boundary pinches, splits into several loops, or has
    a hole: those aggregates are rejected and the partition regrown.
    """
    nxt = {}
    for c in members:
        for k in mesh.cell_faces[c]:
            cl, cr = mesh.face_cells[k]
            other = cr if cl == c else cl
            if other >= 0 and labels[other] == agg:
                continue  # internal to the aggregate
            v0, v1 = mesh.face_vertices[k]
            if cl != c:
                v0, v1 = v1, v0  # stored orientation belongs to the left cell
            if v0 in nxt:
                return None  # pinch vertex
            nxt[int(v0)] = (int(v1), int(k))
    if not nxt:
        return None
    start = min(nxt)
    loop = [start]
    v = start
    for _ in range(len(nxt)):
        v, _k = nxt[v]
        if v == start:
            break
        loop.append(v)
    else:
        return None  # walk never closed
    if len(loop) != len(nxt):
        return None  # hole or extra loop
    return np.asarray(loop, dtype=np.int64)


def agglomerate(fine: PolyMesh, n_target: int, seed: int) -> PolyMesh:
    """Coarsen by seeded BFS accretion on the dual graph.

    Aggregates are unions of fine cells; their boundary keeps every fine face
    (collinear faces are never merged). Degenerate aggregates (pinched or
    holed boundaries) cause a deterministic regrow with a shifted seed.
    """
    if not (1 <= n_target <= fine.n_cells):
        raise MeshError("n_target must be between 1 and the fine cell count")
    if n_target == fine.n_cells:
        return PolyMesh(fine.vertices.copy(), [l.copy() for l in fine.cell_loops],
                        fine.face_vertices.copy(), fine.face_cells.copy(),
                        fine.face_tags.copy(), domain=fine.domain)
    adj = _dual_adjacency(fine)
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise MeshError("fine mesh dual graph is disconnected")

    for attempt in range(20):
        rng = np.random.default_rng([seed, attempt])
        seeds = rng.choice(fine.n_cells, size=n_target, replace=False)
        labels = _graph_voronoi(adj, seeds)
        # medoid rebalancing until the seed set stops moving; straggler
        # aggregates (much larger than the mean) otherwise dominate h_max and
        # make the coarse levels of a refinement ladder lumpy
        for _ in range(30):
            new_seeds = np.empty(n_target, dtype=np.int64)
            for a in range(n_target):
                members = np.flatnonzero(labels == a)
                w = fine.cell_areas[members]
                center = (fine.cell_centroids[members] * w[:, None]).sum(axis=0) / w.sum()
                d = np.linalg.norm(fine.cell_centroids[members] - center, axis=1)
                new_seeds[a] = members[int(np.argmin(d))]
            if np.array_equal(np.sort(new_seeds), np.sort(seeds)):
                break
            seeds = new_seeds
            labels = _graph_voronoi(adj, seeds)

        loops = []
        ok = True
        for a in range(n_target):
            members = np.flatnonzero(labels == a)
            loop = _trace_boundary(fine, labels, a, members)
            if loop is None:
                ok = False
                break
            loops.append(loop)
        if not ok:
            logger.info("agglomerate: rejected partition (attempt %d), regrowing", attempt)
            continue
        used = np.unique(np.concatenate(loops))
        remap = np.full(len(fine.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        try:
            coarse = mesh_from_cells(fine.vertices[used], [remap[l] for l in loops],
                                     domain=fine.domain)
            for i in range(coarse.n_cells):
                coarse.subtriangulation(i)
        except MeshError:
            logger.info("agglomerate: aggregate failed validation (attempt %d), regrowing",
                        attempt)
            continue
        _assign_simplices_from_fine(coarse, fine, labels, remap)
        return coarse
    raise MeshError("agglomeration failed to produce simple aggregates")


def _assign_simplices_from_fine(coarse: PolyMesh, fine: PolyMesh, labels, remap):
    """Face simplices for aggregates: fan each boundary fine cell from its own
    deepest point. Disjoint by construction (each fan stays in its fine cell)."""
    anchors = {}

    def anchor(c):
        if c not in anchors:
            verts = fine.vertices[fine.cell_loops[c]]
            if len(verts) == 3:
                anchors[c] = geo.triangle_incenter(verts)
            elif geo.is_convex(verts):
                anchors[c], _ = geo.chebyshev_center(verts)
            else:
                anchors[c], _ = geo.deepest_point(verts)
        return anchors[c]

    # map coarse faces back to fine faces by vertex pair (in fine numbering)
    fine_pair = {}
    for k in range(fine.n_faces):
        v0, v1 = fine.face_vertices[k]
        if remap[v0] >= 0 and remap[v1] >= 0:
            fine_pair[(min(remap[v0], remap[v1]), max(remap[v0], remap[v1]))] = k
    for kc in range(coarse.n_faces):
        v0, v1 = coarse.face_vertices[kc]
        kf = fine_pair[(min(v0, v1), max(v0, v1))]
        a0, a1 = coarse.vertices[v0], coarse.vertices[v1]
        for side, cc in enumerate(coarse.face_cells[kc]):
            if cc < 0:
                continue
            # fine cell on this side: the one whose label matches the coarse cell
            fcl, fcr = fine.face_cells[kf]
            cands = [c for c in (fcl, fcr) if c >= 0 and labels[c] == cc]
            if not cands:
                raise MeshError("face/aggregate bookkeeping mismatch")
            ap = anchor(cands[0])
            d = a1 - a0
            h = abs(d[0] * (ap[1] - a0[1]) - d[1] * (ap[0] - a0[0])) / np.linalg.norm(d)
            coarse.flat_heights[kc, side] = h
            coarse.flat_apexes[kc, side] = ap


# -- face simplex assignment (generic meshes) ---------------------------------


def assign_face_simplices(mesh: PolyMesh) -> None:
    """Assign per-face, per-side flat simplices where missing.

    Strategy per cell: fan from the analytic center of the edge-line barrier
    when the cell's kernel contains it (always true for convex cells); this is
    disjoint by construction and maximin-optimal in the symmetric cases the
    metrics are pinned on. Non-star-shaped cells fall back to per-face apex
    maximization over a candidate set, then uniform height shrinking until the
    simplices are pairwise disjoint.
    """
    for i in range(mesh.n_cells):
        fids = mesh.cell_faces[i]
        sides = [np.flatnonzero(mesh.face_cells[k] == i)[0] for k in fids]
        if all(np.isfinite(mesh.flat_heights[k, s]) for k, s in zip(fids, sides)):
            continue
        verts = mesh.vertices[mesh.cell_loops[i]]
        placed = _fan_assignment(mesh, i, fids, sides, verts)
        if not placed:
            _shrink_assignment(mesh, i, fids, sides, verts)


def _fan_assignment(mesh, i, fids, sides, verts) -> bool:
    n, b = geo.edge_halfplanes(verts)
    scale = mesh.cell_diameters[i]
    nd, bd = geo.dedup_lines(n, b, scale)
    # strictly feasible start for the barrier = a kernel point, if any
    try:
        start, depth = geo.chebyshev_of_halfplanes(nd, bd)
        if depth <= 1e-12 * scale:
            return False  # empty kernel: not star-shaped from anywhere
        center = geo.analytic_center(nd, bd, start)
    except RuntimeError:
        return False
    for k, s in zip(fids, sides):
        a0, a1 = mesh.vertices[mesh.face_vertices[k]]
        d = a1 - a0
        h = abs(d[0] * (center[1] - a0[1]) - d[1] * (center[0] - a0[0])) / np.linalg.norm(d)
        if h <= 0:
            return False
        mesh.flat_heights[k, s] = h
        mesh.flat_apexes[k, s] = center
    return True


def _shrink_assignment(mesh, i, fids, sides, verts):
    corner = geo.drop_collinear(verts)
    cands = np.vstack([verts[corner], geo.polygon_centroid(verts),
                       geo.deepest_point(verts)[0]])
    apexes, heights = [], []
    for k in fids:
        a0, a1 = mesh.vertices[mesh.face_vertices[k]]
        d = a1 - a0
        ln = np.linalg.norm(d)
        best_h, best_ap = -1.0, None
        for c in cands:
            h = abs(d[0] * (c[1] - a0[1]) - d[1] * (c[0] - a0[0])) / ln
            if h <= best_h or h <= 1e-12 * mesh.cell_diameters[i]:
                continue
            if geo.triangle_in_polygon(np.array([a0, a1, c]), verts):
                best_h, best_ap = h, c.copy()
        if best_ap is None:
            raise MeshError(f"cell {i}: no admissible face simplex apex for face {k}")
        apexes.append(best_ap)
        heights.append(best_h)

    mids = np.array([mesh.vertices[mesh.face_vertices[k]].mean(axis=0) for k in fids])
    apexes = np.array(apexes)
    area_scale = mesh.cell_areas[i]
    for _ in range(120):
        tris = [np.array([*mesh.vertices[mesh.face_vertices[k]], apexes[j]])
                for j, k in enumerate(fids)]
        overlap = False
        for a in range(len(tris)):
            for b in range(a + 1, len(tris)):
                if geo.triangle_overlap_area(tris[a], tris[b]) > 1e-12 * area_scale:
                    overlap = True
                    break
            if overlap:
                break
        if not overlap:
            break
        apexes = mids + 0.85 * (apexes - mids)  # uniform height shrink
    else:
        raise MeshError(f"cell {i}: face simplices failed to become disjoint")
    for j, (k, s) in enumerate(zip(fids, sides)):
        a0, a1 = mesh.vertices[mesh.face_vertices[k]]
        d = a1 - a0
        h = abs(d[0] * (apexes[j][1] - a0[1]) - d[1] * (apexes[j][0] - a0[0])) / np.linalg.norm(d)
        mesh.flat_heights[k, s] = h
        mesh.flat_apexes[k, s] = apexes[j]


# -- metrics ------------------------------------------------------------------


def compute_metrics(mesh: PolyMesh, degrees=2) -> MeshMetrics:
    """Observed shape constants; assigns face simplices where missing."""
    assign_face_simplices(mesh)
    p = np.broadcast_to(np.asarray(degrees, dtype=float), (mesh.n_cells,))
    C_F = max(len(f) for f in mesh.cell_faces)
    C_r = 0.0
    for i in range(mesh.n_cells):
        C_r = max(C_r, mesh.cell_diameters[i] / mesh.inradius(i))
    C_s = 0.0
    d = mesh.dimension
    for k in range(mesh.n_faces):
        for side, c in enumerate(mesh.face_cells[k]):
            if c < 0:
                continue
            h = mesh.flat_heights[k, side]
            if not np.isfinite(h) or h <= 0:
                raise MeshError(f"face {k} has no admissible simplex height")
            simplex_area = 0.5 * mesh.face_lengths[k] * h
            C_s = max(C_s, mesh.cell_diameters[c] * mesh.face_lengths[k] / (d * simplex_area))
    theta = 1.0
    interior = np.flatnonzero(mesh.face_tags == INTERIOR)
    for k in interior:
        ci, cj = mesh.face_cells[k]
        qi = (p[ci] + 1) * (p[ci] + d) / mesh.cell_diameters[ci]
        qj = (p[cj] + 1) * (p[cj] + d) / mesh.cell_diameters[cj]
        theta = max(theta, qi / qj, qj / qi)
    return MeshMetrics(
        C_F_observed=int(C_F),
        C_r_observed=float(C_r),
        C_s_observed=float(C_s),
        theta_observed=float(theta),
        n_cells=mesh.n_cells,
        n_faces=mesh.n_faces,
        h_max=float(mesh.cell_diameters.max()),
        h_min=float(mesh.cell_diameters.min()),
        total_area=float(mesh.cell_areas.sum()),
    )


# -- file I/O -----------------------------------------------------------------


def write_mesh(mesh: PolyMesh, path) -> None:
    """Plain-text mesh format; floats via repr for exact round-trips."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("polymesh 2\n")
        f.write(f"vertices {len(mesh.vertices)}\n")
        for x, y in mesh.vertices:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"cells {mesh.n_cells}\n")
        for loop in mesh.cell_loops:
            f.write(" ".join(str(int(v)) for v in loop) + "\n")
        f.write(f"faces {mesh.n_faces}\n")
        for k in range(mesh.n_faces):
            v0, v1 = mesh.face_vertices[k]
            cl, cr = mesh.face_cells[k]
            f.write(f"{v0} {v1} {cl} {cr} {mesh.face_tags[k]}\n")


def read_mesh(path) -> PolyMesh:
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != "polymesh 2":
        raise MeshError("not a polymesh 2 file")
    pos = 1

    def expect(word):
        nonlocal pos
        head = lines[pos].split()
        if head[0] != word:
            raise MeshError(f"expected '{word}' section, got {lines[pos]!r}")
        pos += 1
        return int(head[1])

    nv = expect("vertices")
    verts = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    nc = expect("cells")
    loops = [np.array([int(t) for t in lines[pos + i].split()], dtype=np.int64)
             for i in range(nc)]
    pos += nc
    nf = expect("faces")
    fv, fc, tags = [], [], []
    for i in range(nf):
        v0, v1, cl, cr, tag = (int(t) for t in lines[pos + i].split())
        fv.append((v0, v1))
        fc.append((cl, cr))
        tags.append(tag)
    return PolyMesh(verts, loops, np.array(fv), np.array(fc), np.array(tags))


def meshes_equal(a: PolyMesh, b: PolyMesh) -> bool:
    return (
        np.array_equal(a.vertices, b.vertices)
        and len(a.cell_loops) == len(b.cell_loops)
        and all(np.array_equal(x, y) for x, y in zip(a.cell_loops, b.cell_loops))
        and np.array_equal(a.face_vertices, b.face_vertices)
        and np.array_equal(a.face_cells, b.face_cells)
        and np.array_equal(a.face_tags, b.face_tags)
    )
