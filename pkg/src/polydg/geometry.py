"""Small 2D computational-geometry kernel used by the mesh layer.

Everything works on plain float64 numpy arrays; polygons are (n, 2) vertex
arrays ordered counterclockwise unless stated otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull


def polygon_area(verts: np.ndarray) -> float:
    """Signed area via the shoelace formula (positive for CCW loops)."""
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        return verts.mean(axis=0)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(verts: np.ndarray) -> float:
    """Max pairwise vertex distance; hull first when the loop is long."""
    pts = verts
    if len(pts) > 32:
        pts = pts[ConvexHull(pts).vertices]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def ensure_ccw(verts: np.ndarray) -> np.ndarray:
    return verts if polygon_area(verts) > 0 else verts[::-1].copy()


def is_convex(verts: np.ndarray, tol: float = 1e-12) -> bool:
    """True when every turn is left or collinear (CCW input assumed)."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    c = np.roll(verts, -2, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    scale = max(polygon_diameter(verts) ** 2, 1e-300)
    return bool(np.all(cross >= -tol * scale))


def drop_collinear(verts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of corner vertices, with runs of collinear points removed."""
    n = len(verts)
    scale = max(polygon_diameter(verts) ** 2, 1e-300)
    keep = []
    for i in range(n):
        a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) > tol * scale:
            keep.append(i)
    if len(keep) < 3:  # fully degenerate loop; keep everything and let callers fail loudly
        return np.arange(n)
    return np.asarray(keep, dtype=np.int64)


def point_in_polygon(points: np.ndarray, verts: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Even-odd crossing test, vectorized over `points` ((m, 2) array).

    With tol > 0 points within tol of the boundary count as inside.
    """
    pts = np.atleast_2d(points)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = verts[:, 0][None, :], verts[:, 1][None, :]
    x1, y1 = np.roll(verts[:, 0], -1)[None, :], np.roll(verts[:, 1], -1)[None, :]
    crosses = ((y0 <= y) & (y < y1)) | ((y1 <= y) & (y < y0))
    denom = np.where(y1 - y0 == 0.0, 1.0, y1 - y0)
    xint = x0 + (y - y0) / denom * (x1 - x0)
    inside = np.sum(crosses & (x < xint), axis=1) % 2 == 1
    if tol > 0.0:
        d = distance_to_edges(pts, verts).min(axis=1)
        inside |= d <= tol
    return inside if points.ndim == 2 else inside[0]


def distance_to_edges(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """(m, n_edges) distances from each point to each boundary segment."""
    pts = np.atleast_2d(points)
    a = verts[None, :, :]
    b = np.roll(verts, -1, axis=0)[None, :, :]
    ab = b - a
    ap = pts[:, None, :] - a
    t = np.einsum("mei,mei->me", ap, ab) / np.maximum(np.einsum("mei,mei->me", ab, ab), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, :, None] * ab
    return np.linalg.norm(pts[:, None, :] - proj, axis=-1)


def signed_distance(point: np.ndarray, verts: np.ndarray) -> float:
    """Distance to the boundary, positive inside and negative outside."""
    d = float(distance_to_edges(point[None, :], verts).min())
    return d if point_in_polygon(point[None, :], verts)[0] else -d


def segments_properly_cross(p0, p1, q0, q1, eps: float = 0.0) -> np.ndarray:
    """Strict crossing test between one segment (p0, p1) and many (q0, q1)."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    d1 = orient(p0, p1, q0)
    d2 = orient(p0, p1, q1)
    d3 = orient(q0, q1, p0)
    d4 = orient(q0, q1, p1)
    return ((d1 > eps) & (d2 < -eps) | (d1 < -eps) & (d2 > eps)) & (
        (d3 > eps) & (d4 < -eps) | (d3 < -eps) & (d4 > eps)
    )


def triangle_in_polygon(tri: np.ndarray, verts: np.ndarray, tol: float = 1e-12) -> bool:
    """True when the closed triangle is contained in the closed polygon.

    The triangle may share boundary parts with the polygon; only proper edge
    crossings or polygon vertices strictly inside the triangle disqualify it.
    """
    scale = max(polygon_diameter(verts) ** 2, 1e-300)
    eps = tol * scale
    q0 = verts
    q1 = np.roll(verts, -1, axis=0)
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        if np.any(segments_properly_cross(a, b, q0, q1, eps)):
            return False
    # vertices of the polygon strictly inside the triangle
    if np.any(points_strictly_in_triangle(verts, tri, eps)):
        return False
    c = tri.mean(axis=0)
    return bool(point_in_polygon(c[None, :], verts, tol=np.sqrt(eps))[0])


def points_strictly_in_triangle(pts: np.ndarray, tri: np.ndarray, eps: float) -> np.ndarray:
    s = np.ones(len(pts), dtype=bool)
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        s &= cross > eps
    return s


def points_in_closed_triangle(pts: np.ndarray, tri: np.ndarray, eps: float) -> np.ndarray:
    """Boundary-inclusive membership in a CCW triangle."""
    s = np.ones(len(pts), dtype=bool)
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        s &= cross >= -eps
    return s


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject against a convex CCW clip."""
    poly = [tuple(p) for p in subject]
    for k in range(len(clip)):
        a, b = clip[k], clip[(k + 1) % len(clip)]
        nx, ny = a[1] - b[1], b[0] - a[0]  # inward normal of a CCW edge points left
        keep = lambda p: nx * (p[0] - a[0]) + ny * (p[1] - a[1]) >= 0.0  # noqa: E731
        out = []
        for i, p in enumerate(poly):
            q = poly[(i + 1) % len(poly)]
            pin, qin = keep(p), keep(q)
            if pin:
                out.append(p)
            if pin != qin:
                dp = nx * (p[0] - a[0]) + ny * (p[1] - a[1])
                dq = nx * (q[0] - a[0]) + ny * (q[1] - a[1])
                t = dp / (dp - dq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        poly = out
        if not poly:
            break
    return np.asarray(poly, dtype=float).reshape(-1, 2)


def triangle_overlap_area(t0: np.ndarray, t1: np.ndarray) -> float:
    """Area of the intersection of two triangles (0 when interiors are disjoint)."""
    inter = clip_convex(ensure_ccw(t0), ensure_ccw(t1))
    if len(inter) < 3:
        return 0.0
    return abs(polygon_area(inter))


def ear_clip(verts: np.ndarray) -> np.ndarray:
    """Ear-clipping triangulation of a simple CCW polygon.

    Returns (m, 3) vertex indices into `verts`; every triangle is positively
    oriented. Raises ValueError when no ear exists (self-intersecting input).
    """
    n = len(verts)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    scale = max(polygon_diameter(verts) ** 2, 1e-300)
    eps = 1e-12 * scale
    idx = list(range(n))
    tris = []
    convex_eps = eps
    while len(idx) > 3:
        found = False
        m = len(idx)
        for j in range(m):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % m]
            a, b, c = verts[i0], verts[i1], verts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= convex_eps:
                continue  # reflex or degenerate corner
            # a vertex on the chord a-c would make the diagonal graze the
            # boundary, so blocking is boundary-inclusive
            others = np.asarray([k for k in idx if k not in (i0, i1, i2)], dtype=int)
            if len(others) and np.any(
                points_in_closed_triangle(verts[others], np.array([a, b, c]), eps)
            ):
                continue
            tris.append((i0, i1, i2))
            del idx[j]
            found = True
            break
        if not found:
            if convex_eps == 0.0:
                raise ValueError("no ear found; polygon is not simple")
            convex_eps = 0.0  # admit near-degenerate convex corners, then give up
    tris.append(tuple(idx))
    out = np.asarray(tris, dtype=np.int64)
    areas = np.array([polygon_area(verts[list(t)]) for t in out])
    out = out[areas > 0]
    # a self-intersecting polygon can still offer ears; the giveaway is that
    # the clipped triangles no longer add up to the shoelace area
    covered = areas[areas > 0].sum()
    target = polygon_area(verts)
    if abs(covered - target) > 1e-9 * max(abs(target), scale):
        raise ValueError("triangulation does not cover the polygon; "
                         "polygon is not simple")
    return out


def chebyshev_center(verts: np.ndarray) -> tuple[np.ndarray, float]:
    """Deepest interior point of a convex CCW polygon and its depth, via LP."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    e = b - a
    norms = np.linalg.norm(e, axis=1)
    # inward unit normal of a CCW edge
    nin = np.stack([-e[:, 1], e[:, 0]], axis=1) / norms[:, None]
    # maximize r with nin . x - r >= nin . a  =>  -nin . x + r <= -nin . a
    A_ub = np.hstack([-nin, np.ones((len(a), 1))])
    b_ub = -np.einsum("ij,ij->i", nin, a)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * 3, method="highs")
    if not res.success:
        raise RuntimeError(f"Chebyshev LP failed: {res.message}")
    return res.x[:2].copy(), float(res.x[2])


def deepest_point(verts: np.ndarray, extra_candidates: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Approximate deepest interior point of a simple polygon.

    Convex polygons go through the exact LP; otherwise the best of a candidate
    set (centroid, subtriangle incenters, optional extras) is polished with
    Nelder-Mead on the signed boundary distance.
    """
    if is_convex(verts):
        return chebyshev_center(verts)
    cands = [polygon_centroid(verts)]
    corner = drop_collinear(verts)
    cv = verts[corner]
    for t in ear_clip(cv):
        cands.append(triangle_incenter(cv[t]))
    if extra_candidates is not None:
        cands.extend(np.atleast_2d(extra_candidates))
    cands = np.asarray(cands)
    depth = np.array([signed_distance(c, verts) for c in cands])
    best = cands[int(np.argmax(depth))]
    res = minimize(lambda q: -signed_distance(q, verts), best, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
    if -res.fun > depth.max():
        return res.x.copy(), float(-res.fun)
    return best.copy(), float(depth.max())


def edge_halfplanes(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inward unit normals and offsets of a CCW polygon's edge lines.

    A point x is on the inner side of edge i iff n[i]·x <= b[i]... with the
    convention returned here, d_i(x) = b[i] - n[i]·x is the signed distance to
    the edge line, positive inside.
    """
    a = verts
    e = np.roll(verts, -1, axis=0) - a
    ln = np.linalg.norm(e, axis=1)
    # outward unit normal of a CCW edge
    n = np.stack([e[:, 1], -e[:, 0]], axis=1) / ln[:, None]
    b = np.einsum("ij,ij->i", n, a)
    return n, b


def dedup_lines(normals: np.ndarray, offsets: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Collapse coincident lines (same normal and offset up to 1e-9*scale)."""
    key = np.round(np.column_stack([normals, offsets / max(scale, 1e-300)]) / 1e-9).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx.sort()
    return normals[idx], offsets[idx]


def chebyshev_of_halfplanes(normals: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, float]:
    """Deepest point of {x : normals·x <= offsets} (normals unit, outward)."""
    A_ub = np.hstack([normals, np.ones((len(normals), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A_ub, b_ub=offsets,
                  bounds=[(None, None)] * 3, method="highs")
    if not res.success:
        raise RuntimeError(f"half-plane Chebyshev LP failed: {res.message}")
    return res.x[:2].copy(), float(res.x[2])


def analytic_center(normals: np.ndarray, offsets: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Minimizer of -sum log(b_i - n_i·x), from a strictly feasible start.

    Unique and equivariant under rigid motions, unlike the Chebyshev center,
    which makes derived mesh metrics stable under rotation.
    """
    x = x0.astype(float).copy()
    d = offsets - normals @ x
    if np.any(d <= 0):
        raise ValueError("analytic_center: start point not strictly feasible")
    scale = float(np.median(d))
    for _ in range(60):
        d = offsets - normals @ x
        g = (normals / d[:, None]).sum(axis=0)
        H = (normals[:, :, None] * normals[:, None, :] / (d**2)[:, None, None]).sum(axis=0)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while np.any(offsets - normals @ (x + t * step) <= 0) and t > 1e-14:
            t *= 0.5
        x = x + t * step
        if np.linalg.norm(t * step) < 1e-14 * max(scale, 1e-300):
            break
    return x


def triangle_incenter(tri: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(tri[2] - tri[1])
    b = np.linalg.norm(tri[0] - tri[2])
    c = np.linalg.norm(tri[1] - tri[0])
    return (a * tri[0] + b * tri[1] + c * tri[2]) / (a + b + c)


def triangle_inradius(tri: np.ndarray) -> float:
    area = abs(polygon_area(tri))
    per = (
        np.linalg.norm(tri[1] - tri[0])
        + np.linalg.norm(tri[2] - tri[1])
        + np.linalg.norm(tri[0] - tri[2])
    )
    return 2.0 * area / per


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))
