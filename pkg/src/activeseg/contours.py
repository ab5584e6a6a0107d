"""Outer-boundary tracing and polygon simplification for binary components.

The boundary is traced along pixel cracks (marching squares on the pixel
grid), yielding integer corner vertices of the union of unit squares; only
direction changes are recorded, so axis-aligned edges collapse to their
corners. Simplification anchors the four extreme vertices of the closed
contour and runs recursive farthest-point (Ramer-Douglas-Peucker)
simplification on each arc between them.
"""

from __future__ import annotations

import numpy as np

# direction index: 0 = right, 1 = down, 2 = left, 3 = up
_STEP = ((0, 1), (1, 0), (0, -1), (-1, 0))
# pixel offsets (relative to the corner) of the cells ahead-left / ahead-right
_LEFT_PX = ((-1, 0), (0, 0), (0, -1), (-1, -1))
_RIGHT_PX = ((0, 0), (0, -1), (-1, -1), (-1, 0))


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Closed outer boundary of a non-empty binary mask, as (n, 2) corner points.

    Walks with the foreground on the right-hand side; at corners where two
    diagonal pixels touch, the turn keeps 8-connected foreground inside one
    boundary. Holes are ignored. Vertices are (row, col) lattice points.
    """
    m = np.asarray(mask)
    if m.ndim != 2 or not m.any():
        raise ValueError("mask must be a non-empty 2-D binary array")
    m = m.astype(bool)
    h, w = m.shape

    def px(r, c):
        return 0 <= r < h and 0 <= c < w and m[r, c]

    rs, cs = np.nonzero(m)
    start = (int(rs[0]), int(cs[0]))  # topmost then leftmost pixel; its top edge is outer
    pos = start
    d = 0
    vertices = []
    limit = 8 * (h + 2) * (w + 2)
    for _ in range(limit):
        pos = (pos[0] + _STEP[d][0], pos[1] + _STEP[d][1])
        la = _LEFT_PX[d]
        ra = _RIGHT_PX[d]
        left_ahead = px(pos[0] + la[0], pos[1] + la[1])
        right_ahead = px(pos[0] + ra[0], pos[1] + ra[1])
        if left_ahead:
            nd = (d + 3) % 4
        elif right_ahead:
            nd = d
        else:
            nd = (d + 1) % 4
        if nd != d:
            vertices.append(pos)
            d = nd
        if pos == start and d == 0:
            break
    else:
        raise RuntimeError("boundary trace failed to close")
    return np.array(vertices, dtype=np.float64)


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from each point to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _rdp_open(points: np.ndarray, epsilon: float) -> list[int]:
    """Indices (into ``points``) kept by RDP on an open polyline."""
    n = len(points)
    if n <= 2:
        return list(range(n))
    keep = [0, n - 1]
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        seg = points[i + 1 : j]
        dists = _point_segment_distance(seg, points[i], points[j])
        k = int(np.argmax(dists))
        if dists[k] > epsilon:
            mid = i + 1 + k
            keep.append(mid)
            stack.append((i, mid))
            stack.append((mid, j))
    return sorted(keep)


def _extreme_anchor_indices(vertices: np.ndarray) -> list[int]:
    """Indices of the N/E/S/W extreme vertices, in contour order, deduplicated.

    Tie-breaks (N: min col, E: min row, S: max col, W: max row) pick the four
    corners of an axis-aligned rectangle, so rectangles always simplify to
    exactly their corners.
    """
    r = vertices[:, 0]
    c = vertices[:, 1]
    order = np.arange(len(vertices))
    north = int(min(order, key=lambda i: (r[i], c[i])))
    east = int(min(order, key=lambda i: (-c[i], r[i])))
    south = int(min(order, key=lambda i: (-r[i], -c[i])))
    west = int(min(order, key=lambda i: (c[i], -r[i])))
    anchors = []
    for i in sorted({north, east, south, west}):
        anchors.append(i)
    return anchors


def simplify_closed(vertices: np.ndarray, epsilon: float = 1.0) -> np.ndarray:
    """RDP for a closed contour: anchor the 4 extremes, simplify each arc."""
    n = len(vertices)
    if n <= 3:
        return np.asarray(vertices, dtype=np.float64)
    anchors = _extreme_anchor_indices(vertices)
    if len(anchors) < 2:
        return vertices[anchors]
    kept: list[np.ndarray] = []
    for ai in range(len(anchors)):
        i = anchors[ai]
        j = anchors[(ai + 1) % len(anchors)]
        if j > i:
            arc = vertices[i : j + 1]
        else:  # wrap around the closed contour
            arc = np.concatenate([vertices[i:], vertices[: j + 1]])
        for local in _rdp_open(arc, epsilon)[:-1]:  # drop arc end: next arc re-adds it
            kept.append(arc[local])
    return np.array(kept, dtype=np.float64)


def polygon_vertex_count(component_mask: np.ndarray, epsilon: float = 1.0) -> int:
    """Vertices of the simplified polygon around one connected component.

    Traces the outer boundary, simplifies at tolerance ``epsilon`` (default
    1 px), and floors the count at 3. A filled axis-aligned rectangle gives 4
    at any size or offset; a single pixel gives its 4 unit-square corners.
    """
    poly = simplify_closed(trace_boundary(component_mask), epsilon)
    return max(3, len(poly))
