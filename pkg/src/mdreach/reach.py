"""From value vectors to sets: reachable-set approximations, contours, and the
closed-form double-integrator safe set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mdreach.grid import GridSpec, interpolate_many


@dataclass(frozen=True)
class ApproximationParams:
    lam: float
    tau_bar: float
    L: float

    def __post_init__(self):
        if self.lam <= 0 or self.tau_bar <= 0 or self.L <= 0:
            raise ValueError("lambda, tau_bar and L must all be positive")

    @property
    def threshold(self) -> float:
        return over_approx_threshold(self.lam, self.tau_bar, self.L)


def over_approx_threshold(lam: float, tau_bar: float, L: float) -> float:
    """Level ``L (1 - exp(-lam * tau_bar))`` whose sublevel set contains the reachable set."""
    return L * -math.expm1(-lam * tau_bar)


def z_from_u(U, L: float) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if np.any(U > 0):
        raise ValueError("shifted MDR values must be nonpositive")
    return U + L


def _as_points(grid: GridSpec, x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    return np.atleast_2d(pts), pts.ndim == 1


def under_approx_membership(Z, grid: GridSpec, x):
    """``Z(x) <= 0``: states guaranteed (up to discretization) to be reachable."""
    pts, single = _as_points(grid, x)
    inside = interpolate_many(grid, Z, pts) <= 0.0
    return bool(inside[0]) if single else inside


def over_approx_membership(Z, grid: GridSpec, params: ApproximationParams, x):
    """``Z(x) <= L (1 - exp(-lam tau_bar))``: a superset of the reachable set."""
    pts, single = _as_points(grid, x)
    inside = interpolate_many(grid, Z, pts) <= params.threshold
    return bool(inside[0]) if single else inside


# ---------------------------------------------------------------- contours

# edges of a cell: 0 bottom (v00-v10), 1 right (v10-v11), 2 top (v01-v11), 3 left (v00-v01)
# case bits: v00 -> 1, v10 -> 2, v11 -> 4, v01 -> 8 (bit set when below level)
_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(3, 1)], 13: [(0, 1)], 14: [(3, 0)],
}
# saddles: (segments if the cell centre is below level, segments otherwise)
_SADDLES = {
    5: ([(0, 1), (2, 3)], [(3, 0), (1, 2)]),
    10: ([(3, 0), (1, 2)], [(0, 1), (2, 3)]),
}


def _slice_2d(values, grid: GridSpec, slice_axis: Optional[int], slice_index: Optional[int]):
    F = np.asarray(values, dtype=float).reshape(grid.shape)
    if grid.dim == 2:
        return F, (0, 1)
    if grid.dim == 3 and slice_axis is not None and slice_index is not None:
        keep = tuple(j for j in range(3) if j != slice_axis)
        return np.take(F, slice_index, axis=slice_axis), keep
    raise ValueError("contours need a 2D grid, or a 3D grid with slice_axis and slice_index")


def extract_contour(values, grid: GridSpec, level: float, slice_axis: Optional[int] = None,
                    slice_index: Optional[int] = None) -> list[np.ndarray]:
    """Marching-squares level set of the bilinear interpolant.

    Returns polylines as ``(k, 2)`` arrays in state coordinates of the two
    kept axes. Closed loops repeat their first vertex at the end. Saddle
    cells are resolved by the value at the cell centre.
    """
    F, (ax, ay) = _slice_2d(values, grid, slice_axis, slice_index)
    xs, ys = grid.axis_coords(ax), grid.axis_coords(ay)
    nx, ny = F.shape
    below = F < level

    def edge_point(key):
        kind, i, j = key
        if kind == "h":  # (i, j) -> (i + 1, j)
            a, b = F[i, j], F[i + 1, j]
            t = (level - a) / (b - a)
            return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
        a, b = F[i, j], F[i, j + 1]
        t = (level - a) / (b - a)
        return (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))

    adjacency: dict = {}
    for i in range(nx - 1):
        for j in range(ny - 1):
            case = (below[i, j] * 1) | (below[i + 1, j] * 2) | (below[i + 1, j + 1] * 4) | (below[i, j + 1] * 8)
            if case in (0, 15):
                continue
            if case in _SADDLES:
                centre = 0.25 * (F[i, j] + F[i + 1, j] + F[i + 1, j + 1] + F[i, j + 1])
                segs = _SADDLES[case][0 if centre < level else 1]
            else:
                segs = _SEGMENTS[case]
            edges = (("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j))
            for e0, e1 in segs:
                p, q = edges[e0], edges[e1]
                adjacency.setdefault(p, []).append(q)
                adjacency.setdefault(q, []).append(p)

    cache: dict = {}

    def point(key):
        if key not in cache:
            cache[key] = edge_point(key)
        return cache[key]

    visited_edges = set()
    polylines = []

    def walk(start):
        chain = [start]
        prev, cur = None, start
        while True:
            nxt = None
            for cand in adjacency[cur]:
                e = frozenset((cur, cand))
                if e not in visited_edges:
                    nxt = cand
                    visited_edges.add(e)
                    break
            if nxt is None:
                return chain
            chain.append(nxt)
            prev, cur = cur, nxt
            if cur == start:
                return chain

    # open chains start at endpoints (degree 1); whatever remains forms loops
    for key in sorted(adjacency, key=lambda k: len(adjacency[k])):
        if len(adjacency[key]) == 1 and not any(frozenset((key, c)) in visited_edges for c in adjacency[key]):
            polylines.append(walk(key))
    for key in adjacency:
        if any(frozenset((key, c)) not in visited_edges for c in adjacency[key]):
            polylines.append(walk(key))
    return [np.array([point(k) for k in chain]) for chain in polylines if len(chain) > 1]


def write_contours_csv(path, polylines: Sequence[np.ndarray]) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("x,y\n")
        for n, line in enumerate(polylines):
            if n:
                fh.write("\n")
            for x, y in line:
                fh.write(f"{x:.10g},{y:.10g}\n")
    return path


def read_contours_csv(path) -> list[np.ndarray]:
    lines, cur = [], []
    for raw in Path(path).read_text().splitlines()[1:]:
        if not raw.strip():
            if cur:
                lines.append(np.array(cur))
            cur = []
            continue
        cur.append([float(v) for v in raw.split(",")])
    if cur:
        lines.append(np.array(cur))
    return lines


@dataclass
class ContourLayer:
    polylines: list
    label: str
    stroke: str = "black"
    width: float = 1.5
    dash: Optional[str] = None


def write_svg(path, layers: Sequence[ContourLayer], bounds, size: int = 480, title: str = "") -> Path:
    """Standalone SVG of contour layers over the rectangle ``bounds = (xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = map(float, bounds)
    pad = 30
    scale = (size - 2 * pad) / max(xmax - xmin, ymax - ymin)
    w = (xmax - xmin) * scale + 2 * pad
    h = (ymax - ymin) * scale + 2 * pad + 20 * len(layers)

    def px(x, y):
        return pad + (x - xmin) * scale, pad + (ymax - y) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.1f} {h:.1f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{(xmax - xmin) * scale:.1f}" height="{(ymax - ymin) * scale:.1f}" '
        'fill="none" stroke="#999" stroke-width="0.5"/>',
    ]
    if title:
        out.append(f'<text x="{pad}" y="{pad - 10}" font-family="sans-serif" font-size="12">{title}</text>')
    for k, layer in enumerate(layers):
        dash = f' stroke-dasharray="{layer.dash}"' if layer.dash else ""
        style = f'fill="none" stroke="{layer.stroke}" stroke-width="{layer.width}"{dash}'
        for line in layer.polylines:
            pts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in line)
            out.append(f'<polyline points="{pts}" {style}/>')
        ly = (ymax - ymin) * scale + 2 * pad + 20 * k + 10
        out.append(f'<line x1="{pad}" y1="{ly:.1f}" x2="{pad + 30}" y2="{ly:.1f}" {style}/>')
        out.append(f'<text x="{pad + 38}" y="{ly + 4:.1f}" font-family="sans-serif" font-size="11">{layer.label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


# ------------------------------------------------- double integrator oracle

def di_analytic_safe(x, u_max: float, box=((0.0, 4.0), (-3.0, 3.0))):
    """Closed-form safe set of the double integrator in the box.

    A state is safe iff it is in the box and full braking stops it before
    the wall it is heading towards. Works on single states or ``(m, 2)`` batches.
    """
    if u_max <= 0:
        raise ValueError("u_max must be positive")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    (a1, b1), (a2, b2) = box
    x1, x2 = pts[:, 0], pts[:, 1]
    stop = x2 * np.abs(x2) / (2 * u_max)
    ok = (x1 >= a1) & (x1 <= b1) & (x2 >= a2) & (x2 <= b2)
    ok &= (x2 <= 0) | (x1 + stop <= b1)
    ok &= (x2 >= 0) | (x1 + stop >= a1)
    return bool(ok[0]) if np.ndim(x) == 1 else ok


def di_braking_simulation(x, u_max: float, box=((0.0, 4.0), (-3.0, 3.0)), dt: float = 1e-4) -> bool:
    """Independent check: integrate maximal braking and see if the box is left."""
    (a1, b1), (a2, b2) = box
    x1, x2 = float(x[0]), float(x[1])
    if not (a1 <= x1 <= b1 and a2 <= x2 <= b2):
        return False
    u = -math.copysign(u_max, x2) if x2 != 0 else 0.0
    while x2 != 0.0:
        step = dt
        if abs(x2) <= u_max * dt:
            step = abs(x2) / u_max
        x1 += x2 * step + 0.5 * u * step * step
        x2 = 0.0 if step < dt else x2 + u * step
        if not (a1 <= x1 <= b1):
            return False
    return True


def shrink_or_grow_membership(points, radius: float, inside_fn, mode: str, n_dirs: int = 720,
                              n_rings: int = 8) -> np.ndarray:
    """Membership of a set eroded (``mode='shrink'``) or dilated (``'grow'``)
    by a closed disk of ``radius``; ``inside_fn`` maps ``(m, 2)`` points to booleans.

    The disk is sampled on ``n_rings`` concentric circles of ``n_dirs`` points
    each, so the answer is exact up to the sampling resolution.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mode not in ("shrink", "grow"):
        raise ValueError("mode must be 'shrink' or 'grow'")
    ang = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
    radii = radius * np.arange(1, n_rings + 1) / n_rings
    disk = (radii[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]).reshape(-1, 2)
    samples = (pts[:, None, :] + disk[None, :, :]).reshape(-1, 2)
    inside = np.asarray(inside_fn(samples)).reshape(len(pts), disk.shape[0])
    centre = np.asarray(inside_fn(pts))
    if mode == "shrink":
        return centre & inside.all(axis=1)
    return centre | inside.any(axis=1)
