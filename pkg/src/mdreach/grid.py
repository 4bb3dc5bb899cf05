"""Regular equidistant grids with multilinear interpolation.

Nodes are linearized row-major with axis 0 slowest. Non-periodic axes clamp
queries to ``[lower, upper]``; periodic axes wrap them modulo the period, in
which case the upper bound is identified with the lower bound and is not a
node.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from mdreach._kernels import MAX_CORNERS, eval_points

# fractional cell positions this close to a node are snapped onto it
SNAP_TOL = 1e-12
# product weights below this are dropped from explicit weight rows
DROP_TOL = 1e-15


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid with ``nodes_per_axis[j]`` nodes along axis ``j``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        n = len(self.lower)
        periodic = self.periodic or (False,) * n
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "nodes_per_axis", tuple(int(v) for v in self.nodes_per_axis))
        object.__setattr__(self, "periodic", tuple(bool(v) for v in periodic))
        if n == 0:
            raise ValueError("grid needs at least one axis")
        if not (len(self.upper) == len(self.nodes_per_axis) == len(self.periodic) == n):
            raise ValueError("lower, upper, nodes_per_axis and periodic must have equal length")
        if 2**n > MAX_CORNERS:
            raise ValueError(f"at most {int(math.log2(MAX_CORNERS))} dimensions supported")
        for j in range(n):
            if not self.lower[j] < self.upper[j]:
                raise ValueError(f"axis {j}: lower must be < upper")
            if self.nodes_per_axis[j] < 1:
                raise ValueError(f"axis {j}: need at least 1 node")
        if self.n_nodes >= np.iinfo(np.int32).max:
            raise ValueError("grid too large for 32-bit node indices")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def n_nodes(self) -> int:
        return math.prod(self.nodes_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def spacing(self) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        n = np.asarray(self.nodes_per_axis, dtype=float)
        per = np.asarray(self.periodic)
        # a single-node axis is degenerate: every query maps onto its one node
        return (hi - lo) / np.where(per, n, np.maximum(n - 1, 1))

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(self.dim, dtype=np.int64)
        for j in range(self.dim - 2, -1, -1):
            s[j] = s[j + 1] * self.nodes_per_axis[j + 1]
        return s

    def axis_coords(self, j: int) -> np.ndarray:
        return self.lower[j] + np.arange(self.nodes_per_axis[j]) * self.spacing[j]

    def multi_index(self, i) -> np.ndarray:
        return np.stack(np.unravel_index(i, self.shape), axis=-1)

    def node_coords(self, i: int) -> np.ndarray:
        if not 0 <= int(i) < self.n_nodes:
            raise IndexError(f"node index {i} out of range [0, {self.n_nodes})")
        k = np.array(np.unravel_index(int(i), self.shape), dtype=float)
        return np.asarray(self.lower) + k * self.spacing

    def nodes(self) -> np.ndarray:
        """All node coordinates as an ``(n_nodes, dim)`` array in index order."""
        axes = [self.axis_coords(j) for j in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def header(self) -> dict:
        return {
            "dim": self.dim,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "nodes_per_axis": list(self.nodes_per_axis),
            "periodic": list(self.periodic),
        }

    def digest(self) -> str:
        blob = json.dumps(self.header(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def same_domain(self, other: "GridSpec") -> bool:
        return (
            self.dim == other.dim
            and np.allclose(self.lower, other.lower, rtol=0, atol=1e-12)
            and np.allclose(self.upper, other.upper, rtol=0, atol=1e-12)
            and self.periodic == other.periodic
        )


@dataclass(frozen=True)
class WeightRow:
    """Sparse interpolation row: ``value = weights @ values[indices]``."""

    indices: np.ndarray
    weights: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(w) for i, w in zip(self.indices, self.weights)}

    def dot(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values)[self.indices]))


def locate(grid: GridSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Cell corners and fractional offsets for each row of ``points``.

    Returns ``idx`` of shape ``(m, 2**dim)`` (int32 flat node indices, corner
    bit for axis j at position ``dim-1-j``) and ``frac`` of shape ``(m, dim)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dim:
        raise ValueError(f"expected points with {grid.dim} coordinates, got {pts.shape[1]}")
    m, n = pts.shape
    spacing = grid.spacing
    lo_idx = np.empty((m, n), dtype=np.int64)
    hi_idx = np.empty((m, n), dtype=np.int64)
    frac = np.empty((m, n))
    for j in range(n):
        N = grid.nodes_per_axis[j]
        lo = grid.lower[j]
        x = pts[:, j]
        if grid.periodic[j]:
            x = lo + np.mod(x - lo, grid.upper[j] - lo)
        else:
            x = np.clip(x, lo, grid.upper[j])
        t = (x - lo) / spacing[j]
        i0 = np.floor(t)
        f = t - i0
        up = f > 1.0 - SNAP_TOL
        i0 = np.where(up, i0 + 1, i0)
        f = np.where(up | (f < SNAP_TOL), 0.0, f)
        i0 = i0.astype(np.int64)
        if grid.periodic[j]:
            i0 %= N
            i1 = (i0 + 1) % N
        else:
            top = i0 >= N - 1
            i0 = np.where(top, N - 1, i0)
            f = np.where(top, 0.0, f)
            i1 = np.minimum(i0 + 1, N - 1)
        lo_idx[:, j] = i0
        hi_idx[:, j] = i1
        frac[:, j] = f
    strides = grid.strides
    idx = np.zeros((m, 2**n), dtype=np.int64)
    for c in range(2**n):
        for j in range(n):
            bit = (c >> (n - 1 - j)) & 1
            idx[:, c] += (hi_idx[:, j] if bit else lo_idx[:, j]) * strides[j]
    return idx.astype(np.int32), frac


def corner_weights(frac: np.ndarray) -> np.ndarray:
    """Tensor-product weights ``(m, 2**dim)`` matching the corner order of :func:`locate`."""
    m, n = frac.shape
    w = np.ones((m, 2**n))
    for c in range(2**n):
        for j in range(n):
            bit = (c >> (n - 1 - j)) & 1
            w[:, c] *= frac[:, j] if bit else 1.0 - frac[:, j]
    return w


def interp_weights(grid: GridSpec, x) -> WeightRow:
    idx, frac = locate(grid, np.reshape(np.asarray(x, dtype=float), (1, grid.dim)))
    w = corner_weights(frac)[0]
    keep = w >= DROP_TOL
    indices, inverse = np.unique(idx[0][keep], return_inverse=True)
    weights = np.zeros(indices.shape[0])
    np.add.at(weights, inverse, w[keep])
    weights /= weights.sum()
    return WeightRow(indices.astype(np.int64), weights)


def _check_values(grid: GridSpec, values) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] != grid.n_nodes:
        raise ValueError(f"value vector has length {v.size}, grid has {grid.n_nodes} nodes")
    return v


def interpolate_many(grid: GridSpec, values, points) -> np.ndarray:
    v = _check_values(grid, values)
    idx, frac = locate(grid, points)
    return eval_points(v, idx, frac, np.empty(idx.shape[0]))


def interpolate(grid: GridSpec, values, x) -> float:
    return float(interpolate_many(grid, values, np.reshape(np.asarray(x, dtype=float), (1, -1)))[0])


def coarsen(grid: GridSpec) -> GridSpec:
    """Grid with roughly double the spacing on the same domain."""
    counts = []
    for j, (N, per) in enumerate(zip(grid.nodes_per_axis, grid.periodic)):
        if N < 3:
            raise ValueError(f"axis {j} has {N} nodes; cannot coarsen below 3")
        counts.append(math.ceil(N / 2) if per else math.ceil((N + 1) / 2))
    return GridSpec(grid.lower, grid.upper, tuple(counts), grid.periodic)


def prolong(coarse_values, coarse: GridSpec, fine: GridSpec) -> np.ndarray:
    """Interpolate a coarse-grid vector onto every node of ``fine``."""
    if not coarse.same_domain(fine):
        raise ValueError("coarse and fine grids must share the same domain")
    return interpolate_many(coarse, coarse_values, fine.nodes())


def restrict(fine_values, fine: GridSpec, coarse: GridSpec) -> np.ndarray:
    """Sample a fine-grid vector at the coarse nodes (injection where nodes coincide)."""
    if not coarse.same_domain(fine):
        raise ValueError("coarse and fine grids must share the same domain")
    return interpolate_many(fine, fine_values, coarse.nodes())


VALUES_MAGIC = "mdreach-values"


def write_values(path, grid: GridSpec, values, **meta) -> Path:
    """Dump ``values`` as a one-line JSON header plus little-endian float64 payload."""
    v = _check_values(grid, values)
    header = {"format": VALUES_MAGIC, **grid.header(), **meta}
    path = Path(path)
    with path.open("wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(v.astype("<f8").tobytes())
    return path


def read_values(path) -> tuple[GridSpec, np.ndarray, dict]:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    if header.get("format") != VALUES_MAGIC:
        raise ValueError(f"{path}: not a value dump")
    grid = GridSpec(
        tuple(header["lower"]),
        tuple(header["upper"]),
        tuple(header["nodes_per_axis"]),
        tuple(header["periodic"]),
    )
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    if values.size != grid.n_nodes:
        raise ValueError(f"{path}: payload has {values.size} values, header says {grid.n_nodes}")
    return grid, values, header


def make_grid(lower: Sequence[float], upper: Sequence[float], nodes: Sequence[int], periodic=None) -> GridSpec:
    return GridSpec(tuple(lower), tuple(upper), tuple(nodes), tuple(periodic) if periodic else ())
