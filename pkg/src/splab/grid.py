"""Uniform grids over boxes in R^m and the algebra of sampled maps.

All types are immutable after construction; every operation is a pure
function, so concurrent use is safe.  Node ordering is C order (last axis
fastest), matching ``np.meshgrid(..., indexing="ij")`` raveled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, ConsistencyError, EvaluationError, GeometryError

_SNAP_REL_TOL = 1e-9


def _as_tuple(x, dim: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise ConfigurationError(f"expected {dim} coordinates, got shape {arr.shape}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its two corners (lo <= hi per axis)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ConfigurationError("box corners have mismatched dimensions")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ConfigurationError(f"degenerate box: lo={self.lo} hi={self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def contains_points(self, points: NDArray) -> NDArray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def contains_box(self, other: "Box", tol: float = 1e-12) -> bool:
        return all(ol >= l - tol for ol, l in zip(other.lo, self.lo)) and all(
            oh <= h + tol for oh, h in zip(other.hi, self.hi)
        )

    def overlaps_interior(self, other: "Box") -> bool:
        # Touching faces do not count as overlap.
        return all(
            ol < h - 1e-15 and l < oh - 1e-15
            for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi)
        )

    def transformed(self, translate: Sequence[float], scale: float) -> "Box":
        t = np.asarray(translate, dtype=float)
        lo = np.asarray(self.lo) * scale + t
        hi = np.asarray(self.hi) * scale + t
        return Box(tuple(lo), tuple(hi))

    @staticmethod
    def cube(halfwidth: float, center: Sequence[float] | None = None, dim: int = 2) -> "Box":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return Box(tuple(c - halfwidth), tuple(c + halfwidth))


def _normalize_box(box, dim: int) -> Box:
    """Accept Box, ((lo...), (hi...)), or 1D [lo, hi]."""
    if isinstance(box, Box):
        if box.dim != dim:
            raise ConfigurationError(f"box dimension {box.dim} != {dim}")
        return box
    arr = np.asarray(box, dtype=float)
    if dim == 1 and arr.shape == (2,):
        return Box((float(arr[0]),), (float(arr[1]),))
    if arr.shape == (2, dim):
        return Box(tuple(arr[0]), tuple(arr[1]))
    raise ConfigurationError(f"cannot interpret box of shape {arr.shape} in dimension {dim}")


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over a box: nodes at corner + i*h along every axis."""

    dim: int
    box: Box
    spacing: float
    shape: tuple[int, ...] = field(init=False)
    _nodes_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"grid dimension must be >= 1, got {self.dim}")
        if self.spacing <= 0:
            raise ConfigurationError(f"spacing must be positive, got {self.spacing}")
        shape = []
        for side in self.box.sides:
            ratio = side / self.spacing
            snapped = round(ratio)
            if snapped < 1 or abs(ratio - snapped) > _SNAP_REL_TOL * max(1.0, abs(ratio)):
                raise ConfigurationError(
                    f"box side {side} is not an integer multiple of spacing {self.spacing}"
                )
            shape.append(int(snapped) + 1)
        object.__setattr__(self, "shape", tuple(shape))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> NDArray:
        n = self.shape[axis]
        return self.box.lo[axis] + self.spacing * np.arange(n)

    def nodes(self) -> NDArray:
        """All node coordinates as an (N, dim) array, C order. Cached."""
        if not self._nodes_cache:
            mesh = np.meshgrid(*(self.axis_coords(i) for i in range(self.dim)), indexing="ij")
            pts = np.column_stack([m.ravel() for m in mesh])
            pts.setflags(write=False)
            self._nodes_cache.append(pts)
        return self._nodes_cache[0]

    def transformed(self, translate: Sequence[float], scale: float) -> "Grid":
        return Grid(self.dim, self.box.transformed(translate, scale), self.spacing * scale)


@dataclass(frozen=True)
class Placement:
    """Affine placement x -> scale * x + translate of a map's domain."""

    translate: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigurationError(f"placement scale must be positive, got {self.scale}")
        object.__setattr__(self, "translate", tuple(float(t) for t in self.translate))

    @staticmethod
    def identity(dim: int) -> "Placement":
        return Placement(translate=(0.0,) * dim, scale=1.0)


@dataclass(frozen=True)
class SampledMap:
    """Values in R^nu attached to the nodes of a grid.

    Outside ``support`` the map equals ``constant`` exactly; this is
    verified at construction.
    """

    grid: Grid
    values: NDArray
    nu: int
    support: Box
    constant: tuple[float, ...]

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.grid.node_count, self.nu):
            raise ConfigurationError(
                f"values shape {vals.shape} != ({self.grid.node_count}, {self.nu})"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "constant", tuple(float(c) for c in self.constant))
        if len(self.constant) != self.nu:
            raise ConfigurationError("constant dimension mismatch")
        if not self.grid.box.contains_box(self.support):
            raise ConfigurationError("support box is not contained in the grid box")
        outside = ~self.support.contains_points(self.grid.nodes())
        if np.any(outside):
            const = np.asarray(self.constant)
            if not np.array_equal(vals[outside], np.broadcast_to(const, (int(outside.sum()), self.nu))):
                raise ConsistencyError("values outside the support differ from the declared constant")

    def with_values(self, values: NDArray) -> "SampledMap":
        return SampledMap(self.grid, values, self.nu, self.support, self.constant)


def make_grid(dim: int, box, spacing: float) -> Grid:
    """Build a uniform grid, snapping box sides to multiples of spacing.

    Sides must be divisible by the spacing within 1e-9 relative tolerance;
    they are then snapped exactly.
    """
    if dim < 1:
        raise ConfigurationError(f"grid dimension must be >= 1, got {dim}")
    if spacing <= 0:
        raise ConfigurationError(f"spacing must be positive, got {spacing}")
    b = _normalize_box(box, dim)
    hi = []
    for side, lo_i, hi_i in zip(b.sides, b.lo, b.hi):
        if side <= 0:
            raise ConfigurationError("box sides must be positive")
        ratio = side / spacing
        snapped = round(ratio)
        if snapped < 1 or abs(ratio - snapped) > _SNAP_REL_TOL * max(1.0, abs(ratio)):
            raise ConfigurationError(
                f"box side {side} not divisible by spacing {spacing} within tolerance"
            )
        hi.append(lo_i + snapped * spacing)
    return Grid(dim, Box(b.lo, tuple(hi)), spacing)


def sample_map(
    grid: Grid,
    f: Callable[[NDArray], NDArray],
    support,
    constant,
) -> SampledMap:
    """Sample a vectorized pointwise function on the grid nodes.

    ``f`` receives an (N, dim) array and must return (N, nu) values.
    Inside the support the samples are f(node); outside they are set to
    the constant exactly.
    """
    sup = _normalize_box(support, grid.dim)
    pts = grid.nodes()
    vals = np.array(f(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != pts.shape[0]:
        raise EvaluationError(f"function returned {vals.shape[0]} values for {pts.shape[0]} nodes")
    bad = ~np.isfinite(vals).all(axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EvaluationError(f"non-finite value at node {i} (x={pts[i]})")
    const = np.atleast_1d(np.asarray(constant, dtype=float))
    outside = ~sup.contains_points(pts)
    vals[outside] = const
    return SampledMap(grid, vals, vals.shape[1], sup, tuple(const))


def rescale_map(u: SampledMap, placement: Placement) -> SampledMap:
    """Transform the grid with the map: v(x) = u((x - t) / scale).

    Values are copied bit for bit; no re-interpolation happens, so
    applying (scale, t) then (1/scale, -t/scale) is a bit-exact inverse.
    """
    grid = u.grid.transformed(placement.translate, placement.scale)
    support = u.support.transformed(placement.translate, placement.scale)
    return SampledMap(grid, u.values, u.nu, support, u.constant)


def _lattice_offset(piece: Grid, ambient: Grid) -> tuple[int, ...]:
    """Index offset of a piece grid inside the ambient lattice, or raise."""
    if abs(piece.spacing - ambient.spacing) > 1e-12 * max(piece.spacing, ambient.spacing):
        raise GeometryError(
            f"piece spacing {piece.spacing} does not match ambient spacing {ambient.spacing}"
        )
    offs = []
    for axis in range(ambient.dim):
        shift = (piece.box.lo[axis] - ambient.box.lo[axis]) / ambient.spacing
        snapped = round(shift)
        if abs(shift - snapped) > 1e-6:
            raise GeometryError(f"piece lattice misaligned with ambient grid on axis {axis}")
        if snapped < 0 or snapped + piece.shape[axis] > ambient.shape[axis]:
            raise GeometryError("piece grid exceeds ambient grid")
        offs.append(int(snapped))
    return tuple(offs)


def glue_disjoint(
    pieces: Sequence[tuple[SampledMap, Placement]],
    ambient: Grid,
    background,
) -> SampledMap:
    """Glue transformed pieces with pairwise disjoint supports over a background.

    Each piece's outer constant must equal the background; transformed
    supports must be pairwise disjoint (touching faces allowed) and
    contained in the ambient box.  Restricting the glue to one piece's
    support reproduces that piece's values exactly.
    """
    bg = np.atleast_1d(np.asarray(background, dtype=float))
    placed = [rescale_map(u, pl) for u, pl in pieces]
    for i, a in enumerate(placed):
        if not np.allclose(np.asarray(a.constant), bg, rtol=0, atol=0):
            raise ConsistencyError(
                f"piece {i} outer constant {a.constant} != background {tuple(bg)}"
            )
        if not ambient.box.contains_box(a.support):
            raise GeometryError(f"piece {i} support {a.support} not contained in ambient box")
        for j in range(i):
            if a.support.overlaps_interior(placed[j].support):
                raise GeometryError(f"pieces {j} and {i} have overlapping supports")

    nu = len(bg) if not placed else placed[0].nu
    values = np.tile(bg, (ambient.node_count, 1)).astype(float)
    full = values.reshape(ambient.shape + (nu,))
    for a in placed:
        off = _lattice_offset(a.grid, ambient)
        sl = tuple(slice(o, o + n) for o, n in zip(off, a.grid.shape))
        full[sl] = a.values.reshape(a.grid.shape + (nu,))
    if placed:
        lo = tuple(min(p.support.lo[i] for p in placed) for i in range(ambient.dim))
        hi = tuple(max(p.support.hi[i] for p in placed) for i in range(ambient.dim))
        hull = Box(lo, hi)
    else:
        hull = Box(ambient.box.lo, ambient.box.lo)
    return SampledMap(ambient, values.reshape(-1, nu), nu, hull, tuple(bg))


def restrict_to_box(u: SampledMap, box: Box) -> NDArray:
    """Values of u at the nodes lying in ``box`` (for glue/restrict checks)."""
    mask = box.contains_points(u.grid.nodes())
    return u.values[mask]
