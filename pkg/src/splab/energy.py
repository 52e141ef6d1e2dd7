"""Numerical Sobolev energies.

Two schemes: the double-sum quadrature of the fractional seminorm (to the
p-th power) for 0 < s < 1, and a central-difference first-order energy
for s = 1.  Both localize to regions.  The raw double integral carries no
dimensional normalization constant; every downstream assertion is a ratio
or a slope, so the choice is immaterial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ._pairsum import DEFAULT_BLOCK, pair_kernel_sum
from .errors import ConfigurationError, GeometryError, WrongSchemeError
from .grid import Box, Grid, SampledMap


@dataclass(frozen=True)
class FractionalParams:
    """Smoothness s in (0, 1], integrability p >= 1, target parameter ell >= 2."""

    s: float
    p: float
    ell: int = 2

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ConfigurationError(f"s must lie in (0, 1], got {self.s}")
        if self.p < 1:
            raise ConfigurationError(f"p must be >= 1, got {self.p}")
        if self.ell < 2:
            raise ConfigurationError(f"ell must be >= 2, got {self.ell}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def regime_sp_lt_ell(self) -> bool:
        return self.sp < self.ell

    @property
    def regime_p_ge_ell(self) -> bool:
        return self.p >= self.ell


@dataclass(frozen=True)
class Region:
    """Node-selection predicate: a box, a ball, or the whole grid.

    ``excluded`` holds node indices removed from the region (used to drop
    singular hits from quadrature).
    """

    kind: str = "all"
    box: Box | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    excluded: tuple[int, ...] = ()

    @staticmethod
    def whole() -> "Region":
        return Region(kind="all")

    @staticmethod
    def from_box(box: Box, excluded=()) -> "Region":
        return Region(kind="box", box=box, excluded=tuple(excluded))

    @staticmethod
    def from_ball(center, radius: float, excluded=()) -> "Region":
        return Region(kind="ball", center=tuple(float(c) for c in center),
                      radius=float(radius), excluded=tuple(excluded))

    def mask(self, grid: Grid) -> NDArray:
        pts = grid.nodes()
        if self.kind == "all":
            m = np.ones(pts.shape[0], dtype=bool)
        elif self.kind == "box":
            m = self.box.contains_points(pts)
        elif self.kind == "ball":
            d = pts - np.asarray(self.center)
            m = np.einsum("ij,ij->i", d, d) <= self.radius**2
        else:
            raise ConfigurationError(f"unknown region kind {self.kind!r}")
        if self.excluded:
            m = m.copy()
            m[list(self.excluded)] = False
        return m

    def without(self, indices) -> "Region":
        return Region(self.kind, self.box, self.center, self.radius,
                      tuple(sorted(set(self.excluded) | set(int(i) for i in indices))))


@dataclass(frozen=True)
class EnergyValue:
    """A nonnegative energy (p-th power seminorm) with its quadrature metadata."""

    value: float
    scheme: str
    spacing: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < -0.0:
            raise ConfigurationError(f"energy value must be finite and >= 0, got {self.value}")


def gagliardo_energy(
    u: SampledMap,
    params: FractionalParams,
    region: Region | None = None,
    *,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> EnergyValue:
    """Double-sum quadrature of the fractional seminorm to the p-th power.

    Returns h^(2m) * sum over unordered node pairs x != y in the region of
    |u(x)-u(y)|^p / |x-y|^(m+sp), the diagonal excluded.  Deterministic
    for fixed inputs at any worker count.
    """
    if params.s >= 1:
        raise WrongSchemeError("s = 1 requires dirichlet_energy, not the pair sum")
    region = region or Region.whole()
    mask = region.mask(u.grid)
    if not mask.any():
        raise ConfigurationError("empty region")
    m = u.grid.dim
    h = u.grid.spacing
    pts = u.grid.nodes()[mask]
    vals = u.values[mask]
    q = m + params.sp
    # factor 2 restores the ordered double sum from the unordered pair sum
    s = 2.0 * pair_kernel_sum(pts, vals, params.p, q, block=block, workers=workers)
    value = h ** (2 * m) * s
    scheme = f"pair-sum h={h!r} block={block} workers={workers} kernel_exp={q!r}"
    return EnergyValue(value=value, scheme=scheme, spacing=h)


def dirichlet_energy(
    u: SampledMap,
    p: float,
    region: Region | None = None,
) -> EnergyValue:
    """First-order energy: node quadrature of |Du|^p, central differences.

    |Du| is the Frobenius norm of the finite-difference Jacobian.  Nodes on
    the grid boundary use one-sided differences; this is flagged in the
    scheme descriptor.
    """
    region = region or Region.whole()
    mask = region.mask(u.grid)
    if not mask.any():
        raise ConfigurationError("empty region")
    grid = u.grid
    h = grid.spacing
    shape = grid.shape
    vals = u.values.reshape(shape + (u.nu,))
    frob2 = np.zeros(shape)
    boundary = np.zeros(shape, dtype=bool)
    for axis in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[axis] = slice(0, 1)
        boundary[tuple(idx)] = True
        idx[axis] = slice(-1, None)
        boundary[tuple(idx)] = True
    one_sided = bool(np.any(boundary.ravel() & mask))
    for axis in range(grid.dim):
        d = np.empty_like(vals)
        fwd = [slice(None)] * grid.dim
        bwd = [slice(None)] * grid.dim
        ctr = [slice(None)] * grid.dim
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(0, -2)
        ctr[axis] = slice(1, -1)
        d[tuple(ctr)] = (vals[tuple(fwd)] - vals[tuple(bwd)]) / (2 * h)
        lo = [slice(None)] * grid.dim
        lo_n = [slice(None)] * grid.dim
        lo[axis] = slice(0, 1)
        lo_n[axis] = slice(1, 2)
        d[tuple(lo)] = (vals[tuple(lo_n)] - vals[tuple(lo)]) / h
        hi = [slice(None)] * grid.dim
        hi_p = [slice(None)] * grid.dim
        hi[axis] = slice(-1, None)
        hi_p[axis] = slice(-2, -1)
        d[tuple(hi)] = (vals[tuple(hi)] - vals[tuple(hi_p)]) / h
        frob2 += np.sum(d * d, axis=-1)
    integrand = np.power(frob2.ravel()[mask], 0.5 * p)
    value = float(h**grid.dim * np.sum(integrand))
    flag = " one-sided-at-boundary" if one_sided else ""
    return EnergyValue(value=value, scheme=f"central-diff h={h!r} p={p!r}{flag}", spacing=h)


def localized_energy_table(
    u: SampledMap,
    params: FractionalParams,
    regions: list[Region],
    *,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> list[EnergyValue]:
    """Per-region energies for pairwise disjoint regions.

    Pair terms crossing two regions are dropped from the per-region
    values, so the table sums to at most the energy over the union.
    """
    masks = [r.mask(u.grid) for r in regions]
    for i in range(len(masks)):
        for j in range(i):
            if np.any(masks[i] & masks[j]):
                raise GeometryError(f"regions {j} and {i} overlap")
    return [gagliardo_energy(u, params, r, block=block, workers=workers) for r in regions]


def pair_tail_bound(u: SampledMap, params: FractionalParams, cutoff: float) -> float:
    """Analytic bound on the pair-sum mass beyond a cutoff radius.

    For a bounded map with oscillation osc over a support of measure V in
    dimension m, the pairs with |x-y| > R contribute at most
    osc^p * V * sigma_m * R^(-sp) / sp where sigma_m is the unit-sphere area.
    """
    m = u.grid.dim
    osc = float(np.max(np.linalg.norm(u.values - np.asarray(u.constant), axis=1)))
    vol = float(np.prod(u.support.sides)) if u.support.sides else 0.0
    sigma = 2 * np.pi ** (m / 2) / math.gamma(m / 2) if m > 1 else 2.0
    return (2 * osc) ** params.p * vol * sigma * cutoff ** (-params.sp) / params.sp


@dataclass(frozen=True)
class WeightedCloud:
    """Composite quadrature cloud: points, values, per-node weights, group ids.

    Group ids >= 0 mark congruent fine blocks whose internal pairs are
    accounted for exactly elsewhere; pairs within one such group are
    excluded from the cross sum.
    """

    points: NDArray
    values: NDArray
    weights: NDArray
    groups: NDArray

    def __post_init__(self):
        for name in ("points", "values", "weights", "groups"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @staticmethod
    def concat(parts: list["WeightedCloud"]) -> "WeightedCloud":
        return WeightedCloud(
            np.ascontiguousarray(np.concatenate([p.points for p in parts])),
            np.ascontiguousarray(np.concatenate([p.values for p in parts])),
            np.ascontiguousarray(np.concatenate([p.weights for p in parts])),
            np.ascontiguousarray(np.concatenate([p.groups for p in parts])),
        )


def cloud_energy(
    cloud: WeightedCloud,
    params: FractionalParams,
    m: int,
    *,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> float:
    """Cross-pair part of the composite quadrature (same-group pairs excluded)."""
    q = m + params.sp
    return 2.0 * pair_kernel_sum(
        cloud.points, cloud.values, params.p, q,
        weights=cloud.weights, groups=cloud.groups, block=block, workers=workers,
    )
