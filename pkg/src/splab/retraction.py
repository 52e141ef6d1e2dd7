"""Almost retractions of the circle and the 1D blow-up construction.

An almost retraction fixes the circle outside a small cap of angular
half-width eps and sweeps the cap across the complementary arc, so the
full map has degree zero and slope of order 1/eps inside the cap.  The
counterexample glues circle-valued two-value patches around a net of
centers; after an anisotropic rescaling, support radius, energy, and
projected energy follow power laws in eps whose exponents the scan
measures.

Domain dimension is 1 (maps of an interval into the circle); the target
is the unit circle in R^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ._pairsum import pair_kernel_sum
from .energy import FractionalParams
from .errors import AssertionFailure, BudgetError, ConfigurationError, SamplingError, SingularHitError
from .grid import Box, Placement, SampledMap, make_grid, rescale_map, sample_map
from .patches import BLOCK_HALFWIDTH, PLATEAU_STOP, SUPPORT_HALFWIDTH, radial_cutoff, smoothstep5
from .sphere import SINGULAR_EXCLUSION_RADIUS, nearest_point_extension

BLEND_FRACTION = 0.05  # C^1 blend zone at each end of the cap, as a cap fraction
FRAME_HALFWIDTH_1D = 2.0
DEFAULT_NODE_BUDGET_1D = 2_000_000


def wrap_angle(theta: NDArray) -> NDArray:
    """Wrap to (-pi, pi]."""
    out = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


@dataclass(frozen=True)
class AlmostRetractionSpec:
    epsilon: float
    cap_center: float = np.pi
    iota: float = 0.3

    def __post_init__(self):
        if not 0 < self.epsilon < np.pi / 4:
            raise ConfigurationError(f"cap half-width must lie in (0, pi/4), got {self.epsilon}")
        if not 0 < self.iota < 1:
            raise ConfigurationError(f"tube radius must lie in (0, 1), got {self.iota}")


class AlmostRetraction:
    """Circle map: identity off the cap, C^1 sweep of the complement inside.

    In cap-relative angle phi the map is the identity for |phi| >= eps;
    on the cap it descends by 2*pi - 2*eps in total, via an affine core
    with linear slope blends over the outer 5% at each end so the map is
    differentiable everywhere.  Degree is zero.
    """

    def __init__(self, spec: AlmostRetractionSpec):
        self.spec = spec
        eps = spec.epsilon
        beta = BLEND_FRACTION
        self.blend_width = 2 * eps * beta
        # core slope chosen so the total cap descent is 2*eps - 2*pi
        self.core_slope = 1.0 - np.pi / (eps * (1 - beta))
        self.max_slope = abs(self.core_slope)

    def _cap_displacement(self, phi: NDArray) -> NDArray:
        """g(phi) on [-eps, eps] with g(-eps) = -eps, g(eps) = eps - 2*pi."""
        eps = self.spec.epsilon
        w = self.blend_width
        sc = self.core_slope
        t = phi + eps  # in [0, 2*eps]
        ramp_in = -eps + t + (sc - 1.0) * t**2 / (2 * w)
        top = 2 * eps - t
        ramp_out = (eps - 2 * np.pi) - top - (sc - 1.0) * top**2 / (2 * w)
        g_in = -eps + w * (1 + sc) / 2
        core = g_in + sc * (t - w)
        out = np.where(t <= w, ramp_in, np.where(t >= 2 * eps - w, ramp_out, core))
        return out

    def angle_map(self, theta: NDArray) -> NDArray:
        """Image angle of each input angle."""
        theta = np.asarray(theta, dtype=float)
        phi = wrap_angle(theta - self.spec.cap_center)
        inside = np.abs(phi) < self.spec.epsilon
        out = phi.copy()
        if np.any(inside):
            out[inside] = self._cap_displacement(phi[inside])
        return self.spec.cap_center + out

    def point_map(self, points: NDArray) -> NDArray:
        """S^1 -> S^1 in Cartesian coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        beta = self.angle_map(theta)
        return np.column_stack([np.cos(beta), np.sin(beta)])

    def extension(self, points: NDArray) -> NDArray:
        """R^2 -> S^1 through the nearest-point extension then the cap map."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(r <= SINGULAR_EXCLUSION_RADIUS):
            raise SingularHitError("extension evaluated at the origin")
        unit = nearest_point_extension(pts, self.spec.iota)
        norm = np.linalg.norm(unit, axis=1)
        unit = unit / np.where(norm > 0, norm, 1.0)[:, None]
        return self.point_map(unit)


def build_almost_retraction(spec: AlmostRetractionSpec) -> AlmostRetraction:
    return AlmostRetraction(spec)


@dataclass(frozen=True)
class RateReport:
    max_slope_eps: float
    halfcap_min_slope_eps: float
    step: float


def lipschitz_rate_check(retr: AlmostRetraction, epsilon: float) -> RateReport:
    """Finite-difference slope survey at angular step eps/100.

    Asserts max_slope * eps <= 2*pi and half-cap min_slope * eps >= 1;
    both products are eps-independent up to the additive -eps term.
    """
    step = epsilon / 100
    theta = np.arange(0.0, 2 * np.pi, step)
    beta = retr.angle_map(theta)
    dbeta = wrap_angle(np.diff(beta, append=beta[:1] + 0.0))
    # closing increment wraps through the identity region; drop it
    slopes = np.abs(dbeta[:-1]) / step
    max_prod = float(np.max(slopes) * epsilon)
    phi_mid = wrap_angle(theta[:-1] + step / 2 - retr.spec.cap_center)
    halfcap = np.abs(phi_mid) <= epsilon / 2
    min_prod = float(np.min(slopes[halfcap]) * epsilon)
    if max_prod > 2 * np.pi:
        raise AssertionFailure(f"cap slope {max_prod} exceeds 2*pi / eps rate")
    if min_prod < 1.0:
        raise AssertionFailure(f"half-cap slope {min_prod} below the 1/eps rate")
    return RateReport(max_slope_eps=max_prod, halfcap_min_slope_eps=min_prod, step=step)


def degree_of(retr: AlmostRetraction, samples: int = 20000) -> float:
    """Winding number from summed wrapped angle increments."""
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    beta = retr.angle_map(theta)
    inc = wrap_angle(np.diff(beta, append=beta[:1]))
    return float(inc.sum() / (2 * np.pi))


# ---------------------------------------------------------------------------
# The 1D counterexample construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlmostCtrexSpec:
    """Parameters of the glued construction (circle values, interval domain)."""

    params: FractionalParams
    alpha: float = 0.0     # 0 -> default (1 + min(p, 3)) / 2
    c_small: float = 0.1   # pair separation = c_small * eps; net spacing twice that
    base_angle: float = 0.0

    def __post_init__(self):
        p = self.params.p
        if self.alpha == 0.0:
            object.__setattr__(self, "alpha", (1.0 + min(p, 3.0)) / 2.0)
        if self.regime_ok and not 1.0 < self.alpha < p:
            raise ConfigurationError(f"alpha must lie in (1, p), got {self.alpha}")
        if not 0 < self.c_small <= 0.25:
            raise ConfigurationError("density constant must lie in (0, 0.25]")

    @property
    def regime_ok(self) -> bool:
        """sp < ell - 1 < p, the blow-up regime (ell = 2)."""
        return self.params.sp < 1.0 < self.params.p

    def center_count(self, eps: float) -> int:
        """Net density: every arc of radius c_small*eps contains a center."""
        return int(math.ceil(np.pi / (self.c_small * eps)))

    def cluster_count(self, eps: float) -> int:
        """k = ceil(eps^(-1/s)), so k^(sp) matches eps^(-p)."""
        return int(math.ceil(eps ** (-1.0 / self.params.s)))

    def center_angles(self, eps: float) -> NDArray:
        m = self.center_count(eps)
        return self.base_angle + 2 * np.pi * np.arange(m) / m

    def pair_half_separation(self, eps: float) -> float:
        return self.c_small * eps / 2.0

    def support_scale(self, eps: float) -> float:
        """Anisotropic rescaling factor lambda = eps^(alpha/(1-sp))."""
        sp = self.params.sp
        return eps ** (self.alpha / (1.0 - sp)) if sp < 1 else eps


def cluster_profile_1d(tau: NDArray, k: int) -> NDArray:
    """Scalar cluster profile on the 1D frame [-2, 2]: k scaled two-bump copies."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    width = 2 * BLOCK_HALFWIDTH / k
    inside = np.abs(tau) < BLOCK_HALFWIDTH
    if not inside.any():
        return out
    local = tau[inside]
    idx = np.clip(np.floor((local + BLOCK_HALFWIDTH) / width).astype(int), 0, k - 1)
    centers = -BLOCK_HALFWIDTH + width * (idx + 0.5)
    xi = (local - centers) / ((width / 2) / FRAME_HALFWIDTH_1D)
    out[inside] = radial_cutoff((xi - 1.0)[:, None]) - radial_cutoff((xi + 1.0)[:, None])
    return out


def collar_factor_1d(tau: NDArray) -> NDArray:
    r = np.abs(np.asarray(tau, dtype=float))
    t = (r - PLATEAU_STOP) / (SUPPORT_HALFWIDTH - PLATEAU_STOP)
    return 1.0 - smoothstep5(t)


def slot_angles(tau: NDArray, delta: float, k: int, pair_half: float, base: float) -> NDArray:
    """Angle profile of one slot in frame coordinates tau in [-2, 2].

    base angle outside the support, the center angle base+delta on the
    plateau, and the two values base+delta +/- pair_half on the cluster
    plateaus.
    """
    return base + collar_factor_1d(tau) * delta + pair_half * cluster_profile_1d(tau, k)


def ctrex_values(points: NDArray, spec: AlmostCtrexSpec, eps: float) -> NDArray:
    """Circle values of the unscaled glue v_eps over the interval [-1, 1]."""
    x = np.atleast_2d(points)[:, 0]
    m = spec.center_count(eps)
    k = spec.cluster_count(eps)
    slot_width = 2.0 / m
    theta = np.full(x.shape, spec.base_angle)
    inside = np.abs(x) < 1.0
    idx = np.clip(np.floor((x[inside] + 1.0) / slot_width).astype(int), 0, m - 1)
    mids = -1.0 + slot_width * (idx + 0.5)
    tau = (x[inside] - mids) / (slot_width / 2) * FRAME_HALFWIDTH_1D
    deltas = wrap_angle(spec.center_angles(eps) - spec.base_angle)
    theta_in = spec.base_angle + collar_factor_1d(tau) * deltas[idx] \
        + spec.pair_half_separation(eps) * cluster_profile_1d(tau, k)
    theta[inside] = theta_in
    return np.column_stack([np.cos(theta), np.sin(theta)])


def build_almost_counterexample(
    spec: AlmostCtrexSpec,
    eps: float,
    spacing: float | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET_1D,
) -> SampledMap:
    """Sample the rescaled construction w_eps on a 1D grid.

    The unscaled glue lives on [-1, 1]; the returned map is the exact
    grid-rescaled copy with support radius lambda = eps^(alpha/(1-sp)).
    """
    m = spec.center_count(eps)
    k = spec.cluster_count(eps)
    slot_width = 2.0 / m
    feature = slot_width / (32 * k)
    if spacing is None:
        spacing = feature / 4
    if spacing > feature / 4 + 1e-18:
        raise ConfigurationError(f"spacing {spacing} cannot resolve feature {feature}")
    n_nodes = int(round(2.4 / spacing)) + 1
    if n_nodes > node_budget:
        raise BudgetError(
            f"flat grid would need {n_nodes} nodes > budget {node_budget}; "
            "use compositional accounting instead"
        )
    grid = make_grid(1, [-1.2, 1.2], 2.4 / (n_nodes - 1))
    base = sample_map(
        grid,
        lambda pts: ctrex_values(pts, spec, eps),
        Box((-1.0,), (1.0,)),
        (np.cos(spec.base_angle), np.sin(spec.base_angle)),
    )
    lam = spec.support_scale(eps)
    return rescale_map(base, Placement((0.0,), lam))


# ---------------------------------------------------------------------------
# Composite energies and the shift scan
# ---------------------------------------------------------------------------


def _midpoints_1d(halfwidth: float, spacing: float, center: float = 0.0) -> tuple[NDArray, float]:
    n = max(1, int(round(2 * halfwidth / spacing)))
    h = 2 * halfwidth / n
    return center - halfwidth + h * (np.arange(n) + 0.5), h


def xi_grid(iota: float = 0.3, side: int = 21) -> NDArray:
    """Uniform side x side grid on the square, filtered to the disk B_iota."""
    coords = np.linspace(-iota, iota, side)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts[np.einsum("ij,ij->i", pts, pts) <= iota**2 + 1e-15]


class AlmostModel:
    """Composite energies and closed-form accounting for the 1D construction."""

    def __init__(self, spec: AlmostCtrexSpec, frame_spacing: float = 1 / 64, workers: int = 1):
        self.spec = spec
        self.params = spec.params
        self.h0 = frame_spacing
        self.workers = workers
        self._frame_tau, self.h0 = _midpoints_1d(FRAME_HALFWIDTH_1D, frame_spacing)
        self._kernel_exp = 1 + self.params.sp
        self._plateau_kernel = None
        self._collar_unit = None
        self._glue_margin = None

    @property
    def plateau_kernel(self) -> float:
        """Kernel mass between the two plateau intervals of a single copy."""
        if self._plateau_kernel is None:
            tau = self._frame_tau
            neg = tau[np.abs(tau + 1.0) <= 0.5]
            pos = tau[np.abs(tau - 1.0) <= 0.5]
            d = np.abs(pos[:, None] - neg[None, :])
            self._plateau_kernel = float(2.0 * self.h0**2 * np.sum(d**-self._kernel_exp))
        return self._plateau_kernel

    @property
    def collar_unit_energy(self) -> float:
        """Frame energy of the unit-amplitude scalar collar profile."""
        if self._collar_unit is None:
            vals = collar_factor_1d(self._frame_tau)[:, None]
            s = pair_kernel_sum(self._frame_tau[:, None], vals, self.params.p,
                                self._kernel_exp, workers=self.workers)
            self._collar_unit = 2.0 * self.h0**2 * s
        return self._collar_unit

    # geometry helpers ---------------------------------------------------------

    def slot_width(self, eps: float) -> float:
        return 2.0 / self.spec.center_count(eps)

    def copy_scale(self, eps: float) -> float:
        """Domain scale of one cluster copy frame."""
        k = self.spec.cluster_count(eps)
        return self.slot_width(eps) / (32 * k)

    def cluster_lower_coeff(self, eps: float) -> float:
        """Coefficient of imgdist^p in the per-slot plateau-block lower bound."""
        k = self.spec.cluster_count(eps)
        mu = self.copy_scale(eps)
        return k * mu ** (1 - self.params.sp) * self.plateau_kernel

    def copy_frame_energy(self, eps: float) -> float:
        """Circle-metric frame energy of one copy at the pair amplitude."""
        half = self.spec.pair_half_separation(eps)
        g = radial_cutoff((self._frame_tau - 1.0)[:, None]) - radial_cutoff((self._frame_tau + 1.0)[:, None])
        vals = np.column_stack([np.cos(half * g), np.sin(half * g)])
        s = pair_kernel_sum(self._frame_tau[:, None], vals, self.params.p,
                            self._kernel_exp, workers=self.workers)
        return 2.0 * self.h0**2 * s

    def slot_cluster_energy(self, eps: float) -> float:
        k = self.spec.cluster_count(eps)
        mu = self.copy_scale(eps)
        return k * mu ** (1 - self.params.sp) * self.copy_frame_energy(eps)

    def slot_collar_bound(self, eps: float, delta: float) -> float:
        """Angle-Lipschitz upper bound on one slot's collar energy."""
        q = self.slot_width(eps) / (2 * FRAME_HALFWIDTH_1D)
        return q ** (1 - self.params.sp) * abs(delta) ** self.params.p * self.collar_unit_energy

    def _slot_cloud(self, eps: float, delta: float):
        """Coarse midpoint cloud of one slot in frame coordinates."""
        k = self.spec.cluster_count(eps)
        width = 2 * BLOCK_HALFWIDTH / k
        cells, cell_h = _midpoints_1d(width / 2, width / 5)
        centers = -BLOCK_HALFWIDTH + width * (np.arange(k) + 0.5)
        cell_pts = (centers[:, None] + cells[None, :]).ravel()
        groups = np.repeat(np.arange(k), cells.shape[0])
        cell_w = np.full(cell_pts.shape[0], cell_h)
        bg, bg_h = _midpoints_1d(FRAME_HALFWIDTH_1D, self.h0)
        bg = bg[np.abs(bg) > BLOCK_HALFWIDTH]
        pts = np.concatenate([cell_pts, bg])
        w = np.concatenate([cell_w, np.full(bg.shape[0], bg_h)])
        groups = np.concatenate([groups, np.full(bg.shape[0], -1, dtype=np.int64)])
        half = self.spec.pair_half_separation(eps)
        theta = self.spec.base_angle + collar_factor_1d(pts) * delta + half * cluster_profile_1d(pts, k)
        return pts, theta, w, groups

    def slot_energy_direct(self, eps: float, delta: float) -> float:
        """Composite quadrature of one slot's energy (frame coordinates)."""
        q = self.slot_width(eps) / (2 * FRAME_HALFWIDTH_1D)
        pts, theta, w, groups = self._slot_cloud(eps, delta)
        vals = np.column_stack([np.cos(theta), np.sin(theta)])
        cross = 2.0 * pair_kernel_sum(pts[:, None], vals, self.params.p, self._kernel_exp,
                                      weights=w, groups=groups, workers=self.workers)
        return q ** (1 - self.params.sp) * cross + self.slot_cluster_energy(eps)

    def glue_energy_upper(self, eps: float, margin: float = 1.25) -> float:
        """Upper accounting of the unscaled glue: slot sums with a glue margin."""
        deltas = wrap_angle(self.spec.center_angles(eps) - self.spec.base_angle)
        total = 0.0
        cluster = self.slot_cluster_energy(eps)
        for d in deltas:
            total += cluster + self.slot_collar_bound(eps, float(d))
        return margin * total

    # projected quantities -------------------------------------------------------

    def _pair_images(self, eps: float, retr: AlmostRetraction, xi: NDArray) -> NDArray:
        """Image angles of every slot's two plateau values under the full chain."""
        centers = self.spec.center_angles(eps)
        half = self.spec.pair_half_separation(eps)
        angles = np.concatenate([centers - half, centers + half])
        z = np.column_stack([np.cos(angles), np.sin(angles)]) - xi
        beta = np.arctan2(z[:, 1], z[:, 0])
        mapped = retr.angle_map(beta)
        m = centers.shape[0]
        return mapped[:m], mapped[m:]

    def projected_lower(self, eps: float, retr: AlmostRetraction, xi: NDArray) -> float:
        lo, hi = self._pair_images(eps, retr, xi)
        imgdist = 2.0 * np.abs(np.sin(wrap_angle(hi - lo) / 2))
        return self.cluster_lower_coeff(eps) * float(np.sum(imgdist**self.params.p))

    def coverage_check(self, eps: float, retr: AlmostRetraction, shifts: NDArray) -> None:
        """Every shift must leave one full pair inside the amplified half-cap."""
        centers = self.spec.center_angles(eps)
        half = self.spec.pair_half_separation(eps)
        for xi in shifts:
            angles = np.concatenate([centers - half, centers + half])
            z = np.column_stack([np.cos(angles), np.sin(angles)]) - xi
            beta = np.arctan2(z[:, 1], z[:, 0])
            phi = np.abs(wrap_angle(beta - retr.spec.cap_center))
            m = centers.shape[0]
            both = (phi[:m] <= eps / 2) & (phi[m:] <= eps / 2)
            if not both.any():
                raise SamplingError(
                    f"no pair lands in the half-cap for shift {xi} at eps={eps}; "
                    "increase the net density"
                )

    def scan_row(self, n: int, shifts: NDArray, check_coverage: bool = True) -> dict:
        """One scan row: support radius, energy bound, projected inf-energy."""
        eps = 2.0**-n
        retr = build_almost_retraction(
            AlmostRetractionSpec(epsilon=eps, cap_center=np.pi, iota=0.3)
        )
        if check_coverage and self.spec.regime_ok:
            self.coverage_check(eps, retr, shifts)
        lam = self.spec.support_scale(eps)
        scale_pow = lam ** (1 - self.params.sp)
        lowers = np.array([self.projected_lower(eps, retr, xi) for xi in shifts])
        best = int(np.argmin(lowers))
        return {
            "n": n,
            "eps": eps,
            "support_radius": lam,
            "energy_upper": scale_pow * self.glue_energy_upper(eps),
            "projected_inf": scale_pow * float(lowers[best]),
            "argmin_xi": tuple(float(v) for v in shifts[best]),
            "argmin_interior": bool(np.linalg.norm(shifts[best]) < 0.3 - 1e-9),
            "center_count": self.spec.center_count(eps),
            "cluster_count": self.spec.cluster_count(eps),
        }


def almost_projection_scan(
    spec: AlmostCtrexSpec,
    n_range=range(2, 7),
    shifts: NDArray | None = None,
    workers: int = 1,
) -> dict:
    """Scan the dyadic eps sequence; fit the three power laws.

    Returns rows per eps plus measured exponents (in eps): support,
    energy, and projected inf-energy, with their targets alpha/(1-sp),
    alpha-1, and alpha-p.
    """
    if shifts is None:
        shifts = xi_grid()
    model = AlmostModel(spec, workers=workers)
    rows = [model.scan_row(n, shifts) for n in n_range]
    ns = np.array([r["n"] for r in rows], dtype=float)

    def eps_exponent(key):
        vals = np.log2([r[key] for r in rows])
        # eps = 2^-n, so the eps-exponent is minus the slope against n
        return -float(np.polyfit(ns, vals, 1)[0])

    sp = spec.params.sp
    out = {
        "rows": rows,
        "regime_ok": spec.regime_ok,
        "alpha": spec.alpha,
        "support_exponent": eps_exponent("support_radius"),
        "support_target": spec.alpha / (1 - sp) if sp < 1 else float("nan"),
        "energy_exponent": eps_exponent("energy_upper"),
        "energy_target": spec.alpha - 1.0,
        "projected_exponent": eps_exponent("projected_inf"),
        "projected_target": spec.alpha - spec.params.p,
    }
    out["diverges"] = bool(out["projected_exponent"] < 0) and spec.regime_ok
    return out
