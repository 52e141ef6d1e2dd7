import numpy as np
import pytest

from splab.energy import FractionalParams
from splab.errors import ConfigurationError
from splab.retraction import (
    AlmostCtrexSpec,
    AlmostModel,
    AlmostRetractionSpec,
    almost_projection_scan,
    build_almost_counterexample,
    build_almost_retraction,
    cluster_profile_1d,
    degree_of,
    lipschitz_rate_check,
    wrap_angle,
    xi_grid,
)
from splab._pairsum import pair_kernel_sum


def make_retr(eps, cap=np.pi):
    return build_almost_retraction(AlmostRetractionSpec(epsilon=eps, cap_center=cap))


def test_point_far_from_cap_fixed():
    r = make_retr(0.1)
    theta = 0.0  # antipodal to the cap
    assert wrap_angle(np.array([r.angle_map(np.array([theta]))[0] - theta]))[0] == pytest.approx(0.0, abs=1e-14)


def test_cap_endpoints_fixed():
    eps = 0.1
    r = make_retr(eps)
    for phi in (-eps, eps):
        theta = np.pi + phi
        mapped = r.angle_map(np.array([theta]))[0]
        assert wrap_angle(np.array([mapped - theta]))[0] == pytest.approx(0.0, abs=1e-12)


def test_halfcap_pair_image_separation():
    # two points in the half-cap separated by delta map to points about
    # (pi/eps) * delta apart (the affine core slope)
    eps = 0.1
    r = make_retr(eps)
    delta = eps / 50
    t1, t2 = np.pi - delta / 2, np.pi + delta / 2
    m1, m2 = r.angle_map(np.array([t1, t2]))
    measured = abs(m2 - m1) / delta
    claimed = (2 * np.pi - 2 * eps) / (2 * eps)
    assert measured == pytest.approx(claimed, rel=0.15)


def test_rate_products_in_window():
    eps = 0.1
    r = make_retr(eps)
    rep = lipschitz_rate_check(r, eps)
    assert np.pi <= rep.max_slope_eps <= 2 * np.pi
    assert rep.halfcap_min_slope_eps >= 1.0


def test_rate_duality_across_dyadic_sweep():
    maxes, mins = [], []
    for m in range(2, 8):
        eps = 2.0**-m
        rep = lipschitz_rate_check(make_retr(eps), eps)
        maxes.append(rep.max_slope_eps)
        mins.append(rep.halfcap_min_slope_eps)
    assert max(maxes) / min(maxes) - 1 <= 0.10
    assert max(mins) / min(mins) - 1 <= 0.10


def test_degree_zero():
    for eps in (0.25, 2.0**-5):
        assert abs(degree_of(make_retr(eps))) <= 1e-9


def test_idempotent_off_cap_preimage():
    eps = 0.15
    r = make_retr(eps)
    theta = np.linspace(0, 2 * np.pi, 500, endpoint=False)
    once = r.angle_map(theta)
    image_off_cap = np.abs(wrap_angle(once - r.spec.cap_center)) > eps
    twice = r.angle_map(once)
    diff = wrap_angle(twice - once)
    assert np.allclose(diff[image_off_cap], 0.0, atol=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        AlmostRetractionSpec(epsilon=1.0)
    with pytest.raises(ConfigurationError):
        AlmostRetractionSpec(epsilon=0.1, iota=1.5)


def test_ctrex_formulas():
    params = FractionalParams(s=0.4, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    assert spec.alpha == pytest.approx(1.25)
    assert spec.regime_ok
    # cluster count at eps = 1/4: ceil(4^(1/0.4)) = ceil(4^2.5) = 32
    assert spec.cluster_count(0.25) == 32
    # the net density guarantees one center per arc of radius c_small*eps
    m = spec.center_count(0.25)
    assert m == int(np.ceil(np.pi / (0.1 * 0.25)))
    spacing = 2 * np.pi / m
    assert spacing <= 2 * spec.c_small * 0.25


def test_ctrex_regime_gate_at_p_one():
    params = FractionalParams(s=0.5, p=1.0)
    spec = AlmostCtrexSpec(params=params)
    assert not spec.regime_ok  # p > ell - 1 fails at p = 1


def test_support_scales_summable():
    params = FractionalParams(s=0.6, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    # alpha/(1-sp) = 12.5: successive supports shrink geometrically
    radii = [spec.support_scale(2.0**-n) for n in range(2, 7)]
    assert radii[0] == pytest.approx(2.0**-25.0)
    assert sum(radii) < 2 * radii[0]


def test_built_map_on_circle_with_expected_plateaus():
    params = FractionalParams(s=0.6, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    eps = 0.5
    u = build_almost_counterexample(spec, eps)
    norms = np.linalg.norm(u.values, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12
    lam = spec.support_scale(eps)
    assert u.support.hi[0] == pytest.approx(lam)
    # the first slot's center angle appears among the sampled values
    angles = np.arctan2(u.values[:, 1], u.values[:, 0])
    first_center = wrap_angle(np.asarray([spec.center_angles(eps)[1]]))[0]
    assert np.min(np.abs(wrap_angle(angles - first_center))) <= 1e-9


def test_slot_dual_route():
    # composite slot quadrature against a flat 1D pair sum in frame coords;
    # small s keeps the near-diagonal quadrature deficit negligible on both routes
    params = FractionalParams(s=0.3, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    model = AlmostModel(spec)
    eps = 0.5
    delta = 1.2
    k = spec.cluster_count(eps)
    q = model.slot_width(eps) / 4.0
    h = 1.0 / (256 * k)  # four nodes across the finest transition
    n = int(round(4.0 / h))
    tau = -2.0 + (np.arange(n) + 0.5) * (4.0 / n)
    half = spec.pair_half_separation(eps)
    from splab.retraction import collar_factor_1d

    theta = spec.base_angle + collar_factor_1d(tau) * delta + half * cluster_profile_1d(tau, k)
    vals = np.column_stack([np.cos(theta), np.sin(theta)])
    flat_energy_frame = 2.0 * (4.0 / n) ** 2 * pair_kernel_sum(
        tau[:, None], vals, params.p, 1 + params.sp, block=2048
    )
    composite_frame = model.slot_energy_direct(eps, delta) / q ** (1 - params.sp)
    assert composite_frame == pytest.approx(flat_energy_frame, rel=0.10)


def test_coverage_holds_on_shift_grid():
    params = FractionalParams(s=0.6, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    model = AlmostModel(spec)
    shifts = xi_grid()
    for n in (2, 4):
        eps = 2.0**-n
        retr = make_retr(eps)
        model.coverage_check(eps, retr, shifts)  # raises on failure


def test_scan_exponents():
    params = FractionalParams(s=0.6, p=1.5)
    spec = AlmostCtrexSpec(params=params)
    out = almost_projection_scan(spec, n_range=range(2, 6))
    assert out["regime_ok"]
    sp = params.sp
    assert out["support_exponent"] == pytest.approx(spec.alpha / (1 - sp), rel=0.05)
    assert abs(out["energy_exponent"] - (spec.alpha - 1)) <= 0.5
    assert abs(out["projected_exponent"] - (spec.alpha - params.p)) <= 0.5
    assert out["diverges"]


def test_scan_bounded_for_control_regime():
    params = FractionalParams(s=0.5, p=1.0)
    spec = AlmostCtrexSpec(params=params)
    out = almost_projection_scan(spec, n_range=range(2, 5))
    assert not out["regime_ok"]
    assert not out["diverges"]
