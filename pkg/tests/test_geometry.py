import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mesocloud.errors import InvalidGeometry, NonPositiveRadicand
from mesocloud.geometry import (
    TABLE1_R,
    Cloud,
    CloudGridSpec,
    DomainSpec,
    Void,
    alpha_for,
    alpha_infinity,
    fibonacci_sphere,
    grid_centers,
    make_grid_cloud,
    make_table1_cloud,
    validate_cloud,
)

BETA = math.pi / 25.0
SIDE = 1.0 / math.sqrt(3.0)


def alpha_cubed_rational(m: int) -> Fraction:
    # 3*beta/(4*pi) is exactly 3/100 for beta = pi/25
    return Fraction(16 * m, m - 1) * (Fraction(3, 100) - Fraction(125 + 32 * (m - 1), 8000 * m))


def test_alpha_m2_matches_rational_evaluation():
    exact = alpha_cubed_rational(2)
    assert exact == Fraction(323, 500)
    assert alpha_for(2, BETA) == pytest.approx(float(exact) ** (1 / 3), rel=1e-14)


@pytest.mark.parametrize("m", [3, 7, 10, 41])
def test_alpha_matches_rational_evaluation(m):
    assert alpha_for(m, BETA) ** 3 == pytest.approx(float(alpha_cubed_rational(m)), rel=1e-13)


def test_alpha_infinity_value():
    assert alpha_infinity(BETA) == pytest.approx(0.7465, abs=5e-4)
    assert alpha_infinity(BETA) == pytest.approx((52 / 125) ** (1 / 3), rel=1e-14)


def test_alpha_infinity_edge_values():
    assert alpha_infinity(math.pi * (8 / 125) / 12) == 0.0
    assert alpha_infinity(math.pi / 12 * (1 + 8 / 125)) == pytest.approx(1.0, rel=1e-14)


def test_alpha_infinity_rejects_small_beta():
    with pytest.raises(NonPositiveRadicand):
        alpha_infinity(0.01)


def test_alpha_for_rejects_small_beta():
    with pytest.raises(NonPositiveRadicand):
        alpha_for(4, 0.01)


def test_alpha_large_m_limit():
    assert abs(alpha_for(10**6, BETA) - alpha_infinity(BETA)) < 1e-4


def test_alpha_monotone_towards_limit():
    ms = [2, 5, 10, 50, 100]
    gaps = [alpha_for(m, BETA) - alpha_infinity(BETA) for m in ms]
    assert all(g > 0 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_grid_cloud_m2_radius_counts():
    cloud = make_grid_cloud(CloudGridSpec(2))
    h = SIDE / 2
    alpha = alpha_for(2, BETA)
    radii = cloud.radii
    assert len(cloud) == 8
    assert np.sum(np.isclose(radii, h / 4, rtol=1e-14)) == 4
    assert np.sum(np.isclose(radii, h / 5, rtol=1e-14)) == 2
    assert np.sum(np.isclose(radii, alpha * h / 2, rtol=1e-14)) == 2


def test_grid_cloud_radius_rule():
    spec = CloudGridSpec(4)
    cloud = make_grid_cloud(spec)
    h = spec.side / spec.m
    alpha = alpha_for(spec.m, spec.beta)
    k = 0
    for p in range(1, 5):
        for q in range(1, 5):
            for _ in range(1, 5):
                want = h / 5 if p > q else (alpha * h / 2 if p < q else h / 4)
                assert cloud.radii[k] == pytest.approx(want, rel=1e-15)
                k += 1


def test_grid_centers_on_offset_lattice():
    spec = CloudGridSpec(3)
    h = spec.side / 3
    rel = (grid_centers(spec) - np.asarray(spec.center) + spec.side / 2) / h
    # (2k - 1)/2 for k = 1..3
    assert np.allclose(rel * 2, np.round(rel * 2), atol=1e-12)
    assert set(np.round(rel * 2).astype(int).ravel()) == {1, 3, 5}
    assert len(np.unique(np.round(rel * 2), axis=0)) == 27


@pytest.mark.parametrize("m", range(2, 11))
def test_volume_fraction_conserved(m):
    cloud = make_grid_cloud(CloudGridSpec(m))
    vol = float(np.sum(4 * math.pi / 3 * cloud.radii**3))
    assert vol == pytest.approx(BETA * SIDE**3, rel=1e-12)


def test_volume_independent_of_m():
    vols = [float(np.sum(make_grid_cloud(CloudGridSpec(m)).radii ** 3)) for m in range(2, 11)]
    assert (max(vols) - min(vols)) / min(vols) < 1e-10


def test_grid_cloud_inside_generator_cube():
    cloud = make_grid_cloud(CloudGridSpec(5))
    lo, hi = cloud.omega_bounds
    assert np.all(cloud.centers - cloud.radii[:, None] > lo)
    assert np.all(cloud.centers + cloud.radii[:, None] < hi)


def test_table1_rows():
    cloud, domain = make_table1_cloud()
    assert len(cloud) == 18
    assert domain == DomainSpec.ball(120.0)
    assert cloud.voids[0].center == (-50.0, 0.0, 0.0)
    assert cloud.voids[0].radius == pytest.approx(5.004, rel=1e-14)
    assert cloud.voids[15].center == (-72.0, 22.0, -22.0)
    assert cloud.voids[15].radius == pytest.approx(6.0, rel=1e-14)


def test_table1_scales():
    cloud, _ = make_table1_cloud()
    assert cloud.eps == pytest.approx(12.0)
    assert cloud.d == pytest.approx(11.0)


def test_table1_admissible():
    cloud, domain = make_table1_cloud()
    report = validate_cloud(cloud, domain)
    assert report.admissible
    assert report.errors == []
    # diameter 12 against half-spacing 11 sits just past the c = 1 threshold
    assert report.kinds() == {"mesoscale"}


def test_validate_overlap():
    cloud = Cloud.from_arrays([[0, 0, 0], [1.5, 0, 0]], [1.0, 1.0])
    report = validate_cloud(cloud)
    assert "overlap" in report.kinds()
    assert not report.admissible


def test_validate_coincident():
    cloud = Cloud.from_arrays([[1, 1, 1], [1, 1, 1]], [0.1, 0.1])
    assert "coincident" in validate_cloud(cloud).kinds()


def test_validate_outside_ball():
    cloud = Cloud.from_arrays([[0.9, 0, 0]], [0.2])
    report = validate_cloud(cloud, DomainSpec.ball(1.0))
    assert report.kinds() == {"outside_domain"}
    touching = Cloud.from_arrays([[0.8, 0, 0]], [0.2])
    assert "outside_domain" in validate_cloud(touching, DomainSpec.ball(1.0)).kinds()


def test_validate_mesoscale_is_warning():
    cloud = Cloud.from_arrays([[0, 0, 0], [1, 0, 0]], [0.3, 0.3])
    report = validate_cloud(cloud)
    assert report.kinds() == {"mesoscale"}
    assert report.admissible
    assert validate_cloud(cloud, mesoscale_c=2.0).violations == ()


def test_single_void_has_infinite_d():
    cloud = Cloud.from_arrays([[0, 0, 0]], [100.0])
    assert cloud.d == math.inf
    assert validate_cloud(cloud).violations == ()


def test_empty_cloud():
    cloud = Cloud(())
    assert len(cloud) == 0
    assert cloud.omega_bounds is None
    assert validate_cloud(cloud).admissible


def test_void_rejects_bad_radius():
    with pytest.raises(InvalidGeometry):
        Void((0, 0, 0), 0.0)
    with pytest.raises(InvalidGeometry):
        Void((0, 0), 1.0)


def test_void_polarization():
    q = Void((1, 2, 3), 0.5).polarization.matrix
    assert np.array_equal(q, -2 * math.pi * 0.125 * np.eye(3))


def test_grid_spec_validation():
    with pytest.raises(InvalidGeometry):
        CloudGridSpec(1)
    with pytest.raises(InvalidGeometry):
        CloudGridSpec(3, beta=1.5)


def test_grid_too_dense_rejected():
    # alpha >= 1 would make neighbouring p<q voids touch
    with pytest.raises(InvalidGeometry):
        make_grid_cloud(CloudGridSpec(3, beta=0.25))


def test_cloud_serialization_round_trip():
    cloud = make_grid_cloud(CloudGridSpec(2))
    again = Cloud.from_list(cloud.to_list())
    assert again == Cloud(cloud.voids)
    assert np.array_equal(again.centers, cloud.centers)


def test_fibonacci_sphere_unit_and_balanced():
    pts = fibonacci_sphere(500)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)
    assert np.abs(pts.mean(axis=0)).max() < 5e-3


@given(st.integers(2, 9), st.floats(0.11, 0.14), st.floats(0.2, 3.0),
       st.tuples(*[st.floats(-10, 10)] * 3))
def test_generated_scales_consistent(m, beta, side, center):
    try:
        cloud = make_grid_cloud(CloudGridSpec(m, center, side, beta))
    except (NonPositiveRadicand, InvalidGeometry):
        return
    fresh = Cloud.from_arrays(cloud.centers, cloud.radii)
    assert fresh.eps == cloud.eps
    assert fresh.d == cloud.d
    assert cloud.eps == 2 * cloud.radii.max()
    dists = np.linalg.norm(cloud.centers[:, None] - cloud.centers[None], axis=2)
    np.fill_diagonal(dists, np.inf)
    assert 2 * cloud.d == pytest.approx(dists.min(), rel=1e-15)
    assert len(cloud) == m**3
    vol = float(np.sum(4 * math.pi / 3 * cloud.radii**3))
    assert vol == pytest.approx(beta * side**3, rel=1e-12)
    assert 0 < alpha_for(m, beta) < 1
    assert validate_cloud(cloud).errors == []


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=12,
                unique=True),
       st.floats(0.01, 0.5))
def test_cloud_invariants(centers, radius):
    c = np.array(centers)
    dists = np.linalg.norm(c[:, None] - c[None], axis=2)
    np.fill_diagonal(dists, np.inf)
    if dists.min() < 1e-9:
        return
    cloud = Cloud.from_arrays(c, radius)
    assert 2 * cloud.d == pytest.approx(dists.min(), rel=1e-14)
    assert cloud.eps == 2 * radius
    lo, hi = cloud.omega_bounds
    assert np.all(c - radius > lo) and np.all(c + radius < hi)
    report = validate_cloud(cloud)
    assert ("overlap" in report.kinds()) == (dists.min() <= 2 * radius)
