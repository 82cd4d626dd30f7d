import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusim import (
    ConeSelector,
    PointCloud,
    RadarScene,
    Region,
    RngStream,
    add_gaussian_noise,
    drop_sensor,
    dropout_points,
    occlude_angle,
    occlude_region,
)
from occlusim.errors import InputError, ParameterError
from occlusim.pointcloud import RADAR_SENSORS, retained_count

from conftest import make_lidar_cloud, make_radar_cloud, make_boundary_free_cloud
from oracles import (
    filter_cone_pointwise,
    filter_region_pointwise,
    is_subsequence_twopointer,
    retained_count_exact,
)


class TestPointCloudType:
    def test_requires_xyz(self):
        bad = np.zeros(3, dtype=np.dtype([("a", "<f4"), ("b", "<f4")]))
        with pytest.raises(InputError):
            PointCloud(bad)

    def test_scene_rejects_unknown_sensor_names(self):
        with pytest.raises(InputError):
            RadarScene({"SONAR": make_radar_cloud(0, 3)})

    def test_cone_selector_range(self):
        with pytest.raises(ParameterError):
            ConeSelector(Region.FRONT, 400.0)

    def test_schema_reports_widths(self):
        cloud = make_radar_cloud(0, 5)
        schema = dict((name, (kind, width)) for name, kind, width in cloud.schema)
        assert schema["x"] == ("f", 4)
        assert schema["dyn_prop"] == ("i", 1)
        assert schema["id"] == ("i", 2)
        assert len(cloud.schema) == 18


class TestRetainedCount:
    def test_hand_values(self):
        assert retained_count(1000, 30) == 700
        assert retained_count(10, 99) == 0
        assert retained_count(0, 50) == 0
        assert retained_count(7, 0) == 7

    @given(st.integers(min_value=0, max_value=10**6),
           st.floats(min_value=0, max_value=99, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_matches_exact_oracle(self, n, p):
        assert retained_count(n, p) == retained_count_exact(n, p)

    def test_rejects_out_of_range(self):
        with pytest.raises(ParameterError):
            retained_count(10, 99.5)
        with pytest.raises(ParameterError):
            retained_count(10, -1)


class TestDropout:
    def test_count_formula(self):
        cloud = make_lidar_cloud(1, 1000)
        assert dropout_points(cloud, 30, RngStream(1)).count == 700

    def test_p_zero_bit_identical(self):
        cloud = make_radar_cloud(2, 77)
        out = dropout_points(cloud, 0, RngStream(4))
        assert out.to_bytes() == cloud.to_bytes()

    def test_tiny_cloud_p99(self):
        cloud = make_lidar_cloud(3, 10)
        assert dropout_points(cloud, 99, RngStream(0)).count == 0

    def test_subsequence_preserved(self):
        cloud = make_radar_cloud(4, 200)
        out = dropout_points(cloud, 35, RngStream(5))
        assert is_subsequence_twopointer(cloud.records, out.records)

    def test_deterministic(self):
        cloud = make_lidar_cloud(5, 500)
        a = dropout_points(cloud, 50, RngStream(9))
        b = dropout_points(cloud, 50, RngStream(9))
        assert a.to_bytes() == b.to_bytes()

    def test_inclusion_fairness_chi_squared(self):
        # every point should be retained with probability 1 - p/100
        from scipy.stats import chi2

        n, trials = 10, 4000
        cloud = make_lidar_cloud(6, n)
        base = cloud.records.copy()
        base["ring"] = np.arange(n, dtype=np.float32)  # make points identifiable
        tagged = PointCloud(base)
        hits = np.zeros(n)
        for t in range(trials):
            kept = dropout_points(tagged, 30, RngStream(1000 + t))
            hits[kept.records["ring"].astype(int)] += 1
        freq = hits / trials
        assert np.all(np.abs(freq - 0.7) < 0.03)  # ~4 sigma per point
        # Pearson statistic over retention counts; each trial keeps exactly 7
        # of 10, so counts are negatively correlated and the binomial-based
        # statistic is conservative against the chi-squared bound.
        expected = trials * 0.7
        stat = float(((hits - expected) ** 2 / (expected * 0.3)).sum())
        assert stat < chi2.ppf(0.9999, df=n)


class TestGaussianNoise:
    def test_sigma_zero_identity(self):
        cloud = make_radar_cloud(7, 99)
        assert add_gaussian_noise(cloud, 0.0, RngStream(3)).to_bytes() == cloud.to_bytes()

    def test_moments_large_cloud(self):
        cloud = make_lidar_cloud(8, 100_000)
        noisy = add_gaussian_noise(cloud, 0.5, RngStream(11))
        disp = noisy.xyz() - cloud.xyz()
        for axis in range(3):
            assert abs(disp[:, axis].std(ddof=1) - 0.5) < 0.005
            assert abs(disp[:, axis].mean()) < 0.01

    def test_nonspatial_bytes_untouched(self):
        cloud = make_radar_cloud(9, 500)
        noisy = add_gaussian_noise(cloud, 1.0, RngStream(2))
        for name in cloud.records.dtype.names:
            if name in ("x", "y", "z"):
                assert not np.array_equal(noisy.records[name], cloud.records[name])
            else:
                assert np.array_equal(noisy.records[name], cloud.records[name])

    def test_negative_sigma_rejected(self):
        with pytest.raises(ParameterError):
            add_gaussian_noise(make_lidar_cloud(0, 5), -0.5, RngStream(0))

    def test_count_and_schema_unchanged(self):
        cloud = make_lidar_cloud(10, 123)
        noisy = add_gaussian_noise(cloud, 2.0, RngStream(5))
        assert noisy.count == cloud.count
        assert noisy.records.dtype == cloud.records.dtype


class TestRegion:
    def test_front_keeps_negative_x(self):
        rec = np.zeros(2, dtype=make_lidar_cloud(0, 1).records.dtype)
        rec["x"] = [5.0, -5.0]
        rec["y"] = [3.0, 3.0]
        kept = occlude_region(PointCloud(rec), Region.FRONT)
        assert kept.count == 1 and kept.records["x"][0] == -5.0

    def test_empty_mask_is_identity(self):
        rec = make_lidar_cloud(11, 50).records.copy()
        rec["x"] = -np.abs(rec["x"]) - 0.001
        cloud = PointCloud(rec)
        assert occlude_region(cloud, Region.FRONT).to_bytes() == cloud.to_bytes()

    def test_boundary_points_retained(self):
        rec = np.zeros(3, dtype=make_lidar_cloud(0, 1).records.dtype)
        rec["x"] = [0.0, 0.0, 1.0]
        rec["y"] = [2.0, -2.0, 0.0]
        assert occlude_region(PointCloud(rec), Region.FRONT).count == 2
        assert occlude_region(PointCloud(rec), Region.RIGHT).count == 2
        assert occlude_region(PointCloud(rec), Region.LEFT).count == 2

    @pytest.mark.parametrize("region", list(Region))
    def test_matches_pointwise_oracle(self, region):
        cloud = make_lidar_cloud(12, 1000)
        kept = occlude_region(cloud, region)
        expected = cloud.records[filter_region_pointwise(cloud.records, region.value)]
        assert np.array_equal(kept.records, expected)

    def test_swap_lateral(self):
        rec = np.zeros(2, dtype=make_lidar_cloud(0, 1).records.dtype)
        rec["y"] = [4.0, -4.0]
        rec["x"] = [1.0, 1.0]
        default_kept = occlude_region(PointCloud(rec), Region.LEFT)
        swapped_kept = occlude_region(PointCloud(rec), Region.LEFT, swap_lateral=True)
        assert default_kept.records["y"][0] == 4.0
        assert swapped_kept.records["y"][0] == -4.0


class TestCone:
    def test_hand_azimuths(self):
        # atan2(0.2, 1) = 11.31 deg -> removed; atan2(0.6, 1) = 30.96 deg -> kept
        rec = np.zeros(2, dtype=make_lidar_cloud(0, 1).records.dtype)
        rec["x"] = [1.0, 1.0]
        rec["y"] = [0.2, 0.6]
        out = occlude_angle(PointCloud(rec), ConeSelector(Region.FRONT, 30.0))
        assert out.count == 1
        assert out.records["y"][0] == np.float32(0.6)

    def test_zero_angle_removes_almost_nothing(self):
        cloud = make_boundary_free_cloud(13, 1000)
        out = occlude_angle(cloud, ConeSelector(Region.FRONT, 0.0))
        assert out.count == cloud.count

    def test_full_circle_equals_region(self):
        cloud = make_boundary_free_cloud(14, 1000)
        cone = occlude_angle(cloud, ConeSelector(Region.FRONT, 180.0))
        region = occlude_region(cloud, Region.FRONT)
        assert cone.to_bytes() == region.to_bytes()

    @pytest.mark.parametrize("region", list(Region))
    @pytest.mark.parametrize("angle", [30.0, 60.0, 90.0, 360.0])
    def test_matches_pointwise_oracle(self, region, angle):
        cloud = make_boundary_free_cloud(15, 500)
        out = occlude_angle(cloud, ConeSelector(region, angle))
        expected = cloud.records[filter_cone_pointwise(cloud.records, region.value, angle)]
        assert np.array_equal(out.records, expected)

    def test_back_cone_wraps_around(self):
        rec = np.zeros(3, dtype=make_lidar_cloud(0, 1).records.dtype)
        rec["x"] = [-1.0, -1.0, -1.0]
        rec["y"] = [0.05, -0.05, 1.1]  # az ~ 177, -177, 132 degrees
        out = occlude_angle(PointCloud(rec), ConeSelector(Region.BACK, 30.0))
        assert out.count == 1
        assert out.records["y"][0] == np.float32(1.1)


class TestSensorDrop:
    def make_scene(self):
        return RadarScene({s: make_radar_cloud(20 + i, 30) for i, s in enumerate(RADAR_SENSORS)})

    def test_explicit_choice(self):
        scene = self.make_scene()
        remaining, dropped = drop_sensor(scene, choice="FRONT")
        assert dropped == "FRONT"
        assert set(remaining.sensors) == set(RADAR_SENSORS) - {"FRONT"}

    def test_survivors_bit_identical(self):
        scene = self.make_scene()
        remaining, dropped = drop_sensor(scene, rng=RngStream(77))
        assert len(remaining.sensors) == 4
        for name, cloud in remaining.sensors.items():
            assert cloud.to_bytes() == scene.sensors[name].to_bytes()

    def test_unknown_choice(self):
        with pytest.raises(ParameterError):
            drop_sensor(self.make_scene(), choice="TOP")

    def test_incomplete_scene(self):
        partial = RadarScene({"FRONT": make_radar_cloud(0, 5)})
        with pytest.raises(InputError):
            drop_sensor(partial, rng=RngStream(0))

    def test_uniform_selection(self):
        scene = self.make_scene()
        counts = {name: 0 for name in RADAR_SENSORS}
        for seed in range(10_000):
            _, dropped = drop_sensor(scene, rng=RngStream(seed))
            counts[dropped] += 1
        for name, count in counts.items():
            assert 1800 <= count <= 2200, counts


class TestFilterInvariants:
    @pytest.mark.parametrize("seed", range(5))
    def test_filters_produce_subsequences(self, seed):
        cloud = make_radar_cloud(30 + seed, 400)
        rng = RngStream(seed)
        outputs = [
            dropout_points(cloud, 45, rng.child("drop")),
            occlude_region(cloud, Region.FRONT),
            occlude_angle(cloud, ConeSelector(Region.LEFT, 60.0)),
        ]
        for out in outputs:
            assert is_subsequence_twopointer(cloud.records, out.records)
