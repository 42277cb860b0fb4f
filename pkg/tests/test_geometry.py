import math

import numpy as np
import pytest

from bwbdesign import geometry as geom
from bwbdesign.geometry import (
    CONDITION_RANGES,
    DomainError,
    FlightCondition,
    ParamBox,
    PlanformParams,
    derive_reynolds,
    lhs_sample,
    planform_area,
    planform_stations,
    sample_conditions,
    sample_planforms,
    synthesize_surface,
)

from util import mid_params


class TestParamBox:
    def test_default_bounds_values(self):
        box = ParamBox.default()
        want = {
            "b1": (0.10, 0.20), "b2": (0.05, 0.20), "b3": (0.35, 0.70),
            "c2": (0.55, 0.85), "c3": (0.18, 0.28), "c4": (0.06, 0.09),
            "s1": (40.0, 60.0), "s3": (20.0, 40.0), "x3": (0.50, 0.65),
        }
        for j, name in enumerate(box.names):
            assert (box.lo[j], box.hi[j]) == want[name]

    def test_validate_names_offending_field(self):
        box = ParamBox.default()
        p = mid_params()
        p.c2 = 0.90
        with pytest.raises(DomainError, match="c2"):
            box.validate(p.to_array())

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            ParamBox(lo=np.ones(9), hi=np.zeros(9))


class TestStations:
    def test_hand_trigonometry(self):
        p = mid_params()
        p.b1, p.s1, p.x3, p.b3, p.s3 = 0.15, 45.0, 0.55, 0.5, 30.0
        st = planform_stations(p)
        assert st.x_le[1] == pytest.approx(0.15, abs=1e-12)
        assert st.x_le[3] == pytest.approx(0.55 + 0.5 * math.tan(math.radians(30.0)), abs=1e-12)

    def test_centerline_station_is_reference(self):
        st = planform_stations(mid_params())
        assert st.y[0] == 0.0 and st.x_le[0] == 0.0 and st.chord[0] == 1.0

    def test_half_span_at_lower_bounds(self):
        box = ParamBox.default()
        p = PlanformParams.from_array(box.lo)
        st = planform_stations(p)
        assert st.half_span == pytest.approx(0.50, abs=1e-12)

    def test_out_of_box_raises(self):
        p = mid_params()
        p.s1 = 75.0
        with pytest.raises(DomainError, match="s1"):
            planform_stations(p)

    def test_monotone_in_sweep_and_span(self):
        p = mid_params()
        st0 = planform_stations(p)
        p2 = mid_params()
        p2.s1 = p.s1 + 5.0
        assert planform_stations(p2).x_le[1] > st0.x_le[1]
        p3 = mid_params()
        p3.b3 = p.b3 + 0.1
        assert planform_stations(p3).half_span > st0.half_span


class TestSurface:
    def test_point_count_and_unit_normals(self):
        cloud = synthesize_surface(mid_params(), n_chord=16, n_span=16)
        assert len(cloud) == 2 * 16 * 16
        norms = np.linalg.norm(cloud.normals, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6

    def test_upper_crest_normals_point_up(self):
        cloud = synthesize_surface(mid_params(), n_chord=24, n_span=8)
        upper = cloud.points[: 24 * 8].reshape(24, 8, 3)
        nrm = cloud.normals[: 24 * 8].reshape(24, 8, 3)
        crest = np.argmax(upper[:, 0, 2])
        assert np.all(nrm[crest, :, 2] > 0)
        lower_nrm = cloud.normals[24 * 8:].reshape(24, 8, 3)
        assert np.all(lower_nrm[crest, :, 2] < 0)

    def test_full_span_mirror_symmetry(self):
        cloud = synthesize_surface(mid_params(), n_chord=8, n_span=8, full_span=True)
        n_half = 2 * 8 * 8
        assert len(cloud) == 2 * n_half
        mirrored = cloud.points[n_half:]
        assert np.allclose(mirrored * np.array([1, -1, 1]), cloud.points[:n_half])

    def test_area_matches_trapezoid_sum(self):
        # independent oracle: sum the three trapezoids by hand
        p = mid_params()
        st = planform_stations(p)
        expect = 0.0
        for k in range(3):
            expect += 0.5 * (st.chord[k] + st.chord[k + 1]) * (st.y[k + 1] - st.y[k])
        expect *= 2.0
        assert planform_area(p) == pytest.approx(expect, abs=1e-12)
        # grid integration agrees because the span grid includes the breaks
        for n_span in (4, 7, 16, 33):
            y, _, chord = geom.span_grid(st, n_span)
            grid_area = 2.0 * np.sum(0.5 * (chord[:-1] + chord[1:]) * np.diff(y))
            assert grid_area == pytest.approx(expect, abs=1e-12)

    def test_validate_passes(self):
        synthesize_surface(mid_params(), 8, 8).validate()

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            synthesize_surface(mid_params(), 3, 8)


class TestLhs:
    def test_one_sample_per_stratum(self):
        n = 16
        arr = lhs_sample([(0.0, 1.0), (-2.0, 6.0)], n, seed=7)
        for d, (lo, hi) in enumerate([(0.0, 1.0), (-2.0, 6.0)]):
            strata = np.floor((arr[:, d] - lo) / (hi - lo) * n).astype(int)
            assert sorted(strata) == list(range(n))

    def test_deterministic(self):
        a = lhs_sample([(0, 1)] * 3, 10, seed=123)
        b = lhs_sample([(0, 1)] * 3, 10, seed=123)
        assert np.array_equal(a, b)

    def test_n_zero_rejected(self):
        with pytest.raises(ValueError):
            lhs_sample([(0, 1)], 0, seed=1)

    def test_log_stratification_of_length(self):
        n = 32
        conds = sample_conditions(n, seed=5)
        logs = np.log10([c.centerline_length for c in conds])
        strata = np.floor((logs - (-1.0)) / 2.0 * n).astype(int)
        assert sorted(strata) == list(range(n))

    def test_planform_samples_in_box(self):
        box = ParamBox.default()
        for p in sample_planforms(50, seed=11):
            assert box.contains(p.to_array())


class TestReynolds:
    def test_sea_level_hand_value(self):
        # sea level: rho=1.225, a=340.3, mu=1.789e-5 -> Re ~ 7.0e6
        re = derive_reynolds(0.0, 0.3, 1.0)
        assert re == pytest.approx(7.0e6, rel=0.02)

    def test_linear_in_length(self):
        r1 = derive_reynolds(20.0, 0.3, 1.0)
        r2 = derive_reynolds(20.0, 0.3, 2.0)
        assert r2 == pytest.approx(2.0 * r1, rel=1e-12)

    def test_decreases_with_altitude(self):
        assert derive_reynolds(40.0, 0.3, 1.0) < derive_reynolds(0.0, 0.3, 1.0)

    def test_continuous_across_tropopause(self):
        h_kft = 11000.0 / geom.KFT_TO_M
        below = derive_reynolds(h_kft - 1e-9, 0.3, 1.0)
        above = derive_reynolds(h_kft + 1e-9, 0.3, 1.0)
        assert abs(below - above) / below < 1e-9

    def test_condition_factory_consistency(self):
        fc = FlightCondition.from_sample(10.0, 0.3, 2.0, 4.0)
        assert fc.log10_reynolds == pytest.approx(math.log10(fc.reynolds), abs=1e-15)
        assert fc.reynolds > 0
        for name, (lo, hi) in CONDITION_RANGES.items():
            v = getattr(fc, name)
            assert lo <= v <= hi
