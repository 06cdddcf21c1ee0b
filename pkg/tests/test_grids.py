import itertools
import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lisg.grids import (
    FAMILIES,
    ORIGIN,
    DyadicPoint,
    assemble_lisg,
    boundary_points,
    cc_angles,
    cc_points,
    count_isotropic,
    count_lisg,
    count_lisg_by_subsets,
    design_csv,
    fill_distance_uniform,
    penalised_points,
    point_family,
    uniform_points,
    write_design,
)

F = Fraction


def frac_uniform(l):
    return [F(n, 2 ** (l + 1)) for n in range(-(2**l) + 1, 2**l)]


def frac_penalised(l, p):
    return frac_uniform(l - p) if l >= p + 1 else [F(0)]


def brute_union(d, p, L):
    """Union over the whole simplex of the penalised tensor grids, in exact rationals."""
    pts = set()
    for l in itertools.product(range(L + 1), repeat=d):
        if sum(l) <= L:
            pts.update(itertools.product(*(frac_penalised(lj, pj) for lj, pj in zip(l, p))))
    return pts


def as_fractions(design):
    return {tuple(k.as_fraction() for k in key) for key in design.keys}


class TestDyadicPoint:
    def test_canonical_form(self):
        assert DyadicPoint.of(2, 3) == DyadicPoint(1, 2)
        assert DyadicPoint.of(0, 5) == ORIGIN
        assert DyadicPoint.of(-4, 3) == DyadicPoint(-1, 1)

    def test_value_and_decimal(self):
        k = DyadicPoint.of(-3, 3)
        assert k.value == -0.375
        assert k.as_fraction() == F(-3, 8)
        assert k.decimal() == "-0.375"
        assert ORIGIN.decimal() == "0"

    @given(st.integers(-(2**20), 2**20), st.integers(0, 30))
    def test_equality_matches_rationals(self, n, s):
        k = DyadicPoint.of(n, s)
        assert k.as_fraction() == F(n, 2**s)
        assert k.numerator % 2 == 1 or k.scale == 0
        assert F(k.decimal()) == F(n, 2**s)


class TestUniformPoints:
    def test_examples(self):
        assert uniform_points(0) == [ORIGIN]
        assert [k.as_fraction() for k in uniform_points(1)] == [F(-1, 4), F(0), F(1, 4)]
        assert len(uniform_points(3)) == 15

    @pytest.mark.parametrize("l", range(9))
    def test_size_interior_and_nesting(self, l):
        pts = uniform_points(l)
        assert len(pts) == 2 ** (l + 1) - 1
        assert all(abs(k.as_fraction()) < F(1, 2) for k in pts)
        assert set(pts) <= set(uniform_points(l + 1))
        assert [k.as_fraction() for k in pts] == frac_uniform(l)

    def test_negative_level(self):
        with pytest.raises(ValueError):
            uniform_points(-1)


class TestPenalisedPoints:
    def test_examples(self):
        assert penalised_points(2, 2) == [ORIGIN]
        assert [k.as_fraction() for k in penalised_points(3, 2)] == [F(-1, 4), F(0), F(1, 4)]
        assert penalised_points(5, 0) == uniform_points(5)

    @pytest.mark.parametrize("p", range(4))
    def test_nesting_and_definition(self, p):
        for l in range(9):
            assert set(penalised_points(l, p)) <= set(penalised_points(l + 1, p))
            assert [k.as_fraction() for k in penalised_points(l, p)] == frac_penalised(l, p)


class TestClenshawCurtis:
    def test_examples(self):
        assert cc_points(0) == [0.0]
        assert cc_points(1) == [-0.5, 0.0, 0.5]
        np.testing.assert_allclose(cc_points(2), [-0.5, -math.sqrt(2) / 4, 0, math.sqrt(2) / 4, 0.5], atol=1e-15)

    @pytest.mark.parametrize("l", range(9))
    def test_matches_formula_and_nests(self, l):
        # formula: sin(n pi / 2**l) / 2 for |n| < 2**l, deduplicated after rounding
        oracle = sorted({round(math.sin(n * math.pi / 2**l) / 2, 12) for n in range(-(2**l) + 1, 2**l)})
        got = cc_points(l)
        assert len(got) == len(oracle)
        np.testing.assert_allclose(got, oracle, atol=1e-12)
        assert set(cc_angles(l)) <= set(cc_angles(l + 1))
        assert got == sorted(got)


class TestBoundaryPoints:
    def test_examples(self):
        assert boundary_points(0) == [ORIGIN]
        assert [k.as_fraction() for k in boundary_points(1)] == [F(-1, 2), F(0), F(1, 2)]
        three = [k.as_fraction() for k in boundary_points(3)]
        assert three == sorted(set(frac_uniform(2)) | {F(-1, 2), F(1, 2)})
        assert len(three) == 9

    @pytest.mark.parametrize("l", range(9))
    def test_nesting(self, l):
        assert set(boundary_points(l)) <= set(boundary_points(l + 1))


class TestPointFamily:
    def test_all_families_known(self):
        for name in FAMILIES:
            assert point_family(name).name == name

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            point_family("chebyshev")


class TestAssembly:
    def test_isotropic_level_one(self):
        design = assemble_lisg(2, (0, 0), 1)
        assert as_fractions(design) == {
            (F(0), F(0)), (F(-1, 4), F(0)), (F(1, 4), F(0)), (F(0), F(-1, 4)), (F(0), F(1, 4))}

    def test_penalised_example(self):
        design = assemble_lisg(2, (1, 2), 4)
        pts = as_fractions(design)
        assert len(pts) == 21
        on_x1 = {pt for pt in pts if pt[1] == 0}
        on_x2 = {pt for pt in pts if pt[0] == 0}
        assert len(on_x1) == 15 and len(on_x2) == 7
        assert on_x1 | on_x2 == pts

    def test_level_zero(self):
        design = assemble_lisg(3, (0, 0, 0), 0)
        assert design.keys == ((ORIGIN,) * 3,)
        np.testing.assert_array_equal(design.points, np.zeros((1, 3)))

    @pytest.mark.parametrize("d,p,L", [(2, (0, 0), 4), (3, (0, 1, 2), 5), (3, (2, 0, 1), 4), (4, (1, 0, 0, 3), 4)])
    def test_matches_brute_force_union(self, d, p, L):
        assert as_fractions(assemble_lisg(d, p, L)) == brute_union(d, p, L)

    def test_lexicographic_order(self):
        design = assemble_lisg(3, (0, 1, 1), 4)
        fr = [tuple(k.as_fraction() for k in key) for key in design.keys]
        assert fr == sorted(fr)
        assert len(set(fr)) == len(fr)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_component_maps_reproduce_tensor_points(self, family):
        design = assemble_lisg(3, (0, 1, 2), 4, family)
        fam = point_family(family)
        for a, idx in design.component_maps.items():
            keys = list(itertools.product(*(fam.keys(level) for level in a)))
            assert len(set(idx.tolist())) == len(idx)
            assert all(0 <= i < design.size for i in idx)
            assert [design.keys[i] for i in idx] == keys
            coords = np.array([[fam.coordinate(k) for k in key] for key in keys])
            np.testing.assert_array_equal(design.points[idx], coords)

    def test_component_map_via_shell_member(self):
        design = assemble_lisg(2, (1, 2), 4)
        np.testing.assert_array_equal(design.component_map((3, 1)), design.component_maps[(2, 0)])

    def test_points_bounded(self):
        for family in FAMILIES:
            design = assemble_lisg(2, (0, 1), 5, family)
            assert np.all(np.abs(design.points) <= 0.5)

    def test_large_dimension(self):
        design = assemble_lisg(100, range(100), 5)
        assert design.size == count_lisg(100, range(100), 5)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            assemble_lisg(2, (0,), 2)
        with pytest.raises(ValueError):
            assemble_lisg(2, (0, 0), -1)


class TestCounting:
    def test_isotropic_examples(self):
        assert count_isotropic(1, 3) == 15
        assert count_isotropic(2, 1) == 5
        assert count_isotropic(2, -1) == 0

    def test_lisg_examples(self):
        assert count_lisg(2, (1, 2), 4) == 21
        assert count_lisg(2, (0, 0), 1) == 5
        assert count_lisg(7, (3, 1, 4, 1, 5, 9, 2), 0) == 1

    @pytest.mark.parametrize("d", range(1, 6))
    def test_count_equals_assembly(self, d):
        rng = random.Random(d)
        for _ in range(6):
            p = tuple(rng.randint(0, 3) for _ in range(d))
            for L in range(8 if d <= 3 else 6):
                n = count_lisg(d, p, L)
                assert n == assemble_lisg(d, p, L).size
                assert n == count_lisg_by_subsets(d, p, L)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_isotropic_matches_assembly(self, k):
        for L in range(6):
            assert count_isotropic(k, L) == assemble_lisg(k, (0,) * k, L).size

    def test_dimension_stabilisation(self):
        counts = {count_lisg(d, range(d), 5) for d in (7, 25, 100)}
        assert counts == {211}

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=4), st.integers(0, 6))
    def test_count_property(self, p, L):
        assert count_lisg(len(p), p, L) == len(brute_union(len(p), p, L))


class TestFillDistance:
    def test_examples(self):
        assert fill_distance_uniform(0) == F(1, 2)
        assert fill_distance_uniform(3) == F(1, 16)

    def test_numerical_sup_inf(self):
        probe = np.linspace(-0.5, 0.5, 4097)
        pts = np.array([k.value for k in uniform_points(2)])
        h = np.max(np.min(np.abs(probe[:, None] - pts[None, :]), axis=1))
        assert abs(h - 1 / 8) <= probe[1] - probe[0]


class TestExport:
    def test_csv_exact_decimals(self):
        text = design_csv(assemble_lisg(2, (0, 0), 1))
        lines = text.splitlines()
        assert lines[0] == "dim_0,dim_1"
        assert lines[1:] == ["-0.25,0", "0,-0.25", "0,0", "0,0.25", "0.25,0"]

    def test_csv_clenshaw_curtis_round_trips(self):
        design = assemble_lisg(2, (0, 1), 3, "clenshaw-curtis")
        rows = [list(map(float, line.split(","))) for line in design_csv(design).splitlines()[1:]]
        np.testing.assert_array_equal(np.array(rows), design.points)

    def test_sidecar(self, tmp_path):
        design = assemble_lisg(2, (1, 2), 4)
        csv_path, meta_path = write_design(design, tmp_path / "design.csv")
        assert csv_path.read_text() == design_csv(design)
        assert json.loads(meta_path.read_text()) == {
            "d": 2, "penalties": [1, 2], "level": 4, "family": "uniform", "N": 21}
