"""Tests for ball, lens, intersection, and union volumes.

Expected values come from the slice-integration oracles in oracles.py or from
hand-derived closed forms, never from the functions under test.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ao_gibbs.geometry import (
    Ball,
    IntervalSet,
    QuadratureSpec,
    _wrap_segment,
    ball_volume,
    critical_ratio,
    k_intersection_volume,
    pair_intersection_volume,
    union_volume,
)
from ao_gibbs.model import Window

QUAD = QuadratureSpec(points_per_unit_volume=256.0, target_rel_error=1e-3, max_doublings=4)


def _close_to_oracle(est, oracle, n_sigma=5.0, rel=2e-3):
    assert abs(est.value - oracle) <= n_sigma * est.stderr + rel * abs(oracle) + 1e-9


# ---- frozen closed forms ----


def test_ball_volume_frozen():
    assert ball_volume(1, 1.0) == 2.0
    assert ball_volume(2, 2.0) == pytest.approx(4.0 * math.pi)
    assert ball_volume(3, 1.0) == pytest.approx(4.1887902047863905)
    assert ball_volume(2, 0.0) == 0.0
    with pytest.raises(ValueError):
        ball_volume(4, 1.0)
    with pytest.raises(ValueError):
        ball_volume(2, -1.0)


def test_critical_ratio_frozen():
    assert critical_ratio(2) == pytest.approx(0.41421356237309515, abs=1e-12)
    assert critical_ratio(3) == pytest.approx(0.22474487139158905, abs=1e-12)
    with pytest.raises(ValueError):
        critical_ratio(1)


def test_lens_frozen_unit_circles():
    # two unit disks at distance 1: 2 pi / 3 - sqrt(3) / 2
    b1 = Ball((0.0, 0.0), 1.0)
    b2 = Ball((1.0, 0.0), 1.0)
    assert pair_intersection_volume(2, b1, b2) == pytest.approx(
        2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0, abs=1e-12
    )
    # two unit 3d balls at distance 1: 5 pi / 12
    b1 = Ball((0.0, 0.0, 0.0), 1.0)
    b2 = Ball((0.0, 1.0, 0.0), 1.0)
    assert pair_intersection_volume(3, b1, b2) == pytest.approx(5.0 * math.pi / 12.0, abs=1e-12)
    # unit intervals at distance 1 overlap on length 1
    assert pair_intersection_volume(1, Ball((0.0,), 1.0), Ball((1.0,), 1.0)) == 1.0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_pair_volume_matches_slice_oracle(d):
    cases = [
        (0.0, 1.0, 1.0),
        (0.3, 1.0, 0.5),   # contained
        (0.5, 1.0, 0.5),   # internally tangent
        (0.9, 0.7, 0.4),
        (1.3, 1.0, 0.6),
        (1.6, 1.0, 0.6),   # externally tangent
        (2.0, 1.0, 0.6),   # disjoint
        (0.8, 1.1, 1.1),
        (0.4, 0.0, 1.0),   # zero radius
    ]
    for s, r1, r2 in cases:
        got = pair_intersection_volume(
            d, Ball((0.0,) * d, r1), Ball((s,) + (0.0,) * (d - 1), r2)
        )
        want = oracles.pair_volume(d, s, r1, r2)
        assert got == pytest.approx(want, abs=5e-9), (d, s, r1, r2)


@settings(max_examples=80, deadline=None)
@given(
    s=st.floats(0.0, 3.0),
    ds=st.floats(0.0, 1.0),
    r1=st.floats(0.0, 1.5),
    r2=st.floats(0.0, 1.5),
    d=st.sampled_from([1, 2, 3]),
)
def test_pair_volume_properties(s, ds, r1, r2, d):
    def vol(dist):
        return pair_intersection_volume(
            d, Ball((0.0,) * d, r1), Ball((dist,) + (0.0,) * (d - 1), r2)
        )

    v = vol(s)
    assert 0.0 <= v <= ball_volume(d, min(r1, r2)) + 1e-12
    assert vol(s + ds) <= v + 1e-9  # nonincreasing in separation
    sym = pair_intersection_volume(
        d, Ball((0.0,) * d, r2), Ball((s,) + (0.0,) * (d - 1), r1)
    )
    assert sym == pytest.approx(v, abs=1e-12)


# ---- torus pairs ----


def test_torus_pair_wraps_across_edge():
    w = Window.cube(2.0, 2, torus=True)
    b1 = Ball((0.9, 0.0), 0.5)
    b2 = Ball((-0.9, 0.0), 0.5)
    want = oracles.pair_volume(2, 0.2, 0.5, 0.5)
    assert pair_intersection_volume(2, b1, b2, torus=w) == pytest.approx(want, abs=1e-10)
    # same pair read without identification barely misses
    assert pair_intersection_volume(2, b1, b2) == 0.0


def test_torus_pair_wraps_across_corner():
    w = Window.cube(2.0, 2, torus=True)
    b1 = Ball((0.9, 0.9), 0.5)
    b2 = Ball((-0.9, -0.9), 0.5)
    want = oracles.pair_volume(2, math.sqrt(0.08), 0.5, 0.5)
    assert pair_intersection_volume(2, b1, b2, torus=w) == pytest.approx(want, abs=1e-10)


def test_torus_pair_interior_matches_euclid():
    w = Window.cube(10.0, 3, torus=True)
    b1 = Ball((0.0, 0.0, 0.0), 1.0)
    b2 = Ball((0.5, 0.5, 0.0), 0.8)
    assert pair_intersection_volume(3, b1, b2, torus=w) == pytest.approx(
        pair_intersection_volume(3, b1, b2), abs=1e-12
    )


def test_torus_radius_cap_enforced():
    w = Window.cube(2.0, 2, torus=True)
    with pytest.raises(ValueError):
        pair_intersection_volume(2, Ball((0.0, 0.0), 1.2), Ball((0.5, 0.0), 0.1), torus=w)


# ---- k-wise intersections ----


def test_k_intersection_trivial_cases():
    got = k_intersection_volume(2, [Ball((0.0, 0.0), 0.7)])
    assert got.value == pytest.approx(math.pi * 0.49) and got.stderr == 0.0
    got = k_intersection_volume(2, [Ball((0.0, 0.0), 0.7), Ball((5.0, 0.0), 0.7)])
    assert got.value == 0.0 and got.stderr == 0.0
    got = k_intersection_volume(3, [Ball((0.0,) * 3, 0.0), Ball((0.1,) + (0.0,) * 2, 1.0)])
    assert got.value == 0.0
    with pytest.raises(ValueError):
        k_intersection_volume(2, [])


def test_k2_uses_exact_lens():
    got = k_intersection_volume(2, [Ball((0.0, 0.0), 1.0), Ball((1.0, 0.0), 1.0)])
    assert got.stderr == 0.0
    assert got.value == pytest.approx(2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0, abs=1e-12)


def test_triple_intersection_1d_exact():
    balls = [Ball((0.0,), 1.0), Ball((0.5,), 1.0), Ball((1.2,), 0.8)]
    got = k_intersection_volume(1, balls)
    # common interval is [max lows, min highs] = [0.4, 1.0]
    assert got.stderr == 0.0
    assert got.value == pytest.approx(0.6, abs=1e-12)


def test_triple_intersection_matches_oracle_2d():
    rng = np.random.default_rng(11)
    centers = [(0.0, 0.0), (1.0, 0.1), (0.4, 0.8)]
    radii = [0.9, 0.8, 0.85]
    balls = [Ball(c, r) for c, r in zip(centers, radii)]
    got = k_intersection_volume(2, balls, quad=QUAD, rng=rng)
    want = oracles.disks_intersection_area(centers, radii)
    assert want > 0.01
    _close_to_oracle(got, want)


def test_quadruple_intersection_matches_oracle_2d():
    rng = np.random.default_rng(12)
    centers = [(0.0, 0.0), (0.6, 0.0), (0.3, 0.5), (0.3, -0.4)]
    radii = [0.7, 0.7, 0.75, 0.65]
    got = k_intersection_volume(2, [Ball(c, r) for c, r in zip(centers, radii)],
                                quad=QUAD, rng=rng)
    want = oracles.disks_intersection_area(centers, radii)
    assert want > 0.01
    _close_to_oracle(got, want)


def test_triple_intersection_matches_oracle_3d():
    rng = np.random.default_rng(13)
    centers = [(0.0, 0.0, 0.0), (0.7, 0.1, 0.0), (0.3, 0.6, 0.2)]
    radii = [0.8, 0.75, 0.7]
    got = k_intersection_volume(3, [Ball(c, r) for c, r in zip(centers, radii)],
                                quad=QUAD, rng=rng)
    want = oracles.balls3_intersection_volume(centers, radii)
    assert want > 0.005
    _close_to_oracle(got, want, rel=5e-3)


def test_triple_intersection_torus_wrap():
    # cluster through the right edge: shifting it inside must not change the value
    w = Window.cube(4.0, 2, torus=True)
    centers = [(1.9, 0.0), (-1.7, 0.1), (1.8, 0.5)]
    radii = [0.8, 0.75, 0.7]
    rng = np.random.default_rng(14)
    got = k_intersection_volume(2, [Ball(c, r) for c, r in zip(centers, radii)],
                                quad=QUAD, rng=rng, torus=w)
    moved = [(-0.1, 0.0), (0.3, 0.1), (-0.2, 0.5)]  # same geometry, shifted by 2
    want = oracles.disks_intersection_area(moved, radii)
    assert want > 0.05
    _close_to_oracle(got, want)


# ---- unions ----


def test_union_single_and_disjoint_exact():
    got = union_volume(2, [Ball((0.0, 0.0), 0.5)])
    assert got.value == pytest.approx(math.pi * 0.25, abs=1e-12) and got.stderr == 0.0
    balls = [Ball((0.0, 0.0), 0.5), Ball((3.0, 0.0), 0.4), Ball((0.0, 3.0), 0.3)]
    got = union_volume(2, balls)
    assert got.stderr == 0.0
    assert got.value == pytest.approx(math.pi * (0.25 + 0.16 + 0.09), abs=1e-12)


def test_union_1d_exact_vs_oracle():
    balls = [Ball((0.0,), 1.0), Ball((1.5,), 0.7), Ball((5.0,), 0.2)]
    minus = [Ball((0.9,), 0.3)]
    got = union_volume(1, balls, minus=minus)
    want = oracles.union_minus_length(
        [(-1.0, 1.0), (0.8, 2.2), (4.8, 5.2)], [(0.6, 1.2)]
    )
    assert got.stderr == 0.0
    assert got.value == pytest.approx(want, abs=1e-12)


def test_union_2d_cluster_matches_oracle():
    centers = [(0.0, 0.0), (0.9, 0.2), (0.4, 0.9), (-0.5, 0.6)]
    radii = [0.7, 0.6, 0.65, 0.5]
    rng = np.random.default_rng(21)
    got = union_volume(2, [Ball(c, r) for c, r in zip(centers, radii)], quad=QUAD, rng=rng)
    want = oracles.disks_union_minus_area(centers, radii)
    _close_to_oracle(got, want)


def test_union_minus_matches_oracle_2d():
    centers = [(0.0, 0.0), (1.0, 0.0)]
    radii = [0.8, 0.8]
    minus_c = [(0.5, 0.3), (0.2, -0.5)]
    minus_r = [0.45, 0.3]
    rng = np.random.default_rng(22)
    got = union_volume(
        2,
        [Ball(c, r) for c, r in zip(centers, radii)],
        minus=[Ball(c, r) for c, r in zip(minus_c, minus_r)],
        quad=QUAD,
        rng=rng,
    )
    want = oracles.disks_union_minus_area(centers, radii, minus_c, minus_r)
    _close_to_oracle(got, want)


def test_union_fully_subtracted_is_zero():
    balls = [Ball((0.0, 0.0), 0.6), Ball((0.5, 0.0), 0.5)]
    got = union_volume(2, balls, minus=balls, quad=QUAD, rng=np.random.default_rng(23))
    assert got.value == 0.0 and got.stderr == 0.0


def test_union_3d_matches_oracle():
    centers = [(0.0, 0.0, 0.0), (0.8, 0.0, 0.2), (0.3, 0.7, -0.1)]
    radii = [0.7, 0.6, 0.65]
    minus_c = [(0.4, 0.2, 0.0)]
    minus_r = [0.35]
    rng = np.random.default_rng(24)
    got = union_volume(
        3,
        [Ball(c, r) for c, r in zip(centers, radii)],
        minus=[Ball(c, r) for c, r in zip(minus_c, minus_r)],
        quad=QUAD,
        rng=rng,
    )
    want = oracles.balls3_union_minus_volume(centers, radii, minus_c, minus_r)
    _close_to_oracle(got, want, rel=5e-3)


def test_union_1d_torus_wrap_frozen():
    w = Window.cube(4.0, 1, torus=True)
    got = union_volume(1, [Ball((1.8,), 0.5)], torus=w)
    # wraps to [1.3, 2) plus [-2, -1.7): total length 1.0
    assert got.value == pytest.approx(1.0, abs=1e-12) and got.stderr == 0.0
    got = union_volume(1, [Ball((1.8,), 0.5), Ball((-1.9,), 0.4)], torus=w)
    # second interval [-2.3, -1.5] wraps to [-2, -1.5) + [1.7, 2): overlap both sides
    want = oracles.union_minus_length([(1.3, 2.0), (-2.0, -1.7), (-2.0, -1.5), (1.7, 2.0)], [])
    assert got.value == pytest.approx(want, abs=1e-12)


def test_union_torus_single_ball_keeps_full_area():
    w = Window.cube(2.0, 2, torus=True)
    got = union_volume(2, [Ball((0.95, -0.9), 0.6)], quad=QUAD, rng=np.random.default_rng(25),
                       torus=w)
    _close_to_oracle(got, math.pi * 0.36)


def test_union_torus_pair_via_inclusion_exclusion():
    w = Window.cube(2.0, 2, torus=True)
    r = 0.5
    balls = [Ball((0.9, 0.0), r), Ball((-0.9, 0.1), r)]
    rng = np.random.default_rng(26)
    got = union_volume(2, balls, quad=QUAD, rng=rng, torus=w)
    s = math.hypot(0.2, 0.1)  # minimal-image separation
    want = 2.0 * math.pi * r * r - oracles.pair_volume(2, s, r, r)
    _close_to_oracle(got, want)


def test_union_stderr_is_honest():
    centers = [(0.0, 0.0), (0.8, 0.1), (0.4, 0.7)]
    radii = [0.7, 0.65, 0.6]
    balls = [Ball(c, r) for c, r in zip(centers, radii)]
    want = oracles.disks_union_minus_area(centers, radii)
    quad = QuadratureSpec(points_per_unit_volume=256.0, target_rel_error=1e-3, max_doublings=3)
    zs = []
    for seed in range(24):
        got = union_volume(2, balls, quad=quad, rng=np.random.default_rng(1000 + seed))
        assert got.stderr > 0.0
        zs.append((got.value - want) / got.stderr)
    zs = np.asarray(zs)
    # stderr is conservative for stratified sampling, so |z| should look
    # sub-gaussian: no wild outliers and no gross bias
    assert np.max(np.abs(zs)) < 4.0
    assert abs(np.mean(zs)) < 1.0


def test_lattice_shift_scheme_unbiased():
    centers = [(0.0, 0.0), (0.7, 0.2)]
    radii = [0.6, 0.55]
    want = oracles.disks_union_minus_area(centers, radii)
    quad = QuadratureSpec(points_per_unit_volume=512.0, scheme="lattice+random-shift",
                          target_rel_error=1e-3, max_doublings=3)
    vals = [
        union_volume(2, [Ball(c, r) for c, r in zip(centers, radii)], quad=quad,
                     rng=np.random.default_rng(2000 + s)).value
        for s in range(16)
    ]
    err = np.mean(vals) - want
    spread = np.std(vals) / math.sqrt(len(vals))
    assert abs(err) <= 4.0 * spread + 2e-3 * want


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(points_per_unit_volume=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(scheme="sobol")
    with pytest.raises(ValueError):
        QuadratureSpec(target_rel_error=-1.0)


# ---- interval arithmetic ----


segs_st = st.lists(
    st.tuples(st.floats(-10, 10), st.floats(0.01, 5.0)).map(lambda ab: (ab[0], ab[0] + ab[1])),
    max_size=8,
)


@settings(max_examples=100, deadline=None)
@given(a=segs_st, b=segs_st)
def test_interval_set_algebra(a, b):
    A, B = IntervalSet(a), IntervalSet(b)
    la = A.length()
    assert la == pytest.approx(oracles.union_length(a), abs=1e-9)
    lu = A.union(B).length()
    li = A.intersect(B).length()
    ls = A.subtract(B).length()
    assert lu == pytest.approx(la + B.length() - li, abs=1e-9)
    assert ls == pytest.approx(la - li, abs=1e-9)
    assert A.subtract(B).intersect(B).length() == pytest.approx(0.0, abs=1e-9)
    assert ls == pytest.approx(oracles.union_minus_length(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    a=st.floats(-20, 20),
    w=st.floats(0.01, 7.9),
    lo=st.floats(-5, 5),
)
def test_wrap_segment_preserves_length(a, w, lo):
    side = 4.0
    pieces = _wrap_segment(a, a + w, lo, side)
    total = sum(e - s for s, e in pieces)
    assert total == pytest.approx(min(w, side), abs=1e-9)
    for s, e in pieces:
        assert lo - 1e-12 <= s <= e <= lo + side + 1e-12


def test_wrap_segment_frozen():
    got = _wrap_segment(1.3, 2.3, -2.0, 4.0)
    assert len(got) == 2
    assert got[0] == pytest.approx((1.3, 2.0), abs=1e-12)
    assert got[1] == pytest.approx((-2.0, -1.7), abs=1e-12)
    assert _wrap_segment(-0.5, 0.5, -2.0, 4.0) == [(-0.5, 0.5)]
