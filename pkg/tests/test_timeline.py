import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehrlag.timeline import (DAY, HALF_DAY, AlignedTimeline, ChannelSeries, Parameterization, bin_drug_channel,
                             binarize_drugs, build_timeline, encode_admissions, interpolate, interpolate_at,
                             resample_daily, to_sequence_time)

from conftest import make_patient

H = 3600.0


def test_binarize_drugs():
    p = make_patient(labs=[(0, 1.0), (1, 2.0)], target=[100, 300], other=[200, 300])
    d = binarize_drugs(p)
    assert d.points() == [(100.0, 1.0), (200.0, 0.0), (300.0, 1.0)]


def test_encode_admissions():
    z = encode_admissions(make_patient(labs=[(0, 1.0)], admissions=[1e6]))
    assert z.points() == [(1e6 - DAY, 0.0), (1e6, 1.0), (1e6 + DAY, 0.0)]
    z2 = encode_admissions(make_patient(labs=[(0, 1.0)], admissions=[1e6, 1e6 + DAY]))
    assert dict(z2.points())[1e6 + DAY] == 1.0
    assert len(encode_admissions(make_patient(labs=[(0, 1.0)]))) == 0


def test_binning_window():
    d = ChannelSeries.from_points("x", [(0, 1), (10 * H, 0), (30 * H, 0)])
    assert bin_drug_channel(d).values.tolist() == [1, 1, 0]
    edge = ChannelSeries.from_points("x", [(0, 1), (12 * H, 0)])
    assert bin_drug_channel(edge).values.tolist() == [1, 1]
    zeros = ChannelSeries.from_points("x", [(0, 0), (5, 0)])
    assert bin_drug_channel(zeros).values.tolist() == [0, 0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from([0.0, 1.0])), min_size=1, max_size=30,
                unique_by=lambda p: p[0]))
def test_binning_monotone_and_idempotent(pts):
    d = ChannelSeries.from_points("x", sorted(pts))
    b = bin_drug_channel(d)
    assert np.all(b.values >= d.values)
    assert np.array_equal(b.times, d.times)
    assert bin_drug_channel(b) == b
    # every raised point has a 1 within the window
    ones = d.times[d.values == 1]
    for t, before, after in zip(d.times, d.values, b.values):
        if after > before:
            assert np.min(np.abs(ones - t)) <= HALF_DAY


def test_interpolation_examples():
    lab = ChannelSeries.from_points("y", [(0, 10), (10, 20)])
    at = np.array([5.0, 4.0, -5.0, 15.0])
    assert interpolate_at(lab, at).tolist() == [15.0, 14.0, 10.0, 20.0]
    # oracle: v = 10 + (20 - 10) * 4 / 10
    assert interpolate_at(lab, np.array([4.0]))[0] == pytest.approx(10 + 10 * 4 / 10, abs=1e-12)


def test_interpolate_union_grid_and_exactness():
    lab = ChannelSeries.from_points("y", [(0, 1.0), (100, 3.0), (250, 2.0)])
    drug = ChannelSeries.from_points("x", [(50, 1.0), (100, 0.0), (300, 1.0)])
    ctx = ChannelSeries.from_points("z", [(20, 0.0), (120, 1.0)])
    tl = interpolate(lab, drug, ctx)
    assert tl.times.tolist() == [0, 20, 50, 100, 120, 250, 300]
    for s, name in ((lab, "y"), (drug, "x"), (ctx, "z")):
        v = tl.channel(name)
        for t, val in s.points():
            assert v[tl.times.tolist().index(t)] == val
    assert np.all((tl.x >= 0) & (tl.x <= 1)) and np.all((tl.z >= 0) & (tl.z <= 1))


def test_missing_drug_points_fill_zero():
    lab = ChannelSeries.from_points("y", [(0, 1.0), (10, 2.0)])
    tl = interpolate(lab, ChannelSeries.from_points("x", []), ChannelSeries.from_points("z", []))
    assert tl.x.tolist() == [0.0, 0.0] and tl.z.tolist() == [0.0, 0.0]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1000), st.floats(-100, 100)), min_size=2, max_size=20,
                unique_by=lambda p: p[0]),
       st.lists(st.integers(-50, 1050), min_size=1, max_size=20))
def test_interpolation_never_overshoots(pts, queries):
    s = ChannelSeries.from_points("y", sorted(pts))
    q = np.array(queries, dtype=float)
    v = interpolate_at(s, q)
    idx = np.searchsorted(s.times, q)
    lo = s.values[np.clip(idx - 1, 0, len(s) - 1)]
    hi = s.values[np.clip(idx, 0, len(s) - 1)]
    assert np.all(v >= np.minimum(lo, hi) - 1e-9) and np.all(v <= np.maximum(lo, hi) + 1e-9)


def _clock(times, y):
    times = np.asarray(times, dtype=float)
    y = np.asarray(y, dtype=float)
    return AlignedTimeline(times, y, np.zeros_like(y), np.zeros_like(y), Parameterization.CLOCK)


def test_to_sequence_time():
    tl = _clock([0, 3600, 90000], [1, 2, 3])
    s = to_sequence_time(tl)
    assert s.times.tolist() == [0, 1, 2] and s.y.tolist() == [1, 2, 3]
    assert to_sequence_time(s).times.tolist() == [0, 1, 2]
    assert to_sequence_time(_clock([5], [1])).times.tolist() == [0]


def test_resample_daily():
    tl = _clock([0, 2 * DAY], [10, 30])
    assert resample_daily(tl).y.tolist() == [10, 20, 30]
    short = resample_daily(_clock([0, 1.5 * DAY], [1, 2]))
    assert short.times.tolist() == [0, DAY]
    const = resample_daily(_clock([0, 0.3 * DAY, 4 * DAY], [7, 7, 7]))
    assert const.y.tolist() == [7] * 5


def test_build_timeline_modes():
    p = make_patient(labs=[(0, 1.0), (DAY, 2.0), (3 * DAY, 4.0)], target=[0.5 * DAY], other=[2 * DAY],
                     admissions=[1.5 * DAY])
    seq = build_timeline(p, sequence=True, binned=False, context=False)
    assert seq.parameterization is Parameterization.SEQUENCE
    assert seq.times.tolist() == list(range(5))
    with_ctx = build_timeline(p, sequence=True, binned=False, context=True)
    assert len(with_ctx) == 7  # admission at 1.5d adds 0.5d (shared), 1.5d and 2.5d
    clock = build_timeline(p, sequence=False, binned=False, context=False)
    assert np.allclose(np.diff(clock.times), DAY) and len(clock) == 4


def test_sequence_preserves_value_tuples():
    p = make_patient(labs=[(0, 1.0), (7, 2.0), (9, 3.0)], target=[3], other=[8])
    c = interpolate(*(f(p) for f in (lambda e: __import__("ehrlag.timeline").timeline.lab_series(e),
                                      binarize_drugs)))
    s = to_sequence_time(c)
    assert sorted(zip(c.y, c.x, c.z)) == sorted(zip(s.y, s.x, s.z))


def test_timeline_text_dump():
    tl = _clock([0, 1], [1.5, 2.5])
    assert tl.to_text().splitlines()[0] == "time,y,x,z"
    assert len(tl.to_text().splitlines()) == 3
