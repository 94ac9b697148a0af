import numpy as np
import pytest

from ehrlag.cohort import filter_eligible, serialize_events
from ehrlag.synth import (SynthSpec, default_study_specs, effect_kernel, generate_cohort, generate_grid_study,
                          simulate_patients)
from ehrlag.timeline import DAY


def post_minus_pre(traces, window=5.0):
    """Per patient: mean lab in the window after the first target order minus the window before."""
    diffs = []
    for tr in traces:
        t0 = tr.target_days[0]
        e = tr.events
        lab = e.channel == 0
        days = (e.time[lab] - e.time[lab].min()) / DAY + tr.lab_days.min()
        vals = e.value[lab]
        pre = vals[(days >= t0 - window) & (days < t0)]
        post = vals[(days > t0) & (days <= t0 + window)]
        if len(pre) and len(post):
            diffs.append(post.mean() - pre.mean())
    d = np.array(diffs)
    return d.mean(), d.std(ddof=1) / np.sqrt(len(d))


def test_null_effect_contrast_is_small():
    m, se = post_minus_pre(simulate_patients(SynthSpec(patients=300, effect_direction=0, seed=11)))
    assert abs(m) <= 2 * se


def test_planted_effect_is_detectable():
    m, se = post_minus_pre(simulate_patients(SynthSpec(patients=500, effect_direction=1,
                                                       effect_magnitude=1.0, seed=12)))
    assert m > 5 * se


def test_negative_effect_sign():
    m, se = post_minus_pre(simulate_patients(SynthSpec(patients=300, effect_direction=-1, seed=13)))
    assert m < -3 * se


def test_deterministic_event_files():
    spec = SynthSpec(patients=15, effect_direction=1, seed=3)
    a, _ = generate_cohort(spec, ("D", "L"), stream=2)
    b, _ = generate_cohort(spec, ("D", "L"), stream=2)
    assert serialize_events(a.patients) == serialize_events(b.patients)
    c, _ = generate_cohort(spec, ("D", "L"), stream=3)
    assert serialize_events(a.patients) != serialize_events(c.patients)


def test_default_study():
    specs = default_study_specs(SynthSpec(patients=12))
    cohorts, gold = generate_grid_study(specs)
    assert len(cohorts) == 28 and len(gold) == 28
    assert gold.counts() == {1: 8, -1: 5, 0: 15}
    texts = set()
    for c in cohorts:
        assert len(filter_eligible(c)) == len(c) == 12
        texts.add(serialize_events(c.patients))
    assert len(texts) == 28


def test_levels_are_nonstationary():
    tr = simulate_patients(SynthSpec(patients=5, span_days=400, baseline_sd=0, seed=2))
    for t in tr:
        lat = t.latent
        assert np.var(np.diff(lat)) < 0.05 * np.var(lat)


def _gap_medians(traces):
    hi_gaps, lo_gaps = [], []
    for tr in traces:
        dev = np.abs(np.interp(tr.lab_days, tr.grid_days, tr.latent - tr.baseline))
        gaps = np.diff(tr.lab_days)
        cut = np.median(dev)
        hi_gaps += gaps[dev[:-1] > cut].tolist()
        lo_gaps += gaps[dev[:-1] <= cut].tolist()
    return np.median(hi_gaps), np.median(lo_gaps)


def test_informed_sampling():
    hi, lo = _gap_medians(simulate_patients(SynthSpec(patients=150, sampling_bias=1.0, admission_rate=0,
                                                      walk_sd=0.4, seed=5)))
    assert hi < lo
    hi0, lo0 = _gap_medians(simulate_patients(SynthSpec(patients=150, sampling_bias=0.0, admission_rate=0,
                                                        walk_sd=0.4, seed=5)))
    assert 0.8 < hi0 / lo0 < 1.25


def test_kernel_shape():
    k = effect_kernel(np.array([-1.0, 0.0, 1.0, 3.0, 50.0]), onset=1.0, decay=25.0)
    assert k[0] == 0 and k[1] == 0 and 0 < k[2] < k[3] and k[4] < k[3]


@pytest.mark.parametrize("kw", [dict(patients=0), dict(effect_direction=2), dict(noise_sd=-1),
                                dict(sampling_bias=1.5), dict(effect_decay=0)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)
