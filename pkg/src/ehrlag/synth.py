"""Synthetic drug/lab cohorts with a planted effect direction.

Each patient has a latent lab trajectory: a patient-level baseline, a
random walk, and the summed response to target-drug orders. Drug orders come
in episodes, often around inpatient admissions; other-drug orders form a
background that thickens during admissions. Lab draws are a thinned Poisson
process whose intensity grows with the latent deviation (informed sampling)
and during admissions.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .cohort import Channel, Cohort, GoldStandard, PatientEvents, filter_eligible, is_eligible, shipped_gold_standard
from .timeline import DAY

logger = logging.getLogger(__name__)

EPOCH0 = 1_262_304_000  # 2010-01-01T00:00:00Z
STEP_DAYS = 0.125


@dataclass(frozen=True)
class SynthSpec:
    patients: int = 200
    mean_events_per_patient: float = 110.0
    effect_direction: int = 0
    effect_magnitude: float = 0.8
    effect_onset: float = 1.0
    effect_decay: float = 25.0
    baseline_sd: float = 1.0
    walk_sd: float = 0.15
    noise_sd: float = 0.3
    sampling_bias: float = 0.5
    admission_rate: float = 1.0
    span_days: float = 90.0
    lab_mean: float = 10.0
    lab_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.patients < 1 or self.mean_events_per_patient <= 0 or self.span_days <= 0:
            raise ValueError("counts and span must be positive")
        if self.effect_direction not in (-1, 0, 1):
            raise ValueError("effect_direction must be -1, 0 or 1")
        for name in ("baseline_sd", "walk_sd", "noise_sd", "effect_magnitude", "admission_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.effect_onset <= 0 or self.effect_decay <= 0:
            raise ValueError("kernel time constants must be positive")
        if not 0.0 <= self.sampling_bias <= 1.0:
            raise ValueError("sampling_bias must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def effect_kernel(dt_days: np.ndarray, onset: float, decay: float) -> np.ndarray:
    """Response to one order, dt days later: rises over ``onset``, decays over ``decay``."""
    dt = np.asarray(dt_days, dtype=float)
    k = (1.0 - np.exp(-np.clip(dt, 0, None) / onset)) * np.exp(-np.clip(dt, 0, None) / decay)
    return np.where(dt > 0, k, 0.0)


@dataclass
class PatientTrace:
    """Ground truth behind one synthetic patient (for checks, not for fitting)."""

    events: PatientEvents
    grid_days: np.ndarray
    latent: np.ndarray
    baseline: float
    lab_days: np.ndarray
    admissions: np.ndarray
    target_days: np.ndarray


def _poisson_times(rng, rate_per_day, start, stop):
    n = rng.poisson(max(rate_per_day, 0.0) * max(stop - start, 0.0))
    return np.sort(rng.uniform(start, stop, n))


def _simulate_patient(spec: SynthSpec, rng: np.random.Generator, pid: str) -> PatientTrace:
    T = spec.span_days * rng.uniform(0.8, 1.2)
    # rates chosen so lab + target + other orders average mean_events_per_patient
    budget = spec.mean_events_per_patient / T
    lab_rate = 0.40 * budget
    other_rate = 0.40 * budget
    target_per_day = 1.0

    adm = _poisson_times(rng, spec.admission_rate / 30.0, 0.0, T)
    stays = rng.uniform(2.0, 6.0, len(adm))

    n_episodes = 1 + rng.poisson(0.2 * budget * T / (target_per_day * 8.0))
    anchors = []
    for _ in range(n_episodes):
        if len(adm) and rng.random() < 0.6:
            anchors.append(adm[rng.integers(len(adm))] + rng.uniform(-1.0, 2.0))
        else:
            anchors.append(rng.uniform(0.0, T))
    target = []
    for a in anchors:
        dur = rng.uniform(4.0, 12.0)
        k = max(1, int(round(dur * target_per_day)))
        target.append(np.clip(a + np.sort(rng.uniform(0.0, dur, k)), 0.0, T))
    target_days = np.sort(np.concatenate(target))

    in_stay = lambda t: np.any((t[:, None] >= adm[None, :]) & (t[:, None] <= (adm + stays)[None, :]), axis=1) \
        if len(adm) else np.zeros(len(t), dtype=bool)  # noqa: E731

    other = _poisson_times(rng, other_rate * 3.0, 0.0, T)
    keep = rng.random(len(other)) < np.where(in_stay(other), 1.0, 1.0 / 3.0) * 0.75
    other_days = other[keep]

    grid = np.arange(0.0, T + STEP_DAYS, STEP_DAYS)
    baseline = rng.normal(0.0, spec.baseline_sd)
    walk = np.cumsum(rng.normal(0.0, spec.walk_sd * np.sqrt(STEP_DAYS), len(grid)))
    effect = np.zeros(len(grid))
    if spec.effect_direction != 0 and spec.effect_magnitude > 0:
        for t in target_days:
            effect += effect_kernel(grid - t, spec.effect_onset, spec.effect_decay)
        # a typical episode (~8 orders) lifts the latent lab by about A
        effect *= spec.effect_magnitude * spec.effect_direction / (8.0 * target_per_day)
    deviation = walk + effect
    latent = baseline + deviation

    ref = max(np.sqrt(spec.walk_sd ** 2 * T / 2.0 + spec.effect_magnitude ** 2), 1e-12)
    intensity = lab_rate * (1.0 + spec.sampling_bias * np.abs(deviation) / ref)
    intensity = intensity * np.where(in_stay(grid), 2.0, 1.0)
    lab_mask = rng.random(len(grid)) < np.clip(intensity * STEP_DAYS, 0.0, 1.0)
    lab_idx = np.nonzero(lab_mask)[0]
    lab_days = grid[lab_idx] + rng.uniform(0.0, STEP_DAYS, len(lab_idx))
    lab_days = np.minimum(lab_days, T)
    lab_latent = np.interp(lab_days, grid, latent)
    lab_vals = spec.lab_mean + spec.lab_scale * (lab_latent + rng.normal(0.0, spec.noise_sd, len(lab_days)))

    start = EPOCH0 + float(rng.integers(0, 365 * 5)) * DAY

    def secs(days):
        return np.round(start + np.asarray(days) * DAY)

    t = np.concatenate([secs(lab_days), secs(target_days), secs(other_days), secs(adm)])
    c = np.concatenate([np.full(len(lab_days), Channel.LAB), np.full(len(target_days), Channel.TARGET_DRUG),
                        np.full(len(other_days), Channel.OTHER_DRUG), np.full(len(adm), Channel.ADMISSION)])
    v = np.concatenate([np.round(lab_vals, 6), np.full(len(t) - len(lab_days), np.nan)])
    t, c, v = _dedupe(t, c.astype(np.int8), v)
    return PatientTrace(PatientEvents(pid, t, c, v), grid, latent, baseline, lab_days, adm, target_days)


def _dedupe(t, c, v):
    """Sort by (time, channel) and drop rows colliding on (time, channel)."""
    order = np.lexsort((c, t))
    t, c, v = t[order], c[order], v[order]
    keep = np.ones(len(t), dtype=bool)
    keep[1:] = (t[1:] != t[:-1]) | (c[1:] != c[:-1])
    return t[keep], c[keep], v[keep]


def simulate_patients(spec: SynthSpec, stream: int = 0) -> list[PatientTrace]:
    """One eligible trace per patient; ineligible draws are redrawn from the same stream."""
    out = []
    for i in range(spec.patients):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(stream, i)))
        pid = f"P{i:05d}"
        for _ in range(100):
            tr = _simulate_patient(spec, rng, pid)
            if is_eligible(tr.events):
                break
        else:
            raise RuntimeError(f"could not draw an eligible patient for {pid}; raise mean_events_per_patient")
        out.append(tr)
    return out


def generate_cohort(spec: SynthSpec, pair_id=("Drug", "Lab"), stream: int = 0) -> tuple[Cohort, int]:
    """Synthetic cohort (already eligibility-filtered) and its true direction."""
    traces = simulate_patients(spec, stream)
    patients = {tr.events.patient_id: tr.events for tr in traces}
    cohort = filter_eligible(Cohort(tuple(pair_id), patients, f"synthetic seed={spec.seed} stream={stream}"))
    return cohort, spec.effect_direction


def default_study_specs(base: SynthSpec = SynthSpec()) -> list[tuple[tuple[str, str], SynthSpec]]:
    """28 drug/lab pairs whose true directions copy the shipped expert gold standard."""
    gold = shipped_gold_standard("expert")
    return [(pair, replace(base, effect_direction=d)) for pair, d in gold.entries.items()]


def generate_grid_study(specs=None, base: SynthSpec = SynthSpec()):
    """Cohorts for every (pair, spec) and the matching synthetic gold standard.

    Pair i draws from random stream i of its spec's seed, so pairs never share
    event streams.
    """
    if specs is None:
        specs = default_study_specs(base)
    cohorts = []
    entries = {}
    for i, (pair, spec) in enumerate(specs):
        cohort, direction = generate_cohort(spec, pair, stream=i + 1)
        cohorts.append(cohort)
        entries[tuple(pair)] = direction
    return cohorts, GoldStandard(entries, "synthetic")
