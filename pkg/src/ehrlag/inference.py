"""Patient-level bootstrap of lag profiles and trajectory classification."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cohort import Cohort
from .config import MethodConfig
from .lagreg import (LagSpec, Model, independent_from_stats, independent_stats,
                     joint_from_stats, joint_stats)
from .timeline import AlignedTimeline, build_timeline
from .transform import InsufficientDataError, apply_transforms

logger = logging.getLogger(__name__)

Z95 = 1.96
MIN_RUN = 15


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates to estimate a variance")


@dataclass
class LagProfile:
    """Point estimates, bootstrap spread and stored replicate coefficients.

    ``samples`` is B x L; NaN entries are undefined replicate coefficients.
    ``undefined`` marks lags whose point estimate or spread is undefined.
    """

    beta_hat: np.ndarray
    sigma: np.ndarray
    samples: np.ndarray
    undefined: np.ndarray
    config_key: str = ""
    seed: int = 0
    rows: int = 0
    patients_used: int = 0
    flags: tuple[str, ...] = field(default=())

    @property
    def max_lag(self) -> int:
        return len(self.beta_hat)

    @property
    def replicates(self) -> int:
        return len(self.samples)

    def bands(self, z: float = Z95) -> tuple[np.ndarray, np.ndarray]:
        return self.beta_hat - z * self.sigma, self.beta_hat + z * self.sigma

    def to_text(self, include_samples: bool = False) -> str:
        out = [f"# config={self.config_key}", f"# replicates={self.replicates}", f"# seed={self.seed}",
               f"# rows={self.rows}", f"# patients={self.patients_used}",
               "tau,beta_hat,sigma"]
        for i, (b, s) in enumerate(zip(self.beta_hat.tolist(), self.sigma.tolist()), start=1):
            out.append(f"{i},{b!r},{s!r}")
        if include_samples:
            out.append("# samples")
            for row in self.samples.tolist():
                out.append(",".join(repr(v) for v in row))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LagProfile":
        meta, rows, samples = {}, [], []
        in_samples = False
        for line in text.splitlines():
            if line == "# samples":
                in_samples = True
            elif line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line.startswith("tau") or not line:
                continue
            elif in_samples:
                samples.append([float(v) for v in line.split(",")])
            else:
                rows.append(line.split(","))
        beta = np.array([float(r[1]) for r in rows])
        sigma = np.array([float(r[2]) for r in rows])
        samp = np.array(samples) if samples else np.empty((0, len(beta)))
        return cls(beta, sigma, samp, ~(np.isfinite(beta) & np.isfinite(sigma)),
                   config_key=meta.get("config", ""), seed=int(meta.get("seed", 0)),
                   rows=int(meta.get("rows", 0)), patients_used=int(meta.get("patients", 0)))


def child_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def stream_id(text: str) -> int:
    """Stable 32-bit integer for a string (e.g. a cohort's pair name)."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def resample_weights(n_patients: int, spec: BootstrapSpec, stream: Sequence[int] = ()) -> np.ndarray:
    """B x P multiplicity matrix; replicate b depends only on (seed, stream, b)."""
    W = np.zeros((spec.replicates, n_patients))
    if n_patients == 0:
        return W
    for b in range(spec.replicates):
        rng = np.random.default_rng(child_seed(spec.seed, *stream, b))
        W[b] = np.bincount(rng.integers(0, n_patients, n_patients), minlength=n_patients)
    return W


def sample_sd(samples: np.ndarray) -> np.ndarray:
    """Per-lag sample standard deviation over defined replicates (NaN if < 2)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        return np.full(samples.shape[1], np.nan)
    ok = np.isfinite(samples)
    n = ok.sum(axis=0)
    # shift by the first defined value so identical replicates give exactly 0
    first = np.argmax(ok, axis=0)
    shift = np.where(n > 0, samples[first, np.arange(samples.shape[1])], 0.0)
    samples = samples - shift
    filled = np.where(ok, samples, 0.0)
    safe = np.where(n > 0, n, 1)
    mean = filled.sum(axis=0) / safe
    ss = (np.where(ok, samples - mean, 0.0) ** 2).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n >= 2, np.sqrt(ss / np.where(n >= 2, n - 1, 1)), np.nan)


def preprocess(cohort: Cohort, config: MethodConfig, normalize_all_channels: bool = False
               ) -> list[AlignedTimeline]:
    """Timeline construction and transforms for every patient, sorted by id.

    Patients too short to transform are dropped and logged.
    """
    out = []
    dropped = 0
    for pid in sorted(cohort.patients):
        tl = build_timeline(cohort.patients[pid], sequence=config.sequence,
                            binned=config.binned, context=config.context)
        try:
            tl = apply_transforms(tl, normalized=config.normalized, differenced=config.differenced,
                                  normalize_all_channels=normalize_all_channels)
        except InsufficientDataError:
            dropped += 1
            continue
        out.append(tl)
    if dropped:
        logger.info("%s: %d patients too short after transforms", config.key, dropped)
    return out


def lag_spec(config: MethodConfig, max_lag: int = 30) -> LagSpec:
    return LagSpec(max_lag, config.model, config.context)


def profile_from_timelines(timelines: Sequence[AlignedTimeline], config: MethodConfig,
                           weights: np.ndarray, max_lag: int = 30, point: str = "full",
                           seed: int = 0) -> LagProfile:
    """Profile from one full-cohort fit plus one fit per row of ``weights``.

    ``weights`` is B x P, aligned with ``timelines``. ``point`` selects the
    point estimate: ``"full"`` (unresampled cohort) or ``"mean"`` (bootstrap
    mean).
    """
    P = len(timelines)
    W = np.vstack([np.ones((1, P)), weights])
    if config.model is Model.JOINT:
        stats = joint_stats(timelines, lag_spec(config, max_lag))
        beta, undef, rows = joint_from_stats(stats, W)
        rows_full = int(rows[0])
    else:
        stats = independent_stats(timelines, max_lag)
        f = independent_from_stats(stats, W)
        beta, undef = f.beta, f.undefined
        rows_full = int(f.rows[0, 0])
    beta = np.where(undef, np.nan, beta)
    samples = beta[1:]
    sigma = sample_sd(samples)
    if point == "mean":
        with np.errstate(invalid="ignore"):
            beta_hat = np.nanmean(samples, axis=0) if np.isfinite(samples).any() else np.full(max_lag, np.nan)
    elif point == "full":
        beta_hat = beta[0]
    else:
        raise ValueError(f"unknown point estimate {point!r}")
    undefined = ~(np.isfinite(beta_hat) & np.isfinite(sigma))
    flags = ("empty-replicate",) if np.any(np.all(~np.isfinite(samples), axis=1)) else ()
    return LagProfile(beta_hat, sigma, samples, undefined, config.key, seed, rows_full, P, flags)


def bootstrap_profiles(cohort: Cohort, config: MethodConfig, spec: BootstrapSpec = BootstrapSpec(),
                       max_lag: int = 30, point: str = "full") -> LagProfile:
    """Resample patients with replacement B times and refit the configured pipeline.

    Per-patient preprocessing does not depend on which other patients are
    drawn, so each replicate reuses the per-patient timelines and only the
    pooled fit is recomputed.
    """
    timelines = preprocess(cohort, config)
    W = resample_weights(len(timelines), spec, (stream_id("/".join(cohort.pair_id)),))
    return profile_from_timelines(timelines, config, W, max_lag, point, spec.seed)


# --------------------------------------------------------------------------
# classification


def _first_completion(mask: np.ndarray, min_run: int) -> np.ndarray:
    """Index at which a run of ``min_run`` True values first completes (or L)."""
    W, L = mask.shape
    run = np.zeros(W, dtype=np.int64)
    done = np.full(W, L, dtype=np.int64)
    for j in range(L):
        run = np.where(mask[:, j], run + 1, 0)
        hit = (run >= min_run) & (done == L)
        done[hit] = j
    return done


def classify(beta: np.ndarray, sigma: np.ndarray, undefined: np.ndarray | None = None,
             min_run: int = MIN_RUN, z: float = Z95) -> np.ndarray:
    """Direction (+1, -1, 0) of each coefficient profile.

    A profile is +1 if some run of ``min_run`` consecutive lags has its whole
    interval ``beta +- z*sigma`` above zero, -1 for a run below zero. If both
    kinds of run exist, the one that completes first (scanning lag 1 upward)
    wins. Undefined lags break runs. ``beta`` may be 1-D or W x L.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), beta.shape)
    bad = ~(np.isfinite(beta) & np.isfinite(sigma))
    if undefined is not None:
        bad = bad | np.broadcast_to(np.asarray(undefined, dtype=bool), beta.shape)
    with np.errstate(invalid="ignore"):
        pos = (beta - z * sigma > 0) & ~bad
        neg = (beta + z * sigma < 0) & ~bad
    L = beta.shape[1]
    p_at = _first_completion(pos, min_run)
    n_at = _first_completion(neg, min_run)
    out = np.zeros(beta.shape[0], dtype=np.int64)
    out[(p_at < L) & (p_at <= n_at)] = 1
    out[(n_at < L) & (n_at < p_at)] = -1
    return out


def classify_profile(profile: LagProfile, min_run: int = MIN_RUN) -> int:
    return int(classify(profile.beta_hat, profile.sigma, profile.undefined, min_run)[0])


def classify_samples(profile: LagProfile, min_run: int = MIN_RUN) -> np.ndarray:
    """Classify each stored replicate with the fixed full-bootstrap sigma."""
    sig_bad = ~np.isfinite(profile.sigma)
    return classify(profile.samples, profile.sigma, sig_bad, min_run)
