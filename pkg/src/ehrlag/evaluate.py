"""Scoring lag-profile classifications against gold standards.

AUROC here is computed from a two-point ROC curve (thresholds -0.5 and +0.5
on scores in {-1, 0, 1}) by trapezoidal integration.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .cohort import GoldStandard
from .config import MethodConfig

THRESHOLDS = (-0.5, 0.5)


class DegenerateGoldError(ValueError):
    pass


@dataclass(frozen=True)
class RocSpec:
    thresholds: tuple[float, float] = THRESHOLDS

    def __post_init__(self):
        if len(self.thresholds) != 2:
            raise ValueError("exactly two thresholds")


@dataclass
class AurocReport:
    config: MethodConfig
    gold_label: str
    auroc: float
    samples: np.ndarray

    @property
    def sd(self) -> float:
        s = np.asarray(self.samples, dtype=float)
        return float(s.std(ddof=1)) if len(s) >= 2 else float("nan")


def fold_pairs(gold: GoldStandard, predictions: Mapping[tuple[str, str], int]
               ) -> tuple[np.ndarray, np.ndarray]:
    """Turn (gold, predicted) directions into binary labels and {-1,0,1} scores.

    Gold effects are positives scored ``prediction * sign(gold)``; gold nulls
    are negatives scored ``|prediction|``. Pairs are taken in gold-file order.
    """
    missing = [k for k in gold.entries if k not in predictions]
    if missing:
        raise KeyError(f"no prediction for {len(missing)} gold pairs, e.g. {missing[0]}")
    g = np.array(list(gold.entries.values()), dtype=np.int64)
    p = np.array([int(predictions[k]) for k in gold.entries], dtype=np.int64)
    return fold_arrays(g, p)


def fold_arrays(gold: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    labels = (gold != 0).astype(np.int64)
    scores = np.where(labels == 1, pred * np.sign(gold), np.abs(pred))
    return labels, scores


def _trapezoid(pts: np.ndarray) -> float:
    dx = np.diff(pts[:, 0])
    return float(np.sum(dx * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def roc_points(labels, scores, spec: RocSpec = RocSpec()) -> np.ndarray:
    """ROC points (FPR, TPR) sorted for integration, including (0,0) and (1,1)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateGoldError("degenerate gold standard: need both positives and negatives")
    pts = [(0.0, 0.0), (1.0, 1.0)]
    for h in spec.thresholds:
        called = scores > h
        pts.append((np.count_nonzero(called & ~pos) / n_neg, np.count_nonzero(called & pos) / n_pos))
    return np.array(sorted(pts))


def auroc(labels, scores, spec: RocSpec = RocSpec()) -> float:
    pts = roc_points(labels, scores, spec)
    return _trapezoid(pts)


def auroc_ordinal(gold, pred, spec: RocSpec = RocSpec()) -> float:
    """Alternative scoring: at each threshold h, truth is gold > h and the call is pred > h."""
    gold = np.asarray(gold, dtype=float)
    pred = np.asarray(pred, dtype=float)
    pts = [(0.0, 0.0), (1.0, 1.0)]
    for h in spec.thresholds:
        truth = gold > h
        called = pred > h
        n_pos, n_neg = truth.sum(), (~truth).sum()
        if n_pos == 0 or n_neg == 0:
            raise DegenerateGoldError(f"no split of the gold standard at threshold {h}")
        pts.append(((called & ~truth).sum() / n_neg, (called & truth).sum() / n_pos))
    pts = np.array(sorted(pts))
    return _trapezoid(pts)


def score_predictions(gold: GoldStandard, predictions: Mapping[tuple[str, str], int],
                      scheme: str = "folded") -> float:
    if scheme == "folded":
        return auroc(*fold_pairs(gold, predictions))
    if scheme == "ordinal":
        g = np.array(list(gold.entries.values()))
        p = np.array([predictions[k] for k in gold.entries])
        return auroc_ordinal(g, p)
    raise ValueError(f"unknown scheme {scheme!r}")


def auroc_samples(sample_directions: Mapping[tuple[str, str], np.ndarray], gold: GoldStandard,
                  scheme: str = "folded") -> tuple[np.ndarray, float]:
    """AUROC of every bootstrap draw: draw b takes the b-th direction of each pair.

    Returns ``(draws, sd)`` with the sample (n-1) standard deviation.
    """
    missing = [k for k in gold.entries if k not in sample_directions]
    if missing:
        raise KeyError(f"no sample directions for {missing[0]}")
    D = np.vstack([np.asarray(sample_directions[k], dtype=np.int64) for k in gold.entries])
    g = np.array(list(gold.entries.values()))
    draws = np.empty(D.shape[1])
    for b in range(D.shape[1]):
        if scheme == "folded":
            draws[b] = auroc(*fold_arrays(g, D[:, b]))
        else:
            draws[b] = auroc_ordinal(g, D[:, b])
    sd = float(draws.std(ddof=1)) if len(draws) >= 2 else float("nan")
    return draws, sd


@dataclass(frozen=True)
class Contrast:
    difference: float
    lower: float
    upper: float
    n_a: int
    n_b: int


def compare_groups(group_a: Sequence[str], group_b: Sequence[str],
                   reports: Mapping[str, AurocReport], z: float = 1.96) -> Contrast:
    """Mean-AUROC difference between two disjoint config groups with a 95% CI.

    The CI half-width is ``z`` times the sd over draws of the per-draw
    difference of group means.
    """
    a, b = list(group_a), list(group_b)
    if not a or not b:
        raise ValueError("both groups must be nonempty")
    if set(a) & set(b):
        raise ValueError("groups overlap")
    d = np.mean([reports[k].auroc for k in a]) - np.mean([reports[k].auroc for k in b])
    Sa = np.vstack([reports[k].samples for k in a])
    Sb = np.vstack([reports[k].samples for k in b])
    if Sa.shape[1] != Sb.shape[1]:
        raise ValueError("groups carry different numbers of draws")
    draws = Sa.mean(axis=0) - Sb.mean(axis=0)
    half = z * draws.std(ddof=1)
    return Contrast(float(d), float(d - half), float(d + half), len(a), len(b))


# --------------------------------------------------------------------------
# agreement statistics

CATEGORIES = (-1, 0, 1)


def contingency(a, b, categories=CATEGORIES) -> np.ndarray:
    idx = {c: i for i, c in enumerate(categories)}
    T = np.zeros((len(categories), len(categories)))
    for u, v in zip(a, b):
        T[idx[int(u)], idx[int(v)]] += 1
    return T


def _kappa_from_table(T: np.ndarray, weights: np.ndarray) -> float:
    P = T / T.sum()
    po = (weights * P).sum()
    pe = (weights * np.outer(P.sum(axis=1), P.sum(axis=0))).sum()
    if pe == 1.0:
        return float("nan")
    return float((po - pe) / (1.0 - pe))


def kappa_weights(weighting: str, k: int = 3) -> np.ndarray:
    i = np.arange(k)
    if weighting == "unweighted":
        return np.eye(k)
    if weighting == "linear":
        return 1.0 - np.abs(i[:, None] - i[None, :]) / (k - 1)
    raise ValueError(f"unknown weighting {weighting!r}")


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    lower: float
    upper: float
    observed_agreement: float


def cohens_kappa(labels_a, labels_b, weighting: str = "unweighted", resamples: int = 2000,
                 seed: int = 0) -> KappaResult:
    """Cohen's kappa over labels in {-1,0,1} with a percentile bootstrap CI over items."""
    a = np.asarray(labels_a, dtype=np.int64)
    b = np.asarray(labels_b, dtype=np.int64)
    if len(a) != len(b):
        raise ValueError("label vectors differ in length")
    if len(a) == 0:
        raise ValueError("no labels")
    if not set(np.unique(np.concatenate([a, b]))) <= set(CATEGORIES):
        raise ValueError("labels must be -1, 0 or 1")
    w = kappa_weights(weighting)
    T = contingency(a, b)
    kappa = _kappa_from_table(T, w)
    rng = np.random.default_rng(seed)
    n = len(a)
    ia = a + 1
    ib = b + 1
    boots = np.empty(resamples)
    for r in range(resamples):
        idx = rng.integers(0, n, n)
        Tb = np.zeros((3, 3))
        np.add.at(Tb, (ia[idx], ib[idx]), 1)
        boots[r] = _kappa_from_table(Tb, w)
    if np.isfinite(boots).any():
        lo, hi = np.nanpercentile(boots, [2.5, 97.5])
    else:
        lo = hi = float("nan")
    return KappaResult(kappa, float(lo), float(hi), float(np.trace(T) / n))


@dataclass(frozen=True)
class Correlation:
    r: float
    lower: float
    upper: float
    n: int


def pearson_fisher(x, y, z: float = 1.96) -> Correlation:
    """Pearson r with the Fisher-z interval tanh(atanh r +- z / sqrt(n - 3))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("inputs differ in length")
    n = len(x)
    if n < 4:
        raise ValueError("need at least 4 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ValueError("constant input")
    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return Correlation(r, r, r, n)
    zr = np.arctanh(r)
    half = z / np.sqrt(n - 3)
    return Correlation(r, float(np.tanh(zr - half)), float(np.tanh(zr + half)), n)


def load_reference_table() -> list[dict]:
    """The published 64-row AUROC grid (both gold standards) as dicts."""
    text = resources.files("ehrlag.data").joinpath("reference_grid.csv").read_text()
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        cfg = MethodConfig.from_table_row([rec[k] for k in
                                           ("time", "binned", "normalized", "difference", "context", "estimation")])
        rows.append({"config": cfg,
                     **{k: float(rec[k]) for k in ("auroc_expert", "sd_expert", "auroc_kb", "sd_kb")}})
    return rows
