"""Pooled lagged regression of a lab series on lagged drug (and context) values.

Two model families:

* independent: for each lag tau, ``y_t = c_tau + beta_tau * x_{t-tau} + e``;
* joint (ARX): ``y_t = c + sum beta_tau x_{t-tau} + sum alpha_tau y_{t-tau}
  [+ sum gamma_tau z_{t-tau}] + e`` over tau = 1..L.

Rows from all patients are pooled into one regression; a lag window never
reaches into another patient's series.

Besides the direct fits there is a sufficient-statistics path
(:func:`joint_stats`, :func:`independent_stats`): per-patient Gram blocks are
computed once and any patient-weighting (such as a bootstrap resample) is a
weighted sum of those blocks.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from .timeline import AlignedTimeline

RTOL = 1e-10
# eigenvalue cut on the equilibrated Gram matrix (singular-value ratio 1e-6)
GRAM_RTOL = 1e-12


class Model(enum.Enum):
    INDEPENDENT = "independent"
    JOINT = "joint"


@dataclass(frozen=True)
class LagSpec:
    max_lag: int = 30
    model: Model = Model.JOINT
    include_context: bool = False

    def __post_init__(self):
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")

    @property
    def n_columns(self) -> int:
        """Design width of the joint model, intercept included."""
        return 1 + self.max_lag * (3 if self.include_context else 2)


@dataclass
class FitResult:
    beta: np.ndarray
    intercept: float | np.ndarray
    rows_used: int
    effective_rank: int
    resid_var: float = float("nan")
    alpha: np.ndarray | None = None
    gamma: np.ndarray | None = None
    undefined: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.undefined is None:
            self.undefined = ~np.isfinite(self.beta)

    def to_text(self) -> str:
        """``tau,beta,alpha,gamma`` rows under a ``#``-prefixed header block."""
        L = len(self.beta)
        icpt = self.intercept if np.ndim(self.intercept) == 0 else ";".join(map(repr, np.asarray(self.intercept).tolist()))
        out = [f"# intercept={icpt!s}", f"# rank={self.effective_rank}",
               f"# rows_used={self.rows_used}", f"# resid_var={self.resid_var!r}",
               "tau,beta,alpha,gamma"]
        for i in range(L):
            a = "" if self.alpha is None else repr(float(self.alpha[i]))
            g = "" if self.gamma is None else repr(float(self.gamma[i]))
            out.append(f"{i + 1},{float(self.beta[i])!r},{a},{g}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FitResult":
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line and not line.startswith("tau"):
                rows.append(line.split(","))
        beta = np.array([float(r[1]) for r in rows])
        alpha = np.array([float(r[2]) for r in rows]) if rows and rows[0][2] else None
        gamma = np.array([float(r[3]) for r in rows]) if rows and rows[0][3] else None
        icpt_raw = meta["intercept"]
        icpt = np.array([float(v) for v in icpt_raw.split(";")]) if ";" in icpt_raw else float(icpt_raw)
        return cls(beta=beta, intercept=icpt, rows_used=int(meta["rows_used"]),
                   effective_rank=int(meta["rank"]), resid_var=float(meta["resid_var"]),
                   alpha=alpha, gamma=gamma)


@dataclass
class LstsqResult:
    coef: np.ndarray
    rank: int
    residuals: np.ndarray


def _ordered(timelines: Sequence[AlignedTimeline]) -> list[AlignedTimeline]:
    return sorted(timelines, key=lambda tl: tl.patient_id)


def _lagged(v: np.ndarray, L: int) -> np.ndarray:
    """Rows t = L..n-1 holding v[t-1], ..., v[t-L]."""
    return sliding_window_view(v[:-1], L)[:, ::-1]


def joint_design(tl: AlignedTimeline, spec: LagSpec) -> tuple[np.ndarray, np.ndarray]:
    L = spec.max_lag
    n = len(tl)
    if n <= L:
        return np.empty((0, spec.n_columns)), np.empty(0)
    blocks = [np.ones((n - L, 1)), _lagged(tl.x, L), _lagged(tl.y, L)]
    if spec.include_context:
        blocks.append(_lagged(tl.z, L))
    return np.hstack(blocks), tl.y[L:].copy()


def independent_design(tl: AlignedTimeline, tau: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(tl)
    if n <= tau:
        return np.empty((0, 2)), np.empty(0)
    return np.column_stack([np.ones(n - tau), tl.x[:-tau]]), tl.y[tau:].copy()


def build_rows(timelines: Sequence[AlignedTimeline], spec: LagSpec, tau: int | None = None):
    """Pooled design rows (intercept in column 0) and targets.

    Joint: ``[1, x lags, y lags, (z lags)]`` for every t >= L. Independent
    (``tau`` required): ``[1, x_{t-tau}]`` for every t >= tau.
    """
    if spec.model is Model.INDEPENDENT:
        if tau is None:
            raise ValueError("independent rows need a lag tau")
        parts = [independent_design(tl, tau) for tl in _ordered(timelines)]
        width = 2
    else:
        parts = [joint_design(tl, spec) for tl in _ordered(timelines)]
        width = spec.n_columns
    if not parts:
        return np.empty((0, width)), np.empty(0)
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def least_squares(X: np.ndarray, y: np.ndarray, rtol: float = RTOL) -> LstsqResult:
    """Minimum-norm least squares through a column-pivoted QR (LAPACK gelsy).

    Columns whose pivoted R diagonal falls below ``rtol`` times the largest
    column norm are treated as rank deficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("insufficient data: no rows to fit")
    coef, _, rank, _ = scipy.linalg.lstsq(X, y, cond=rtol, lapack_driver="gelsy")
    return LstsqResult(coef, int(rank), y - X @ coef)


def fit_joint(timelines: Sequence[AlignedTimeline], spec: LagSpec) -> FitResult:
    X, y = build_rows(timelines, LagSpec(spec.max_lag, Model.JOINT, spec.include_context))
    res = least_squares(X, y)
    L = spec.max_lag
    c = res.coef
    dof = max(len(y) - res.rank, 1)
    return FitResult(
        beta=c[1:1 + L].copy(),
        alpha=c[1 + L:1 + 2 * L].copy(),
        gamma=c[1 + 2 * L:].copy() if spec.include_context else None,
        intercept=float(c[0]),
        rows_used=len(y),
        effective_rank=res.rank,
        resid_var=float(res.residuals @ res.residuals / dof),
        undefined=np.zeros(L, dtype=bool),
    )


# --------------------------------------------------------------------------
# sufficient statistics


@dataclass
class JointStats:
    """Per-patient Gram blocks of the joint design: G[p] = X_p'X_p, b[p] = X_p'y_p."""

    spec: LagSpec
    gram: np.ndarray
    xty: np.ndarray
    rows: np.ndarray


def joint_stats(timelines: Sequence[AlignedTimeline], spec: LagSpec) -> JointStats:
    k = spec.n_columns
    P = len(timelines)
    gram = np.zeros((P, k, k))
    xty = np.zeros((P, k))
    rows = np.zeros(P, dtype=np.int64)
    for i, tl in enumerate(timelines):
        X, y = joint_design(tl, spec)
        if len(y):
            gram[i] = X.T @ X
            xty[i] = X.T @ y
            rows[i] = len(y)
    return JointStats(spec, gram, xty, rows)


def solve_gram(G: np.ndarray, b: np.ndarray, rtol: float = GRAM_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Batched minimum-norm solve of ``G coef = b`` for symmetric PSD ``G``.

    Columns are equilibrated by sqrt(diag G); zero columns are dropped.
    Returns ``(coef, rank)`` with leading batch dimension.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.sqrt(np.clip(np.einsum("...ii->...i", G), 0.0, None))
    live = d > 0
    inv_d = np.where(live, 1.0 / np.where(live, d, 1.0), 0.0)
    Gs = G * inv_d[..., :, None] * inv_d[..., None, :]
    bs = b * inv_d
    lam, V = np.linalg.eigh(Gs)
    lam_max = lam.max(axis=-1, keepdims=True)
    keep = lam > rtol * np.maximum(lam_max, np.finfo(float).tiny)
    inv_lam = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    proj = np.einsum("...ji,...j->...i", V, bs) * inv_lam
    coef = np.einsum("...ij,...j->...i", V, proj) * inv_d
    return coef, keep.sum(axis=-1)


def joint_from_stats(stats: JointStats, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint-model drug coefficients for each row of ``weights`` (W x P).

    Returns ``(beta, undefined, rows)``; beta is W x L. A weighting with no
    rows leaves an all-undefined (NaN) beta.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    L = stats.spec.max_lag
    G = np.tensordot(weights, stats.gram, axes=1)
    b = weights @ stats.xty
    rows = weights @ stats.rows
    coef, _ = solve_gram(G, b)
    beta = coef[:, 1:1 + L]
    empty = rows == 0
    beta[empty] = np.nan
    undefined = np.repeat(empty[:, None], L, axis=1)
    return beta, undefined, rows


@dataclass
class IndependentStats:
    """Per-patient, per-lag centred moments for the two-column lag model.

    Arrays are P x L: ``n`` rows, means ``mx``/``my`` and centred sums
    ``sxx``, ``sxy``, ``syy``.
    """

    max_lag: int
    n: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    sxx: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray


def independent_stats(timelines: Sequence[AlignedTimeline], max_lag: int) -> IndependentStats:
    P = len(timelines)
    L = max_lag
    lengths = np.array([len(tl) for tl in timelines], dtype=np.int64)
    x_all = np.concatenate([tl.x for tl in timelines]) if P else np.empty(0)
    y_all = np.concatenate([tl.y for tl in timelines]) if P else np.empty(0)
    pid = np.repeat(np.arange(P), lengths)
    start = np.concatenate([[0], np.cumsum(lengths)[:-1]]) if P else np.empty(0, dtype=np.int64)
    loc = np.arange(len(x_all)) - np.repeat(start, lengths)

    shape = (P, L)
    n = np.zeros(shape)
    mx, my, sxx, sxy, syy = (np.zeros(shape) for _ in range(5))
    for j, tau in enumerate(range(1, L + 1)):
        r = np.nonzero(loc >= tau)[0]
        p = pid[r]
        xs = x_all[r - tau]
        ys = y_all[r]
        cnt = np.bincount(p, minlength=P).astype(float)
        safe = np.where(cnt > 0, cnt, 1.0)
        ax = np.bincount(p, xs, minlength=P) / safe
        ay = np.bincount(p, ys, minlength=P) / safe
        dx = xs - ax[p]
        dy = ys - ay[p]
        n[:, j] = cnt
        mx[:, j] = ax
        my[:, j] = ay
        sxx[:, j] = np.bincount(p, dx * dx, minlength=P)
        sxy[:, j] = np.bincount(p, dx * dy, minlength=P)
        syy[:, j] = np.bincount(p, dy * dy, minlength=P)
    return IndependentStats(L, n, mx, my, sxx, sxy, syy)


@dataclass
class IndependentFit:
    beta: np.ndarray
    intercept: np.ndarray
    resid_var: np.ndarray
    rows: np.ndarray
    undefined: np.ndarray


def independent_from_stats(stats: IndependentStats, weights: np.ndarray) -> IndependentFit:
    """Pooled per-lag OLS slopes for each row of ``weights`` (W x P).

    Pooling uses the parallel-axis identity so no raw second moments are
    ever differenced. Lags with no rows or no drug variance are undefined.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    N = w @ stats.n
    safe_N = np.where(N > 0, N, 1.0)
    mx = (w @ (stats.n * stats.mx)) / safe_N
    my = (w @ (stats.n * stats.my)) / safe_N
    # between-patient terms, W x P x L, reduced immediately
    dmx = stats.mx[None, :, :] - mx[:, None, :]
    dmy = stats.my[None, :, :] - my[:, None, :]
    nb = stats.n[None, :, :] * w[:, :, None]
    sxx = w @ stats.sxx + np.einsum("wpl,wpl->wl", nb, dmx * dmx)
    sxy = w @ stats.sxy + np.einsum("wpl,wpl->wl", nb, dmx * dmy)
    syy = w @ stats.syy + np.einsum("wpl,wpl->wl", nb, dmy * dmy)
    raw_xx = sxx + N * mx * mx
    undefined = (N < 2) | (sxx <= 1e-10 * np.maximum(raw_xx, np.finfo(float).tiny))
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.where(undefined, np.nan, sxy / np.where(undefined, 1.0, sxx))
        intercept = my - beta * mx
        resid = np.where(N > 2, (syy - beta * sxy) / np.where(N > 2, N - 2, 1.0), np.nan)
    return IndependentFit(beta, intercept, resid, N, undefined)


def fit_independent(timelines: Sequence[AlignedTimeline], spec: LagSpec) -> FitResult:
    """Separate two-column fits for tau = 1..L on the pooled rows.

    ``beta[tau-1]`` is NaN (and flagged in ``undefined``) when lag tau has no
    rows or the lagged drug channel has no variance.
    """
    tls = _ordered(timelines)
    stats = independent_stats(tls, spec.max_lag)
    fit = independent_from_stats(stats, np.ones((1, len(tls))))
    return FitResult(
        beta=fit.beta[0],
        intercept=fit.intercept[0],
        rows_used=int(fit.rows[0, 0]) if spec.max_lag else 0,
        effective_rank=int(2 * spec.max_lag - fit.undefined[0].sum()),
        resid_var=float(np.nanmean(fit.resid_var[0])) if np.any(np.isfinite(fit.resid_var[0])) else float("nan"),
        undefined=fit.undefined[0],
    )


def fit(timelines: Sequence[AlignedTimeline], spec: LagSpec) -> FitResult:
    if spec.model is Model.INDEPENDENT:
        return fit_independent(timelines, spec)
    return fit_joint(timelines, spec)
