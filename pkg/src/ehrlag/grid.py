"""Running the 64-configuration grid over cohorts, with a resumable results store.

Layout of a results directory::

    manifest.json            study summary, cohorts, configs, cell digests
    cells/<digest>.json      one (cohort, config) lag profile + classifications
    reports/...              tables and plot data written by :func:`report`

Cell digests cover the cohort content, the config, L, B, the seed and the
code version, so unchanged cells are skipped on rerun.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .cohort import Cohort, GoldStandard, load_gold_standard, write_gold_standard
from .config import MethodConfig
from .evaluate import (AurocReport, compare_groups, fold_pairs, auroc_samples,
                       pearson_fisher, roc_points, score_predictions)
from .inference import (BootstrapSpec, LagProfile, classify_profile, classify_samples,
                        profile_from_timelines, resample_weights, stream_id)
from .lagreg import Model
from .study import Study, load_inputs
from .timeline import build_timeline
from .transform import InsufficientDataError, apply_transforms

logger = logging.getLogger(__name__)


@dataclass
class CellResult:
    pair_id: tuple[str, str]
    config: MethodConfig
    profile: LagProfile
    direction: int
    sample_directions: np.ndarray
    digest: str = ""

    def to_json(self, include_samples: bool = False) -> dict:
        p = self.profile
        out = {
            "digest": self.digest,
            "drug": self.pair_id[0],
            "lab": self.pair_id[1],
            "config": self.config.key,
            "direction": int(self.direction),
            "sample_directions": [int(v) for v in self.sample_directions],
            "beta_hat": [_num(v) for v in p.beta_hat],
            "sigma": [_num(v) for v in p.sigma],
            "rows": p.rows,
            "patients": p.patients_used,
            "seed": p.seed,
            "flags": list(p.flags),
        }
        if include_samples:
            out["samples"] = [[_num(v) for v in row] for row in p.samples]
        return out

    @classmethod
    def from_json(cls, d: dict) -> "CellResult":
        beta = np.array([_unnum(v) for v in d["beta_hat"]])
        sigma = np.array([_unnum(v) for v in d["sigma"]])
        samples = np.array([[_unnum(v) for v in r] for r in d.get("samples", [])]) \
            if d.get("samples") else np.empty((0, len(beta)))
        prof = LagProfile(beta, sigma, samples, ~(np.isfinite(beta) & np.isfinite(sigma)),
                          d["config"], d["seed"], d["rows"], d["patients"], tuple(d.get("flags", ())))
        return cls((d["drug"], d["lab"]), MethodConfig.from_key(d["config"]), prof, d["direction"],
                   np.array(d["sample_directions"], dtype=np.int64), d["digest"])


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _unnum(v):
    return float("nan") if v is None else float(v)


def cell_digest(cohort_digest: str, config: MethodConfig, max_lag: int, boot: BootstrapSpec,
                extra: str = "") -> str:
    payload = json.dumps({"cohort": cohort_digest, "config": config.key, "L": max_lag,
                          "B": boot.replicates, "seed": boot.seed, "version": __version__,
                          "extra": extra}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def run_cohort(cohort: Cohort, configs: Sequence[MethodConfig], max_lag: int = 30,
               boot: BootstrapSpec = BootstrapSpec(), point: str = "full",
               normalize_all_channels: bool = False) -> dict[str, CellResult]:
    """Lag profiles and classifications for every config on one cohort.

    Timelines and transforms are shared between configs that agree on the
    relevant axes. All configs use the same patient draws, so replicate b is
    the same resampled cohort under every method.
    """
    pids = sorted(cohort.patients)
    stream = (stream_id("/".join(cohort.pair_id)),)
    W_all = resample_weights(len(pids), boot, stream)

    built: dict[tuple, list] = {}
    transformed: dict[tuple, tuple[list, np.ndarray]] = {}
    results = {}
    for cfg in configs:
        tkey = (cfg.sequence, cfg.binned, cfg.context)
        if tkey not in built:
            built[tkey] = [build_timeline(cohort.patients[p], sequence=cfg.sequence, binned=cfg.binned,
                                          context=cfg.context) for p in pids]
        xkey = tkey + (cfg.normalized, cfg.differenced)
        if xkey not in transformed:
            tls, keep = [], []
            for i, tl in enumerate(built[tkey]):
                try:
                    tls.append(apply_transforms(tl, normalized=cfg.normalized, differenced=cfg.differenced,
                                                normalize_all_channels=normalize_all_channels))
                    keep.append(i)
                except InsufficientDataError:
                    pass
            transformed[xkey] = (tls, np.array(keep, dtype=np.int64))
        tls, keep = transformed[xkey]
        prof = profile_from_timelines(tls, cfg, W_all[:, keep], max_lag, point, boot.seed)
        results[cfg.key] = CellResult(cohort.pair_id, cfg, prof, classify_profile(prof),
                                      classify_samples(prof))
    return results


# --------------------------------------------------------------------------
# results store


class StoreError(RuntimeError):
    """Results store is inconsistent (digest mismatch) or incomplete."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _cell_path(store: Path, digest: str) -> Path:
    return store / "cells" / f"{digest}.json"


def _load_cell(store: Path, digest: str, pair_id, cfg: MethodConfig) -> CellResult | None:
    path = _cell_path(store, digest)
    if not path.exists():
        return None
    try:
        cell = CellResult.from_json(json.loads(path.read_text()))
    except (ValueError, KeyError) as exc:
        raise StoreError(f"{path}: unreadable cell ({exc})") from None
    if cell.digest != digest or tuple(cell.pair_id) != tuple(pair_id) or cell.config != cfg:
        raise StoreError(f"{path}: digest mismatch (file holds {cell.digest[:12]} "
                         f"{cell.pair_id[0]}/{cell.pair_id[1]} {cell.config.key})")
    return cell


def _run_task(args):
    cohort, configs, max_lag, boot, point = args
    return run_cohort(cohort, configs, max_lag, boot, point)


def run_grid(study: Study, out: Path | None = None, workers: int | None = None,
             progress: Callable[[int, int], None] | None = None) -> Path:
    """Run every cohort x config of a study into a results store; returns its path.

    Cells whose digest already exists in the store are reused. Work is split
    by cohort over ``workers`` processes; results are written in study order,
    so the store does not depend on the worker count.
    """
    store = Path(out) if out is not None else study.resolve(study.out)
    (store / "cells").mkdir(parents=True, exist_ok=True)
    (store / "gold").mkdir(exist_ok=True)
    cohorts, golds = load_inputs(study)
    configs = study.configs()
    boot = BootstrapSpec(study.replicates, study.seed)
    extra = f"point={study.point}"

    pending, cells = [], {}
    for c in cohorts:
        cdig = c.digest()
        todo = []
        for cfg in configs:
            d = cell_digest(cdig, cfg, study.max_lag, boot, extra)
            cell = _load_cell(store, d, c.pair_id, cfg)
            if cell is None:
                todo.append(cfg)
            cells[(c.pair_id, cfg.key)] = d
        if todo:
            pending.append((c, todo, cdig))
    total = len(cohorts) * len(configs)
    skipped = total - sum(len(t) for _, t, _ in pending)
    logger.info("%s: %d cells, %d cached, %d to run", study.name, total, skipped, total - skipped)

    done = skipped
    if progress:
        progress(done, total)
    tasks = [(c, todo, study.max_lag, boot, study.point) for c, todo, _ in pending]
    n_workers = min(workers or os.cpu_count() or 1, max(len(tasks), 1))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            outputs = pool.map(_run_task, tasks)
            _write_cells(store, pending, outputs, study, boot, extra, total, done, progress)
    else:
        _write_cells(store, pending, map(_run_task, tasks), study, boot, extra, total, done, progress)

    for g in golds:
        write_gold_standard(store / "gold" / f"{g.label}.csv", g)
    manifest = {
        "name": study.name,
        "version": __version__,
        "max_lag": study.max_lag,
        "replicates": study.replicates,
        "seed": study.seed,
        "point": study.point,
        "scheme": study.scheme,
        "golds": [g.label for g in golds],
        "configs": [cfg.key for cfg in configs],
        "cohorts": [{"drug": c.pair_id[0], "lab": c.pair_id[1], "digest": c.digest(),
                     "patients": len(c)} for c in cohorts],
        "cells": {f"{p[0]}/{p[1]}/{k}": d for (p, k), d in cells.items()},
    }
    (store / "manifest.json").write_text(_dump(manifest))
    return store


def _write_cells(store, pending, outputs, study, boot, extra, total, done, progress):
    # outputs arrive in task order whatever the pool's scheduling
    for (cohort, todo, cdig), res in zip(pending, outputs):
        for cfg in todo:
            cell = res[cfg.key]
            cell.digest = cell_digest(cdig, cfg, study.max_lag, boot, extra)
            _cell_path(store, cell.digest).write_text(_dump(cell.to_json()))
        done += len(todo)
        logger.info("%s/%s done (%d/%d cells)", cohort.pair_id[0], cohort.pair_id[1], done, total)
        if progress:
            progress(done, total)


# --------------------------------------------------------------------------
# reports


@dataclass
class StoreContents:
    manifest: dict
    golds: list[GoldStandard]
    configs: list[MethodConfig]
    pairs: list[tuple[str, str]]
    cells: dict[tuple[tuple[str, str], str], CellResult]


def load_store(store) -> StoreContents:
    store = Path(store)
    mpath = store / "manifest.json"
    if not mpath.exists():
        raise StoreError(f"{store}: no manifest.json; run the grid first")
    manifest = json.loads(mpath.read_text())
    configs = [MethodConfig.from_key(k) for k in manifest["configs"]]
    pairs = [(c["drug"], c["lab"]) for c in manifest["cohorts"]]
    cells = {}
    for pair in pairs:
        for cfg in configs:
            d = manifest["cells"].get(f"{pair[0]}/{pair[1]}/{cfg.key}")
            cell = _load_cell(store, d, pair, cfg) if d else None
            if cell is None:
                raise StoreError(f"incomplete store: no cell for {pair[0]}/{pair[1]} {cfg.key}")
            cells[(pair, cfg.key)] = cell
    golds = [load_gold_standard(store / "gold" / f"{g}.csv", g) for g in manifest["golds"]]
    return StoreContents(manifest, golds, configs, pairs, cells)


def auroc_reports(contents: StoreContents, scheme: str | None = None) -> dict[str, dict[str, AurocReport]]:
    """AurocReport per gold label and config key."""
    scheme = scheme or contents.manifest.get("scheme", "folded")
    out = {}
    for g in contents.golds:
        per = {}
        for cfg in contents.configs:
            preds = {p: contents.cells[(p, cfg.key)].direction for p in g.entries}
            samples = {p: contents.cells[(p, cfg.key)].sample_directions for p in g.entries}
            draws, _ = auroc_samples(samples, g, scheme)
            per[cfg.key] = AurocReport(cfg, g.label, score_predictions(g, preds, scheme), draws)
        out[g.label] = per
    return out


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.6f}"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def canonical_contrasts(configs: Sequence[MethodConfig]) -> list[tuple[str, list[str], list[str]]]:
    """Named (group A, group B) config-key splits reported for every gold."""
    keys = {c.key: c for c in configs}
    J, D = Model.JOINT, lambda c: c.differenced  # noqa: E731

    def sel(f):
        return [k for k, c in keys.items() if f(c)]

    preferred = sel(lambda c: c.sequence and ((c.model is J) == D(c)))
    out = [
        ("sequence vs real time", sel(lambda c: c.sequence), sel(lambda c: not c.sequence)),
        ("joint: differenced vs undifferenced", sel(lambda c: c.model is J and D(c)),
         sel(lambda c: c.model is J and not D(c))),
        ("independent: differenced vs undifferenced", sel(lambda c: c.model is not J and D(c)),
         sel(lambda c: c.model is not J and not D(c))),
        ("differencing x model: matched vs mismatched", sel(lambda c: (c.model is J) == D(c)),
         sel(lambda c: (c.model is J) != D(c))),
        ("preferred set vs complement", preferred, sel(lambda c: c.key not in preferred)),
    ]
    return [(name, a, b) for name, a, b in out if a and b]


def report(store, svg: bool = False) -> list[Path]:
    """Write tables and plot data under ``<store>/reports``; returns the files written."""
    store = Path(store)
    contents = load_store(store)
    reports = auroc_reports(contents)
    labels = [g.label for g in contents.golds]
    rdir = store / "reports"
    rdir.mkdir(exist_ok=True)
    written = []

    def put(name, text):
        p = rdir / name
        p.write_text(text)
        written.append(p)

    # grid table, sorted by descending AUROC on the expert gold (else the first gold)
    lead = "expert" if "expert" in labels else labels[0]
    order = sorted(contents.configs, key=lambda c: -reports[lead][c.key].auroc)
    header = ["time", "binned", "normalized", "difference", "context", "estimation"]
    for lab in labels:
        header += [f"auroc_{lab}", f"sd_{lab}"]
    rows = []
    for cfg in order:
        row = list(cfg.table_row())
        for lab in labels:
            r = reports[lab][cfg.key]
            row += [_fmt(r.auroc), _fmt(r.sd)]
        rows.append(row)
    put("grid_table.csv", _csv(rows, header))

    # per-draw AUROCs, so contrasts can be recomputed without the cells
    for lab in labels:
        B = len(next(iter(reports[lab].values())).samples)
        put(f"auroc_draws_{lab}.csv", _csv(
            [[cfg.key] + [_fmt(v) for v in reports[lab][cfg.key].samples] for cfg in contents.configs],
            ["config"] + [f"b{i}" for i in range(B)]))

    roc_rows = []
    for lab in labels:
        g = next(x for x in contents.golds if x.label == lab)
        for cfg in contents.configs:
            preds = {p: contents.cells[(p, cfg.key)].direction for p in g.entries}
            for fpr, tpr in roc_points(*fold_pairs(g, preds)):
                roc_rows.append([lab, cfg.key, _fmt(fpr), _fmt(tpr)])
    put("roc_points.csv", _csv(roc_rows, ["gold", "config", "fpr", "tpr"]))

    traj = []
    for pair in contents.pairs:
        for cfg in contents.configs:
            p = contents.cells[(pair, cfg.key)].profile
            lo, hi = p.bands()
            for t in range(p.max_lag):
                traj.append([pair[0], pair[1], cfg.key, t + 1, _fmt(p.beta_hat[t]), _fmt(p.sigma[t]),
                             _fmt(lo[t]), _fmt(hi[t])])
    put("trajectories.csv", _csv(traj, ["drug", "lab", "config", "tau", "beta_hat", "sigma", "lower", "upper"]))

    put("classifications.csv", _csv(
        [[pair[0], pair[1], cfg.key, contents.cells[(pair, cfg.key)].direction]
         for pair in contents.pairs for cfg in contents.configs], ["drug", "lab", "config", "direction"]))

    contrast_rows = []
    for lab in labels:
        for name, a, b in canonical_contrasts(contents.configs):
            c = compare_groups(a, b, reports[lab])
            contrast_rows.append([lab, name, c.n_a, c.n_b, _fmt(c.difference), _fmt(c.lower), _fmt(c.upper)])
    put("contrasts.csv", _csv(contrast_rows, ["gold", "contrast", "n_a", "n_b", "difference", "lower", "upper"]))

    if len(labels) >= 2:
        a, b = labels[0], labels[1]
        xs = [reports[a][c.key].auroc for c in contents.configs]
        ys = [reports[b][c.key].auroc for c in contents.configs]
        put("scatter.csv", _csv([[c.key, _fmt(x), _fmt(y)] for c, x, y in zip(contents.configs, xs, ys)],
                                ["config", f"auroc_{a}", f"auroc_{b}"]))
        try:
            r = pearson_fisher(xs, ys)
            summary = [[a, b, r.n, _fmt(r.r), _fmt(r.lower), _fmt(r.upper)]]
        except ValueError:
            summary = [[a, b, len(xs), "nan", "nan", "nan"]]
        put("scatter_summary.csv", _csv(summary, ["x", "y", "n", "r", "lower", "upper"]))

    if svg:
        from .plots import render_svgs
        written += render_svgs(rdir, contents, reports, lead, order)
    return written
