"""Command-line front end: ``ehrlag {synth,ingest,run,report,compare,kappa}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .cohort import (IngestError, filter_eligible, ingest_events, load_gold_standard, shipped_gold_standard,
                     write_events, write_gold_standard)
from .config import parse_grid_filter
from .evaluate import DegenerateGoldError, cohens_kappa, compare_groups
from .grid import StoreError, auroc_reports, load_store, report, run_grid
from .study import CohortSource, StudyError, load_study, study_from_dict, study_to_toml, load_inputs

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

logger = logging.getLogger("ehrlag")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def default_study_text() -> str:
    return resources.files("ehrlag.data").joinpath("default_study.toml").read_text()


def _study(args):
    overrides = dict(seed=args.seed, replicates=getattr(args, "replicates", None), grid=getattr(args, "grid", None))
    if args.study:
        return load_study(args.study, **overrides)
    return study_from_dict(tomllib.loads(default_study_text()), base_dir=Path.cwd(), **overrides)


def cmd_synth(args) -> int:
    study = _study(args)
    if study.synth is None:
        raise StudyError("synth needs a study with a [synth] table")
    if args.seed is not None:
        study = replace(study, synth=replace(study.synth, seed=args.seed))
    out = Path(args.out or "synthetic-study")
    (out / "events").mkdir(parents=True, exist_ok=True)
    (out / "gold").mkdir(exist_ok=True)
    cohorts, golds = load_inputs(study)
    sources = []
    for c in cohorts:
        name = f"{c.pair_id[0]}_{c.pair_id[1]}".replace(" ", "-").replace("/", "-")
        rel = Path("events") / f"{name}.csv"
        write_events(out / rel, c.patients)
        sources.append(CohortSource(c.pair_id[0], c.pair_id[1], rel))
    gold_refs = []
    for g in golds:
        rel = Path("gold") / f"{g.label}.csv"
        write_gold_standard(out / rel, g)
        gold_refs.append((g.label, rel.as_posix()))
    files_study = replace(study, cohorts=tuple(sources), synth=None, golds=tuple(gold_refs), out=Path("results"))
    (out / "study.toml").write_text(study_to_toml(files_study))
    print(f"wrote {len(cohorts)} cohorts and {len(golds)} gold standards to {out}; study file {out / 'study.toml'}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    status = EXIT_OK
    for path in args.events:
        try:
            cand = ingest_events(path)
        except IngestError as exc:
            print(f"INVALID {exc}", file=sys.stderr)
            status = EXIT_INVALID
            continue
        cohort = filter_eligible(cand)
        print(f"ok {path}: {len(cand.patients)} patients, {cand.n_events} events, "
              f"{cohort.eligibility.retained} eligible, {cohort.eligibility.dropped} dropped")
    for path in args.gold or ():
        try:
            g = load_gold_standard(path)
        except IngestError as exc:
            print(f"INVALID {exc}", file=sys.stderr)
            status = EXIT_INVALID
            continue
        c = g.counts()
        print(f"ok {path}: {len(g)} pairs (+1: {c[1]}, -1: {c[-1]}, 0: {c[0]})")
    return status


def _progress(done, total):
    print(f"\r{done}/{total} cells", end="\n" if done == total else "", file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    study = _study(args)
    store = run_grid(study, out=Path(args.out) if args.out else None, workers=args.workers,
                     progress=None if args.quiet else _progress)
    print(f"results store: {store}")
    return EXIT_OK


def _store_path(args) -> Path:
    if args.out:
        return Path(args.out)
    study = _study(args)
    return study.resolve(study.out)


def cmd_report(args) -> int:
    files = report(_store_path(args), svg=args.svg)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_compare(args) -> int:
    contents = load_store(_store_path(args))
    reports = auroc_reports(contents)
    pa = parse_grid_filter(args.a)
    a = [c.key for c in contents.configs if pa(c)]
    if args.b:
        pb = parse_grid_filter(args.b)
        b = [c.key for c in contents.configs if pb(c)]
    else:
        b = [c.key for c in contents.configs if c.key not in a]
    labels = [args.gold] if args.gold else list(reports)
    print("gold,n_a,n_b,difference,lower,upper")
    for lab in labels:
        if lab not in reports:
            raise StudyError(f"no gold standard {lab!r} in store (have {sorted(reports)})")
        c = compare_groups(a, b, reports[lab])
        print(f"{lab},{c.n_a},{c.n_b},{c.difference:.6f},{c.lower:.6f},{c.upper:.6f}")
    return EXIT_OK


def _gold(ref: str):
    return shipped_gold_standard(ref) if ref in ("expert", "kb", "knowledge-base") else load_gold_standard(ref)


def cmd_kappa(args) -> int:
    a, b = _gold(args.a), _gold(args.b)
    if set(a.entries) != set(b.entries):
        raise StudyError("gold standards cover different pairs")
    keys = list(a.entries)
    res = cohens_kappa([a.entries[k] for k in keys], [b.entries[k] for k in keys],
                       weighting=args.weighting, resamples=args.resamples, seed=args.seed or 0)
    agree = round(res.observed_agreement * len(keys))
    print(f"pairs={len(keys)} agreement={agree}/{len(keys)} ({res.observed_agreement:.3f}) "
          f"kappa={res.kappa:.4f} 95% CI [{res.lower:.4f}, {res.upper:.4f}] ({args.weighting})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehrlag", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        sp.add_argument("--study", help="study TOML file (default: the packaged synthetic study)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (overrides the study)")
        if grid:
            sp.add_argument("--replicates", type=int, help="bootstrap replicates B")
            sp.add_argument("--grid", help="config filter, e.g. 'time=sequence,model=joint'")

    s = sub.add_parser("synth", help="generate a synthetic study (event files, gold, study.toml)")
    common(s, grid=False)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="validate event (and gold) files")
    s.add_argument("events", nargs="*", help="event files")
    s.add_argument("--gold", action="append", help="gold-standard file (repeatable)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("run", help="run the configuration grid into a results store")
    common(s)
    s.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="write tables and plot data from a results store")
    common(s)
    s.add_argument("--svg", action="store_true", help="also render SVG charts (needs matplotlib)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("compare", help="mean-AUROC contrast between two config groups")
    common(s)
    s.add_argument("--a", required=True, help="filter selecting group A")
    s.add_argument("--b", help="filter selecting group B (default: complement of A)")
    s.add_argument("--gold", help="gold label (default: all)")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("kappa", help="agreement between two gold standards")
    s.add_argument("--a", default="kb", help="gold file, or 'kb' / 'expert' for the shipped ones")
    s.add_argument("--b", default="expert")
    s.add_argument("--weighting", choices=("unweighted", "linear"), default="unweighted")
    s.add_argument("--resamples", type=int, default=2000)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_kappa)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StudyError, IngestError, DegenerateGoldError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StoreError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
