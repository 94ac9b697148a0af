"""Study files: which cohorts, which gold standards, and the grid settings.

A study is a TOML file. Cohorts come either from event files::

    [study]
    name = "my-study"
    max_lag = 30
    replicates = 200
    seed = 0
    out = "results"

    [[cohorts]]
    drug = "Warfarin"
    lab = "INR"
    events = "events/warfarin_inr.csv"

    [gold]
    expert = "gold/expert.csv"
    kb = "shipped:knowledge-base"

or from the synthetic generator, in which case a ``[synth]`` table holds
:class:`~ehrlag.synth.SynthSpec` overrides and the synthetic gold standard
is added first. Relative paths resolve against the study file's directory.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cohort import Cohort, GoldStandard, ingest_events, filter_eligible, load_gold_standard, shipped_gold_standard
from .config import MethodConfig, enumerate_grid, parse_grid_filter
from .synth import SynthSpec, generate_grid_study


class StudyError(ValueError):
    """Invalid or incomplete study configuration."""


@dataclass(frozen=True)
class CohortSource:
    drug: str
    lab: str
    events: Path


@dataclass(frozen=True)
class Study:
    name: str = "study"
    max_lag: int = 30
    replicates: int = 200
    seed: int = 0
    grid: str = ""
    point: str = "full"
    scheme: str = "folded"
    out: Path = Path("results")
    cohorts: tuple[CohortSource, ...] = ()
    synth: SynthSpec | None = None
    synth_template: str = "expert"
    golds: tuple[tuple[str, str], ...] = ()
    base_dir: Path = field(default=Path("."), compare=False)

    def configs(self) -> list[MethodConfig]:
        pred = parse_grid_filter(self.grid)
        out = [c for c in enumerate_grid() if pred(c)]
        if not out:
            raise StudyError(f"grid filter {self.grid!r} selects no configurations")
        return out

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


_STUDY_KEYS = {"name", "max_lag", "replicates", "seed", "grid", "point", "scheme", "out"}


def load_study(path, **overrides) -> Study:
    """Parse a study file. ``overrides`` (e.g. ``seed=3``) replace [study] values."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise StudyError(f"{path}: no such study file") from None
    except tomllib.TOMLDecodeError as exc:
        raise StudyError(f"{path}: {exc}") from None
    return study_from_dict(doc, base_dir=path.resolve().parent, **overrides)


def study_from_dict(doc: dict, base_dir=Path("."), **overrides) -> Study:
    unknown = set(doc) - {"study", "cohorts", "synth", "gold"}
    if unknown:
        raise StudyError(f"unknown sections: {sorted(unknown)}")
    head = dict(doc.get("study", {}))
    bad = set(head) - _STUDY_KEYS
    if bad:
        raise StudyError(f"unknown [study] keys: {sorted(bad)}")
    head.update({k: v for k, v in overrides.items() if v is not None})
    if "out" in head:
        head["out"] = Path(head["out"])

    cohorts = []
    for i, c in enumerate(doc.get("cohorts", [])):
        try:
            cohorts.append(CohortSource(str(c["drug"]), str(c["lab"]), Path(c["events"])))
        except KeyError as exc:
            raise StudyError(f"cohorts[{i}] lacks {exc.args[0]!r}") from None

    synth = None
    template = "expert"
    if "synth" in doc:
        s = dict(doc["synth"])
        template = s.pop("template", template)
        names = {f.name for f in fields(SynthSpec)}
        bad = set(s) - names
        if bad:
            raise StudyError(f"unknown [synth] keys: {sorted(bad)}")
        s.setdefault("seed", head.get("seed", 0))
        try:
            synth = SynthSpec(**s)
        except (TypeError, ValueError) as exc:
            raise StudyError(f"[synth]: {exc}") from None
    if synth is None and not cohorts:
        raise StudyError("study needs [[cohorts]] or a [synth] table")
    if synth is not None and cohorts:
        raise StudyError("use either [[cohorts]] or [synth], not both")

    golds = tuple((str(k), str(v)) for k, v in doc.get("gold", {}).items())
    if synth is None and not golds:
        raise StudyError("no gold standards given")
    try:
        study = Study(cohorts=tuple(cohorts), synth=synth, synth_template=template, golds=golds,
                      base_dir=Path(base_dir), **head)
    except TypeError as exc:
        raise StudyError(str(exc)) from None
    if study.max_lag < 1 or study.replicates < 2:
        raise StudyError("max_lag must be >= 1 and replicates >= 2")
    if study.point not in ("full", "mean") or study.scheme not in ("folded", "ordinal"):
        raise StudyError("point must be full|mean and scheme folded|ordinal")
    study.configs()
    return study


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def study_to_toml(study: Study) -> str:
    lines = ["[study]"]
    for k in ("name", "max_lag", "replicates", "seed", "grid", "point", "scheme"):
        lines.append(f"{k} = {_toml_value(getattr(study, k))}")
    lines.append(f"out = {_toml_value(study.out.as_posix())}")
    if study.synth is not None:
        lines += ["", "[synth]", f"template = {_toml_value(study.synth_template)}"]
        lines += [f"{k} = {_toml_value(v)}" for k, v in study.synth.to_dict().items()]
    for c in study.cohorts:
        lines += ["", "[[cohorts]]", f"drug = {_toml_value(c.drug)}", f"lab = {_toml_value(c.lab)}",
                  f"events = {_toml_value(Path(c.events).as_posix())}"]
    if study.golds:
        lines += ["", "[gold]"] + [f"{_toml_value(k)} = {_toml_value(v)}" for k, v in study.golds]
    return "\n".join(lines) + "\n"


def _load_gold(study: Study, label: str, ref: str) -> GoldStandard:
    if ref.startswith("shipped:"):
        try:
            g = shipped_gold_standard(ref.split(":", 1)[1])
        except KeyError:
            raise StudyError(f"unknown shipped gold standard {ref!r}") from None
        return GoldStandard(g.entries, label)
    p = study.resolve(ref)
    if not p.exists():
        raise StudyError(f"gold standard file {p} not found")
    return load_gold_standard(p, label)


def load_inputs(study: Study) -> tuple[list[Cohort], list[GoldStandard]]:
    """Cohorts (eligibility-filtered, in study order) and gold standards."""
    golds = []
    if study.synth is not None:
        try:
            template = shipped_gold_standard(study.synth_template)
        except KeyError:
            raise StudyError(f"unknown synth template {study.synth_template!r}") from None
        specs = [(pair, replace(study.synth, effect_direction=d)) for pair, d in template.entries.items()]
        cohorts, gold = generate_grid_study(specs, study.synth)
        golds.append(gold)
    else:
        cohorts = []
        for c in study.cohorts:
            p = study.resolve(c.events)
            if not p.exists():
                raise StudyError(f"event file {p} not found")
            cohorts.append(filter_eligible(ingest_events(p), (c.drug, c.lab), str(c.events)))
    golds += [_load_gold(study, label, ref) for label, ref in study.golds]
    labels = [g.label for g in golds]
    if len(set(labels)) != len(labels):
        raise StudyError(f"duplicate gold labels {labels}")
    pairs = {c.pair_id for c in cohorts}
    if len(pairs) != len(cohorts):
        raise StudyError("duplicate drug/lab pairs among cohorts")
    for g in golds:
        missing = [k for k in g.entries if k not in pairs]
        if missing:
            raise StudyError(f"gold {g.label!r} names pairs without a cohort, e.g. {missing[0]}")
    return cohorts, golds
