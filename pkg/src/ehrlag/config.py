"""The six binary method axes and the 64-configuration grid."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .lagreg import Model
from .timeline import Parameterization

AXES = ("time", "binned", "normalized", "differenced", "context", "model")


@dataclass(frozen=True, order=False)
class MethodConfig:
    time: Parameterization = Parameterization.SEQUENCE
    binned: bool = False
    normalized: bool = True
    differenced: bool = True
    context: bool = False
    model: Model = Model.JOINT

    @property
    def sequence(self) -> bool:
        return self.time is Parameterization.SEQUENCE

    @property
    def key(self) -> str:
        """Canonical key, axes in reference-table order, e.g. ``seq.nobin.norm.diff.noctx.joint``."""
        return ".".join([
            "seq" if self.sequence else "real",
            "bin" if self.binned else "nobin",
            "norm" if self.normalized else "nonorm",
            "diff" if self.differenced else "nodiff",
            "ctx" if self.context else "noctx",
            "joint" if self.model is Model.JOINT else "indep",
        ])

    @classmethod
    def from_key(cls, key: str) -> "MethodConfig":
        parts = key.split(".")
        if len(parts) != 6:
            raise ValueError(f"bad config key {key!r}")
        t, b, n, d, c, m = parts
        if t not in ("seq", "real") or m not in ("joint", "indep"):
            raise ValueError(f"bad config key {key!r}")
        flags = []
        for part, on in zip((b, n, d, c), ("bin", "norm", "diff", "ctx")):
            if part not in (on, "no" + on):
                raise ValueError(f"bad config key {key!r}")
            flags.append(part == on)
        return cls(Parameterization.SEQUENCE if t == "seq" else Parameterization.CLOCK,
                   *flags, Model.JOINT if m == "joint" else Model.INDEPENDENT)

    def table_row(self) -> tuple[str, ...]:
        """Labels as in the reference table: Time, Binned, Normalized, Difference, Context, Estimation."""
        yn = lambda v: "Yes" if v else "No"  # noqa: E731
        return ("Sequence" if self.sequence else "Real", yn(self.binned), yn(self.normalized),
                yn(self.differenced), yn(self.context),
                "Joint AR" if self.model is Model.JOINT else "Independent")

    @classmethod
    def from_table_row(cls, row) -> "MethodConfig":
        t, b, n, d, c, m = (s.strip() for s in row)
        yes = lambda s: {"Yes": True, "No": False}[s]  # noqa: E731
        return cls(Parameterization.SEQUENCE if t == "Sequence" else Parameterization.CLOCK,
                   yes(b), yes(n), yes(d), yes(c),
                   Model.JOINT if m == "Joint AR" else Model.INDEPENDENT)

    def axis_value(self, axis: str):
        return getattr(self, axis)


def enumerate_grid() -> list[MethodConfig]:
    """All 2**6 configurations in a fixed canonical order."""
    out = []
    for t, b, n, d, c, m in itertools.product(
        (Parameterization.SEQUENCE, Parameterization.CLOCK),
        (False, True), (False, True), (False, True), (False, True),
        (Model.INDEPENDENT, Model.JOINT),
    ):
        out.append(MethodConfig(t, b, n, d, c, m))
    return out


_VALUE_ALIASES = {
    "time": {"sequence": Parameterization.SEQUENCE, "seq": Parameterization.SEQUENCE,
             "clock": Parameterization.CLOCK, "real": Parameterization.CLOCK},
    "model": {"joint": Model.JOINT, "joint_ar": Model.JOINT, "independent": Model.INDEPENDENT,
              "indep": Model.INDEPENDENT},
}
_BOOL = {"yes": True, "true": True, "1": True, "on": True, "no": False, "false": False, "0": False, "off": False}
_AXIS_ALIASES = {"time": "time", "binned": "binned", "bin": "binned", "normalized": "normalized",
                 "norm": "normalized", "differenced": "differenced", "diff": "differenced",
                 "difference": "differenced", "context": "context", "ctx": "context",
                 "model": "model", "estimation": "model"}


def parse_grid_filter(expr: str | None):
    """Compile a grid filter such as ``time=sequence,model=joint|independent,diff!=yes``.

    Comma-separated terms are ANDed; ``|`` separates alternatives within a
    term. Returns a predicate on :class:`MethodConfig`.
    """
    if expr is None or not expr.strip():
        return lambda cfg: True
    terms = []
    for raw in expr.split(","):
        m = re.fullmatch(r"\s*(\w+)\s*(!=|=)\s*([\w|]+)\s*", raw)
        if not m:
            raise ValueError(f"bad grid filter term {raw!r}")
        axis, op, values = m.groups()
        axis = _AXIS_ALIASES.get(axis.lower())
        if axis is None:
            raise ValueError(f"unknown axis in {raw!r}")
        table = _VALUE_ALIASES.get(axis, _BOOL)
        try:
            allowed = {table[v.lower()] for v in values.split("|")}
        except KeyError as exc:
            raise ValueError(f"unknown value {exc.args[0]!r} for axis {axis}") from None
        terms.append((axis, op == "=", allowed))

    def pred(cfg: MethodConfig) -> bool:
        return all((getattr(cfg, a) in allowed) == positive for a, positive, allowed in terms)

    return pred
