"""Encoding labeled specs as a weighted optimization instance.

One Boolean variable per distinct property (true = the policy allows it).
A benign app contributes a clause satisfied when *all* its properties are
allowed; a malware app contributes a clause satisfied when *at least one*
of its properties is denied.  Maximizing satisfied weight is the same as
maximizing allowed benign minus allowed malware, up to a constant.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

from .model import AppSpec, FormatError, Label, Property, ResourceKind, common_kind

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Clause:
    app_id: str
    vars: frozenset
    weight: Rational

    @property
    def mask(self) -> int:
        m = 0
        for v in self.vars:
            m |= 1 << v
        return m


@dataclass(frozen=True)
class MaxSatInstance:
    """Weighted clause set over properties.

    ``base_weight`` is the weight of benign apps with empty specs: they are
    always allowed, so they carry no clause but still count toward ``score``
    and ``total_weight``.  Empty-spec malware can never be blocked and is
    dropped entirely (see ``warnings``).
    """

    vars: tuple
    benign_clauses: tuple
    malware_clauses: tuple
    base_weight: Rational = 0
    resource_kind: ResourceKind | None = None
    warnings: tuple = ()
    malware_total: int = 0
    w_malware: Rational = 1
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {p: i for i, p in enumerate(self.vars)})

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @property
    def clauses(self) -> tuple:
        return self.benign_clauses + self.malware_clauses

    @property
    def total_weight(self):
        return self.base_weight + sum(c.weight for c in self.clauses)


def _check_weight(w, name):
    if isinstance(w, bool) or not isinstance(w, Rational):
        try:
            w = Fraction(w)
        except (TypeError, ValueError):
            raise ValueError(f"{name} must be a positive rational, got {w!r}") from None
    if w <= 0:
        raise ValueError(f"{name} must be positive, got {w}")
    return w


def build_instance(benign: Sequence[AppSpec], malware: Sequence[AppSpec],
                   w_b=1, w_m=1) -> MaxSatInstance:
    w_b = _check_weight(w_b, "w_b")
    w_m = _check_weight(w_m, "w_m")
    kind = common_kind(list(benign) + list(malware))
    for s in benign:
        if s.label is not Label.BENIGN:
            raise ValueError(f"{s.app_id}: label {s.label.value} in the benign list")
    for s in malware:
        if s.label is not Label.MALWARE:
            raise ValueError(f"{s.app_id}: label {s.label.value} in the malware list")

    props = set()
    for s in list(benign) + list(malware):
        props |= s.properties
    variables = tuple(sorted(props))
    index = {p: i for i, p in enumerate(variables)}

    base = 0
    ben, mal, warnings = [], [], []
    for s in benign:
        if not s.properties:
            base += w_b
            continue
        ben.append(Clause(s.app_id, frozenset(index[p] for p in s.properties), w_b))
    for s in malware:
        if not s.properties:
            msg = f"{s.app_id}: malware with empty spec can never be blocked; clause dropped"
            log.info(msg)
            warnings.append(msg)
            continue
        mal.append(Clause(s.app_id, frozenset(index[p] for p in s.properties), w_m))
    return MaxSatInstance(variables, tuple(ben), tuple(mal), base, kind, tuple(warnings),
                          len(malware), w_m, index)


def _check_assignment(inst: MaxSatInstance, a) -> None:
    if len(a) != inst.n_vars:
        raise ValueError(f"assignment has length {len(a)}, instance has {inst.n_vars} vars")


def benign_satisfied(clause: Clause, a) -> bool:
    return all(a[v] for v in clause.vars)


def malware_satisfied(clause: Clause, a) -> bool:
    return not all(a[v] for v in clause.vars)


def score(inst: MaxSatInstance, a) -> Rational:
    """Total weight of satisfied clauses under assignment ``a``."""
    _check_assignment(inst, a)
    total = inst.base_weight
    total += sum(c.weight for c in inst.benign_clauses if benign_satisfied(c, a))
    total += sum(c.weight for c in inst.malware_clauses if malware_satisfied(c, a))
    return total


def _as_int(w, what):
    if isinstance(w, int) or (isinstance(w, Rational) and w.denominator == 1):
        return int(w)
    raise ValueError(f"{what} weight {w} is not an integer; rescale before export")


def export_wcnf(inst: MaxSatInstance) -> str:
    """Weighted partial DIMACS text (``p wcnf`` header with explicit top).

    Property ``i`` becomes DIMACS variable ``i + 1``.  Each benign clause
    gets an auxiliary variable ``y`` with hard clauses ``-y x`` for every
    member and a soft unit ``y``; malware clauses are soft disjunctions of
    negated members.
    """
    n = inst.n_vars
    soft_b = [_as_int(c.weight, c.app_id) for c in inst.benign_clauses]
    soft_m = [_as_int(c.weight, c.app_id) for c in inst.malware_clauses]
    top = 1 + sum(soft_b) + sum(soft_m)
    lines = []
    for i, p in enumerate(inst.vars):
        lines.append(f"c var {i + 1} = {p.to_token()}")
    body = []
    for j, (clause, w) in enumerate(zip(inst.benign_clauses, soft_b)):
        y = n + 1 + j
        lines.append(f"c aux {y} = benign {clause.app_id}")
        for v in sorted(clause.vars):
            body.append(f"{top} -{y} {v + 1} 0")
        body.append(f"{w} {y} 0")
    for clause, w in zip(inst.malware_clauses, soft_m):
        lits = " ".join(f"-{v + 1}" for v in sorted(clause.vars))
        body.append(f"{w} {lits} 0")
    nvars = n + len(inst.benign_clauses)
    lines.append(f"p wcnf {nvars} {len(body)} {top}")
    lines.extend(body)
    return "\n".join(lines) + "\n"


def property_index(inst: MaxSatInstance, p: Property) -> int:
    try:
        return inst.index[p]
    except KeyError:
        raise FormatError(f"property {p} is not a variable of this instance") from None
