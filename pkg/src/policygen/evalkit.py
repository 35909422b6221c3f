"""Evaluation metrics and reproducible synthetic corpora.

Random draws use numpy's PCG64 bit generator, seeded explicitly.  PCG64's
output stream is fixed by numpy's compatibility policy for a given seed, so
generated corpora are identical across platforms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ingest import AppGraph, MethodNode, PermissionMap
from .model import (
    LIFECYCLE_CONTEXTS,
    AppSpec,
    Context,
    Label,
    Property,
    Resource,
    ResourceKind,
    common_kind,
)
from .policy import Policy, check


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class EvalReport:
    malware_total: int
    malware_filtered: int
    benign_total: int
    benign_excluded: int
    per_rule_hits: dict = field(default_factory=dict, hash=False)
    name: str = "policy"

    @property
    def detection_rate(self) -> Fraction:
        return Fraction(self.malware_filtered, self.malware_total) if self.malware_total else Fraction(0)

    @property
    def false_positive_rate(self) -> Fraction:
        return Fraction(self.benign_excluded, self.benign_total) if self.benign_total else Fraction(0)

    def to_json(self) -> dict:
        return {
            "policy": self.name,
            "malware_total": self.malware_total,
            "malware_filtered": self.malware_filtered,
            "benign_total": self.benign_total,
            "benign_excluded": self.benign_excluded,
            "detection_rate": float(self.detection_rate),
            "false_positive_rate": float(self.false_positive_rate),
            "detection": percent(self.detection_rate),
            "exclusion": percent(self.false_positive_rate),
            "per_rule_hits": [[p.to_token(), n] for p, n in sorted(self.per_rule_hits.items())],
        }


def percent(rate: Fraction) -> str:
    """Rate as a percentage with one decimal, halves rounded up."""
    value = Decimal(rate.numerator * 100) / Decimal(rate.denominator)
    return f"{value.quantize(Decimal('0.1'), rounding=ROUND_HALF_UP)}%"


def render_table(reports: Sequence[EvalReport]) -> str:
    header = ("Policy", "Malware filtered out", "Benign excluded")
    rows = [
        (r.name,
         f"{r.malware_filtered}/{r.malware_total} ({percent(r.detection_rate)})",
         f"{r.benign_excluded}/{r.benign_total} ({percent(r.false_positive_rate)})")
        for r in reports
    ]
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(3)]

    def fmt(row):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"

    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    return "\n".join([rule, fmt(header), rule.replace("-", "="), *map(fmt, rows), rule]) + "\n"


def evaluate(p: Policy, benign: Sequence[AppSpec], malware: Sequence[AppSpec],
             name: str | None = None) -> EvalReport:
    """Apply ``p`` to labeled test specs.

    ``per_rule_hits`` counts, per rule, the malware apps that rule alone
    would catch (apps whose spec contains it), regardless of other rules.
    """
    filtered = sum(1 for s in malware if check(p, s))
    excluded = sum(1 for s in benign if check(p, s))
    hits = {r: 0 for r in p.rules}
    for s in malware:
        for r in check(p, s):
            hits[r] += 1
    return EvalReport(len(malware), filtered, len(benign), excluded, hits,
                      name or p.metadata.get("name", "policy"))


@dataclass(frozen=True)
class GenProfile:
    """Parameters for a synthetic labeled corpus.

    Noise properties are generated (contexts cycle through all contexts);
    ``planted`` lists ``(property, prob_benign, prob_malware)`` triples.
    """

    n_noise_properties: int = 0
    noise_prob_benign: float = 0.0
    noise_prob_malware: float = 0.0
    planted: tuple = ()
    n_benign: int = 0
    n_malware: int = 0
    seed: int = 0
    resource_kind: ResourceKind = ResourceKind.PERMISSION

    def __post_init__(self):
        probs = [self.noise_prob_benign, self.noise_prob_malware]
        for prop, pb, pm in self.planted:
            probs += [pb, pm]
            if prop.kind is not self.resource_kind:
                raise ValueError(f"planted property {prop} is not {self.resource_kind.value}")
        if any(not 0.0 <= q <= 1.0 for q in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if min(self.n_noise_properties, self.n_benign, self.n_malware) < 0:
            raise ValueError("counts must be non-negative")

    def noise_properties(self) -> list[Property]:
        contexts = list(Context)
        out = []
        for i in range(self.n_noise_properties):
            if self.resource_kind is ResourceKind.PERMISSION:
                ident = f"NOISE_{i:04d}"
            else:
                ident = f"Lnoise/Api;->call{i:04d}()V"
            out.append(Property(contexts[i % len(contexts)], Resource(self.resource_kind, ident)))
        return out

    def to_json(self) -> dict:
        return {
            "n_noise_properties": self.n_noise_properties,
            "noise_prob_benign": self.noise_prob_benign,
            "noise_prob_malware": self.noise_prob_malware,
            "planted": [[p.context.value, p.resource.identifier, pb, pm]
                        for p, pb, pm in self.planted],
            "n_benign": self.n_benign,
            "n_malware": self.n_malware,
            "seed": self.seed,
            "resource_kind": self.resource_kind.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenProfile":
        kind = ResourceKind.parse(obj.get("resource_kind", "permission"))
        planted = tuple(
            (Property(Context.parse(c), Resource(kind, ident)), float(pb), float(pm))
            for c, ident, pb, pm in obj.get("planted", [])
        )
        return cls(int(obj.get("n_noise_properties", 0)),
                   float(obj.get("noise_prob_benign", 0.0)),
                   float(obj.get("noise_prob_malware", 0.0)),
                   planted,
                   int(obj.get("n_benign", 0)), int(obj.get("n_malware", 0)),
                   int(obj.get("seed", 0)), kind)


ACCEPTANCE_PLANTED = (
    Property(Context.RECEIVER, Resource.permission("SEND_SMS")),
    Property(Context.SERVICE, Resource.permission("READ_PHONE_STATE")),
    Property(Context.ONCLICK_HANDLER, Resource.permission("SEND_SMS")),
    Property(Context.SERVICE, Resource.permission("ACCESS_WIFI_STATE")),
    Property(Context.RECEIVER, Resource.permission("RECEIVE_BOOT_COMPLETED")),
)


def acceptance_profile(seed: int = 42) -> GenProfile:
    """150 noise properties at 0.15, five planted at 0.01 vs 0.9, 1000+1000 apps.

    Split in half for 500+500 train and 500+500 held-out test.
    """
    return GenProfile(
        n_noise_properties=150,
        noise_prob_benign=0.15,
        noise_prob_malware=0.15,
        planted=tuple((p, 0.01, 0.9) for p in ACCEPTANCE_PLANTED),
        n_benign=1000,
        n_malware=1000,
        seed=seed,
    )


def gen_corpus(profile: GenProfile) -> tuple[list[AppSpec], list[AppSpec]]:
    """Sample benign and malware specs independently per property.

    For every app (benign first, then malware) one uniform draw is made per
    property, noise properties first then planted, and the property is kept
    when the draw falls below its class probability.
    """
    rng = make_rng(profile.seed)
    noise = profile.noise_properties()
    props = noise + [p for p, _, _ in profile.planted]
    prob_b = np.array([profile.noise_prob_benign] * len(noise)
                      + [pb for _, pb, _ in profile.planted])
    prob_m = np.array([profile.noise_prob_malware] * len(noise)
                      + [pm for _, _, pm in profile.planted])

    def sample(n, probs, label, prefix):
        draws = rng.random((n, len(props)))
        keep = draws < probs
        return [
            AppSpec(f"{prefix}{i:05d}", label, profile.resource_kind,
                    frozenset(props[j] for j in np.flatnonzero(keep[i])))
            for i in range(n)
        ]

    benign = sample(profile.n_benign, prob_b, Label.BENIGN, "benign")
    malware = sample(profile.n_malware, prob_m, Label.MALWARE, "malware")
    return benign, malware


def _api_for(resource: Resource) -> str:
    if resource.kind is ResourceKind.API:
        return resource.identifier
    return f"Lsynthetic/Api;->use{resource.identifier}()V"


def spec_to_graph(spec: AppSpec) -> AppGraph:
    """A call graph with one method per property that reproduces ``spec``.

    Each method sits in its property's context and calls a helper that
    invokes the api.  Lifecycle callbacks and handlers are entry points, so
    deriving a spec from the graph adds the matching ``entry_point`` rows.
    """
    methods = {}
    for i, prop in enumerate(sorted(spec.properties)):
        ctx = prop.context
        api = _api_for(prop.resource)
        helper = f"Lsynthetic/App;->helper{i:04d}()V"
        mid = f"Lsynthetic/App;->m{i:04d}_{ctx.value}()V"
        methods[helper] = MethodNode(helper, direct_apis=frozenset({api}))
        methods[mid] = MethodNode(
            mid,
            component_kind=ctx.value if ctx in (Context.ACTIVITY, Context.SERVICE,
                                                 Context.RECEIVER) else "other",
            callbacks=frozenset({ctx.value}) if ctx in LIFECYCLE_CONTEXTS else frozenset(),
            handlers=frozenset({ctx.value.split("_")[0]})
            if ctx in (Context.ONCLICK_HANDLER, Context.ONTOUCH_HANDLER) else frozenset(),
            is_entry_point=ctx is Context.ENTRY_POINT or ctx in LIFECYCLE_CONTEXTS
            or ctx in (Context.ONCLICK_HANDLER, Context.ONTOUCH_HANDLER),
            callees=frozenset({helper}),
        )
    return AppGraph(spec.app_id, spec.label, methods)


def corpus_permission_map(specs: Sequence[AppSpec]) -> PermissionMap:
    """Permission map covering every resource used by synthetic graphs.

    In api mode every synthetic api maps to one placeholder permission.
    """
    entries: dict[str, set] = {}
    for s in specs:
        for p in s.properties:
            perm = (p.resource.identifier if p.kind is ResourceKind.PERMISSION
                    else "SYNTHETIC_PERMISSION")
            entries.setdefault(_api_for(p.resource), set()).add(perm)
    return PermissionMap(entries)


def split_corpus(specs: Sequence[AppSpec], train_fraction: float, seed: int
                 ) -> tuple[list[AppSpec], list[AppSpec]]:
    """Label-stratified random split; each side keeps the input order.

    The train size is ``round(len(specs) * train_fraction)`` (halves up),
    apportioned to labels by largest remainder so per-label ratios are
    exact whenever they divide evenly.
    """
    if not specs:
        raise ValueError("cannot split an empty corpus")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    frac = Fraction(train_fraction).limit_denominator(10**9)
    groups = [[i for i, s in enumerate(specs) if s.label is label] for label in Label]
    total = math.floor(len(specs) * frac + Fraction(1, 2))
    quotas = [len(g) * frac for g in groups]
    counts = [int(q) for q in quotas]
    by_remainder = sorted(range(len(groups)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in by_remainder[:total - sum(counts)]:
        counts[k] += 1

    rng = make_rng(seed)
    in_train = [False] * len(specs)
    for idx, k in zip(groups, counts):
        if not idx:
            continue
        for j in rng.permutation(len(idx))[:k]:
            in_train[idx[j]] = True
    train = [s for s, t in zip(specs, in_train) if t]
    test = [s for s, t in zip(specs, in_train) if not t]
    return train, test


def partition(specs: Sequence[AppSpec]) -> tuple[list[AppSpec], list[AppSpec]]:
    """(benign, malware) lists; unknown-label specs are dropped."""
    common_kind(specs)
    return ([s for s in specs if s.label is Label.BENIGN],
            [s for s in specs if s.label is Label.MALWARE])


def dump_report_json(report: EvalReport) -> str:
    return json.dumps(report.to_json(), indent=2) + "\n"
