"""Fixtures, random generators and independent oracles shared by the tests.

The oracles here deliberately avoid the package's own algorithms: reach
sets by per-method DFS, optima by plain enumeration, WCNF cost by parsing
the exported text and enumerating every assignment.
"""
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from policygen.encode import build_instance
from policygen.ingest import AppGraph, MethodNode
from policygen.model import AppSpec, Context, Label, Property, Resource, ResourceKind

DATA = Path(__file__).parent / "data"
PERM = ResourceKind.PERMISSION

# the five properties of the small worked corpus, in variable order
P_A, P_B, P_C, P_D, P_E = (Property(Context.ACTIVITY, Resource.permission(f"P_{x}"))
                           for x in "ABCDE")


def spec(app_id, label, *props, kind=PERM):
    return AppSpec(app_id, label, kind, frozenset(props))


def worked_corpus():
    benign = [
        spec("benign1", Label.BENIGN, P_A),
        spec("benign2", Label.BENIGN, P_C),
        spec("benign3", Label.BENIGN, P_B, P_E),
    ]
    malware = [
        spec("malware1", Label.MALWARE, P_A, P_B),
        spec("malware2", Label.MALWARE, P_A, P_C),
        spec("malware3", Label.MALWARE, P_D),
    ]
    return benign, malware


def rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_corpus(r, n_props, n_apps, density, kind=PERM):
    contexts = list(Context)
    props = [Property(contexts[int(r.integers(len(contexts)))],
                      Resource(kind, f"R{i:02d}")) for i in range(n_props)]
    benign, malware = [], []
    for k in range(n_apps):
        chosen = frozenset(p for p in props if r.random() < density)
        if r.random() < 0.5:
            benign.append(AppSpec(f"b{k:03d}", Label.BENIGN, kind, chosen))
        else:
            malware.append(AppSpec(f"m{k:03d}", Label.MALWARE, kind, chosen))
    return benign, malware


def random_instance(r, max_vars=12, max_apps=30, weights=(1, 2, 3)):
    benign, malware = random_corpus(r, int(r.integers(0, max_vars + 1)),
                                    int(r.integers(0, max_apps + 1)), r.uniform(0.05, 0.5))
    w_b, w_m = (int(r.choice(weights)) for _ in range(2))
    return build_instance(benign, malware, w_b, w_m)


def random_graph(r, n_nodes, n_apis=4, edge_p=0.2, api_p=0.25):
    ids = [f"m{i:02d}" for i in range(n_nodes)]
    apis = [f"api{j}" for j in range(n_apis)]
    methods = {}
    for mid in ids:
        kind = str(r.choice(["activity", "service", "receiver", "other"]))
        callbacks = frozenset(c.value for c in (Context.ONCREATE, Context.ONSTOP)
                              if r.random() < 0.2)
        handlers = frozenset(h for h in ("onclick", "ontouch") if r.random() < 0.15)
        entry = bool(callbacks or handlers or r.random() < 0.2)
        methods[mid] = MethodNode(
            mid, kind, callbacks, handlers, entry,
            callees=frozenset(c for c in ids if r.random() < edge_p),
            direct_apis=frozenset(a for a in apis if r.random() < api_p),
        )
    return AppGraph("g", Label.UNKNOWN, methods)


def dfs_reach(g: AppGraph) -> dict:
    out = {}
    for start in g.methods:
        seen, stack, apis = {start}, [start], set()
        while stack:
            m = stack.pop()
            apis |= g.methods[m].direct_apis
            for c in g.methods[m].callees:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        out[start] = frozenset(apis)
    return out


def allowed_balance(benign, malware, a, index, w_b=1, w_m=1):
    """Allowed benign minus allowed malware, straight from the specs."""
    def allowed(s):
        return all(a[index[p]] for p in s.properties)
    return (sum(w_b for s in benign if allowed(s))
            - sum(w_m for s in malware if allowed(s)))


def enumerate_best(inst):
    """Best assignment by plain enumeration with the documented preference:
    score, then number of trues, then lexicographically greatest."""
    from policygen.encode import score

    best = None
    for bits in itertools.product((False, True), repeat=inst.n_vars):
        key = (score(inst, bits), sum(bits), bits)
        if best is None or key > best:
            best = key
    return best


def wcnf_min_cost(text: str) -> tuple[int, int]:
    """Parse WCNF text and brute-force its minimum cost of violated soft
    clauses subject to the hard ones.  Returns ``(min_cost, soft_total)``."""
    header = None
    clauses = []
    for line in text.splitlines():
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        if tok[0] == "p":
            assert tok[1] == "wcnf"
            header = (int(tok[2]), int(tok[3]), int(tok[4]))
            continue
        nums = list(map(int, tok))
        assert nums[-1] == 0
        clauses.append((nums[0], nums[1:-1]))
    nvars, nclauses, top = header
    assert len(clauses) == nclauses
    soft_total = sum(w for w, _ in clauses if w < top)
    best = None
    for bits in itertools.product((False, True), repeat=nvars):
        cost = 0
        for w, lits in clauses:
            sat = any(bits[abs(l) - 1] == (l > 0) for l in lits)
            if not sat:
                if w >= top:
                    cost = None
                    break
                cost += w
        if cost is not None and (best is None or cost < best):
            best = cost
    return best, soft_total


def valid_witness(g: AppGraph, rule: Property, chain, pm) -> bool:
    from policygen.ingest import match_contexts

    if not chain or rule.context not in match_contexts(g.methods[chain[0]]):
        return False
    for caller, callee in zip(chain, chain[1:]):
        if callee not in g.methods[caller].callees:
            return False
    last = g.methods[chain[-1]].direct_apis
    if rule.kind is ResourceKind.API:
        return rule.resource.identifier in last
    return any(rule.resource.identifier in pm[a] for a in last)


def shortest_chain_length(g: AppGraph, rule: Property, pm) -> int | None:
    """Shortest valid witness length by enumerating simple paths."""
    best = None
    ids = sorted(g.methods)

    def extend(path):
        nonlocal best
        if best is not None and len(path) >= best:
            return
        if valid_witness(g, rule, path, pm):
            best = len(path)
            return
        for c in g.methods[path[-1]].callees:
            if c not in path:
                extend(path + [c])

    for s in ids:
        extend([s])
    return best
