"""Solvers for :class:`~policygen.encode.MaxSatInstance`.

All solvers share one preference order over assignments:

1. higher score;
2. more variables true (fewer deny rules);
3. lexicographically greater bit vector, variable 0 first.

``solve_brute`` and ``solve_exact`` both return the unique best assignment
under that order, so their results are directly comparable.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse

from .encode import MaxSatInstance, score

BRUTE_MAX_VARS = 25
_BRUTE_CHUNK = 1 << 18


@dataclass(frozen=True)
class SolveResult:
    assignment: tuple
    score: object
    optimal: bool
    nodes: int = 0
    prunings: int = 0
    solver: str = ""
    runtime: float = field(default=0.0, compare=False)


class _Scaled:
    """Integer view of an instance: clause bitmasks and scaled weights."""

    def __init__(self, inst: MaxSatInstance):
        weights = [c.weight for c in inst.clauses]
        denom = 1
        for w in weights:
            denom = math.lcm(denom, Fraction(w).denominator)
        self.denom = denom
        self.n = inst.n_vars
        self.ben = [(c.mask, int(Fraction(c.weight) * denom)) for c in inst.benign_clauses]
        self.mal = [(c.mask, int(Fraction(c.weight) * denom)) for c in inst.malware_clauses]

    def score(self, mask: int) -> int:
        s = sum(w for m, w in self.ben if mask & m == m)
        s += sum(w for m, w in self.mal if mask & m != m)
        return s


def _mask_to_tuple(mask: int, n: int) -> tuple:
    return tuple(bool(mask >> i & 1) for i in range(n))


def _lex(mask: int, n: int) -> int:
    """Integer whose binary order matches the bit vector read from variable 0."""
    return int(format(mask, f"0{n}b")[::-1], 2) if n else 0


def _result(inst, mask, optimal, solver, t0, nodes=0, prunings=0) -> SolveResult:
    a = _mask_to_tuple(mask, inst.n_vars)
    return SolveResult(a, score(inst, a), optimal, nodes, prunings, solver,
                       time.perf_counter() - t0)


def solve_brute(inst: MaxSatInstance) -> SolveResult:
    """Enumerate every assignment.  Test oracle; refuses more than 25 vars."""
    n = inst.n_vars
    if n > BRUTE_MAX_VARS:
        raise ValueError(f"brute force limited to {BRUTE_MAX_VARS} variables, got {n}")
    t0 = time.perf_counter()
    sc = _Scaled(inst)
    size = 1 << n
    bit_weights = np.array([1 << (n - 1 - i) for i in range(n)], dtype=np.int64)
    best = None
    for start in range(0, size, _BRUTE_CHUNK):
        masks = np.arange(start, min(size, start + _BRUTE_CHUNK), dtype=np.int64)
        total = np.zeros(masks.shape, dtype=np.int64)
        for m, w in sc.ben:
            total += np.where((masks & m) == m, w, 0)
        for m, w in sc.mal:
            total += np.where((masks & m) != m, w, 0)
        top = total.max()
        cand = masks[total == top]
        bits = (cand[:, None] >> np.arange(n)) & 1
        pop = bits.sum(axis=1)
        cand, bits = cand[pop == pop.max()], bits[pop == pop.max()]
        lex = bits @ bit_weights
        key = (int(top), int(pop.max()), int(lex.max()))
        if best is None or key > best[0]:
            best = (key, int(cand[int(np.argmax(lex))]))
    return _result(inst, best[1], True, "brute", t0, nodes=size)


class _BranchAndBound:
    def __init__(self, inst: MaxSatInstance, check_bounds: bool = False):
        self.inst = inst
        self.sc = _Scaled(inst)
        self.n = inst.n_vars
        self.full = (1 << self.n) - 1
        occ = [0] * self.n
        for c in inst.clauses:
            for v in c.vars:
                occ[v] += 1
        self.order = sorted(range(self.n), key=lambda i: (-occ[i], i))
        bweight = [0] * self.n
        mweight = [0] * self.n
        for m, w in self.sc.ben:
            for v in _bits(m):
                bweight[v] += w
        for m, w in self.sc.mal:
            for v in _bits(m):
                mweight[v] += w
        # try the likelier-good value first
        self.false_first = [mweight[v] > bweight[v] for v in range(self.n)]
        self.check_bounds = check_bounds
        self.nodes = 0
        self.prunings = 0
        self.best_key = None
        self.best_mask = 0

    def key(self, mask: int):
        return (self.sc.score(mask), mask.bit_count(), _lex(mask, self.n))

    def offer(self, mask: int):
        k = self.key(mask)
        if self.best_key is None or k > self.best_key:
            self.best_key, self.best_mask = k, mask

    def evaluate(self, T: int, F: int):
        """Propagate and bound a node.

        Returns ``(T, free, bound)``; ``T`` may have grown by variables that no
        undecided malware clause mentions: setting those true never lowers
        the score and is preferred by the tie-break.
        """
        free = self.full & ~(T | F)
        mal_sat = 0
        undet_m = []
        for m, w in self.sc.mal:
            if m & F:
                mal_sat += w
            elif m & free:
                undet_m.append((m & free, w))
        malvars = 0
        for r, _ in undet_m:
            malvars |= r
        T |= free & ~malvars
        free &= malvars
        sat = mal_sat
        undet_b = []
        for m, w in self.sc.ben:
            if m & F:
                continue
            r = m & free
            if r:
                undet_b.append((r, w))
            else:
                sat += w
        bound = sat + sum(w for _, w in undet_b) + sum(w for _, w in undet_m)
        bound -= _conflict_reduction(undet_b, undet_m)
        return T, free, bound

    def bound_is_dominated(self, T: int, free: int, bound: int) -> bool:
        if self.best_key is None:
            return False
        best_score = self.best_key[0]
        if bound < best_score:
            return True
        if bound > best_score:
            return False
        top = T | free
        return (top.bit_count(), _lex(top, self.n)) <= self.best_key[1:]

    def run(self, start_mask: int | None = None):
        if start_mask is not None:
            self.offer(start_mask)
        stack = [(0, 0)]
        while stack:
            T, F = stack.pop()
            self.nodes += 1
            T, free, bound = self.evaluate(T, F)
            if self.check_bounds:
                self._verify_bound(T, F, free, bound)
            if self.bound_is_dominated(T, free, bound):
                self.prunings += 1
                continue
            if not free:
                self.offer(T)
                continue
            v = next(i for i in self.order if free >> i & 1)
            bit = 1 << v
            children = [(T | bit, F), (T, F | bit)]
            if self.false_first[v]:
                children.reverse()
            # stack is LIFO: push the preferred child last
            stack.append(children[1])
            stack.append(children[0])
        return self.best_mask

    def _verify_bound(self, T, F, free, bound, limit=10):
        if free.bit_count() > limit:
            return
        frees = list(_bits(free))
        best = None
        for k in range(1 << len(frees)):
            mask = T
            for j, v in enumerate(frees):
                if k >> j & 1:
                    mask |= 1 << v
            s = self.sc.score(mask)
            best = s if best is None else max(best, s)
        assert bound >= best, f"bound {bound} below subtree optimum {best}"


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _conflict_reduction(undet_b, undet_m) -> int:
    """Weight that provably cannot be satisfied simultaneously.

    If a malware clause's undecided vars are all contained in some benign
    clauses' undecided vars, satisfying the malware clause kills every one
    of those benign clauses, so the group contributes at most the larger
    side.  Groups are kept disjoint so the reductions add up.
    """
    if not undet_b or not undet_m:
        return 0
    used = [False] * len(undet_b)
    reduction = 0
    for r, w in sorted(undet_m, key=lambda t: (t[0].bit_count(), t[0])):
        group = 0
        for j, (rb, wb) in enumerate(undet_b):
            if not used[j] and rb & r == r:
                used[j] = True
                group += wb
        if group:
            reduction += min(w, group)
    return reduction


def solve_exact(inst: MaxSatInstance, check_bounds: bool = False) -> SolveResult:
    """Depth-first branch and bound; returns the preferred optimum.

    The incumbent is seeded with the greedy solution.  ``check_bounds``
    brute-forces every small subtree and asserts the node bound covers it.
    """
    t0 = time.perf_counter()
    if inst.n_vars == 0:
        return _result(inst, 0, True, "exact", t0)
    seed = solve_greedy(inst)
    bb = _BranchAndBound(inst, check_bounds=check_bounds)
    start = sum(1 << i for i, x in enumerate(seed.assignment) if x)
    mask = bb.run(start)
    return _result(inst, mask, True, "exact", t0, bb.nodes, bb.prunings)


class _Greedy:
    """Incremental flip gains with sparse incidence matrices."""

    def __init__(self, inst: MaxSatInstance):
        sc = _Scaled(inst)
        n = inst.n_vars
        self.n = n
        self.Ab = _incidence([c.vars for c in inst.benign_clauses], n)
        self.Am = _incidence([c.vars for c in inst.malware_clauses], n)
        self.wb = np.array([w for _, w in sc.ben], dtype=np.int64)
        self.wm = np.array([w for _, w in sc.mal], dtype=np.int64)
        self.AbT = self.Ab.T.tocsr()
        self.AmT = self.Am.T.tocsr()
        self.Abc = self.Ab.tocsc()
        self.Amc = self.Am.tocsc()

    def reset(self, values: np.ndarray):
        self.values = values.copy()
        falses = (~values).astype(np.int64)
        self.nf_b = self.Ab @ falses
        self.nf_m = self.Am @ falses

    def gains(self) -> np.ndarray:
        """Score change of flipping each variable."""
        wb0 = self.wb * (self.nf_b == 0)
        wm0 = self.wm * (self.nf_m == 0)
        wb1 = self.wb * (self.nf_b == 1)
        wm1 = self.wm * (self.nf_m == 1)
        to_false = self.AmT @ wm0 - self.AbT @ wb0
        to_true = self.AbT @ wb1 - self.AmT @ wm1
        return np.where(self.values, to_false, to_true)

    def flip(self, v: int):
        delta = -1 if not self.values[v] else 1
        self.values[v] = not self.values[v]
        col_b = self.Abc.indices[self.Abc.indptr[v]:self.Abc.indptr[v + 1]]
        col_m = self.Amc.indices[self.Amc.indptr[v]:self.Amc.indptr[v + 1]]
        self.nf_b[col_b] += delta
        self.nf_m[col_m] += delta

    def total(self) -> int:
        return int(self.wb[self.nf_b == 0].sum() + self.wm[self.nf_m > 0].sum())

    def deny_phase(self):
        while True:
            g = np.where(self.values, self.gains(), np.iinfo(np.int64).min)
            v = int(np.argmax(g)) if self.n else -1
            if v < 0 or g[v] <= 0:
                return
            self.flip(v)

    def local_search(self):
        while True:
            g = self.gains()
            v = int(np.argmax(g)) if self.n else -1
            if v < 0 or g[v] <= 0:
                return
            self.flip(v)

    def perturb(self, rng: np.random.Generator, k: int):
        for v in rng.choice(self.n, size=min(k, self.n), replace=False):
            self.flip(int(v))


def _incidence(var_sets, n) -> sparse.csr_matrix:
    rows, cols = [], []
    for i, vs in enumerate(var_sets):
        for v in sorted(vs):
            rows.append(i)
            cols.append(v)
    data = np.ones(len(rows), dtype=np.int64)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(var_sets), n), dtype=np.int64)


def solve_greedy(inst: MaxSatInstance, seed: int = 0, restarts: int = 0) -> SolveResult:
    """Greedy denial followed by single-flip hill climbing.

    Starting from everything allowed, repeatedly deny the variable with the
    largest positive score gain (lowest index on ties), then apply improving
    single flips in either direction until none is left.  The all-false
    assignment is also hill-climbed and kept if it scores strictly higher.

    ``restarts`` > 0 adds perturbation rounds: flip a few random variables
    of the incumbent, hill-climb, keep strict improvements.  The perturbation
    draws come from a PCG64 generator seeded with ``seed``; with the default
    of no restarts the result does not depend on ``seed``.
    """
    t0 = time.perf_counter()
    n = inst.n_vars
    if n == 0:
        return _result(inst, 0, False, "greedy", t0)
    g = _Greedy(inst)
    g.reset(np.ones(n, dtype=bool))
    g.deny_phase()
    g.local_search()
    best_vals, best_total = g.values.copy(), g.total()

    g.reset(np.zeros(n, dtype=bool))
    if g.total() > best_total:
        g.local_search()
        if g.total() > best_total:
            best_vals, best_total = g.values.copy(), g.total()

    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(restarts):
        g.reset(best_vals)
        g.perturb(rng, max(1, n // 20))
        g.local_search()
        if g.total() > best_total:
            best_vals, best_total = g.values.copy(), g.total()

    mask = sum(1 << i for i in range(n) if best_vals[i])
    return _result(inst, mask, False, "greedy", t0)


SOLVERS = {"exact": solve_exact, "greedy": solve_greedy, "brute": solve_brute}
