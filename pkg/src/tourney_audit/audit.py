"""Exhaustive and sampled property audits for tournament rules.

Exhaustive audits evaluate the rule once per tournament into an integer
table (numerators over a common denominator) and then compare table rows
with vectorised index arithmetic: flipping the matches inside a coalition is
an XOR on the tournament index.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .rules import Rule
from .tournament import (
    ENUMERATION_CAP,
    Tournament,
    WinDistribution,
    condorcet_winner,
    format_fraction,
    internal_pair_bits,
    members,
    num_pairs,
    random_tournament,
    serialize_compact,
    team_set,
    top_cycle,
    tournament_count,
)

SCHEMA_VERSION = 1
#: Work units for exhaustive table building; fixed so results never depend on workers.
TABLE_CHUNKS = 64
#: Scenarios per RNG stream in sampled mode.
SAMPLE_CHUNK = 50


@dataclass(frozen=True)
class CollusionScenario:
    base: Tournament
    coalition: int  # bitmask
    variant: Tournament

    def __post_init__(self) -> None:
        if bin(self.coalition).count("1") < 2:
            raise ValueError("a coalition needs at least two teams")
        if self.base.n != self.variant.n:
            raise ValueError("base and variant differ in size")
        inner = 0
        for b in internal_pair_bits(self.base.n, self.coalition):
            inner |= 1 << b
        if (self.base.index ^ self.variant.index) & ~inner:
            raise ValueError("variant changes a match outside the coalition")

    def gain(self, rule: Rule) -> Fraction:
        return rule.exact_eval(self.variant).mass(self.coalition) - rule.exact_eval(
            self.base
        ).mass(self.coalition)

    def to_json(self) -> dict:
        return {
            "base": serialize_compact(self.base),
            "variant": serialize_compact(self.variant),
            "coalition": members(self.coalition),
        }


@dataclass
class AuditReport:
    rule: str
    n: int
    k: int
    mode: str
    alpha_observed: Fraction
    witness: CollusionScenario | None
    scenarios_checked: int
    seed: int | None = None
    threads: int = 1
    wall_time_ms: float = 0.0
    max_dummy_mass: Fraction = Fraction(0)
    notes: dict[str, Any] = field(default_factory=dict)

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "rule": self.rule,
            "n": self.n,
            "k": self.k,
            "mode": self.mode,
            "alpha_observed": {
                "rational": format_fraction(self.alpha_observed),
                "float": float(self.alpha_observed),
            },
            "witness": self.witness.to_json() if self.witness else None,
            "scenarios_checked": self.scenarios_checked,
            "seed": self.seed,
            "threads": self.threads,
            "max_dummy_mass": format_fraction(self.max_dummy_mass),
        }
        if self.notes:
            out["notes"] = self.notes
        if timing:
            out["wall_time_ms"] = round(self.wall_time_ms, 3)
        return out


@dataclass
class PropertyReport:
    """Outcome of a monotonicity, Condorcet or top-cycle audit."""

    rule: str
    n: int
    property: str
    mode: str
    passed: bool
    checked: int
    witness: dict | None = None
    seed: int | None = None
    threads: int = 1
    wall_time_ms: float = 0.0

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "rule": self.rule,
            "n": self.n,
            "property": self.property,
            "mode": self.mode,
            "passed": self.passed,
            "checked": self.checked,
            "witness": self.witness,
            "seed": self.seed,
            "threads": self.threads,
        }
        if timing:
            out["wall_time_ms"] = round(self.wall_time_ms, 3)
        return out


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or os.cpu_count() or 1


def _run_tasks(fn: Callable, tasks: Sequence[tuple], threads: int) -> list:
    """Run ``fn(*task)`` for every task, preserving task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [f.result() for f in futures]


def _check_enumerable(n: int) -> None:
    if n > ENUMERATION_CAP:
        raise ValueError(
            f"exhaustive audit at n={n} needs 2^{num_pairs(n)} tournaments "
            f"(cap is n <= {ENUMERATION_CAP}); use sampled mode"
        )


def _require_exact(rule: Rule) -> None:
    if rule.exact_eval is None:
        raise ValueError(
            f"rule {rule.id!r} has no exact evaluator; audits compare exact probabilities only"
        )


# -- exhaustive distribution table ------------------------------------------------------


@dataclass
class DistributionTable:
    """Exact rule output for every tournament on ``n`` teams.

    ``nums[idx, i] / denom`` is team ``i``'s winning probability in the
    tournament with index ``idx``.
    """

    n: int
    nums: np.ndarray
    denom: int
    max_dummy_mass: Fraction
    condorcet: np.ndarray  # winner per index, -1 if none
    top_cycles: np.ndarray  # bitmask per index

    def prob(self, idx: int, team: int) -> Fraction:
        return Fraction(int(self.nums[idx, team]), self.denom)


def _table_chunk(rule: Rule, n: int, start: int, stop: int):
    dists: list[WinDistribution] = []
    cws = np.empty(stop - start, dtype=np.int64)
    tcs = np.empty(stop - start, dtype=np.int64)
    dummy = Fraction(0)
    for pos, idx in enumerate(range(start, stop)):
        t = Tournament.from_index(n, idx)
        dist = rule.exact_eval(t)
        dists.append(dist)
        dummy = max(dummy, dist.dummy_mass)
        w = condorcet_winner(t)
        cws[pos] = -1 if w is None else w
        tcs[pos] = top_cycle(t)
    denom = math.lcm(*{p.denominator for d in dists for p in d.probs})
    nums = [[p.numerator * (denom // p.denominator) for p in d.probs] for d in dists]
    return denom, nums, dummy, cws, tcs


def build_table(rule: Rule, n: int, threads: int = 1) -> DistributionTable:
    _require_exact(rule)
    _check_enumerable(n)
    total = tournament_count(n)
    step = -(-total // TABLE_CHUNKS)
    tasks = [(rule, n, s, min(s + step, total)) for s in range(0, total, step)]
    parts = _run_tasks(_table_chunk, tasks, threads)
    denom = math.lcm(*(p[0] for p in parts))
    # int64 is safe while a whole-coalition sum stays below 2^62
    dtype = np.int64 if denom * n < 2**62 else object
    rows = []
    for local, nums, _, _, _ in parts:
        scale = denom // local
        rows.append(np.array([[x * scale for x in row] for row in nums], dtype=dtype))
    return DistributionTable(
        n=n,
        nums=np.concatenate(rows).reshape(total, n),
        denom=denom,
        max_dummy_mass=max(p[2] for p in parts),
        condorcet=np.concatenate([p[3] for p in parts]),
        top_cycles=np.concatenate([p[4] for p in parts]),
    )


def _table_for(
    rule: Rule, n: int, threads: int, table: DistributionTable | None
) -> DistributionTable:
    if table is None:
        return build_table(rule, n, threads)
    if table.n != n:
        raise ValueError(f"table covers n={table.n}, audit asked for n={n}")
    return table


def coalition_variant_count(n: int, k: int) -> int:
    """Variants per tournament over all coalitions of size 2..k, base included."""
    return sum(math.comb(n, s) * 2 ** math.comb(s, 2) for s in range(2, k + 1))


def _exhaustive_ksnm(table: DistributionTable, k: int):
    n = table.n
    idx = np.arange(tournament_count(n), dtype=np.int64)
    best_key = (0, team_set(range(2)), 0)  # base idx, coalition, variant idx
    best_num = 0
    for size in range(2, k + 1):
        for coalition in itertools.combinations(range(n), size):
            mask = team_set(coalition)
            r_s = table.nums[:, list(coalition)].sum(axis=1)
            bits = internal_pair_bits(n, mask)
            for flips in range(1, 1 << len(bits)):
                x = 0
                for b, pos in enumerate(bits):
                    if flips >> b & 1:
                        x |= 1 << pos
                gains = r_s[idx ^ x] - r_s
                pos = int(np.argmax(gains))
                g = int(gains[pos])
                key = (pos, mask, pos ^ x)
                if g > best_num or (g == best_num and g > 0 and key < best_key):
                    best_num, best_key = g, key
    gain = Fraction(best_num, table.denom)
    return gain, best_key


# -- k-SNM --------------------------------------------------------------------------------


def audit_ksnm(
    rule: Rule,
    n: int,
    k: int,
    mode: str = "exhaustive",
    samples: int = 1000,
    seed: int | None = None,
    threads: int = 1,
    max_full_variants: int = 64,
    table: DistributionTable | None = None,
) -> AuditReport:
    """Largest joint gain r_S(T') - r_S(T) over coalitions of size 2..k.

    Exhaustive mode visits every tournament, coalition and adjacent variant.
    Sampled mode draws (tournament, coalition) pairs and searches the
    coalition's internal orientations (fully when there are at most
    ``max_full_variants``, greedily otherwise); its result is a lower bound.
    """
    _require_exact(rule)
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    threads = resolve_threads(threads)
    started = time.perf_counter()
    if mode == "exhaustive":
        table = _table_for(rule, n, threads, table)
        gain, (base, coalition, variant) = _exhaustive_ksnm(table, k)
        witness = None
        if gain > 0:
            witness = CollusionScenario(
                Tournament.from_index(n, base), coalition, Tournament.from_index(n, variant)
            )
        report = AuditReport(
            rule=rule.id,
            n=n,
            k=k,
            mode=mode,
            alpha_observed=gain,
            witness=witness,
            scenarios_checked=tournament_count(n) * coalition_variant_count(n, k),
            threads=threads,
            max_dummy_mass=table.max_dummy_mass,
        )
    elif mode == "sampled":
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % 2**63)
        report = _sampled_ksnm(rule, n, k, samples, seed, threads, max_full_variants)
    else:
        raise ValueError(f"unknown audit mode {mode!r}")
    report.wall_time_ms = (time.perf_counter() - started) * 1000
    return report


def _greedy_orientation(rule: Rule, t: Tournament, s: int, cache: dict) -> Tournament:
    """Flip internal matches one at a time while the coalition's mass strictly grows."""

    def r_s(x: Tournament) -> Fraction:
        if x.index not in cache:
            cache[x.index] = rule.exact_eval(x)
        return cache[x.index].mass(s)

    current, value = t, r_s(t)
    improved = True
    while improved:
        improved = False
        for i, j in itertools.combinations(members(s), 2):
            cand = current.flip(i, j)
            v = r_s(cand)
            if v > value:
                current, value, improved = cand, v, True
    return current


def _sampled_chunk(rule: Rule, n: int, k: int, seed: int, task: int, count: int, max_full: int):
    rng = np.random.default_rng([seed, task])
    best: tuple | None = None  # (-gain, base idx, coalition, variant idx)
    checked = 0
    dummy = Fraction(0)
    for _ in range(count):
        t = random_tournament(n, rng)
        coalition = sorted(int(x) for x in rng.choice(n, size=k, replace=False))
        s = team_set(coalition)
        cache: dict[int, WinDistribution] = {}
        bits = internal_pair_bits(n, s)
        if 2 ** len(bits) <= max_full:
            variants = []
            for flips in range(1 << len(bits)):
                x = 0
                for b, pos in enumerate(bits):
                    if flips >> b & 1:
                        x |= 1 << pos
                variants.append(t.index ^ x)
            dists = {v: rule.exact_eval(Tournament.from_index(n, v)) for v in variants}
            checked += len(variants) * sum(
                math.comb(k, m) for m in range(2, k + 1)
            )
            candidates = _class_extremes(n, variants, dists, coalition)
        else:
            top = _greedy_orientation(rule, t, s, cache)
            dists = cache
            checked += len(cache)
            gain = dists[top.index].mass(s) - dists[t.index].mass(s)
            candidates = [(gain, t.index, s, top.index)]
        for d in dists.values():
            dummy = max(dummy, d.dummy_mass)
        for gain, base, mask, variant in candidates:
            key = (-gain, base, mask, variant)
            if best is None or key < best:
                best = key
    return best, checked, dummy


def _class_extremes(n: int, variants: list[int], dists: dict, coalition: list[int]):
    """Best (min -> max) pair within each adjacency class, per sub-coalition."""
    out = []
    for size in range(2, len(coalition) + 1):
        for sub in itertools.combinations(coalition, size):
            mask = team_set(sub)
            inner = 0
            for b in internal_pair_bits(n, mask):
                inner |= 1 << b
            classes: dict[int, list[int]] = {}
            for v in variants:
                classes.setdefault(v & ~inner, []).append(v)
            for members_ in classes.values():
                vals = sorted((dists[v].mass(mask), v) for v in members_)
                lo_val = vals[0][0]
                hi_val = vals[-1][0]
                lo = min(v for val, v in vals if val == lo_val)
                hi = min(v for val, v in vals if val == hi_val)
                out.append((hi_val - lo_val, lo, mask, hi))
    return out


def _sampled_ksnm(
    rule: Rule, n: int, k: int, samples: int, seed: int, threads: int, max_full: int
) -> AuditReport:
    tasks = []
    for task, start in enumerate(range(0, samples, SAMPLE_CHUNK)):
        tasks.append((rule, n, k, seed, task, min(SAMPLE_CHUNK, samples - start), max_full))
    results = _run_tasks(_sampled_chunk, tasks, threads)
    keys = [r[0] for r in results if r[0] is not None]
    best = min(keys) if keys else (Fraction(0), 0, 0, 0)
    gain = -best[0]
    witness = None
    if gain > 0:
        witness = CollusionScenario(
            Tournament.from_index(n, best[1]), best[2], Tournament.from_index(n, best[3])
        )
    return AuditReport(
        rule=rule.id,
        n=n,
        k=k,
        mode="sampled",
        alpha_observed=gain,
        witness=witness,
        scenarios_checked=sum(r[1] for r in results),
        seed=seed,
        threads=threads,
        max_dummy_mass=max((r[2] for r in results), default=Fraction(0)),
        notes={
            "sampled_pairs": samples,
            "coverage": (
                f"lower bound only; with {samples} independent draws, at 95% confidence "
                f"the chance a fresh (tournament, coalition) draw beats the observed gain "
                f"is at most {math.log(20) / max(samples, 1):.2e}"
            ),
        },
    )


def replay_witness(rule: Rule, report: AuditReport) -> Fraction:
    """Recompute the witness gain; equals ``report.alpha_observed`` when sound."""
    if report.witness is None:
        return Fraction(0)
    return report.witness.gain(rule)


# -- monotonicity, Condorcet and top-cycle consistency ------------------------------------


def audit_monotone(
    rule: Rule, n: int, threads: int = 1, table: DistributionTable | None = None
) -> PropertyReport:
    """Check r_i(T) >= r_i(T') whenever T' only takes one win away from i."""
    _require_exact(rule)
    threads = resolve_threads(threads)
    started = time.perf_counter()
    table = _table_for(rule, n, threads, table)
    idx = np.arange(tournament_count(n), dtype=np.int64)
    witness = None
    checked = 0
    first: tuple | None = None
    for k, (a, b) in enumerate(itertools.combinations(range(n), 2)):
        bit = 1 << k
        flipped = idx ^ bit
        # bit set: a beats b, so the flip costs a a win; else it costs b one
        team = np.where(idx & bit, a, b)
        before = table.nums[idx, team]
        after = table.nums[flipped, team]
        checked += len(idx)
        bad = np.nonzero(after > before)[0]
        if len(bad):
            cand = (int(bad[0]), k)
            if first is None or cand < first:
                first = cand
    if first is not None:
        t_idx, k = first
        a, b = list(itertools.combinations(range(n), 2))[k]
        team = a if t_idx >> k & 1 else b
        witness = {
            "tournament": serialize_compact(Tournament.from_index(n, t_idx)),
            "variant": serialize_compact(Tournament.from_index(n, t_idx ^ 1 << k)),
            "team": team,
            "thrown_to": b if team == a else a,
            "before": format_fraction(table.prob(t_idx, team)),
            "after": format_fraction(table.prob(t_idx ^ 1 << k, team)),
        }
    return PropertyReport(
        rule.id, n, "monotone", "exhaustive", first is None, checked, witness,
        threads=threads, wall_time_ms=(time.perf_counter() - started) * 1000,
    )


def audit_cc(
    rule: Rule, n: int, threads: int = 1, table: DistributionTable | None = None
) -> PropertyReport:
    """Every tournament with a Condorcet-winner must give it probability exactly 1."""
    _require_exact(rule)
    threads = resolve_threads(threads)
    started = time.perf_counter()
    table = _table_for(rule, n, threads, table)
    has_cw = np.nonzero(table.condorcet >= 0)[0]
    got = table.nums[has_cw, table.condorcet[has_cw]]
    bad = has_cw[got != table.denom]
    witness = None
    if len(bad):
        t_idx = int(bad[0])
        w = int(table.condorcet[t_idx])
        witness = {
            "tournament": serialize_compact(Tournament.from_index(n, t_idx)),
            "condorcet_winner": w,
            "probability": format_fraction(table.prob(t_idx, w)),
        }
    return PropertyReport(
        rule.id, n, "condorcet", "exhaustive", not len(bad), len(has_cw), witness,
        threads=threads, wall_time_ms=(time.perf_counter() - started) * 1000,
    )


def audit_top_cycle(
    rule: Rule, n: int, threads: int = 1, table: DistributionTable | None = None
) -> PropertyReport:
    """Exact check: no probability outside the top cycle, for every tournament."""
    _require_exact(rule)
    threads = resolve_threads(threads)
    started = time.perf_counter()
    table = _table_for(rule, n, threads, table)
    outside = np.zeros(len(table.top_cycles), dtype=bool)
    for i in range(n):
        in_cycle = (table.top_cycles >> i) & 1
        outside |= (in_cycle == 0) & (table.nums[:, i] != 0)
    bad = np.nonzero(outside)[0]
    witness = None
    if len(bad):
        t_idx = int(bad[0])
        witness = {
            "tournament": serialize_compact(Tournament.from_index(n, t_idx)),
            "top_cycle": members(int(table.top_cycles[t_idx])),
        }
    return PropertyReport(
        rule.id, n, "top-cycle", "exhaustive", not len(bad), len(outside), witness,
        threads=threads, wall_time_ms=(time.perf_counter() - started) * 1000,
    )


def _top_cycle_chunk(rule: Rule, n: int, seed: int, task: int, draws: int):
    rng = np.random.default_rng([seed, task])
    t = random_tournament(n, rng)
    cycle = top_cycle(t)
    for draw in range(draws):
        w = rule.sample(t, rng)
        if w is None or not cycle >> w & 1:
            return {
                "task": task,
                "draw": draw,
                "tournament": serialize_compact(t),
                "top_cycle": members(cycle),
                "winner": w,
            }
    return None


def audit_top_cycle_sampled(
    rule: Rule,
    n: int,
    tournaments: int = 100,
    draws: int = 1000,
    seed: int | None = None,
    threads: int = 1,
) -> PropertyReport:
    """Draw winners on random tournaments; any winner outside the top cycle fails."""
    if rule.sampler is None and rule.exact_eval is None:
        raise ValueError(f"rule {rule.id!r} cannot be sampled")
    threads = resolve_threads(threads)
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
    started = time.perf_counter()
    tasks = [(rule, n, seed, task, draws) for task in range(tournaments)]
    results = _run_tasks(_top_cycle_chunk, tasks, threads)
    failures = [r for r in results if r is not None]
    return PropertyReport(
        rule.id, n, "top-cycle", "sampled", not failures, tournaments * draws,
        failures[0] if failures else None, seed=seed, threads=threads,
        wall_time_ms=(time.perf_counter() - started) * 1000,
    )


# -- bound checks ----------------------------------------------------------------------


@dataclass
class BoundReport:
    audit: AuditReport
    bound: Fraction
    probe_floor: Fraction | None = None

    @property
    def passed(self) -> bool:
        return self.audit.alpha_observed <= self.bound

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "bound": format_fraction(self.bound),
            "passed": self.passed,
            "audit": self.audit.to_json(timing),
        }
        if self.probe_floor is not None:
            out["probe"] = {
                "floor": format_fraction(self.probe_floor),
                "best_gain": format_fraction(self.audit.alpha_observed),
                "reaches_floor": self.audit.alpha_observed >= self.probe_floor,
            }
        return out


def bound_check(
    rule: Rule,
    n: int,
    k: int,
    theoretical_alpha: Fraction,
    samples: int = 1000,
    seed: int | None = None,
    mode: str = "sampled",
    threads: int = 1,
    probe_floor: Fraction | None = None,
) -> BoundReport:
    """Search for gains above a proven bound; finding one means a bug here.

    ``probe_floor`` only records how the best gain compares with a
    conjectured lower bound.  It never affects ``passed``.
    """
    report = audit_ksnm(rule, n, k, mode=mode, samples=samples, seed=seed, threads=threads)
    return BoundReport(report, Fraction(theoretical_alpha), probe_floor)

