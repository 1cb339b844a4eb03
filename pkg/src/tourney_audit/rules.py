"""Tournament rules: SignificantOnly, randomized d-ary brackets, TopCycle, the
group-extension combinator, and closed-form manipulability bounds.

Exact evaluators return a :class:`WinDistribution` of Fractions.  Samplers
take a caller-owned ``numpy.random.Generator`` and return the winning team,
or ``None`` when a padding dummy wins.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from typing import Callable, Iterator, Sequence

import numpy as np

from .structure import classify, mw_groups, significant_teams
from .tournament import (
    Tournament,
    WinDistribution,
    members,
    pad_with_dummies,
    popcount,
    top_cycle,
    top_cycle_within,
)

#: Default cap on memoised team subsets for the exact bracket computation.
SUBSET_CAP = 2_000_000
#: Default cap on unordered group partitions for the exact extension.
PARTITION_CAP = 100_000

ExactEval = Callable[[Tournament], WinDistribution]
Sampler = Callable[[Tournament, np.random.Generator], "int | None"]


class RuleUndefinedError(ValueError):
    """The rule has no definition at this team count."""


class InfeasibleError(ValueError):
    """Exact evaluation would exceed a configured size cap."""

    def __init__(self, message: str, required: int, cap: int):
        super().__init__(f"{message}: needs {required} evaluations, cap is {cap}")
        self.required = required
        self.cap = cap


@dataclass(frozen=True)
class Rule:
    id: str
    exact_eval: ExactEval | None = None
    sampler: Sampler | None = None

    def __post_init__(self) -> None:
        if self.exact_eval is None and self.sampler is None:
            raise ValueError(f"rule {self.id!r} needs an exact evaluator or a sampler")

    def sample(self, t: Tournament, rng: np.random.Generator) -> int | None:
        if self.sampler is not None:
            return self.sampler(t, rng)
        return sample_distribution(self.exact_eval(t), rng)


def sample_distribution(dist: WinDistribution, rng: np.random.Generator) -> int | None:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(dist.probs):
        acc += float(p)
        if u < acc:
            return i
    if dist.dummy_mass:
        return None
    # float round-off at the top end
    return max(i for i, p in enumerate(dist.probs) if p)


def _point_mass(n: int, winner: int) -> WinDistribution:
    return WinDistribution(tuple(Fraction(int(i == winner)) for i in range(n)))


def _uniform_over(n: int, mask: int) -> WinDistribution:
    share = Fraction(1, popcount(mask))
    return WinDistribution(tuple(share if mask >> i & 1 else Fraction(0) for i in range(n)))


# -- simple rules -------------------------------------------------------------------


def uniform_rule(t: Tournament) -> WinDistribution:
    return _uniform_over(t.n, (1 << t.n) - 1)


def topcycle_rule(t: Tournament) -> WinDistribution:
    return _uniform_over(t.n, top_cycle(t))


def match_winner(t: Tournament) -> WinDistribution:
    """The two-team rule: whoever wins the single match."""
    if t.n != 2:
        raise RuleUndefinedError("match-winner is defined for exactly 2 teams")
    return _point_mass(2, 0 if t.beats(0, 1) else 1)


def significant_only(t: Tournament) -> WinDistribution:
    if t.n < 6:
        raise RuleUndefinedError("significant-only: rule undefined below 6 teams")
    n = t.n
    cls = classify(t)
    if cls.kind == "condorcet":
        return _point_mass(n, cls.winner)
    if cls.kind == "far":
        return uniform_rule(t)

    groups = mw_groups(t, 3)
    pair_teams = significant_teams([g for g in groups if g.size == 2])
    triple_teams = significant_teams([g for g in groups if g.size == 3])
    probs = [Fraction(0)] * n

    if cls.num_mw_pairs >= 2:
        for i in members(pair_teams):
            probs[i] = Fraction(1, 3)
        return WinDistribution(tuple(probs))

    if cls.num_mw_pairs == 1:
        triple_only = triple_teams & ~pair_teams
        for i in members(pair_teams):
            probs[i] = Fraction(1, 3)
        for i in members(triple_only):
            probs[i] = Fraction(1, 9)
        assigned = pair_teams | triple_only
    else:
        for i in members(triple_teams):
            probs[i] = Fraction(1, 6)
        assigned = triple_teams

    rest = [i for i in range(n) if not assigned >> i & 1]
    remaining = 1 - sum(probs, Fraction(0))
    if rest:
        share = remaining / len(rest)
        for i in rest:
            probs[i] = share
    elif remaining:
        raise AssertionError(f"no teams left to carry residual mass {remaining}")
    return WinDistribution(tuple(probs))


# -- randomized d-ary single elimination bracket -----------------------------------------


def bracket_height(n: int, d: int) -> tuple[int, int]:
    """Smallest ``h`` with ``d**h >= n``, and ``d**h``."""
    if d < 2:
        raise ValueError("bracket arity must be at least 2")
    h, size = 0, 1
    while size < n:
        size *= d
        h += 1
    return h, size


def rdseb_state_count(n: int, d: int) -> int:
    """Upper bound on team subsets the exact bracket recursion memoises."""
    h, size = bracket_height(n, d)
    return sum(math.comb(size, d**j) for j in range(1, h + 1))


def equipartitions(items: Sequence[int], blocks: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Unordered partitions of ``items`` into ``blocks`` blocks of equal size."""
    if not items:
        yield ()
        return
    size = len(items) // blocks
    first, rest = items[0], items[1:]
    for others in itertools.combinations(rest, size - 1):
        block = (first,) + others
        taken = set(others)
        remainder = [x for x in rest if x not in taken]
        for tail in equipartitions(remainder, blocks - 1):
            yield (block,) + tail


def count_equipartitions(total: int, blocks: int) -> int:
    size = total // blocks
    return math.factorial(total) // (math.factorial(size) ** blocks * math.factorial(blocks))


def _local_winner(t: Tournament, mask: int) -> int | None:
    """Condorcet-winner of the sub-tournament induced by ``mask``, if any."""
    for x in members(mask):
        if t.wins[x] & mask == mask & ~(1 << x):
            return x
    return None


def rdseb_exact(t: Tournament, d: int, cap: int = SUBSET_CAP) -> WinDistribution:
    """Exact winner distribution of the random d-ary bracket.

    A uniform seeding splits the padded team set into a uniform unordered
    partition of d equal blocks, recursively.  Block winners are independent
    given the partition; the parent takes their Condorcet-winner or a
    uniform child.  Weights are integers over a per-level common denominator.
    """
    h, size = bracket_height(t.n, d)
    states = rdseb_state_count(t.n, d)
    if states > cap:
        raise InfeasibleError(f"rdseb:{d} on {t.n} teams", states, cap)
    padded = pad_with_dummies(t, size)
    weights, denom = _rdseb_weights(padded, d, h)
    probs = tuple(Fraction(weights.get(i, 0), denom) for i in range(t.n))
    dummy = Fraction(sum(w for i, w in weights.items() if i >= t.n), denom)
    return WinDistribution(probs, dummy)


def _rdseb_weights(t: Tournament, d: int, h: int) -> tuple[dict[int, int], int]:
    denoms = [1]
    for level in range(1, h + 1):
        parts = count_equipartitions(d**level, d)
        denoms.append(parts * denoms[-1] ** d * d)

    memo: dict[int, dict[int, int]] = {}
    outcome: dict[int, int | None] = {}

    def solve(team_list: tuple[int, ...], level: int) -> dict[int, int]:
        if level == 0:
            return {team_list[0]: 1}
        mask = 0
        for x in team_list:
            mask |= 1 << x
        hit = memo.get(mask)
        if hit is not None:
            return hit
        acc: dict[int, int] = {}
        for blocks in equipartitions(team_list, d):
            dists = [list(solve(b, level - 1).items()) for b in blocks]
            for combo in itertools.product(*dists):
                weight = 1
                seen = 0
                for x, w in combo:
                    weight *= w
                    seen |= 1 << x
                if seen in outcome:
                    cw = outcome[seen]
                else:
                    cw = outcome[seen] = _local_winner(t, seen)
                if cw is not None:
                    acc[cw] = acc.get(cw, 0) + weight * d
                else:
                    for x, _ in combo:
                        acc[x] = acc.get(x, 0) + weight
        memo[mask] = acc
        return acc

    return solve(tuple(range(t.n)), h), denoms[h]


@dataclass(frozen=True)
class Bracket:
    """A seeded d-ary tree.

    ``leaves[p]`` is the (padded) team at leaf ``p``.  ``marks[l][p]`` is the
    mark in ``0..d-1`` of node ``p`` on level ``l``, where level 0 sits just
    above the leaves and the last level is the root.
    """

    d: int
    height: int
    leaves: tuple[int, ...]
    marks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.leaves) != self.d**self.height:
            raise ValueError("leaf count must be d**height")
        if sorted(self.leaves) != list(range(len(self.leaves))):
            raise ValueError("leaf assignment must be a bijection onto the padded teams")
        if len(self.marks) != self.height:
            raise ValueError("one mark row per inner level")
        for level, row in enumerate(self.marks):
            if len(row) != self.d ** (self.height - level - 1):
                raise ValueError(f"wrong number of marks on level {level}")
            if any(not 0 <= m < self.d for m in row):
                raise ValueError("marks must lie in 0..d-1")

    @property
    def inner_nodes(self) -> int:
        return sum(len(row) for row in self.marks)


def resolve_bracket(t: Tournament, bracket: Bracket) -> tuple[tuple[int, ...], ...]:
    """Label every node of ``bracket`` under padded tournament ``t``.

    Returns the label rows from the leaves up; the final row is the root.
    """
    d = bracket.d
    rows = [bracket.leaves]
    for marks in bracket.marks:
        below = rows[-1]
        row = []
        for p, mark in enumerate(marks):
            kids = below[p * d:(p + 1) * d]
            mask = 0
            for x in kids:
                mask |= 1 << x
            cw = _local_winner(t, mask)
            row.append(cw if cw is not None else kids[mark])
        rows.append(tuple(row))
    return tuple(rows)


def sample_bracket(
    t: Tournament, d: int, rng: np.random.Generator
) -> tuple[Bracket, int, tuple[tuple[int, ...], ...]]:
    """Draw a uniform seeding and uniform marks, then resolve the bracket.

    The returned winner is a padded index; values ``>= t.n`` are dummies.
    """
    h, size = bracket_height(t.n, d)
    padded = pad_with_dummies(t, size)
    leaves = tuple(int(x) for x in rng.permutation(size))
    marks = tuple(
        tuple(int(m) for m in rng.integers(0, d, size=d ** (h - level - 1)))
        for level in range(h)
    )
    bracket = Bracket(d, h, leaves, marks)
    labels = resolve_bracket(padded, bracket)
    return bracket, labels[-1][0], labels


def rdseb_sampler(d: int, t: Tournament, rng: np.random.Generator) -> int | None:
    _, winner, _ = sample_bracket(t, d, rng)
    return winner if winner < t.n else None


def rdseb_bruteforce(t: Tournament, d: int) -> WinDistribution:
    """Enumerate every (seeding, marks) bracket.  Factorial; small inputs only."""
    h, size = bracket_height(t.n, d)
    padded = pad_with_dummies(t, size)
    shape = [d ** (h - level - 1) for level in range(h)]
    inner = sum(shape)
    counts = [0] * size
    total = 0
    for leaves in itertools.permutations(range(size)):
        for flat in itertools.product(range(d), repeat=inner):
            marks, pos = [], 0
            for width in shape:
                marks.append(flat[pos:pos + width])
                pos += width
            labels = resolve_bracket(padded, Bracket(d, h, leaves, tuple(marks)))
            counts[labels[-1][0]] += 1
            total += 1
    probs = tuple(Fraction(counts[i], total) for i in range(t.n))
    return WinDistribution(probs, Fraction(sum(counts[t.n:]), total))


# -- extension to more teams ------------------------------------------------------------


def extension_depth(base_n: int, target_n: int) -> int:
    """Smallest ``d`` with ``base_n**d >= target_n``."""
    d, size = 1, base_n
    while size < target_n:
        size *= base_n
        d += 1
    return d


def _finalist_choices(padded: Tournament, group: Sequence[int]) -> list[int]:
    mask = 0
    for x in group:
        mask |= 1 << x
    return members(top_cycle_within(padded, mask))


def _base_distribution(base: Rule, t: Tournament, finalists: Sequence[int]) -> WinDistribution:
    return base.exact_eval(t.subtournament(finalists))


def _ext_exact(
    base: Rule, base_n: int, target_n: int | None, cap: int, t: Tournament
) -> WinDistribution:
    target = t.n if target_n is None else target_n
    _check_ext_target(base_n, target, t)
    size = base_n ** extension_depth(base_n, target)
    parts = count_equipartitions(size, base_n)
    if parts > cap:
        raise InfeasibleError(f"ext:{base.id}:{base_n} on {t.n} teams", parts, cap)
    padded = pad_with_dummies(t, size)
    acc = [Fraction(0)] * size
    base_dummy = Fraction(0)  # mass on dummies padded in by the base rule itself
    base_cache: dict[tuple[int, ...], WinDistribution] = {}
    part_weight = Fraction(1, parts)
    for groups in equipartitions(tuple(range(size)), base_n):
        choices = [_finalist_choices(padded, g) for g in groups]
        weight = part_weight / math.prod(len(c) for c in choices)
        for picked in itertools.product(*choices):
            finalists = tuple(sorted(picked))
            dist = base_cache.get(finalists)
            if dist is None:
                dist = base_cache[finalists] = _base_distribution(base, padded, finalists)
            for pos, team in enumerate(finalists):
                if dist.probs[pos]:
                    acc[team] += weight * dist.probs[pos]
            base_dummy += weight * dist.dummy_mass
    probs = tuple(acc[:t.n])
    dummy = sum(acc[t.n:], base_dummy)
    return WinDistribution(probs, dummy)


def _ext_sampler(
    base: Rule, base_n: int, target_n: int | None, t: Tournament, rng: np.random.Generator
) -> int | None:
    target = t.n if target_n is None else target_n
    _check_ext_target(base_n, target, t)
    size = base_n ** extension_depth(base_n, target)
    padded = pad_with_dummies(t, size)
    order = [int(x) for x in rng.permutation(size)]
    group_size = size // base_n
    picked = []
    for g in range(base_n):
        choices = _finalist_choices(padded, order[g * group_size:(g + 1) * group_size])
        picked.append(choices[int(rng.integers(len(choices)))])
    finalists = sorted(picked)
    won = base.sample(padded.subtournament(finalists), rng)
    if won is None:
        return None
    winner = finalists[won]
    return winner if winner < t.n else None


def _check_ext_target(base_n: int, target: int, t: Tournament) -> None:
    if t.n != target:
        raise RuleUndefinedError(f"extension built for {target} teams, got {t.n}")
    if target <= base_n:
        raise RuleUndefinedError(
            f"extension needs more than {base_n} teams, got {target}"
        )


def extend_rule(
    base: Rule,
    base_n: int,
    target_n: int | None = None,
    partition_cap: int = PARTITION_CAP,
) -> Rule:
    """Scale a rule for ``base_n`` teams up to ``target_n`` teams.

    Pads with dummies to ``base_n**d`` (smallest sufficient ``d``), splits
    the teams uniformly into ``base_n`` equal groups, draws one finalist per
    group uniformly from the group's top cycle, and runs ``base`` on the
    finalists (relabelled in increasing team order).  With ``target_n=None``
    the target is taken from each input tournament.

    The exact evaluator is attached only when the partition count fits under
    ``partition_cap`` and ``base`` itself is exact.
    """
    if base_n < 2:
        raise ValueError("base rule must cover at least 2 teams")
    if target_n is not None and target_n <= base_n:
        raise ValueError(f"target_n={target_n} must exceed base_n={base_n}")
    rule_id = f"ext:{base.id}:{base_n}"
    exact = None
    if base.exact_eval is not None:
        if target_n is None:
            exact = partial(_ext_exact, base, base_n, None, partition_cap)
        else:
            size = base_n ** extension_depth(base_n, target_n)
            if count_equipartitions(size, base_n) <= partition_cap:
                exact = partial(_ext_exact, base, base_n, target_n, partition_cap)
    return Rule(rule_id, exact, partial(_ext_sampler, base, base_n, target_n))


# -- bounds -------------------------------------------------------------------------


def falling_factorial(d: int, k: int) -> int:
    return math.prod(range(d - k + 1, d + 1))


def alpha_bound(d: int, k: int) -> Fraction:
    """Manipulability bound 1 - 2 (d)_k / d^(k+1) of the d-ary bracket."""
    if not 2 <= k <= d:
        raise ValueError(f"need 2 <= k <= d, got d={d}, k={k}")
    return 1 - Fraction(2 * falling_factorial(d, k), d ** (k + 1))


def ext_alpha_bound(alpha: Fraction, k: int, n: int) -> Fraction:
    """Manipulability bound of the extension of a k-SNM-alpha rule on n teams."""
    alpha = Fraction(alpha)
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    spill = Fraction((k - 1) ** 2, n)
    return alpha * (1 - spill) + spill


# -- registry -----------------------------------------------------------------------


def _rdseb_exact_eval(d: int, t: Tournament) -> WinDistribution:
    return rdseb_exact(t, d)


UNIFORM = Rule("uniform", uniform_rule)
TOP_CYCLE = Rule("top-cycle", topcycle_rule)
SIGNIFICANT_ONLY = Rule("significant-only", significant_only)
MATCH_WINNER = Rule("match-winner", match_winner)


def rdseb_rule(d: int) -> Rule:
    if d < 2:
        raise ValueError("bracket arity must be at least 2")
    return Rule(f"rdseb:{d}", partial(_rdseb_exact_eval, d), partial(rdseb_sampler, d))


def get_rule(rule_id: str) -> Rule:
    """Resolve a rule id such as ``rdseb:3`` or ``ext:significant-only:6``."""
    fixed = {r.id: r for r in (UNIFORM, TOP_CYCLE, SIGNIFICANT_ONLY, MATCH_WINNER)}
    if rule_id in fixed:
        return fixed[rule_id]
    if rule_id.startswith("rdseb:"):
        arg = rule_id.split(":", 1)[1]
        if arg.isdigit() and int(arg) >= 2:
            return rdseb_rule(int(arg))
        raise ValueError(f"bad bracket arity in {rule_id!r}")
    if rule_id.startswith("ext:"):
        body, _, n_text = rule_id[4:].rpartition(":")
        if not body or not n_text.isdigit():
            raise ValueError(f"expected ext:<base-id>:<base-n>, got {rule_id!r}")
        return extend_rule(get_rule(body), int(n_text))
    raise ValueError(f"unknown rule {rule_id!r}")
