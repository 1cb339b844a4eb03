"""Tournament representation, graph queries, enumeration and (de)serialization.

A tournament on ``n`` teams is stored as one bitmask per team: bit ``j`` of
``wins[i]`` is set iff team ``i`` beats team ``j``.  Every tournament also has
an integer *index* whose bits give the orientation of the upper-triangle
matches in the order (0,1), (0,2), ..., (0,n-1), (1,2), ..., LSB first; bit
set means the lower-numbered team wins.  Enumeration walks the index range.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

#: Largest team count :func:`enumerate_tournaments` accepts (2^21 tournaments).
ENUMERATION_CAP = 7


class ParseError(ValueError):
    """Malformed tournament input.  ``line``/``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


@lru_cache(maxsize=None)
def pair_list(n: int) -> tuple[tuple[int, int], ...]:
    """Upper-triangle pairs in index-bit order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


@lru_cache(maxsize=None)
def pair_bit(n: int) -> dict[tuple[int, int], int]:
    return {p: k for k, p in enumerate(pair_list(n))}


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def popcount(x: int) -> int:
    return x.bit_count()


def members(mask: int) -> list[int]:
    """Team indices in a bitmask team set, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def team_set(teams: Iterable[int]) -> int:
    mask = 0
    for t in teams:
        mask |= 1 << t
    return mask


@dataclass(frozen=True)
class Tournament:
    """Complete directed graph on ``n`` labelled teams."""

    n: int
    wins: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("a tournament needs at least one team")
        if len(self.wins) != self.n:
            raise ValueError(f"expected {self.n} win masks, got {len(self.wins)}")
        full = (1 << self.n) - 1
        for i, w in enumerate(self.wins):
            if w & ~full:
                raise ValueError(f"team {i} beats a team outside 0..{self.n - 1}")
            if w >> i & 1:
                raise ValueError(f"team {i} beats itself")
        for i, j in pair_list(self.n):
            if (self.wins[i] >> j & 1) == (self.wins[j] >> i & 1):
                raise ValueError(f"match ({i},{j}) must have exactly one winner")

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_index(cls, n: int, index: int) -> "Tournament":
        if index < 0 or index >> num_pairs(n):
            raise ValueError(f"index {index} out of range for n={n}")
        wins = [0] * n
        for k, (i, j) in enumerate(pair_list(n)):
            if index >> k & 1:
                wins[i] |= 1 << j
            else:
                wins[j] |= 1 << i
        return cls(n, tuple(wins))

    @classmethod
    def from_matrix(cls, beats: Sequence[Sequence[bool | int]]) -> "Tournament":
        n = len(beats)
        wins = tuple(team_set(j for j in range(n) if beats[i][j]) for i in range(n))
        return cls(n, wins)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Tournament":
        """Build from (winner, loser) pairs; every match must appear once."""
        wins = [0] * n
        for a, b in edges:
            wins[a] |= 1 << b
        return cls(n, tuple(wins))

    # -- queries -------------------------------------------------------------

    @property
    def index(self) -> int:
        idx = 0
        for k, (i, j) in enumerate(pair_list(self.n)):
            if self.wins[i] >> j & 1:
                idx |= 1 << k
        return idx

    def beats(self, i: int, j: int) -> bool:
        return bool(self.wins[i] >> j & 1)

    def matrix(self) -> list[list[bool]]:
        return [[self.beats(i, j) for j in range(self.n)] for i in range(self.n)]

    def losses(self, i: int) -> int:
        """Bitmask of teams beating ``i``."""
        full = (1 << self.n) - 1
        return full & ~self.wins[i] & ~(1 << i)

    def out_degree(self, i: int) -> int:
        return popcount(self.wins[i])

    def in_degree(self, i: int) -> int:
        return self.n - 1 - popcount(self.wins[i])

    def flip(self, i: int, j: int) -> "Tournament":
        """Reverse the result of the match between ``i`` and ``j``."""
        wins = list(self.wins)
        wins[i] ^= 1 << j
        wins[j] ^= 1 << i
        return Tournament(self.n, tuple(wins))

    def subtournament(self, teams: Sequence[int]) -> "Tournament":
        """Induced tournament on ``teams``, relabelled 0..len-1 in the given order."""
        pos = {t: p for p, t in enumerate(teams)}
        wins = []
        for t in teams:
            w = 0
            for u in members(self.wins[t]):
                p = pos.get(u)
                if p is not None:
                    w |= 1 << p
            wins.append(w)
        return Tournament(len(teams), tuple(wins))

    def __repr__(self) -> str:
        return f"Tournament({serialize_compact(self)!r})"


@dataclass(frozen=True)
class WinDistribution:
    """Exact winning probabilities of the real teams plus mass lost to dummies."""

    probs: tuple[Fraction, ...]
    dummy_mass: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if any(p < 0 for p in self.probs) or self.dummy_mass < 0:
            raise ValueError("probabilities must be non-negative")
        total = sum(self.probs, Fraction(0)) + self.dummy_mass
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @property
    def n(self) -> int:
        return len(self.probs)

    def __getitem__(self, i: int) -> Fraction:
        return self.probs[i]

    def mass(self, mask: int) -> Fraction:
        """Joint winning probability of a team set."""
        return sum((self.probs[i] for i in members(mask)), Fraction(0))

    def support(self) -> int:
        return team_set(i for i, p in enumerate(self.probs) if p)

    def to_json(self) -> dict:
        return {
            "probs": [format_fraction(p) for p in self.probs],
            "dummy_mass": format_fraction(self.dummy_mass),
            "floats": [float(p) for p in self.probs],
        }


def format_fraction(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


# -- graph queries -------------------------------------------------------------


def condorcet_winner(t: Tournament) -> int | None:
    """The team beating every other team, if any."""
    for i in range(t.n):
        if popcount(t.wins[i]) == t.n - 1:
            return i
    return None


def top_cycle(t: Tournament) -> int:
    """Smallest nonempty team set that loses no match to an outsider (bitmask)."""
    return top_cycle_within(t, (1 << t.n) - 1)


def top_cycle_within(t: Tournament, mask: int) -> int:
    """Top cycle of the sub-tournament induced by team set ``mask``.

    Starts from a team with the most wins inside ``mask`` (always in the top
    cycle) and keeps adding every team that beats a current member.
    """
    start = max(members(mask), key=lambda i: popcount(t.wins[i] & mask))
    cycle = 1 << start
    frontier = cycle
    while frontier:
        beaters = 0
        for i in members(frontier):
            beaters |= t.losses(i)
        frontier = beaters & mask & ~cycle
        cycle |= frontier
    return cycle


def adjacency_variants(t: Tournament, s: int) -> Iterator[Tournament]:
    """All tournaments that agree with ``t`` except on matches inside ``s``.

    Yields 2^C(|s|,2) tournaments, ``t`` itself first, ordered by the flip
    mask over the internal pairs (pairs in index order, LSB first).
    """
    team_list = members(s)
    if len(team_list) < 2:
        raise ValueError("a coalition needs at least two teams")
    inner = list(itertools.combinations(team_list, 2))
    for flips in range(1 << len(inner)):
        wins = list(t.wins)
        for b, (i, j) in enumerate(inner):
            if flips >> b & 1:
                wins[i] ^= 1 << j
                wins[j] ^= 1 << i
        yield Tournament(t.n, tuple(wins))


def internal_pair_bits(n: int, s: int) -> list[int]:
    """Index-bit positions of the matches inside team set ``s``."""
    lookup = pair_bit(n)
    return [lookup[p] for p in itertools.combinations(members(s), 2)]


def enumerate_tournaments(
    n: int, start: int = 0, stop: int | None = None, cap: int = ENUMERATION_CAP
) -> Iterator[Tournament]:
    """Every labelled tournament on ``n`` teams, by index.

    ``start``/``stop`` select an index sub-range so callers can split the work.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > cap:
        raise ValueError(
            f"refusing to enumerate 2^{num_pairs(n)} tournaments on {n} teams "
            f"(cap is n <= {cap})"
        )
    total = 1 << num_pairs(n)
    stop = total if stop is None else min(stop, total)
    for idx in range(start, stop):
        yield Tournament.from_index(n, idx)


def tournament_count(n: int) -> int:
    return 1 << num_pairs(n)


def random_tournament(n: int, rng: np.random.Generator) -> Tournament:
    """Each match decided by an independent fair coin drawn from ``rng``."""
    m = num_pairs(n)
    if m == 0:
        return Tournament(1, (0,))
    bits = rng.integers(0, 2, size=m, dtype=np.uint8)
    idx = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
    return Tournament.from_index(n, idx)


def pad_with_dummies(t: Tournament, target: int) -> Tournament:
    """Append dummy teams that lose to every real team.

    Among dummies the lower index wins, so padding is deterministic.
    """
    if target < t.n:
        raise ValueError(f"cannot pad {t.n} teams down to {target}")
    if target == t.n:
        return t
    real = (1 << t.n) - 1
    wins = [w | (((1 << target) - 1) & ~real) for w in t.wins]
    for i in range(t.n, target):
        below = ((1 << target) - 1) & ~((1 << (i + 1)) - 1)
        wins.append(below)
    return Tournament(target, tuple(wins))


# -- serialization ---------------------------------------------------------------


def serialize_text(t: Tournament) -> str:
    rows = [str(t.n)]
    for i in range(t.n):
        rows.append(
            "".join("-" if i == j else ("1" if t.beats(i, j) else "0") for j in range(t.n))
        )
    return "\n".join(rows) + "\n"


def parse_text(text: str) -> Tournament:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty input", line=1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"expected team count, got {lines[0].strip()!r}", line=1) from None
    if n < 1:
        raise ParseError("team count must be positive", line=1)
    rows = [ln.strip() for ln in lines[1:]]
    if len(rows) != n:
        raise ParseError(f"header says n={n} but found {len(rows)} matrix rows", line=len(lines))
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ParseError(f"row has {len(row)} entries, expected {n}", line=i + 2)
        for j, ch in enumerate(row):
            if i == j:
                if ch != "-":
                    raise ParseError("diagonal entry must be '-'", line=i + 2, column=j + 1)
            elif ch not in "01":
                raise ParseError(f"unexpected character {ch!r}", line=i + 2, column=j + 1)
    for i in range(n):
        for j in range(i + 1, n):
            if rows[i][j] == rows[j][i]:
                raise ParseError(
                    f"pair ({i},{j}) is asymmetric: entries ({i},{j})={rows[i][j]} "
                    f"and ({j},{i})={rows[j][i]} must differ",
                    line=i + 2,
                    column=j + 1,
                )
    return Tournament.from_matrix([[ch == "1" for ch in row] for row in rows])


def serialize_compact(t: Tournament) -> str:
    digits = max(1, -(-num_pairs(t.n) // 4))
    return f"{t.n}:{t.index:0{digits}x}"


def parse_compact(text: str) -> Tournament:
    head, sep, body = text.strip().partition(":")
    if not sep:
        raise ParseError("compact form must look like '<n>:<hex>'", column=1)
    try:
        n = int(head)
    except ValueError:
        raise ParseError(f"bad team count {head!r}", column=1) from None
    if n < 1:
        raise ParseError("team count must be positive", column=1)
    try:
        idx = int(body, 16)
    except ValueError:
        raise ParseError(f"bad hex payload {body!r}", column=len(head) + 2) from None
    if idx >> num_pairs(n):
        raise ParseError(
            f"payload sets bits beyond the {num_pairs(n)} matches of n={n}",
            column=len(head) + 2,
        )
    return Tournament.from_index(n, idx)


def parse_any(text: str) -> Tournament:
    """Accept either the matrix text format or the compact form."""
    stripped = text.strip()
    if ":" in stripped and "\n" not in stripped:
        return parse_compact(stripped)
    return parse_text(text)
