"""Minimal winning groups and the near-/far-Condorcet classification."""

from __future__ import annotations

from dataclasses import dataclass, field

from .tournament import (
    Tournament,
    condorcet_winner,
    members,
    popcount,
    serialize_compact,
)


@dataclass(frozen=True)
class MwGroup:
    """A leader together with every team that beats it."""

    leader: int
    members: int  # bitmask, includes the leader

    @property
    def size(self) -> int:
        return popcount(self.members)

    def teams(self) -> list[int]:
        return members(self.members)


@dataclass(frozen=True)
class TournamentClass:
    """``kind`` is "condorcet", "far" or "near"."""

    kind: str
    winner: int | None = None
    num_mw_pairs: int | None = None

    def label(self) -> str:
        if self.kind == "condorcet":
            return f"Condorcet({self.winner})"
        if self.kind == "far":
            return "FarCondorcet"
        return f"NearCondorcet({self.num_mw_pairs})"


def mw_groups(t: Tournament, k: int) -> list[MwGroup]:
    """One group per team with between 1 and k-1 losses, sorted by leader."""
    if k < 2:
        raise ValueError("k must be at least 2")
    groups = []
    for i in range(t.n):
        lost_to = t.losses(i)
        if 1 <= popcount(lost_to) <= k - 1:
            groups.append(MwGroup(i, lost_to | 1 << i))
    return groups


def classify(t: Tournament) -> TournamentClass:
    w = condorcet_winner(t)
    if w is not None:
        return TournamentClass("condorcet", winner=w)
    groups = mw_groups(t, 3)
    if not groups:
        return TournamentClass("far")
    return TournamentClass("near", num_mw_pairs=sum(1 for g in groups if g.size == 2))


def significant_teams(groups: list[MwGroup]) -> int:
    mask = 0
    for g in groups:
        mask |= g.members
    return mask


@dataclass
class StructureDiagnostic:
    tournament: Tournament
    cls: TournamentClass
    groups: list[MwGroup]
    significant_count: int
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "tournament": serialize_compact(self.tournament),
            "class": self.cls.label(),
            "mw_groups": [{"leader": g.leader, "members": g.teams()} for g in self.groups],
            "significant_count": self.significant_count,
            "violations": list(self.violations),
        }


# significant-team cap by number of MW pairs
_SIGNIFICANT_CAP = {0: 6, 1: 5, 2: 4, 3: 3}


def check_structural_lemmas(t: Tournament) -> StructureDiagnostic:
    """Check the k=3 structure facts on one near-Condorcet tournament.

    Clauses: (a) unique leader per group, (b) pairwise intersection with a
    leader of one group inside the other, (c) at most 6 significant teams,
    at most 3 MW pairs covering at most 3 teams, (d) 5/4/3 significant-team
    caps for 1/2/3 MW pairs.
    """
    cls = classify(t)
    if cls.kind != "near":
        raise ValueError(f"expected a near-Condorcet tournament, got {cls.label()}")
    groups = mw_groups(t, 3)
    sig = significant_teams(groups)
    diag = StructureDiagnostic(t, cls, groups, popcount(sig))
    bad = diag.violations

    for g in groups:
        leaders = [
            j for j in g.teams()
            if t.losses(j) | 1 << j == g.members
        ]
        if leaders != [g.leader]:
            bad.append(f"(a) group {g.teams()} has leaders {leaders}")

    for x in range(len(groups)):
        for y in range(x + 1, len(groups)):
            g1, g2 = groups[x], groups[y]
            if not g1.members & g2.members:
                bad.append(f"(b) groups {g1.teams()} and {g2.teams()} are disjoint")
            elif not (g2.members >> g1.leader & 1 or g1.members >> g2.leader & 1):
                bad.append(f"(b) neither leader of {g1.teams()}, {g2.teams()} is in the other")

    pairs = [g for g in groups if g.size == 2]
    pair_union = significant_teams(pairs)
    if diag.significant_count > 6:
        bad.append(f"(c) {diag.significant_count} significant teams")
    if len(pairs) > 3:
        bad.append(f"(c) {len(pairs)} MW pairs")
    if popcount(pair_union) > 3:
        bad.append(f"(c) MW pairs cover {popcount(pair_union)} teams")
    cap = _SIGNIFICANT_CAP.get(len(pairs))
    if cap is not None and diag.significant_count > cap:
        bad.append(
            f"(d) {len(pairs)} MW pairs but {diag.significant_count} significant teams"
        )
    return diag
