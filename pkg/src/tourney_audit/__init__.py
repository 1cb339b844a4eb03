"""Tournament rules over exact rational probabilities, with manipulability audits."""

from .rules import (
    Rule,
    alpha_bound,
    ext_alpha_bound,
    extend_rule,
    get_rule,
    rdseb_exact,
    significant_only,
    topcycle_rule,
    uniform_rule,
)
from .tournament import Tournament, WinDistribution, condorcet_winner, top_cycle

__all__ = [
    "Rule",
    "Tournament",
    "WinDistribution",
    "alpha_bound",
    "condorcet_winner",
    "ext_alpha_bound",
    "extend_rule",
    "get_rule",
    "rdseb_exact",
    "significant_only",
    "top_cycle",
    "topcycle_rule",
    "uniform_rule",
]
