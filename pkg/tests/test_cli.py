import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import double_cycle
from tourney_audit.cli import main, round_half_up
from tourney_audit.tournament import (
    parse_text,
    random_tournament,
    serialize_compact,
    serialize_text,
)


@pytest.fixture
def trn_files(tmp_path, c3):
    paths = {}
    for name, t in [("cycle3", c3), ("dbl6", double_cycle())]:
        p = tmp_path / f"{name}.trn"
        p.write_text(serialize_text(t))
        paths[name] = str(p)
    return paths


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out) if out else None, err


# -- eval ------------------------------------------------------------------------------------


def test_eval_significant_only_double_cycle(capsys, trn_files):
    code, payload, _ = run_json(capsys, "eval", "--rule", "significant-only", "--input", trn_files["dbl6"])
    assert code == 0
    assert payload["probs"] == ["1/6"] * 6
    assert payload["schema_version"] == 1


def test_eval_rdseb_three_cycle(capsys, trn_files):
    code, payload, _ = run_json(capsys, "eval", "--rule", "rdseb:3", "--input", trn_files["cycle3"])
    assert code == 0 and payload["probs"] == ["1/3"] * 3


def test_eval_accepts_compact_and_text_format(capsys):
    code, out, _ = run(capsys, "eval", "--rule", "top-cycle", "--compact", "3:5", "--format", "text")
    assert code == 0
    assert out.splitlines()[0] == "team 0: 1/3 (0.333333)"


def test_eval_csv(capsys):
    code, out, _ = run(capsys, "eval", "--rule", "uniform", "--compact", "2:1", "--format", "csv")
    assert code == 0
    assert out.splitlines() == ["team,rational,float", "0,1/2,0.5", "1,1/2,0.5"]


def test_eval_undefined_rule_exits_2(capsys, trn_files):
    code, out, err = run(capsys, "eval", "--rule", "significant-only", "--input", trn_files["cycle3"])
    assert code == 2 and out == ""
    assert "rule undefined below 6 teams" in err


def test_eval_parse_error_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.trn"
    bad.write_text("3\n-11\n0-1\n10-\n")
    code, _, err = run(capsys, "eval", "--rule", "uniform", "--input", str(bad))
    assert code == 2
    assert str(bad) in err and "line 2" in err


def test_eval_missing_input(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--rule", "uniform", "--input", str(tmp_path / "none.trn"))
    assert code == 2 and "cannot read" in err
    code, _, err = run(capsys, "eval", "--rule", "uniform")
    assert code == 2


def test_unknown_flags_are_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["eval", "--rule", "uniform", "--compact", "2:1", "--bogus"])
    assert info.value.code == 2


def test_output_flag_writes_file(capsys, tmp_path):
    dest = tmp_path / "out.json"
    code, out, _ = run(capsys, "eval", "--rule", "uniform", "--compact", "2:1", "--output", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["probs"] == ["1/2", "1/2"]


# -- audit -------------------------------------------------------------------------------------


def test_audit_significant_only_tight_half(capsys):
    code, payload, _ = run_json(
        capsys, "audit", "--rule", "significant-only", "--n", "6", "--k", "3",
        "--mode", "exhaustive", "--assert-alpha", "1/2",
    )
    assert code == 0
    assert payload["alpha_observed"]["rational"] == "1/2"
    assert payload["assert_alpha"] == {"limit": "1/2", "held": True}
    code, _, _ = run_json(
        capsys, "audit", "--rule", "significant-only", "--n", "6", "--k", "3",
        "--assert-alpha", "49/100",
    )
    assert code == 1


def test_audit_binary_bracket_pairs(capsys):
    code, payload, _ = run_json(
        capsys, "audit", "--rule", "rdseb:2", "--n", "4", "--k", "2",
        "--mode", "exhaustive", "--assert-alpha", "1/3",
    )
    assert code == 0
    assert set(payload) >= {"rule", "n", "k", "mode", "alpha_observed", "witness",
                            "scenarios_checked", "seed", "schema_version"}
    assert "wall_time_ms" not in payload


def test_audit_exhaustive_output_is_byte_identical(capsys):
    argv = ["audit", "--rule", "rdseb:2", "--n", "4", "--k", "3"]
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv, "--threads", "1")
    assert first == second


def test_audit_timing_flag(capsys):
    _, payload, _ = run_json(capsys, "audit", "--rule", "uniform", "--n", "3", "--k", "2", "--timing")
    assert payload["wall_time_ms"] >= 0


def test_audit_sampled_needs_seed(capsys):
    code, _, err = run(capsys, "audit", "--rule", "rdseb:2", "--n", "4", "--k", "2", "--mode", "sampled")
    assert code == 2 and "--seed" in err
    code, payload, _ = run_json(
        capsys, "audit", "--rule", "rdseb:2", "--n", "4", "--k", "2", "--mode", "sampled",
        "--samples", "30", "--seed", "9",
    )
    assert code == 0 and payload["seed"] == 9


def test_audit_properties(capsys):
    code, payload, _ = run_json(capsys, "audit", "--rule", "rdseb:2", "--n", "4", "--property", "monotone")
    assert code == 0 and payload["passed"]
    code, payload, _ = run_json(capsys, "audit", "--rule", "uniform", "--n", "4", "--property", "cc")
    assert code == 1 and payload["witness"]["probability"] == "1/4"
    code, _, _ = run_json(capsys, "audit", "--rule", "rdseb:3", "--n", "5", "--property", "top-cycle")
    assert code == 0
    code, payload, _ = run_json(
        capsys, "audit", "--rule", "rdseb:3", "--n", "9", "--property", "top-cycle",
        "--mode", "sampled", "--tournaments", "5", "--draws", "50", "--seed", "1",
    )
    assert code == 0 and payload["checked"] == 250


def test_audit_usage_errors(capsys):
    assert run(capsys, "audit", "--rule", "uniform", "--n", "4")[0] == 2  # no --k
    assert run(capsys, "audit", "--rule", "nope", "--n", "4", "--k", "2")[0] == 2
    assert run(capsys, "audit", "--rule", "uniform", "--n", "9", "--k", "2")[0] == 2
    assert run(capsys, "audit", "--rule", "uniform", "--n", "4", "--property", "cc", "--mode", "sampled")[0] == 2


# -- bounds ------------------------------------------------------------------------------------


def test_round_half_up():
    assert round_half_up(Fraction(1, 8), 2) == "0.13"
    assert round_half_up(Fraction(23, 27)) == "0.8519"
    assert round_half_up(Fraction(1)) == "1.0000"


def test_bounds_cells(capsys):
    code, payload, _ = run_json(capsys, "bounds", "--d-max", "7")
    assert code == 0
    cells = {(c["d"], c["k"]): c for c in payload["cells"]}
    assert len(cells) == 15
    assert cells[(3, 3)]["rounded"] == "0.8519"
    assert cells[(6, 4)]["rounded"] == "0.9074"
    assert cells[(7, 5)]["rounded"] == "0.9572"
    assert cells[(3, 3)]["rational"] == "23/27"


def test_bounds_text_and_csv(capsys):
    code, out, _ = run(capsys, "bounds", "--d-max", "4", "--format", "text")
    assert code == 0
    assert out.splitlines()[1].split() == ["3", "0.8519", "-"]
    code, out, _ = run(capsys, "bounds", "--d-max", "4", "--format", "csv")
    assert out.splitlines()[0] == "d,k=3,k=4"
    assert run(capsys, "bounds", "--d-max", "2")[0] == 2


# -- gen and sample ---------------------------------------------------------------------------


def test_gen_is_seed_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "gen", "--n", "6", "--count", "3", "--seed", "4", "--out-dir", str(a))[0] == 0
    assert run(capsys, "gen", "--n", "6", "--count", "3", "--seed", "4", "--out-dir", str(b))[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["tournament_0000.trn", "tournament_0001.trn", "tournament_0002.trn"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert parse_text((a / name).read_text()).n == 6


def test_gen_requires_seed(capsys, tmp_path):
    code, _, err = run(capsys, "gen", "--n", "4", "--out-dir", str(tmp_path))
    assert code == 2 and "--seed" in err


def test_gen_reports_unwritable_path(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "gen", "--n", "4", "--seed", "1", "--out-dir", str(blocker / "sub"))
    assert code == 2 and str(blocker) in err


def test_sample_three_cycle_frequencies(capsys, trn_files):
    draws = 300_000
    code, payload, _ = run_json(
        capsys, "sample", "--rule", "rdseb:3", "--input", trn_files["cycle3"],
        "--samples", str(draws), "--seed", "12",
    )
    assert code == 0
    assert payload["exact"] == ["1/3"] * 3
    sigma = math.sqrt(draws * (1 / 3) * (2 / 3))
    assert all(abs(c - draws / 3) <= 3 * sigma for c in payload["counts"])
    assert payload["dummy_wins"] == 0


def test_sample_extension_stays_in_top_cycle(capsys):
    t = random_tournament(36, np.random.default_rng(36))
    code, payload, _ = run_json(
        capsys, "sample", "--rule", "ext:significant-only:6", "--compact", serialize_compact(t),
        "--samples", "2000", "--seed", "3",
    )
    assert code == 0
    assert payload["exact"] is None
    assert payload["outside_top_cycle"] == 0 and payload["dummy_wins"] == 0
    assert sum(payload["counts"]) == 2000
