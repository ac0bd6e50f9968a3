"""Benchmark harness: specs, classification, suites, CSV, hardness filter."""

import pytest
from gmpy2 import mpq

from mdpmc.bench import (
    CSV_COLUMNS,
    check_model,
    classify,
    format_value,
    hardness_report,
    is_hard,
    parse_algorithm_spec,
    parse_objective_spec,
    parse_suite,
    run_suite,
    write_csv,
)
from mdpmc.formats import ParseError, write_model
from mdpmc.gen import gen_hard_mn, gen_pi_trap
from mdpmc.model import INF, BadParameter, Objective, TimeoutExceeded


class TestObjectiveSpecs:
    def test_reach(self):
        o = parse_objective_spec("reach:max:goal")
        assert o.kind == "reach" and o.opt == "max" and o.target_label == "goal"
        assert o.spec_string() == "reach:max:goal"

    def test_reward(self):
        o = parse_objective_spec("reward:min")
        assert o.kind == "total_reward" and o.opt == "min"
        assert o.spec_string() == "reward:min"

    @pytest.mark.parametrize(
        "bad", ["reach:max", "reach:up:goal", "reward:max:x", "nope", "reach:min:"]
    )
    def test_rejects(self, bad):
        with pytest.raises(BadParameter):
            parse_objective_spec(bad)


class TestAlgorithmSpecs:
    def test_plain_and_options(self):
        a = parse_algorithm_spec("pi[evaluator=exact]")
        assert a.name == "pi" and a.options == {"evaluator": "exact"}
        assert a.config == "evaluator=exact"
        assert parse_algorithm_spec("ovi").options == {}

    def test_typed_values(self):
        a = parse_algorithm_spec("vi[epsilon=1e-6,mode=absolute,max_iterations=50]")
        assert a.options == {"epsilon": 1e-6, "mode": "absolute", "max_iterations": 50}
        assert a.config == "epsilon=1e-06;max_iterations=50;mode=absolute"
        b = parse_algorithm_spec("lp[unique_action_equality=true]")
        assert b.options["unique_action_equality"] is True

    def test_semicolon_separator_accepted(self):
        a = parse_algorithm_spec("vi[epsilon=1e-6;mode=absolute]")
        assert a.options == {"epsilon": 1e-6, "mode": "absolute"}

    def test_topo_carries_backend_options(self):
        a = parse_algorithm_spec("topo[backend=lp,field=rational]")
        assert a.name == "topo"
        assert a.options == {"backend": "lp", "field": "rational"}

    def test_spec_string_round_trip(self):
        a = parse_algorithm_spec("vi[mode=absolute,epsilon=1e-6]")
        assert parse_algorithm_spec(a.spec_string()) == a

    @pytest.mark.parametrize(
        "bad",
        [
            "vi[",
            "zz",
            "vi[epsilon]",
            "vi[bogus=1]",
            "pi[epsilon=x]",
            "topo[backend=zz]",
            "vi[epsilon=1,epsilon=2]",
            "lp[unique_action_equality=maybe]",
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(BadParameter):
            parse_algorithm_spec(bad)


class TestClassification:
    def test_example_incorrect(self):
        assert classify(0.247, mpq(1, 3)) == "incorrect"

    def test_example_small_value_exemption(self):
        assert classify(5e-9, mpq(1, 10**9)) == "correct"

    def test_example_exact_match(self):
        assert classify(mpq(1, 3), mpq(1, 3)) == "correct"

    def test_boundary_not_strict(self):
        # the rule is strictly-greater-than, so exactly 1e-3 relative passes
        assert classify(mpq(1, 3) * (1 + mpq(1, 1000)), mpq(1, 3)) == "correct"

    def test_near_boundary_floats(self):
        assert classify(0.5001, mpq(1, 2)) == "correct"
        assert classify(0.501, mpq(1, 2)) == "incorrect"

    def test_infinite_result_is_incorrect(self):
        assert classify(INF, mpq(1, 2)) == "incorrect"


class TestFormatValue:
    def test_shapes(self):
        assert format_value(None) == ""
        assert format_value(INF) == "inf"
        assert format_value(mpq(1, 3)) == "1/3"
        assert format_value(0.5) == "0.5"

    def test_numpy_scalars_render_plain(self):
        import numpy as np

        assert format_value(np.float64(0.25)) == "0.25"


class TestCheckModel:
    def test_exact_pi(self):
        out = check_model(
            gen_hard_mn(5), Objective.reach("min", label="goal"), "pi[evaluator=exact]"
        )
        assert out.value == mpq(1, 3)
        assert out.status == "exact"
        assert out.solve_ms >= 0 and out.build_ms >= 0

    def test_certified_interval(self):
        out = check_model(
            gen_pi_trap("1/10"), Objective.reach("max", label="goal"), "ovi[epsilon=1e-6]"
        )
        assert out.status == "certified"
        assert abs(out.value - 0.5) < 1e-6
        assert out.lower <= 0.5 <= out.upper

    def test_deadline_carries_partial_iterations(self):
        import time

        deadline = time.monotonic() + 0.05
        with pytest.raises(TimeoutExceeded) as info:
            check_model(
                gen_hard_mn(20),
                Objective.reach("min", label="goal"),
                "vi[epsilon=1e-20]",
                deadline=deadline,
            )
        assert info.value.iterations > 0


@pytest.fixture()
def suite_dir(tmp_path):
    (tmp_path / "m5.model").write_text(write_model(gen_hard_mn(5)))
    (tmp_path / "trap.model").write_text(write_model(gen_pi_trap("1/10")))
    return tmp_path


SUITE = """
# demo suite
m5.model reach:min:goal pi[evaluator=exact] 1/3
m5.model reach:max:goal lp[field=rational] 0.247
m5.model reach:min:goal vi -
trap.model reach:max:goal ovi[epsilon=1e-6] 1/2
trap.model reach:max:goal topo[backend=pi] 1/2
missing.model reach:max:goal vi 1/2
"""


class TestSuites:
    def test_parse(self):
        rows = parse_suite(SUITE)
        assert len(rows) == 6
        assert rows[0].reference == mpq(1, 3)
        assert rows[2].reference is None

    @pytest.mark.parametrize(
        "bad",
        ["a b", "m reach:max:goal zz", "m bogus vi", "m reach:max:goal vi notanumber"],
    )
    def test_parse_errors_abort(self, bad):
        with pytest.raises(ParseError):
            parse_suite(bad)

    def test_run_statuses(self, suite_dir):
        recs = run_suite(parse_suite(SUITE), timeout=30.0, base_dir=str(suite_dir))
        statuses = [r.status for r in recs]
        assert statuses == [
            "correct",
            "incorrect",
            "no-reference",
            "correct",
            "correct",
            "error",
        ]

    def test_csv_schema_and_determinism(self, suite_dir):
        rows = parse_suite(SUITE)
        first = run_suite(rows, timeout=30.0, base_dir=str(suite_dir))
        again = run_suite(rows, timeout=30.0, base_dir=str(suite_dir))
        text = write_csv(first)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(rows)

        def stable(recs):
            return [
                (r.model, r.objective, r.algorithm, r.config, r.status, str(r.value))
                for r in recs
            ]

        assert stable(first) == stable(again)

    def test_timeout_becomes_status_row(self, suite_dir):
        (suite_dir / "m20.model").write_text(write_model(gen_hard_mn(20)))
        rows = parse_suite("m20.model reach:min:goal vi[epsilon=1e-20] 1/3")
        recs = run_suite(rows, timeout=0.05, base_dir=str(suite_dir))
        assert [r.status for r in recs] == ["timeout"]
        assert recs[0].iterations > 0
        assert recs[0].value is None


class TestHardness:
    def test_rule(self):
        assert not is_hard(10.0, 500.0, 1000.0)
        assert is_hard(2000.0, 500.0, 1000.0)
        # solve must beat build AND the total must clear the floor
        assert not is_hard(600.0, 300.0, 1000.0)
        assert not is_hard(400.0, 700.0, 1000.0)

    def test_empty_input(self):
        assert hardness_report("", 1000.0) == []

    def test_report_filters_to_vi(self, suite_dir):
        recs = run_suite(parse_suite(SUITE), timeout=30.0, base_dir=str(suite_dir))
        text = write_csv(recs)
        assert hardness_report(text, floor_ms=1e9, base_dir=str(suite_dir)) == []
        hard = hardness_report(text, floor_ms=0.0, base_dir=str(suite_dir))
        for h in hard:
            assert h.model == "m5.model"
            assert h.solve_ms > h.build_ms
