import copy
import math
import random

import pytest

import enps_lab
from enps_lab.engine import ModelError, run
from enps_lab.model import (
    ControllerParams,
    ParseError,
    build_m1,
    build_m2,
    parse_model,
    parse_params,
    serialize_model,
    serialize_params,
)

from conftest import bounded_random_system


def same_system(a, b):
    """Structural equality independent of membrane list order."""
    key = lambda s: {
        m.label: (m.parent, dict(m.variables), list(m.programs)) for m in s.membranes
    }
    return key(a) == key(b)


def steady_outputs(system, prox, ticks=10, seed=1):
    rng = random.Random(seed)
    for _ in range(ticks):
        for i, value in enumerate(prox, start=1):
            system.set(f"s{i}.x", value)
        run(system, 1, rng)
    return system.get("s.x_sl"), system.get("s.x_sr")


def random_params(rng, k=6, sensor_bound=1.0):
    wl = tuple(round(rng.uniform(-3.0, 3.0), 3) for _ in range(k))
    wr = tuple(round(rng.uniform(-3.0, 3.0), 3) for _ in range(k))
    return ControllerParams(
        k=k,
        cruise=round(rng.uniform(1.0, 20.0), 3),
        weight_left=wl,
        weight_right=wr,
        sensor_bound=sensor_bound,
    )


class TestParser:
    def test_minimal_document(self):
        sys_ = parse_model("membrane m { var x = 1.5 }")
        assert sys_.degree == 1
        assert sys_.valuation() == {"m.x": 1.5}

    def test_comments_and_negative_initials(self):
        text = """
        # a comment
        membrane m {
          var x = -2.5   # trailing comment
        }
        """
        assert parse_model(text).get("m.x") == -2.5

    def test_program_with_enzyme(self):
        sys_ = parse_model(
            "membrane m { var x = 1 var y = 0 var e = 9 prog 2*x -> 1|x + 3|y | e }"
        )
        (p,) = sys_.membrane("m").programs
        assert p.enzyme == "m.e"
        assert [e.coefficient for e in p.repartition] == [1, 3]

    def test_serialized_m1_has_21_membranes(self):
        text = serialize_model(build_m1(enps_lab.default_params("m1")))
        assert parse_model(text).degree == 21

    def test_enzyme_in_production_rejected(self):
        text = "membrane m { var x = 0 var e = 9 prog e*x -> 1|x | e }"
        with pytest.raises(ModelError, match="production"):
            parse_model(text)

    def test_syntax_error_carries_position(self):
        with pytest.raises(ParseError) as excinfo:
            parse_model("membrane m {\n var x = \n}")
        assert excinfo.value.line == 3

    def test_duplicate_variable(self):
        with pytest.raises(ModelError, match="duplicate"):
            parse_model("membrane m { var x = 1 var x = 2 }")

    def test_unknown_target(self):
        with pytest.raises(ModelError, match="nope"):
            parse_model("membrane m { var x = 1 prog x -> 1|nope }")

    def test_subtraction_sugar(self):
        sys_ = parse_model("membrane m { var x = 3 var y = 1 prog x - y -> 1|x }")
        roundtrip = parse_model(serialize_model(sys_))
        assert same_system(sys_, roundtrip)


class TestRoundTrip:
    def test_m1(self):
        sys_ = build_m1(enps_lab.default_params("m1"))
        assert same_system(sys_, parse_model(serialize_model(sys_)))

    def test_m2(self):
        sys_ = build_m2(enps_lab.default_params("m2"))
        assert same_system(sys_, parse_model(serialize_model(sys_)))

    def test_empty_membrane(self):
        sys_ = parse_model("membrane m { membrane inner { } }")
        again = parse_model(serialize_model(sys_))
        assert same_system(sys_, again)

    def test_serialize_is_fixed_point(self):
        sys_ = build_m2(enps_lab.default_params("m2"))
        text = serialize_model(sys_)
        assert serialize_model(parse_model(text)) == text

    def test_fuzzed_models(self):
        count = 0
        seed = 0
        while count < 60:
            seed += 1
            sys_ = bounded_random_system(seed, steps=0)
            if sys_ is None:
                continue
            text = serialize_model(sys_)
            again = parse_model(text)
            assert same_system(sys_, again), text
            assert serialize_model(again) == text
            count += 1


class TestBuilders:
    def test_m1_structure(self):
        sys_ = build_m1(enps_lab.default_params("m1"))
        labels = {m.label for m in sys_.membranes}
        expected = {"s", "sc", "w"} | {
            f"{kind}{i}" for kind in ("c", "s", "w") for i in range(1, 7)
        }
        assert sys_.degree == 21
        assert labels == expected

    def test_m2_structure(self):
        sys_ = build_m2(enps_lab.default_params("m2"))
        labels = {m.label for m in sys_.membranes}
        expected = {"s", "w", "sc"} | {
            f"{kind}{i}" for kind in ("c", "s", "w") for i in range(1, 7)
        }
        assert sys_.degree == 21
        assert labels == expected

    @pytest.mark.parametrize("k", [1, 3, 9])
    def test_counts_for_any_k(self, k):
        params = ControllerParams(k=k, cruise=5.0)
        assert build_m1(params).degree == 3 * k + 3
        assert build_m2(params).degree == 3 * k + 3

    def test_m1_zero_prox_gives_cruise(self):
        sys_ = build_m1(enps_lab.default_params("m1"))
        sl, sr = steady_outputs(sys_, [0.0] * 6)
        assert sl == 10.0 and sr == 10.0

    def test_m1_single_weight_example(self):
        params = ControllerParams(
            k=6,
            cruise=10.0,
            weight_left=(-0.5, 0, 0, 0, 0, 0),
            weight_right=(0.0,) * 6,
            sensor_bound=100.0,
        )
        sys_ = build_m1(params)
        sl, sr = steady_outputs(sys_, [100.0, 0, 0, 0, 0, 0])
        assert abs(sl - (10.0 - 50.0)) <= 1e-9
        assert abs(sr - 10.0) <= 1e-9

    def test_m2_zero_prox_gives_cruise(self):
        sys_ = build_m2(enps_lab.default_params("m2"))
        sl, sr = steady_outputs(sys_, [0.0] * 6)
        assert sl == 10.0 and sr == 10.0

    def test_m2_nonzero_weight_drops_indicator_term(self):
        params = ControllerParams(
            k=6,
            cruise=10.0,
            weight_left=(2.0, 0, 0, 0, 0, 0),
            weight_right=(0.0,) * 6,
        )
        sys_ = build_m2(params)
        sl, sr = steady_outputs(sys_, [1.0, 0, 0, 0, 0, 0])
        # weightLeft accumulates 2, so left speed = 10*2 with no f-term
        assert abs(sl - 20.0) <= 1e-9
        assert abs(sr - 10.0) <= 1e-9  # right weight stays 0, f restores cruise

    @pytest.mark.parametrize("model", ["m1", "m2"])
    def test_matches_closed_form_equations(self, model):
        rng = random.Random(77)
        for _ in range(15):
            params = random_params(rng)
            prox = [round(rng.uniform(0.0, 1.0), 3) for _ in range(6)]
            if model == "m1":
                sys_ = build_m1(params)
                expect_l = params.cruise + sum(
                    w * x for w, x in zip(params.weight_left, prox)
                )
                expect_r = params.cruise + sum(
                    w * x for w, x in zip(params.weight_right, prox)
                )
            else:
                sys_ = build_m2(params)
                wl = sum(w * x for w, x in zip(params.weight_left, prox))
                wr = sum(w * x for w, x in zip(params.weight_right, prox))
                expect_l = params.cruise * wl + (params.cruise if wl == 0 else 0.0)
                expect_r = params.cruise * wr + (params.cruise if wr == 0 else 0.0)
            sl, sr = steady_outputs(sys_, prox)
            assert abs(sl - expect_l) <= 1e-9
            assert abs(sr - expect_r) <= 1e-9

    def test_invalid_k(self):
        with pytest.raises(ModelError):
            ControllerParams(k=0)

    def test_non_finite_weight_rejected(self):
        with pytest.raises(ModelError):
            ControllerParams(k=1, weight_left=(math.inf,), weight_right=(0.0,))

    def test_small_enzyme_rejected(self):
        with pytest.raises(ModelError, match="enzyme"):
            ControllerParams(k=6, cruise=10.0, enzyme_init=1.0)


class TestParamsFiles:
    def test_round_trip(self):
        params = enps_lab.default_params("m2")
        again = parse_params(serialize_params(params))
        assert again == params

    def test_unknown_key(self):
        with pytest.raises(ModelError, match="unknown"):
            parse_params("k = 6\nbogus = 1\n")

    def test_bad_number(self):
        with pytest.raises(ModelError, match="line 1"):
            parse_params("cruise = ten\n")
