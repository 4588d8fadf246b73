import math

from hypothesis import given
from hypothesis.strategies import floats, integers, lists

from doeflow.common import util


class TestSplitMix64:
    def test_first_output_of_seed_zero(self) -> None:
        assert util.SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_mix_matches_generator_stream(self) -> None:
        # Run 0's seed is the generator's first output.
        assert util.mix(0, 0) == util.SplitMix64(0).next_u64()

    @given(seed=integers(min_value=0, max_value=2 ** 64 - 1))
    def test_same_seed_same_sequence(self, seed: int) -> None:
        a, b = util.SplitMix64(seed), util.SplitMix64(seed)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    @given(seed=integers(min_value=0), n=integers(min_value=1, max_value=1000))
    def test_below_stays_in_range(self, seed: int, n: int) -> None:
        generator = util.SplitMix64(seed)
        assert all(0 <= generator.below(n) < n for _ in range(20))

    @given(seed=integers(min_value=0))
    def test_random_in_unit_interval(self, seed: int) -> None:
        generator = util.SplitMix64(seed)
        assert all(0.0 <= generator.random() < 1.0 for _ in range(20))

    @given(seed=integers(min_value=0), items=lists(integers(), max_size=30))
    def test_shuffle_is_a_permutation(self, seed: int, items) -> None:
        shuffled = list(items)
        draws = util.SplitMix64(seed).shuffle(shuffled)
        assert sorted(shuffled) == sorted(items)
        assert len(draws) == max(len(items) - 1, 0)

    def test_negative_seed_is_reduced(self) -> None:
        assert util.SplitMix64(-1).state == util.MASK64


@given(seed=integers(min_value=0, max_value=2 ** 32))
def test_run_seeds_differ(seed: int) -> None:
    seeds = {util.mix(seed, index) for index in range(50)}
    assert len(seeds) == 50


def test_canonical_json_is_order_independent() -> None:
    assert util.canonical_json({"b": 1, "a": [1, 2]}) == util.canonical_json({"a": [1, 2], "b": 1})
    assert util.canonical_json({"a": 1}) == '{"a":1}'


@given(value=floats(allow_nan=False, allow_infinity=False))
def test_format_real_round_trips(value: float) -> None:
    assert float(util.format_real(value)) == value


def test_format_real_non_finite() -> None:
    assert util.format_real(math.nan) == "nan"
    assert util.format_real(math.inf) == "inf"
    assert util.format_real(-math.inf) == "-inf"


def test_format_value() -> None:
    assert util.format_value(None) == ""
    assert util.format_value(True) == "true"
    assert util.format_value(3) == "3"
    assert util.format_value("q") == "q"
    assert util.format_value(0.5) == "0.5"


def test_json_number() -> None:
    assert util.json_number(math.nan) is None
    assert util.json_number(math.inf) == "inf"
    assert util.json_number(-math.inf) == "-inf"
    assert util.json_number(2) == 2.0


def test_sha256(tmp_path) -> None:
    path = tmp_path / "file.txt"
    path.write_text("doeflow")
    assert util.sha256_file(path) == util.sha256_text("doeflow")
