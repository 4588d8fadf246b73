import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis.strategies import integers, lists

from doeflow.common.checks import (
    DegenerateDesign,
    DesignError,
    InvalidAlpha,
    InvalidGenerator,
    KTooSmall,
    TooManyFactors,
    TooManyRuns,
)
from doeflow.design_gen.classical import (
    AlphaMode,
    box_behnken,
    central_composite,
    fractional_factorial,
    full_factorial,
    plackett_burman,
)
from doeflow.design_gen.design import Coding


class TestFullFactorial:
    def test_standard_order(self) -> None:
        design = full_factorial([2, 2])
        np.testing.assert_array_equal(
            design.matrix, [[-1, -1], [1, -1], [-1, 1], [1, 1]]
        )
        assert design.factor_names == ("A", "B")
        assert design.is_two_level

    def test_mixed_levels(self) -> None:
        design = full_factorial([2, 3])
        assert design.n_runs == 6
        assert design.coding == (Coding.TWO_LEVEL_PM1, Coding.LEVEL_GRID)
        assert sorted(set(design.column("B").tolist())) == [-1.0, 0.0, 1.0]

    @given(levels=lists(integers(min_value=2, max_value=4), min_size=1, max_size=4))
    def test_every_combination_once(self, levels) -> None:
        design = full_factorial(levels)
        assert design.n_runs == int(np.prod(levels))
        assert len({tuple(row) for row in design.matrix}) == design.n_runs

    def test_caps(self) -> None:
        with pytest.raises(TooManyRuns):
            full_factorial([10] * 7)
        with pytest.raises(TooManyFactors):
            full_factorial([2] * 17)
        with pytest.raises(DesignError):
            full_factorial([2, 1])

    def test_matrix_is_read_only(self) -> None:
        design = full_factorial([2, 2])
        with pytest.raises(ValueError):
            design.matrix[0, 0] = 5.0


class TestFractionalFactorial:
    def test_half_fraction_of_four(self) -> None:
        design = fractional_factorial(4, ["D=ABC"])
        assert design.n_runs == 8
        assert design.metadata.defining_relation == ("I", "ABCD")
        assert design.metadata.resolution == 4
        np.testing.assert_array_equal(
            design.column("D"), design.column("A") * design.column("B") * design.column("C")
        )

    def test_resolution_three(self) -> None:
        design = fractional_factorial(3, ["C=AB"])
        assert design.metadata.resolution == 3
        assert design.metadata.defining_relation == ("I", "ABC")

    def test_quarter_fraction(self) -> None:
        design = fractional_factorial(5, ["D=AB", "E=AC"])
        assert design.n_runs == 8
        assert design.metadata.defining_relation == ("I", "ABD", "ACE", "BCDE")
        assert design.metadata.resolution == 3

    def test_negative_generator(self) -> None:
        design = fractional_factorial(4, ["D=-ABC"])
        assert design.metadata.defining_relation == ("I", "-ABCD")
        np.testing.assert_array_equal(
            design.column("D"), -design.column("A") * design.column("B") * design.column("C")
        )

    def test_columns_are_balanced(self) -> None:
        design = fractional_factorial(7, ["E=ABC", "F=BCD", "G=ACD"])
        assert design.n_runs == 16
        np.testing.assert_array_equal(design.matrix.sum(axis=0), np.zeros(7))
        np.testing.assert_array_equal(design.matrix.T @ design.matrix, 16 * np.eye(7))

    @pytest.mark.parametrize("generators", [["D=ABE"], ["D=AB", "D=AC"], ["A=BC"], ["D ABC"]])
    def test_invalid_generators(self, generators) -> None:
        with pytest.raises(InvalidGenerator):
            fractional_factorial(4, generators)

    def test_empty_word_is_degenerate(self) -> None:
        with pytest.raises(DegenerateDesign):
            fractional_factorial(4, ["D="])

    def test_repeated_word_aliases_two_main_effects(self) -> None:
        design = fractional_factorial(5, ["D=AB", "E=AB"])
        assert design.metadata.defining_relation == ("I", "DE", "ABD", "ABE")
        assert design.metadata.resolution == 2
        np.testing.assert_array_equal(design.column("D"), design.column("E"))


class TestPlackettBurman:
    def test_twelve_runs(self) -> None:
        design = plackett_burman(11)
        assert design.n_runs == 12
        np.testing.assert_array_equal(design.matrix.T @ design.matrix, 12 * np.eye(11))

    @pytest.mark.parametrize("k, runs", [(3, 4), (4, 8), (7, 8), (8, 12), (15, 16), (19, 20)])
    def test_smallest_size(self, k: int, runs: int) -> None:
        design = plackett_burman(k)
        assert design.n_runs == runs
        np.testing.assert_array_equal(design.matrix.sum(axis=0), np.zeros(k))
        gram = design.matrix.T @ design.matrix
        np.testing.assert_array_equal(gram, runs * np.eye(k))

    def test_limits(self) -> None:
        with pytest.raises(TooManyFactors):
            plackett_burman(24)
        with pytest.raises(DesignError):
            plackett_burman(1)


class TestCentralComposite:
    def test_two_factors(self) -> None:
        design = central_composite(2)
        assert design.n_runs == 9
        assert design.metadata.alpha == pytest.approx(math.sqrt(2))
        assert np.abs(design.matrix).max() == pytest.approx(math.sqrt(2))

    def test_three_factors_two_centers(self) -> None:
        design = central_composite(3, n_center=2)
        assert design.n_runs == 16
        assert np.sum(np.all(design.matrix == 0, axis=1)) == 2

    def test_face_centered(self) -> None:
        design = central_composite(3, AlphaMode.FACE_CENTERED)
        assert np.abs(design.matrix).max() == 1.0

    def test_custom_alpha(self) -> None:
        assert central_composite(2, "custom", alpha=1.5).metadata.alpha == 1.5
        with pytest.raises(InvalidAlpha):
            central_composite(2, "custom")
        with pytest.raises(InvalidAlpha):
            central_composite(2, "custom", alpha=-1.0)

    def test_too_few_factors(self) -> None:
        with pytest.raises(KTooSmall):
            central_composite(1)


class TestBoxBehnken:
    def test_three_factors(self) -> None:
        design = box_behnken(3)
        assert design.n_runs == 13
        # Corners of the cube are never visited.
        assert not any(np.all(np.abs(row) == 1) for row in design.matrix)

    def test_four_factors_three_centers(self) -> None:
        assert box_behnken(4, n_center=3).n_runs == 27

    def test_pairs_cover_every_square(self) -> None:
        design = box_behnken(4)
        for i, j in itertools.combinations(range(4), 2):
            pairs = {
                (row[i], row[j])
                for row in design.matrix
                if np.count_nonzero(row) == 2 and row[i] != 0 and row[j] != 0
            }
            assert pairs == {(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)}

    def test_too_few_factors(self) -> None:
        with pytest.raises(KTooSmall):
            box_behnken(2)
