import itertools

import numpy as np
import pytest

from doeflow.analysis.anova import RESIDUAL, TOTAL, ancova, anova, effects_two_level, screen_rank
from doeflow.analysis.model_matrix import Dataset, ModelTerm, parse_terms
from doeflow.common.checks import AnalysisError, EmptyResults, NoResidualDf, NotTwoLevel
from doeflow.design_gen.classical import box_behnken, fractional_factorial, full_factorial
from doeflow.runner.results import RunStatus


class TestAnova:
    def test_one_way(self) -> None:
        dataset = Dataset.from_columns({"g": ["a"] * 3 + ["b"] * 3}, [1, 2, 3, 2, 3, 4])
        table = anova(dataset, [ModelTerm.main("g")])
        row = table.row("g")
        assert row.sum_of_squares == pytest.approx(1.5)
        assert row.df == 1
        assert row.f_statistic == pytest.approx(1.5)
        assert row.p_value == pytest.approx(0.2880, abs=1e-3)
        assert table.residual.sum_of_squares == pytest.approx(4.0)
        assert table.residual.df == 4
        assert table.total.sum_of_squares == pytest.approx(5.5)
        assert [r.term for r in table.rows] == ["g", RESIDUAL, TOTAL]

    @pytest.mark.parametrize("seed", range(100))
    def test_two_way_matches_cell_means(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        a_levels = [float(i) for i in range(2 + seed % 3)]
        b_levels = ["lo", "mid", "hi"][: 2 + (seed // 3) % 2]
        replicates = 2 + (seed // 6) % 2
        cells = list(itertools.product(a_levels, b_levels)) * replicates
        cells = [cells[i] for i in rng.permutation(len(cells))]
        y = rng.normal(10.0, 2.0, len(cells))
        dataset = Dataset.from_columns(
            {"A": [a for a, _ in cells], "B": [b for _, b in cells]}, y
        )
        table = anova(dataset, parse_terms(["grp(A)", "grp(B)", "grp(A:B)"]))
        n_a, n_b = len(a_levels), len(b_levels)

        grand = y.mean()
        a = np.array([a for a, _ in cells])
        b = np.array([b for _, b in cells])

        def between(keys) -> float:
            return sum(
                (keys == key).sum() * (y[keys == key].mean() - grand) ** 2 for key in set(keys)
            )

        ss_a = between(a)
        ss_b = between(b)
        ss_cells = between(np.array([f"{p}/{q}" for p, q in cells]))
        ss_total = float(((y - grand) ** 2).sum())
        assert table.row("grp(A)").sum_of_squares == pytest.approx(ss_a, abs=1e-9)
        assert table.row("grp(B)").sum_of_squares == pytest.approx(ss_b, abs=1e-9)
        assert table.row("grp(A:B)").sum_of_squares == pytest.approx(
            ss_cells - ss_a - ss_b, abs=1e-9
        )
        assert table.residual.sum_of_squares == pytest.approx(ss_total - ss_cells, abs=1e-9)
        assert table.total.sum_of_squares == pytest.approx(ss_total, abs=1e-9)
        assert [table.row(t).df for t in ["grp(A)", "grp(B)", "grp(A:B)"]] == [
            n_a - 1,
            n_b - 1,
            (n_a - 1) * (n_b - 1),
        ]
        assert table.residual.df == n_a * n_b * (replicates - 1)

    def test_matches_scipy_one_way(self) -> None:
        stats = pytest.importorskip("scipy.stats")
        groups = [[4.1, 5.2, 6.0], [7.3, 6.8, 8.1], [5.5, 5.9, 4.7]]
        dataset = Dataset.from_columns(
            {"g": ["a"] * 3 + ["b"] * 3 + ["c"] * 3}, sum(groups, [])
        )
        row = anova(dataset, [ModelTerm.main("g")]).row("g")
        expected = stats.f_oneway(*groups)
        assert row.f_statistic == pytest.approx(expected.statistic)
        assert row.p_value == pytest.approx(expected.pvalue, rel=1e-6)

    def test_saturated_model_omits_f_tests(self) -> None:
        dataset = Dataset.from_columns({"g": ["a", "b"]}, [1.0, 3.0])
        with pytest.warns(NoResidualDf):
            table = anova(dataset, [ModelTerm.main("g")])
        assert table.row("g").sum_of_squares == pytest.approx(2.0)
        assert table.row("g").f_statistic is None
        assert table.residual.df == 0
        assert any("saturated" in note for note in table.notes)

    def test_aliased_term_adds_nothing(self) -> None:
        dataset = Dataset.from_columns(
            {"x": [0, 1, 2, 3, 4], "z": [0, 1, 2, 3, 4]}, [1.0, 2.5, 2.9, 4.2, 5.1]
        )
        table = anova(dataset, [ModelTerm.main("x"), ModelTerm.main("z")])
        assert table.row("z").df == 0
        assert table.row("z").sum_of_squares == 0.0
        assert table.row("z").p_value is None
        assert any("z adds no degrees of freedom" in note for note in table.notes)

    def test_excluded_runs_are_reported(self, make_results) -> None:
        results = make_results(
            [{"g": level} for level in ["a", "b"] * 3],
            {"y": [1.0, 2.0, 1.2, 2.2, 0.9, 2.1]},
            statuses=[RunStatus.OK] * 5 + [RunStatus.TIMEOUT],
        )
        table = anova(Dataset.from_results(results, "y"), [ModelTerm.main("g")])
        assert table.n_excluded == 1
        assert table.total.df == 4
        assert "1 failed runs excluded" in table.notes[0]

    def test_bad_inputs(self) -> None:
        dataset = Dataset.from_columns({"g": ["a", "b", "a"]}, [1.0, 2.0, 1.5])
        with pytest.raises(AnalysisError):
            anova(dataset, [ModelTerm.main("g")], alpha=1.5)
        with pytest.raises(EmptyResults):
            anova(Dataset.from_columns({"g": ["a"]}, [1.0]), [ModelTerm.main("g")])


class TestAncova:
    def _dataset(self) -> Dataset:
        temperature = [20.0, 25.0, 30.0, 22.0, 27.0, 31.0, 21.0, 26.0, 29.0]
        treatment = ["t1", "t2", "t3"] * 3
        offsets = {"t1": 0.0, "t2": 1.0, "t3": 3.0}
        y = [0.2 * t + offsets[g] for t, g in zip(temperature, treatment)]
        y = [v + e for v, e in zip(y, [0.05, -0.05, 0.02, -0.03, 0.04, -0.01, 0.0, 0.01, -0.02])]
        return Dataset.from_columns({"temp": temperature, "g": treatment}, y)

    def test_covariate_enters_first(self) -> None:
        table = ancova(self._dataset(), "g", ["temp"])
        assert [row.term for row in table.term_rows] == ["cov(temp)", "grp(g)"]
        assert table.row("grp(g)").df == 2
        assert table.row("grp(g)").p_value < 0.01

    def test_single_level_treatment(self) -> None:
        dataset = Dataset.from_columns({"temp": [1.0, 2.0, 3.0], "g": ["t"] * 3}, [1, 2, 3])
        with pytest.raises(AnalysisError):
            ancova(dataset, "g", ["temp"])


class TestScreenRank:
    def test_ranks_by_p_value(self) -> None:
        design = full_factorial([2, 2, 2])
        a, b, c = (design.column(name) for name in "ABC")
        noise = np.array([0.3, -0.2, 0.1, -0.4, 0.2, 0.1, -0.3, 0.2])
        dataset = Dataset.from_columns(
            {"A": a, "B": b, "C": c}, 10 + 5 * a + 1 * b + noise
        )
        table = anova(dataset, parse_terms(["A", "B", "C"]))
        ranking = screen_rank(table)
        assert [entry.term for entry in ranking] == ["A", "B", "C"]
        assert ranking[0].significant
        assert not ranking[-1].significant
        assert [entry.p_value for entry in ranking] == sorted(entry.p_value for entry in ranking)


class TestEffectsTwoLevel:
    def test_yates(self) -> None:
        effects = effects_two_level(full_factorial([2, 2]), [10, 20, 10, 20])
        assert effects == {"A": 10.0, "B": 0.0, "AB": 0.0}

    def test_twice_the_regression_coefficient(self) -> None:
        design = full_factorial([2, 2, 2])
        y = 3.0 + 1.5 * design.column("A") - 0.5 * design.column("A") * design.column("C")
        effects = effects_two_level(design, y, ["A", "A:C", "B"])
        assert effects["A"] == pytest.approx(3.0)
        assert effects["A:C"] == pytest.approx(-1.0)
        assert effects["B"] == pytest.approx(0.0)

    def test_fractional_design(self) -> None:
        design = fractional_factorial(3, ["C=AB"])
        effects = effects_two_level(design, design.column("C") * 2.0, ["C", "AB"])
        # C and AB share a column, so each carries the full effect.
        assert effects == {"C": 4.0, "AB": 4.0}

    def test_not_two_level(self) -> None:
        with pytest.raises(NotTwoLevel):
            effects_two_level(box_behnken(3), [0.0] * 13)
        with pytest.raises(AnalysisError):
            effects_two_level(full_factorial([2, 2]), [1.0, 2.0])
