import math

import pytest
from hypothesis import given
from hypothesis.strategies import floats, integers

from doeflow.common.stats_utils import betainc, f_pvalue, t_pvalue


class TestBetainc:
    def test_endpoints(self) -> None:
        assert betainc(2.0, 3.0, 0.0) == 0.0
        assert betainc(2.0, 3.0, 1.0) == 1.0

    def test_uniform(self) -> None:
        # I_x(1, 1) = x
        assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-12)

    def test_closed_form(self) -> None:
        # I_x(a, 1) = x^a
        assert betainc(3.0, 1.0, 0.5) == pytest.approx(0.125, abs=1e-12)

    @given(
        a=floats(min_value=0.1, max_value=50),
        b=floats(min_value=0.1, max_value=50),
        x=floats(min_value=0.0, max_value=1.0),
    )
    def test_symmetry(self, a: float, b: float, x: float) -> None:
        assert betainc(a, b, x) == pytest.approx(1.0 - betainc(b, a, 1.0 - x), abs=1e-9)

    def test_invalid_arguments(self) -> None:
        with pytest.raises(ValueError):
            betainc(0.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            betainc(1.0, 1.0, 1.5)


class TestFPvalue:
    def test_known_value(self) -> None:
        # One-way ANOVA of [1, 2, 3] vs [2, 3, 4]: F = 1.5 on (1, 4) df.
        assert f_pvalue(1.5, 1, 4) == pytest.approx(0.2879, abs=1e-4)

    def test_edges(self) -> None:
        assert f_pvalue(0.0, 2, 5) == 1.0
        assert f_pvalue(math.inf, 2, 5) == 0.0
        with pytest.raises(ValueError):
            f_pvalue(math.nan, 2, 5)
        with pytest.raises(ValueError):
            f_pvalue(1.0, 0, 5)

    @given(
        f=floats(min_value=0.0, max_value=1e6),
        df1=integers(min_value=1, max_value=100),
        df2=integers(min_value=1, max_value=100),
    )
    def test_is_a_probability(self, f: float, df1: int, df2: int) -> None:
        assert 0.0 <= f_pvalue(f, df1, df2) <= 1.0

    def test_matches_scipy(self) -> None:
        stats = pytest.importorskip("scipy.stats")
        for f, df1, df2 in [(0.5, 1, 1), (2.3, 3, 12), (10.0, 4, 40), (1.1, 20, 7)]:
            assert f_pvalue(f, df1, df2) == pytest.approx(stats.f.sf(f, df1, df2), rel=1e-8)


class TestTPvalue:
    def test_zero_statistic(self) -> None:
        assert t_pvalue(0.0, 5) == pytest.approx(1.0)

    def test_two_sided(self) -> None:
        assert t_pvalue(2.0, 10) == pytest.approx(t_pvalue(-2.0, 10))

    def test_infinite(self) -> None:
        assert t_pvalue(math.inf, 3) == 0.0

    def test_matches_scipy(self) -> None:
        stats = pytest.importorskip("scipy.stats")
        for t, df in [(1.0, 1), (2.228, 10), (-3.5, 25)]:
            assert t_pvalue(t, df) == pytest.approx(2 * stats.t.sf(abs(t), df), rel=1e-8)
