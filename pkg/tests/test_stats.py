import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icetree import (Ensemble, NodeSubset, aggregate_score, build_tables, chi_sq_log_sf,
                     chi_squared_stat, shift_sample)
from icetree.errors import ContractError, InputError
from icetree.stats import LEFT, RIGHT


def twelve():
    return Ensemble([[0] * 6 + [1] * 6]), NodeSubset.full(12)


class TestBuildTables:
    def test_perfect_split(self):
        ens, sub = twelve()
        tables = build_tables(ens, sub, [True] * 6 + [False] * 6)
        assert tables.tables[0].tolist() == [[6, 0], [0, 6]]
        tables.check()

    def test_all_on_one_side(self):
        ens, sub = twelve()
        tables = build_tables(ens, sub, [False] * 12)
        assert tables.tables[0].tolist() == [[0, 0], [6, 6]]

    def test_two_partitions_share_total(self):
        ens = Ensemble([[0, 1, 2, 0, 1, 2], [5, 5, 5, 0, 0, 0]])
        tables = build_tables(ens, NodeSubset.full(6), [True, False] * 3)
        assert [int(t.sum()) for t in tables.tables] == [6, 6]

    def test_zero_support_labels_have_no_column(self):
        ens = Ensemble([[0, 3, 3, 7]])
        tables = build_tables(ens, NodeSubset([1, 2, 3]), [True, True, False])
        assert tables.label_maps[0] == {3: 0, 7: 1}
        assert tables.tables[0].shape == (2, 2)


class TestShiftSample:
    def test_single_move(self):
        ens, sub = twelve()
        tables = build_tables(ens, sub, [True] * 6 + [False] * 6)
        shift_sample(tables, [1], RIGHT, LEFT)
        assert tables.tables[0].tolist() == [[6, 1], [0, 5]]
        tables.check()

    def test_round_trip(self):
        ens, sub = twelve()
        tables = build_tables(ens, sub, [True] * 6 + [False] * 6)
        before = tables.copy()
        shift_sample(tables, [0], LEFT, RIGHT)
        shift_sample(tables, [0], RIGHT, LEFT)
        assert tables == before

    def test_empty_cell_is_contract_failure(self):
        ens, sub = twelve()
        tables = build_tables(ens, sub, [True] * 6 + [False] * 6)
        with pytest.raises(ContractError):
            shift_sample(tables, [1], LEFT, RIGHT)

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_random_shifts_match_rebuild(self, data):
        n = data.draw(st.integers(1, 40))
        c = data.draw(st.integers(1, 4))
        parts = [data.draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)) for _ in range(c)]
        ens = Ensemble(parts)
        sub = NodeSubset.full(n)
        side = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
        tables = build_tables(ens, sub, side)
        for i in data.draw(st.lists(st.integers(0, n - 1), max_size=60)):
            src = LEFT if side[i] else RIGHT
            shift_sample(tables, ens.partitions[:, i], src, 1 - src)
            side[i] = not side[i]
        tables.check()
        assert tables == build_tables(ens, sub, side)


class TestChiSquaredStat:
    @pytest.mark.parametrize("table, expected", [
        ([[10, 0], [0, 10]], 20.0),
        ([[5, 5], [5, 5]], 0.0),
        ([[8, 2], [2, 8]], 7.2),
    ])
    def test_hand_values(self, table, expected):
        assert chi_squared_stat(table) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_empty_row_scores_zero(self):
        assert chi_squared_stat([[0, 0, 0], [3, 4, 5]]) == 0.0

    def test_single_column_scores_zero(self):
        assert chi_squared_stat([[4], [6]]) == 0.0

    def test_closed_form_2x2(self, rng):
        for _ in range(500):
            a, b, c, d = (int(v) for v in rng.integers(1, 50, size=4))
            n = a + b + c + d
            closed = n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))
            assert chi_squared_stat([[a, b], [c, d]]) == pytest.approx(closed, rel=1e-9, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), min_size=1, max_size=6),
           st.randoms())
    def test_invariant_under_permutations(self, cols, rnd):
        cols = [c for c in cols if sum(c) > 0] or [(1, 1)]
        table = np.array(cols).T
        base = chi_squared_stat(table)
        perm = list(range(table.shape[1]))
        rnd.shuffle(perm)
        assert chi_squared_stat(table[:, perm]) == pytest.approx(base, rel=1e-12, abs=1e-12)
        assert chi_squared_stat(table[::-1]) == pytest.approx(base, rel=1e-12, abs=1e-12)


class TestAggregateScore:
    def test_two_tables(self):
        ens = Ensemble([[0] * 10 + [1] * 10, [0] * 10 + [1] * 10])
        side = [True] * 8 + [False] * 2 + [True] * 2 + [False] * 8
        score = aggregate_score(build_tables(ens, NodeSubset.full(20), side))
        assert score.statistic == pytest.approx(14.4, rel=1e-12)
        assert score.dof == 2

    def test_degenerate_node(self):
        ens = Ensemble([[3] * 8, [1] * 8])
        score = aggregate_score(build_tables(ens, NodeSubset.full(8), [True] * 4 + [False] * 4))
        assert (score.statistic, score.dof, score.log_p) == (0.0, 0, 0.0)

    def test_single_table(self):
        ens = Ensemble([[0] * 10 + [1] * 10])
        score = aggregate_score(build_tables(ens, NodeSubset.full(20), [True] * 10 + [False] * 10))
        assert score.statistic == pytest.approx(20.0)
        assert score.dof == 1
        assert score.log_p == chi_sq_log_sf(score.statistic, 1)


class TestChiSqLogSf:
    def test_zero(self):
        for dof in (1, 2, 7, 200):
            assert chi_sq_log_sf(0.0, dof) == 0.0

    def test_two_dof_closed_form(self):
        assert math.exp(chi_sq_log_sf(5.991, 2)) == pytest.approx(math.exp(-5.991 / 2), rel=1e-13)
        assert math.exp(chi_sq_log_sf(5.991, 2)) == pytest.approx(0.0500, abs=1e-4)

    def test_one_dof_against_quadrature(self):
        # P(chi2_1 > x) = integral_x^inf t^(-1/2) e^(-t/2) / sqrt(2 pi) dt
        mpmath.mp.dps = 30
        for x in (0.5, 3.841, 12.0):
            tail = mpmath.quad(lambda t: t ** -0.5 * mpmath.exp(-t / 2), [x, x + 50, mpmath.inf])
            expected = float(tail / mpmath.sqrt(2 * mpmath.pi))
            assert math.exp(chi_sq_log_sf(x, 1)) == pytest.approx(expected, rel=1e-10)
        assert math.exp(chi_sq_log_sf(3.841, 1)) == pytest.approx(0.05004, abs=1e-4)

    def test_matches_mpmath_on_wide_grid(self):
        mpmath.mp.dps = 40
        for dof in (1, 2, 3, 9, 30, 77, 150, 200):
            for x in (0.01, 0.9, 5.0, dof - 1.0, dof + 0.5, dof + 3.0, 300.0, 2000.0):
                if x <= 0:
                    continue
                q = mpmath.gammainc(mpmath.mpf(dof) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True)
                got = mpmath.exp(chi_sq_log_sf(x, dof))
                assert abs(got / q - 1) < 1e-10, (dof, x)

    def test_far_tail_stays_finite(self):
        lp = chi_sq_log_sf(1e5, 3)
        assert math.isfinite(lp) and lp < -4e4

    def test_strictly_decreasing(self):
        for dof in (1, 4, 25, 120):
            grid = np.linspace(0.0, 400.0, 801)
            vals = [chi_sq_log_sf(float(x), dof) for x in grid]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("x, dof", [(-1.0, 2), (1.0, 0), (1.0, 1.5), (float("nan"), 1)])
    def test_bad_input(self, x, dof):
        with pytest.raises(InputError):
            chi_sq_log_sf(x, dof)
