import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pshaping.air import awgn_capacity_4d, rbmd_quadrature
from pshaping.constellation import make_pam, normalize, read_table
from pshaping.errors import ConvergenceError
from pshaping.mbopt import (INFEASIBLE, RateGrid, capacity_limit, fixed_pmf_search, nu_max,
                            optimize_mb, shaping_gain_curve, snr_for_rate, snr_penalty,
                            write_plan)
from pshaping.pmf import Pmf, maxwell_boltzmann


@pytest.fixture(scope="module")
def coarse_plan_16():
    pam = make_pam(4)
    grid = RateGrid.build(pam, 0.0, 12.0, step=0.2)
    return grid, fixed_pmf_search(pam, 0.0, 12.0, 0.1, grid=grid)


class TestOptimizeMb:
    @pytest.mark.parametrize("L,snr", [(4, 5.0), (8, 12.0), (16, 18.0)])
    def test_beats_neighbors_and_uniform(self, L, snr):
        pam = make_pam(L)
        sol = optimize_mb(pam, snr)
        for f in (0.9, 1.1):
            assert sol.rbmd >= rbmd_quadrature(pam, maxwell_boltzmann(pam, sol.nu * f), snr).raw - 1e-12
        assert sol.rbmd >= rbmd_quadrature(pam, Pmf.uniform(L), snr).raw

    @settings(max_examples=10)
    @given(st.floats(0.0, 25.0))
    def test_unit_energy_and_rho(self, snr):
        pam = make_pam(8)
        sol = optimize_mb(pam, snr)
        c = normalize(pam, sol.pmf)
        assert c.rho == pytest.approx(sol.rho, rel=1e-12)
        assert c.energy(sol.pmf) == pytest.approx(1.0, abs=1e-12)

    def test_high_snr_tends_to_uniform(self, pam4):
        assert optimize_mb(pam4, 30.0).nu < 1e-3

    def test_shaping_grows_at_low_snr(self, pam8):
        assert optimize_mb(pam8, 8.0).nu > optimize_mb(pam8, 16.0).nu

    def test_nu_max_concentrates(self, pam8):
        p = maxwell_boltzmann(pam8, nu_max(pam8))
        assert p.one_sided()[0] * 2 == pytest.approx(0.999, abs=1e-9)


class TestPenalty:
    def test_snr_for_rate_inverts(self, pam8):
        p = maxwell_boltzmann(pam8, 0.03)
        r = rbmd_quadrature(pam8, p, 13.3).raw
        assert snr_for_rate(pam8, p, r) == pytest.approx(13.3, abs=2e-4)

    def test_unreachable_rate(self, pam4):
        assert snr_for_rate(pam4, Pmf.uniform(4), 9.0) == INFEASIBLE

    def test_matched_penalty_is_zero(self, pam8):
        sol = optimize_mb(pam8, 14.0)
        assert snr_penalty(sol.pmf, 14.0, pam8, sol) == pytest.approx(0.0, abs=2e-4)

    def test_penalty_nonnegative(self, pam8):
        p = maxwell_boltzmann(pam8, 0.06)
        for s in (10.0, 15.0, 20.0):
            assert snr_penalty(p, s, pam8) >= -2e-4

    def test_grid_penalties_match_direct(self, pam4):
        grid = RateGrid.build(pam4, 4.0, 8.0, step=0.5)
        p = optimize_mb(pam4, 4.0).pmf
        pen = grid.penalties(p)
        direct = snr_penalty(p, 7.0, pam4, grid.solutions[6])
        assert pen[6] == pytest.approx(direct, abs=0.02)


class TestFixedPmfSearch:
    def test_two_entries_meet_at_limit(self, coarse_plan_16):
        grid, plan = coarse_plan_16
        a, b = plan.entries
        assert a.snr_range_db[1] == b.snr_range_db[0] == plan.capacity_limit_db
        assert a.snr_range_db[0] < a.snr_range_db[1] < b.snr_range_db[1]

    def test_ranges_respect_penalty(self, coarse_plan_16):
        grid, plan = coarse_plan_16
        for e in plan.entries:
            pen = grid.penalties(e.pmf)
            inside = (grid.snr_db >= e.snr_range_db[0] - 1e-9) & (grid.snr_db <= e.snr_range_db[1] + 1e-9)
            assert np.all(pen[inside] <= plan.penalty_db + 1e-9)

    def test_limit_is_capacity_gap(self, coarse_plan_16):
        grid, plan = coarse_plan_16
        i = int(np.argmin(np.abs(grid.snr_db - plan.capacity_limit_db)))
        gap = grid.capacity_gap()
        assert gap[i] <= 0.1 and (i + 1 == gap.size or gap[i + 1] > 0.1)

    def test_tighter_penalty_narrows(self, coarse_plan_16):
        grid, plan = coarse_plan_16
        tight = fixed_pmf_search(grid.lattice, 0.0, 12.0, 0.05, grid=grid)
        for wide, narrow in zip(plan.entries, tight.entries):
            w = wide.snr_range_db[1] - wide.snr_range_db[0]
            n = narrow.snr_range_db[1] - narrow.snr_range_db[0]
            assert n <= w + 1e-9

    def test_impossible_gap(self, pam4):
        grid = RateGrid.build(pam4, 20.0, 22.0, step=1.0)
        with pytest.raises(ConvergenceError):
            capacity_limit(grid)

    def test_bad_range(self, pam4):
        with pytest.raises(ValueError):
            fixed_pmf_search(pam4, 5.0, 5.0)

    def test_write_plan(self, coarse_plan_16, tmp_path):
        _, plan = coarse_plan_16
        paths = write_plan(plan, tmp_path, "16qam")
        assert [p.name for p in paths] == ["16qam-0.pmf", "16qam-1.pmf", "16qam-summary.csv"]
        q, p = read_table(paths[0])
        assert q.M == 16 and q.energy(p) == pytest.approx(1.0, abs=1e-12)
        assert paths[2].read_text().splitlines()[0].startswith("format,entry")


class TestShapingGain:
    def test_gain_positive_and_vanishing(self, pam4):
        snr, g = shaping_gain_curve(pam4, [6.0, 9.0, 20.0], reference="rbmd")
        assert g[0] > 0.2 and g[1] > 0.2 and abs(g[2]) < 0.05

    def test_reference_validation(self, pam4):
        with pytest.raises(ValueError):
            shaping_gain_curve(pam4, [5.0], reference="gmi")

    def test_capacity_gap_nonnegative(self, pam4):
        grid = RateGrid.build(pam4, 0.0, 10.0, step=1.0)
        assert np.all(grid.capacity_gap() >= 0)
        assert np.all(grid.rbmd <= awgn_capacity_4d(grid.snr_db))
