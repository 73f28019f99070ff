"""Maxwell-Boltzmann shaping on AWGN and the fixed-PMF range search.

All SNRs are in dB and rates in bit/4D-sym. Lattices are 1D PAM; the QAM
is their product, so a 1D MB parameter ``nu`` defines the 2D input too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .air import awgn_capacity_4d, rbmd_quadrature
from .constellation import Constellation, normalize, product_qam, write_table
from .errors import ConvergenceError
from .pmf import Pmf, maxwell_boltzmann

GRID_STEP_DB = 0.05
NU_XATOL = 1e-7
PENALTY_XTOL_DB = 1e-4
INFEASIBLE = math.inf


@dataclass(frozen=True)
class ShapingSolution:
    nu: float
    rho: float
    pmf: Pmf
    shaping_snr_db: float
    rbmd: float


def nu_max(lattice: Constellation, inner_mass: float = 0.999) -> float:
    """Smallest ``nu`` putting ``inner_mass`` on the two innermost points."""
    e = np.unique(np.round(np.abs(lattice.base) ** 2, 9))
    if e.size < 2:
        return 1.0
    lo, hi = 0.0, 1.0
    while maxwell_boltzmann(lattice, hi).probs[np.abs(lattice.base) ** 2 <= e[0] + 1e-9].sum() < inner_mass:
        hi *= 2
    f = lambda nu: (maxwell_boltzmann(lattice, nu).probs[np.abs(lattice.base) ** 2 <= e[0] + 1e-9].sum()
                    - inner_mass)
    return brentq(f, lo, hi, xtol=1e-10)


def _rate(lattice, nu, snr_db):
    return rbmd_quadrature(lattice, maxwell_boltzmann(lattice, nu), snr_db).raw


def nu_grid(lattice: Constellation, n: int = 48) -> np.ndarray:
    """``0`` followed by a log-spaced grid up to :func:`nu_max`."""
    top = nu_max(lattice)
    return np.concatenate([[0.0], np.geomspace(top * 1e-4, top, n)])


def optimize_mb(lattice: Constellation, snr_db: float) -> ShapingSolution:
    """MB input maximizing the AWGN BMD rate at ``snr_db``.

    A log-spaced scan brackets the maximum, then a bounded Brent search
    (golden section with parabolic steps) refines ``nu``.
    """
    nus = nu_grid(lattice)
    vals = np.array([_rate(lattice, nu, snr_db) for nu in nus])
    i = int(np.argmax(vals))
    lo, hi = nus[max(i - 1, 0)], nus[min(i + 1, nus.size - 1)]
    res = minimize_scalar(lambda nu: -_rate(lattice, nu, snr_db), bounds=(lo, hi),
                          method="bounded", options={"xatol": NU_XATOL})
    nu, best = (float(res.x), -float(res.fun)) if -res.fun >= vals[i] else (float(nus[i]), float(vals[i]))
    p = maxwell_boltzmann(lattice, nu)
    return ShapingSolution(nu, normalize(lattice, p).rho, p, float(snr_db), best)


def snr_for_rate(lattice: Constellation, p, rate: float, lo: float = -20.0, hi: float = 60.0) -> float:
    """SNR in dB at which ``p`` reaches ``rate``; ``inf`` if above reach."""
    f = lambda s: rbmd_quadrature(lattice, p, s).raw - rate
    if f(hi) < 0:
        return INFEASIBLE
    if f(lo) > 0:
        return lo
    return brentq(f, lo, hi, xtol=PENALTY_XTOL_DB)


def snr_penalty(pmf_fixed, channel_snr_db: float, lattice: Constellation,
                optimum: ShapingSolution | None = None) -> float:
    """Extra SNR (dB) ``pmf_fixed`` needs to match the per-SNR MB optimum."""
    opt = optimum or optimize_mb(lattice, channel_snr_db)
    s = snr_for_rate(lattice, pmf_fixed, opt.rbmd, lo=channel_snr_db - 10, hi=channel_snr_db + 30)
    return s - channel_snr_db if math.isfinite(s) else INFEASIBLE


@dataclass
class RateGrid:
    """Per-SNR MB optimum precomputed on a grid, used by the range search."""

    lattice: Constellation
    snr_db: np.ndarray
    solutions: list = field(repr=False)

    @classmethod
    def build(cls, lattice, lo_db, hi_db, step=GRID_STEP_DB):
        snr = np.round(np.arange(lo_db, hi_db + step / 2, step), 10)
        return cls(lattice, snr, [optimize_mb(lattice, s) for s in snr])

    @property
    def rbmd(self) -> np.ndarray:
        return np.array([s.rbmd for s in self.solutions])

    def fixed_rates(self, p) -> np.ndarray:
        return np.array([rbmd_quadrature(self.lattice, p, s).raw for s in self.snr_db])

    def penalties(self, p) -> np.ndarray:
        """Penalty of ``p`` at every grid SNR (inverse by interpolation)."""
        rf = self.fixed_rates(p)
        ropt = self.rbmd
        # rf is strictly increasing on the grid; invert it piecewise-linearly
        pen = np.interp(ropt, rf, self.snr_db, left=-np.inf, right=np.inf) - self.snr_db
        pen[ropt > rf[-1]] = INFEASIBLE
        return pen

    def capacity_gap(self) -> np.ndarray:
        """Horizontal dB gap of the MB optimum to AWGN capacity."""
        r = self.rbmd
        return self.snr_db - 10 * np.log10(2 ** (r / 2) - 1)


@dataclass(frozen=True)
class PlanEntry:
    pmf: Pmf
    shaping_snr_db: float
    snr_range_db: tuple[float, float]


@dataclass(frozen=True)
class FixedPmfPlan:
    lattice: Constellation
    entries: tuple[PlanEntry, ...]
    penalty_db: float
    capacity_limit_db: float


def _feasible_run(pen: np.ndarray, i: int, limit: float) -> tuple[int, int] | None:
    """Contiguous index run around ``i`` where ``pen <= limit``."""
    if not pen[i] <= limit:
        return None
    lo = hi = i
    while lo > 0 and pen[lo - 1] <= limit:
        lo -= 1
    while hi < pen.size - 1 and pen[hi + 1] <= limit:
        hi += 1
    return lo, hi


def capacity_limit(grid: RateGrid, gap_db: float = 0.1) -> float:
    """Largest grid SNR whose MB optimum is within ``gap_db`` of capacity."""
    ok = np.flatnonzero(grid.capacity_gap() <= gap_db)
    if ok.size == 0:
        raise ConvergenceError("no SNR on the grid is within the capacity gap")
    # the gap grows with SNR; take the end of the first contiguous run
    run = _feasible_run(grid.capacity_gap(), int(ok[0]), gap_db)
    return float(grid.snr_db[run[1]])


def fixed_pmf_search(lattice: Constellation, snr_lo_db: float, snr_hi_db: float,
                     penalty_db: float = 0.1, grid: RateGrid | None = None) -> FixedPmfPlan:
    """Two MB PMFs that together cover ``[snr_lo, snr_hi]`` within ``penalty_db``.

    The first PMF covers the widest interval that ends at the capacity
    limit (the largest SNR at which MB shaping stays within 0.1 dB of
    capacity). The second begins at that limit and reaches as high as
    possible. Candidate PMFs are the MB optima on the search grid.
    """
    if not snr_lo_db < snr_hi_db:
        raise ValueError("snr_lo_db must be below snr_hi_db")
    grid = grid or RateGrid.build(lattice, snr_lo_db, snr_hi_db)
    snr = grid.snr_db
    limit = capacity_limit(grid)
    i_lim = int(np.argmin(np.abs(snr - limit)))

    def best(score):
        top = None
        for sol in grid.solutions:
            pen = grid.penalties(sol.pmf)
            run = _feasible_run(pen, i_lim, penalty_db)
            if run is None:
                continue
            key = score(run)
            if top is None or key > top[0]:
                top = (key, sol, run)
        return top

    first = best(lambda run: (run[1] >= i_lim, -run[0]))
    second = best(lambda run: (run[0] <= i_lim, run[1]))
    if first is None or second is None:
        raise ConvergenceError(
            "no candidate PMF meets the penalty at the capacity limit",
            partial={"snr_db": snr.tolist(), "capacity_gap_db": grid.capacity_gap().tolist()},
        )
    e1 = PlanEntry(first[1].pmf, first[1].shaping_snr_db, (float(snr[first[2][0]]), limit))
    e2 = PlanEntry(second[1].pmf, second[1].shaping_snr_db, (limit, float(snr[second[2][1]])))
    return FixedPmfPlan(lattice, (e1, e2), penalty_db, limit)


def shaping_gain_curve(lattice: Constellation, snr_db, reference: str = "rsym",
                       grid: RateGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """SNR saved by MB shaping at the rate of the uniform input.

    ``reference`` selects the uniform curve: ``"rsym"`` (symbol-wise MI)
    or ``"rbmd"``. Returns ``(snr_db, gain_db)``.
    """
    from .air import mi_quadrature

    snr = np.asarray(snr_db, dtype=float)
    grid = grid or RateGrid.build(lattice, snr.min() - 3, snr.max())
    u = Pmf.uniform(lattice.M)
    if reference == "rsym":
        ru = np.array([mi_quadrature(lattice, u, s).raw for s in snr])
    elif reference == "rbmd":
        ru = np.array([rbmd_quadrature(lattice, u, s).raw for s in snr])
    else:
        raise ValueError("reference must be 'rsym' or 'rbmd'")
    s_shaped = np.interp(ru, grid.rbmd, grid.snr_db)
    return snr, snr - s_shaped


def write_plan(plan: FixedPmfPlan, directory, prefix: str) -> list[Path]:
    """Write each entry's QAM table and a summary CSV; returns written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = []
    for k, e in enumerate(plan.entries):
        qam, p2 = product_qam(plan.lattice, e.pmf)
        path = out / f"{prefix}-{k}.pmf"
        write_table(path, qam, p2)
        paths.append(path)
        one = e.pmf.one_sided()
        rows.append([prefix, k, qam.M, f"{e.snr_range_db[0]:.2f}", f"{e.snr_range_db[1]:.2f}",
                     f"{e.shaping_snr_db:.2f}", " ".join(f"{v:.4f}" for v in one),
                     " ".join(f"{v:.4f}" for v in normalize(plan.lattice, e.pmf).base.real[-one.size:]
                              * normalize(plan.lattice, e.pmf).rho)])
    summary = out / f"{prefix}-summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["format", "entry", "qam_order", "snr_lo_db", "snr_hi_db", "shaping_snr_db",
                    "one_sided_pmf", "one_sided_points"])
        w.writerows(rows)
    paths.append(summary)
    return paths


def capacity_4d(snr_db):
    return awgn_capacity_4d(snr_db)
