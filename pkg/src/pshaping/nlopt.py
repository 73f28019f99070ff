"""PMF optimization against the modulation-dependent GN model.

The objective is evaluated self-consistently: PMF -> standardized moments
-> effective SNR -> AWGN quadrature R_BMD at that SNR. Its gradient is
analytic (quadrature rate gradient chained through the moment and SNR
maps), and the constrained ascent uses SLSQP on the free parameters:

* ``"1d"``: one-sided PAM probabilities (symmetry is structural), with
  the QAM input the product of two copies;
* ``"2d"``: one probability per QAM ring (energy class), so every point
  of a ring is equiprobable.

Unit energy is handled by rescaling the lattice, so the free variables
only live on a simplex.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .air import AirEstimate, bmd_quadrature_terms
from .constellation import Constellation, Moments, product_qam, ring_classes
from .errors import ConfigError
from .gnmodel import (ChiCoefficients, EffectiveSnrBreakdown, effective_snr, input_moments,
                      self_consistent_snr)
from .pmf import Pmf, symbol_rng
from .tables import Table

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-10
SLSQP_FTOL = 1e-12
SLSQP_MAXITER = 300
N_RANDOM_STARTS = 2


@dataclass(frozen=True)
class NloptProblem:
    """R_BMD maximization at one launch power.

    Attributes
    ----------
    lattice : Constellation
        1D PAM; the 2D mode optimizes over its product QAM.
    sigma2_ase : float
        Accumulated ASE variance (W).
    chi : ChiCoefficients
    p_tx : float
        Launch power per channel (W).
    mode : {"1d", "2d"}
    seed : int
        Seed for the random start points.
    """

    lattice: Constellation
    sigma2_ase: float
    chi: ChiCoefficients
    p_tx: float
    mode: str = "1d"
    seed: int = 0

    def __post_init__(self):
        if self.lattice.dimension != 1:
            raise ConfigError("lattice must be a 1D PAM")
        if self.mode not in ("1d", "2d"):
            raise ConfigError("mode must be '1d' or '2d'")
        if not self.p_tx > 0:
            raise ValueError("p_tx must be positive")
        if not self.sigma2_ase >= 0:
            raise ValueError("sigma2_ase must be nonnegative")


@dataclass
class NloptResult:
    pmf: Pmf
    constellation: Constellation
    params: np.ndarray
    moments: Moments
    breakdown: EffectiveSnrBreakdown
    air: AirEstimate
    converged: bool
    message: str = ""
    starts: list = field(default_factory=list)

    @property
    def warning(self) -> bool:
        return not self.converged


class _Objective:
    """Self-consistent R_BMD (bit/4D) as a function of simplex weights ``w``.

    For ``"1d"``, ``w`` holds twice the one-sided probabilities (so it sums
    to 1); for ``"2d"``, ``w`` holds the total mass of each ring.
    """

    def __init__(self, prob: NloptProblem):
        self.prob = prob
        pam = prob.lattice
        if prob.mode == "1d":
            L = pam.M
            self.coords = pam.base.real[:, None]
            self.bits = pam.bits
            # positive half in ascending order: index L//2 + i
            K = L // 2
            self.expand = np.zeros((L, K))
            for i in range(K):
                self.expand[K + i, i] = 0.5
                self.expand[K - 1 - i, i] = 0.5
            self.r2 = self.coords[:, 0] ** 2
        else:
            qam, _ = product_qam(pam, Pmf.uniform(pam.M))
            base = qam.rescaled(1.0)
            self.qam = base
            self.coords = np.stack([base.points.real, base.points.imag], axis=1)
            self.bits = base.bits
            rc = ring_classes(base)
            K = rc.max() + 1
            counts = np.bincount(rc)
            self.expand = np.zeros((base.M, K))
            self.expand[np.arange(base.M), rc] = 1.0 / counts[rc]
            self.r2 = (self.coords ** 2).sum(axis=1)
        self.n = self.expand.shape[1]

    def probs(self, w) -> np.ndarray:
        return self.expand @ np.asarray(w, dtype=float)

    def _moments(self, P):
        r2 = self.r2
        if self.prob.mode == "1d":
            m2, m4, m6 = P @ r2, P @ r2 ** 2, P @ r2 ** 3
            E2, E4, E6 = 2 * m2, 2 * m4 + 2 * m2 ** 2, 2 * m6 + 6 * m4 * m2
            dE2 = 2 * r2
            dE4 = 2 * r2 ** 2 + 4 * m2 * r2
            dE6 = 2 * r2 ** 3 + 6 * (r2 ** 2 * m2 + m4 * r2)
        else:
            E2, E4, E6 = P @ r2, P @ r2 ** 2, P @ r2 ** 3
            dE2, dE4, dE6 = r2, r2 ** 2, r2 ** 3
        mu4 = E4 / E2 ** 2
        mu6 = E6 / E2 ** 3
        dmu4 = dE4 / E2 ** 2 - 2 * E4 * dE2 / E2 ** 3
        dmu6 = dE6 / E2 ** 3 - 3 * E6 * dE2 / E2 ** 4
        return E2, mu4, mu6, dmu4, dmu6

    def __call__(self, w, grad: bool = True):
        prob = self.prob
        chi = prob.chi
        P = self.probs(w)
        E2, mu4, mu6, dmu4, dmu6 = self._moments(P)
        d = mu4 - 2.0
        bracket = chi.chi0 + d * chi.chi4 + d * d * chi.chi4p + mu6 * chi.chi6
        dB = (chi.chi4 + 2 * d * chi.chi4p) * dmu4 + chi.chi6 * dmu6
        pt = prob.p_tx
        inv_snr = (prob.sigma2_ase + pt ** 3 * bracket) / pt
        if prob.mode == "1d":
            m2 = E2 / 2
            v = m2 * inv_snr
            dv = self.r2 * inv_snr + m2 * pt ** 2 * dB
            scale = 4.0
        else:
            v = E2 / 2 * inv_snr
            dv = self.r2 / 2 * inv_snr + E2 / 2 * pt ** 2 * dB
            scale = 2.0
        if not grad:
            return scale * bmd_quadrature_terms(self.coords, self.bits, P, v)
        R, dRdP, dRdv = bmd_quadrature_terms(self.coords, self.bits, P, v, grad=True)
        g = (dRdP + dRdv * dv) @ self.expand
        return scale * R, scale * g

    def snr_db(self, w) -> float:
        P = self.probs(w)
        E2, mu4, mu6, _, _ = self._moments(P)
        return effective_snr(self.prob.p_tx, self.prob.sigma2_ase, self.prob.chi,
                             Moments(mu4, mu6)).snr_eff_db

    def from_pmf(self, pmf_full: np.ndarray) -> np.ndarray:
        """Simplex weights of a PMF on the lattice (1D) or QAM (2D)."""
        q = np.asarray(pmf_full, dtype=float)
        if self.prob.mode == "1d":
            K = self.n
            return 2 * q[K:]
        return np.bincount(ring_classes(self.qam), weights=q, minlength=self.n)


def _project_simplex(v: np.ndarray, floor: float = PROB_FLOOR) -> np.ndarray:
    """Euclidean projection onto ``{w >= floor, sum w = 1}``."""
    n = v.size
    u = np.sort(v - floor)[::-1]
    css = np.cumsum(u) - (1.0 - n * floor)
    k = np.arange(1, n + 1)
    r = np.flatnonzero(u - css / k > 0)[-1]
    tau = css[r] / (r + 1)
    return np.maximum(v - floor - tau, 0.0) + floor


def _ascend(obj: _Objective, w0: np.ndarray):
    cons = ({"type": "eq", "fun": lambda w: np.sum(w) - 1.0, "jac": lambda w: np.ones_like(w)},)
    bounds = [(PROB_FLOOR, 1.0)] * obj.n
    f = lambda w: tuple(-x for x in obj(w))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(f, w0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                       options={"ftol": SLSQP_FTOL, "maxiter": SLSQP_MAXITER})
    w = _project_simplex(res.x)
    return w, obj(w, grad=False), bool(res.success), str(res.message)


def start_points(obj: _Objective, seed: int) -> list[tuple[str, np.ndarray]]:
    """Uniform, matched-MB and random Dirichlet starts."""
    prob = obj.prob
    pam = prob.lattice
    starts = []
    M = pam.M if prob.mode == "1d" else pam.M ** 2
    starts.append(("uniform", obj.from_pmf(np.full(M, 1.0 / M))))
    mb = matched_mb(prob)
    full = mb.probs if prob.mode == "1d" else np.outer(mb.probs, mb.probs).ravel()
    starts.append(("matched-mb", obj.from_pmf(full)))
    rng = symbol_rng(seed, 0xA11)
    for k in range(N_RANDOM_STARTS):
        starts.append((f"random-{k}", _project_simplex(rng.dirichlet(np.ones(obj.n)))))
    return starts


def matched_mb(prob: NloptProblem) -> Pmf:
    """MB input whose shaping SNR equals the SNR it realizes on the link."""
    pam = prob.lattice
    s0 = effective_snr(prob.p_tx, prob.sigma2_ase, prob.chi,
                       input_moments(pam, Pmf.uniform(pam.M))).snr_eff_db
    _, pmf, _ = self_consistent_snr(prob.sigma2_ase, prob.chi, pam, prob.p_tx, 0.0, s0)
    return pmf


def optimize_pmf(prob: NloptProblem) -> NloptResult:
    """Multi-start constrained ascent; returns the best iterate.

    When the best start reports non-convergence the result carries
    ``converged=False`` and a logged warning instead of raising.
    """
    obj = _Objective(prob)
    results = []
    for name, w0 in start_points(obj, prob.seed):
        f0 = obj(w0, grad=False)
        w, f, ok, msg = _ascend(obj, w0)
        if f < f0:
            w, f = w0, f0
        results.append((name, w, f, ok, msg))
    mus = [obj._moments(obj.probs(r[1]))[1] for r in results]
    best = max(range(len(results)), key=lambda i: (round(results[i][2], 10), -mus[i]))
    name, w, f, ok, msg = results[best]
    if not ok:
        log.warning("optimizer did not converge from start %s: %s", name, msg)
    P = obj.probs(w)
    if prob.mode == "1d":
        pmf = Pmf.from_weights(P)
        c = prob.lattice
        params = w / 2
    else:
        pmf = Pmf.from_weights(P)
        c = obj.qam
        params = w
    m = input_moments(c, pmf)
    bd = effective_snr(prob.p_tx, prob.sigma2_ase, prob.chi, m)
    air = AirEstimate(float(f), "quadrature", 0, per4d=True)
    return NloptResult(pmf, c, params, m, bd, air, ok, msg,
                       [(r[0], r[2], r[3]) for r in results])


@dataclass
class Comparison:
    p_tx: float
    result_1d: NloptResult
    result_2d: NloptResult
    rbmd_mb: float
    snr_mb_db: float

    @property
    def difference(self) -> float:
        """R_BMD(2D) minus R_BMD(1D) in bit/4D."""
        return self.result_2d.air.raw - self.result_1d.air.raw


def compare_1d_2d(lattice: Constellation, sigma2_ase: float, chi: ChiCoefficients,
                  p_tx: float, seed: int = 0) -> Comparison:
    """Optimize in 1D and 2D at one power and relate both to matched MB."""
    p1 = NloptProblem(lattice, sigma2_ase, chi, p_tx, "1d", seed)
    r1 = optimize_pmf(p1)
    r2 = optimize_pmf(NloptProblem(lattice, sigma2_ase, chi, p_tx, "2d", seed))
    mb = matched_mb(p1)
    obj = _Objective(p1)
    w = obj.from_pmf(mb.probs)
    return Comparison(p_tx, r1, r2, float(obj(w, grad=False)), obj.snr_db(w))


def table_v(results) -> Table:
    """Rows ``(p_tx_dbm, mode, one-sided or ring PMF, mu4, mu6, snr, rbmd)``."""
    t = Table(("p_tx_dbm", "mode", "pmf_params", "mu4", "mu6", "snr_eff_db", "rbmd_4d",
               "warning"))
    for r in results:
        mode = "1d" if r.constellation.dimension == 1 else "2d"
        t.append(10 * math.log10(r.breakdown.p_tx / 1e-3), mode, np.asarray(r.params),
                 r.moments.mu4, r.moments.mu6, r.breakdown.snr_eff_db, r.air.raw,
                 int(r.warning))
    return t


__all__ = ["NloptProblem", "NloptResult", "optimize_pmf", "compare_1d_2d", "matched_mb",
           "table_v", "Comparison"]
