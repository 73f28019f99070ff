"""Modulation-dependent Gaussian-noise model of a multi-span WDM link.

The nonlinear interference (NLI) variance of the channel under test is

    sigma2_nli = P^3 [chi0 + (mu4 - 2) chi4 + (mu4 - 2)^2 chi4p + mu6 chi6]

with ``mu4``, ``mu6`` the standardized moments of the (common) channel
input and ``P`` the launch power per channel. Amplifier noise accumulates
linearly over the EDFA chain. The effective SNR is ``P / (sigma2_ase +
sigma2_nli)`` and rates follow from the AWGN quadrature in :mod:`.air`.

Powers are in W unless a name ends in ``_dbm``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

import numpy as np
from scipy import constants

from .air import rbmd_quadrature
from .constellation import Constellation, Moments, moments, product_qam
from .errors import ConfigError, ConvergenceError
from .mbopt import optimize_mb
from .pmf import Pmf
from .tables import Table

MATCHED_MB = "mb"
POWER_STEP_DB = 0.5
FP_DAMPING = 0.5
FP_MAX_ITER = 50
FP_TOL_DB = 1e-4


def dbm_to_w(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


def w_to_dbm(p_w):
    return 10 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


# zero loss, dispersion or nonlinearity is allowed for idealized test links
_ZERO_OK = ("alpha", "dispersion", "gamma")


@dataclass(frozen=True)
class LinkParams:
    """Homogeneous EDFA-amplified link; defaults are the 2000 km reference.

    Units: km, dB/km, ps/nm/km, 1/W/km, dB, nm, GBaud, GHz. ``alpha``,
    ``dispersion`` and ``gamma`` may be zero for idealized links.
    """

    span_length: float = 100.0
    n_spans: int = 20
    alpha: float = 0.2
    dispersion: float = 17.0
    gamma: float = 1.3
    edfa_nf: float = 4.0
    center_wavelength: float = 1550.0
    symbol_rate: float = 28.0
    wdm_channels: int = 9
    wdm_spacing: float = 30.0
    rrc_rolloff: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "edfa_nf":
                if not math.isfinite(v) and v != -math.inf:
                    raise ConfigError("edfa_nf must be finite or -inf (noise-free)")
                continue
            ok = isinstance(v, (int, float)) and math.isfinite(v)
            ok = ok and (v >= 0 if f.name in _ZERO_OK else v > 0)
            if not ok:
                raise ConfigError(f"{f.name} must be {'nonnegative' if f.name in _ZERO_OK else 'positive'}"
                                  f", got {v!r}")
        if int(self.n_spans) != self.n_spans or int(self.wdm_channels) != self.wdm_channels:
            raise ConfigError("n_spans and wdm_channels must be integers")
        if self.wdm_channels % 2 == 0:
            raise ConfigError("wdm_channels must be odd so that a center channel exists")

    @property
    def distance_km(self) -> float:
        return self.span_length * self.n_spans

    @property
    def span_gain(self) -> float:
        """Linear EDFA gain, equal to the span loss."""
        return 10 ** (self.alpha * self.span_length / 10)

    @property
    def noise_figure(self) -> float:
        return 10 ** (self.edfa_nf / 10)

    @property
    def carrier_frequency(self) -> float:
        return constants.c / (self.center_wavelength * 1e-9)

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/km (negative for SMF)."""
        lam = self.center_wavelength * 1e-9
        d = self.dispersion * 1e-3  # ps/nm/km -> s/m/km
        return -d * lam ** 2 / (2 * math.pi * constants.c)

    @property
    def alpha_neper(self) -> float:
        """Power attenuation in 1/km."""
        return self.alpha * math.log(10) / 10

    def with_spans(self, n_spans: int) -> "LinkParams":
        return replace(self, n_spans=int(n_spans))

    def with_distance(self, distance_km: float) -> "LinkParams":
        n = distance_km / self.span_length
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ConfigError(f"distance {distance_km} km is not a whole number of spans")
        return self.with_spans(int(round(n)))


@dataclass(frozen=True)
class ChiCoefficients:
    """NLI coefficients in W^-2.

    ``chi0`` is the modulation-independent part and must be nonnegative;
    zero is accepted as the linear-channel reference.
    """

    chi0: float
    chi4: float
    chi4p: float
    chi6: float

    def __post_init__(self):
        vals = (self.chi0, self.chi4, self.chi4p, self.chi6)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("chi coefficients must be finite")
        if self.chi0 < 0:
            raise ConfigError("chi0 must be nonnegative")

    @classmethod
    def zero(cls) -> "ChiCoefficients":
        return cls(0.0, 0.0, 0.0, 0.0)

    def bracket(self, m: Moments) -> float:
        """Per-``P^3`` NLI factor for an input with moments ``m``."""
        d = m.mu4 - 2.0
        return self.chi0 + d * self.chi4 + d * d * self.chi4p + m.mu6 * self.chi6

    def scaled(self, factor: float) -> "ChiCoefficients":
        return ChiCoefficients(self.chi0 * factor, self.chi4 * factor,
                               self.chi4p * factor, self.chi6 * factor)


@dataclass(frozen=True)
class ChiRecord:
    """Contents of a chi coefficient file."""

    chi: ChiCoefficients
    link: LinkParams
    sigma2_ase: float | None = None


_CHI_KEYS = ("chi0", "chi4", "chi4p", "chi6")
_LINK_KEYS = tuple(f.name for f in fields(LinkParams))
_INT_KEYS = ("n_spans", "wdm_channels")


def read_chi_file(path) -> ChiRecord:
    """Parse a ``key = value`` chi file; ``#`` starts a comment."""
    vals = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in _CHI_KEYS + _LINK_KEYS + ("sigma2_ase",):
            raise ConfigError(f"{path}:{n}: unknown key {k!r}")
        try:
            vals[k] = int(v) if k in _INT_KEYS else float(v)
        except ValueError:
            raise ConfigError(f"{path}:{n}: bad number {v!r}") from None
    missing = [k for k in _CHI_KEYS if k not in vals]
    if missing:
        raise ConfigError(f"{path}: missing {', '.join(missing)}")
    chi = ChiCoefficients(*(vals[k] for k in _CHI_KEYS))
    link = LinkParams(**{k: vals[k] for k in _LINK_KEYS if k in vals})
    return ChiRecord(chi, link, vals.get("sigma2_ase"))


def _num(v) -> str:
    return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


def write_chi_file(path, record: ChiRecord) -> Path:
    path = Path(path)
    lines = ["# NLI coefficients (W^-2), ASE variance (W), link parameters"]
    lines += [f"{k} = {_num(getattr(record.chi, k))}" for k in _CHI_KEYS]
    if record.sigma2_ase is not None:
        lines.append(f"sigma2_ase = {_num(record.sigma2_ase)}")
    lines += [f"{k} = {_num(v)}" for k, v in asdict(record.link).items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def chi_2000km_reference() -> ChiRecord:
    """Shipped coefficients of the 2000 km reference link."""
    ref = resources.files("pshaping").joinpath("data/chi_2000km_reference.txt")
    with resources.as_file(ref) as p:
        return read_chi_file(p)


def ase_variance(link: LinkParams) -> float:
    """Accumulated ASE variance in the symbol bandwidth, both polarizations (W).

    ``n_spans (G - 1) F h nu B`` with lumped gain ``G`` equal to the span
    loss. A noise figure of ``-inf`` gives a noise-free chain.
    """
    if link.edfa_nf == -math.inf:
        return 0.0
    return (link.n_spans * (link.span_gain - 1) * link.noise_figure
            * constants.h * link.carrier_frequency * link.symbol_rate * 1e9)


def nli_variance(p_tx: float, chi: ChiCoefficients, m: Moments) -> float:
    if not p_tx > 0:
        raise ValueError("p_tx must be positive")
    return p_tx ** 3 * chi.bracket(m)


@dataclass(frozen=True)
class EffectiveSnrBreakdown:
    """Noise budget at one launch power (all variances in W)."""

    p_tx: float
    sigma2_ase: float
    sigma2_nli_mod_indep: float
    sigma2_nli_mod_dep: float
    snr_eff_db: float

    @property
    def sigma2_eff(self) -> float:
        return self.sigma2_ase + self.sigma2_nli_mod_indep + self.sigma2_nli_mod_dep

    @property
    def snr_eff(self) -> float:
        return self.p_tx / self.sigma2_eff


def effective_snr(p_tx: float, noise: Union[LinkParams, float], chi: ChiCoefficients,
                  m: Moments) -> EffectiveSnrBreakdown:
    """Effective SNR at launch power ``p_tx`` (W).

    ``noise`` is either the link (ASE computed from it) or the ASE variance
    itself in W.
    """
    if not p_tx > 0:
        raise ValueError("p_tx must be positive")
    s_ase = ase_variance(noise) if isinstance(noise, LinkParams) else float(noise)
    indep = p_tx ** 3 * chi.chi0
    dep = p_tx ** 3 * (chi.bracket(m) - chi.chi0)
    total = s_ase + indep + dep
    if not total > 0:
        raise ValueError("total noise variance must be positive")
    return EffectiveSnrBreakdown(p_tx, s_ase, indep, dep, 10 * math.log10(p_tx / total))


def input_moments(c: Constellation, p) -> Moments:
    """Moments of the 2D input; a 1D ``c`` is the component of a product QAM."""
    if c.dimension == 1:
        qam, p2 = product_qam(c, p)
        return moments(qam, p2)
    from .constellation import normalize

    return moments(normalize(c, p), p)


# -- sweeps -------------------------------------------------------------------

InputSpec = Union[Pmf, str]


def _resolve(c: Constellation, spec: InputSpec, snr_uniform_db: float):
    if isinstance(spec, str):
        if spec != MATCHED_MB:
            raise ConfigError(f"unknown input policy {spec!r}")
        if c.dimension != 1:
            raise ConfigError("matched MB shaping needs a 1D lattice")
        return optimize_mb(c, snr_uniform_db).pmf
    return spec


def _noise(link, sigma2_ase):
    return ase_variance(link) if sigma2_ase is None else float(sigma2_ase)


def _grid(values, name):
    g = np.atleast_1d(np.asarray(values, dtype=float))
    if g.size == 0:
        raise ValueError(f"{name} grid is empty")
    return g


@dataclass
class PowerSweep:
    table: Table
    best_power_dbm: float
    best_rbmd: float
    best_snr_db: float


def air_power_sweep(link: LinkParams, chi: ChiCoefficients, c: Constellation, p: InputSpec,
                    powers_dbm, sigma2_ase: float | None = None) -> PowerSweep:
    """R_BMD versus launch power per channel.

    ``p`` is a PMF on ``c`` or ``"mb"``: the MB input matched to the
    effective SNR a uniform input would see at each power.
    """
    grid = _grid(powers_dbm, "power")
    s_ase = _noise(link, sigma2_ase)
    m_uni = input_moments(c, Pmf.uniform(c.M))
    t = Table(("p_tx_dbm", "snr_eff_db", "mu4", "mu6", "rbmd_4d"))
    for pdbm in grid:
        pw = float(dbm_to_w(pdbm))
        pmf = p
        if isinstance(p, str):
            pmf = _resolve(c, p, effective_snr(pw, s_ase, chi, m_uni).snr_eff_db)
        m = input_moments(c, pmf)
        snr = effective_snr(pw, s_ase, chi, m).snr_eff_db
        t.append(float(pdbm), snr, m.mu4, m.mu6, rbmd_quadrature(c, pmf, snr).value)
    r = t.column("rbmd_4d")
    i = int(np.argmax(r))
    return PowerSweep(t, float(grid[i]), float(r[i]), float(t.column("snr_eff_db")[i]))


def optimal_power_grid(lo_dbm: float = -8.0, hi_dbm: float = 6.0) -> np.ndarray:
    return np.round(np.arange(lo_dbm, hi_dbm + POWER_STEP_DB / 2, POWER_STEP_DB), 6)


def chi_linear_in_spans(reference: ChiRecord, n_spans: int) -> ChiCoefficients:
    """Approximate chi at another span count by linear scaling."""
    return reference.chi.scaled(n_spans / reference.link.n_spans)


def reach_sweep(link: LinkParams, reference: ChiRecord, lattice: Constellation,
                policies: Mapping[str, InputSpec], distances_km,
                chi_by_distance: Mapping[float, ChiCoefficients] | None = None,
                powers_dbm=None) -> Table:
    """Best-over-power R_BMD per distance and input policy.

    Without ``chi_by_distance`` the reference coefficients are scaled
    linearly with the span count (an approximation). ASE is recomputed
    from ``link`` for every distance.
    """
    dist = _grid(distances_km, "distance")
    powers = optimal_power_grid() if powers_dbm is None else _grid(powers_dbm, "power")
    t = Table(("distance_km", "policy", "p_opt_dbm", "snr_eff_db", "rbmd_4d"))
    for d in dist:
        ld = link.with_distance(float(d))
        if chi_by_distance is not None:
            key = next((k for k in chi_by_distance if abs(float(k) - d) < 1e-9), None)
            if key is None:
                raise ConfigError(f"no chi entry for distance {d:g} km")
            chi = chi_by_distance[key]
        else:
            chi = chi_linear_in_spans(reference, ld.n_spans)
        for name, spec in policies.items():
            sw = air_power_sweep(ld, chi, lattice, spec, powers)
            t.append(float(d), name, sw.best_power_dbm, sw.best_snr_db, sw.best_rbmd)
    return t


def distance_at_rate(table: Table, policy: str, rate_4d: float) -> float:
    """Interpolated distance at which ``policy`` falls to ``rate_4d``."""
    sub = table.where(policy=policy)
    d, r = sub.column("distance_km"), sub.column("rbmd_4d")
    order = np.argsort(r)
    if not r.min() <= rate_4d <= r.max():
        return math.nan
    return float(np.interp(rate_4d, r[order], d[order]))


def self_consistent_snr(link_noise: float, chi: ChiCoefficients, lattice: Constellation,
                        p_tx: float, delta_db: float, start_db: float,
                        damping: float = FP_DAMPING, max_iter: int = FP_MAX_ITER,
                        tol_db: float = FP_TOL_DB):
    """Channel SNR ``s`` solving ``s = SNR_eff(MB(s + delta))``.

    Damped fixed-point iteration. Returns ``(s, pmf, iterations)``.
    """
    s = start_db
    for it in range(1, max_iter + 1):
        pmf = optimize_mb(lattice, s + delta_db).pmf
        s_new = effective_snr(p_tx, link_noise, chi, input_moments(lattice, pmf)).snr_eff_db
        s_next = (1 - damping) * s + damping * s_new
        if abs(s_new - s) < tol_db:
            return s_new, pmf, it
        s = s_next
    raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations",
                           partial={"delta_db": delta_db, "snr_db": s})


def mismatch_sweep(link: LinkParams, chi: ChiCoefficients, lattice: Constellation, delta_grid_db,
                   p_tx_dbm: float = -1.5, sigma2_ase: float | None = None) -> Table:
    """Channel SNR and R_BMD gain versus shaping-SNR mismatch.

    ``delta`` is the shaping SNR minus the realized channel SNR; the gain
    is relative to the uniform input at the same power.
    """
    grid = _grid(delta_grid_db, "delta")
    s_ase = _noise(link, sigma2_ase)
    pw = float(dbm_to_w(p_tx_dbm))
    uni = Pmf.uniform(lattice.M)
    s0 = effective_snr(pw, s_ase, chi, input_moments(lattice, uni)).snr_eff_db
    r0 = rbmd_quadrature(lattice, uni, s0).value
    t = Table(("delta_db", "shaping_snr_db", "channel_snr_db", "rbmd_4d", "gain_4d", "iterations"))
    for dl in grid:
        s, pmf, it = self_consistent_snr(s_ase, chi, lattice, pw, float(dl), s0)
        r = rbmd_quadrature(lattice, pmf, s).value
        t.append(float(dl), s + float(dl), s, r, r - r0, it)
    return t


def gn_bandwidth_factor(link: LinkParams) -> float:
    """``asinh(pi^2/2 |beta2| L_eff B^2)`` of the closed-form GN model.

    ``B`` is the total WDM bandwidth. Used only to carry chi values between
    scenarios that differ in channel count or dispersion.
    """
    if link.alpha == 0 or link.dispersion == 0:
        raise ValueError("the bandwidth factor needs nonzero loss and dispersion")
    leff_a = 1.0 / (2 * link.alpha_neper) * 1e3  # m
    b2 = abs(link.beta2) * 1e-3  # s^2/m
    bw = link.wdm_channels * link.wdm_spacing * 1e9
    return math.asinh(math.pi ** 2 / 2 * b2 * leff_a * bw ** 2)


def scenario_chi(reference: ChiRecord, link: LinkParams) -> ChiCoefficients:
    """Approximate chi for ``link`` from the reference record.

    Linear in span count and in ``gamma^2``, times the ratio of closed-form
    GN bandwidth factors; all four coefficients share one factor.
    """
    ref = reference.link
    f = (link.n_spans / ref.n_spans) * (link.gamma / ref.gamma) ** 2 \
        * gn_bandwidth_factor(link) / gn_bandwidth_factor(ref)
    return reference.chi.scaled(f)
