"""Achievable information rates under a Gaussian auxiliary channel.

Conventions
-----------
The auxiliary metric is ``q(y|x) ~ exp(-|y - x|^2 / N0)`` where ``N0`` is
:attr:`AuxChannel.sigma2`. For complex (2D) symbols ``N0`` is the complex
noise variance ``E[|N|^2]`` and ``SNR = E[|X|^2] / N0``. For real (1D)
symbols the same exponent corresponds to a per-dimension variance
``N0 / 2``, which keeps 1D and 2D LLRs of a product QAM identical.

The normalization constant of ``q`` is never used: it cancels in every
estimator here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .constellation import Constellation

LLR_CAP = 50.0
GH_ORDER_1D = 80
GH_ORDER_2D = 32
GH_ORDER_MIN = 8
LN2 = math.log(2.0)
_CHUNK = 1 << 16


@dataclass(frozen=True)
class AuxChannel:
    """Circularly-symmetric Gaussian auxiliary channel, ``sigma2`` = N0."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @classmethod
    def from_snr(cls, snr_db: float, dimension: int = 2, energy: float = 1.0) -> "AuxChannel":
        """Matched channel for an input of average ``energy`` at ``snr_db``."""
        snr = 10 ** (snr_db / 10)
        if dimension == 2:
            return cls(energy / snr)
        return cls(2 * energy / snr)


@dataclass(frozen=True)
class AirEstimate:
    """An AIR value; ``value`` is ``[raw]^+``."""

    raw: float
    method: str
    n_samples: int = 0
    per4d: bool = False

    @property
    def value(self) -> float:
        return max(self.raw, 0.0)

    @property
    def bits_4d(self) -> float:
        return self.value if self.per4d else 2 * self.value

    def __float__(self):
        return self.value


def awgn_capacity_4d(snr_db) -> np.ndarray:
    """``2 log2(1 + SNR)`` in bit/4D-sym."""
    return 2 * np.log2(1 + 10 ** (np.asarray(snr_db, dtype=float) / 10))


# -- LLRs and Monte-Carlo estimators -----------------------------------------

def _coords(v, dimension: int) -> np.ndarray:
    v = np.asarray(v)
    if dimension == 1:
        return np.real(v).astype(float)[..., None]
    return np.stack([np.real(v), np.imag(v)], axis=-1).astype(float)


def _metrics(y, c: Constellation, q: AuxChannel) -> np.ndarray:
    """``-|y_k - x_j|^2 / N0`` for all samples and points, shape (N, M)."""
    yc = _coords(y, c.dimension)
    xc = c.coords()
    d2 = ((yc[:, None, :] - xc[None, :, :]) ** 2).sum(axis=-1)
    return -d2 / q.sigma2


def _logp(p) -> np.ndarray:
    pr = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(pr)


def llrs(y, c: Constellation, p, q: AuxChannel) -> np.ndarray:
    """LLRs ``log P(B_i=1|y) / P(B_i=0|y)`` for every sample and bit level.

    Returns an ``(N, m)`` array saturated at ``+-LLR_CAP``. A bit level
    whose ``1`` (or ``0``) side carries no probability yields the cap with
    the corresponding sign.
    """
    y = np.atleast_1d(np.asarray(y))
    bits = c.bits.astype(bool)
    lp = _logp(p)
    out = np.empty((y.size, c.m))
    for s in range(0, y.size, _CHUNK):
        dm = _metrics(y[s:s + _CHUNK], c, q) + lp
        for i in range(c.m):
            with np.errstate(invalid="ignore"):
                l1 = logsumexp(dm[:, bits[:, i]], axis=1)
                l0 = logsumexp(dm[:, ~bits[:, i]], axis=1)
                lam = l1 - l0
            lam = np.where(np.isnan(lam), 0.0, lam)
            out[s:s + _CHUNK, i] = np.clip(lam, -LLR_CAP, LLR_CAP)
    return out


def llr(y, i: int, c: Constellation, p, q: AuxChannel) -> float:
    """LLR of bit level ``i`` (1-based, MSB first) for a single sample."""
    if not 1 <= i <= c.m:
        raise ValueError(f"bit level must be in 1..{c.m}")
    return float(llrs(np.asarray([y]), c, p, q)[0, i - 1])


def _sent_indices(x, c: Constellation) -> np.ndarray:
    x = np.asarray(x)
    if np.issubdtype(x.dtype, np.integer):
        if x.size and (x.min() < 0 or x.max() >= c.M):
            raise ValueError("sent index out of range")
        return x.astype(np.int64)
    d = np.abs(x[:, None] - c.points[None, :])
    idx = np.argmin(d, axis=1)
    if np.any(d[np.arange(x.size), idx] > 1e-9):
        raise ValueError("sent symbols must be constellation points")
    return idx


def rsym_mc(x, y, c: Constellation, p, q: AuxChannel) -> AirEstimate:
    """Symbol-wise mismatched rate: mean of ``log2 q(y|x) / q_Y(y)``.

    ``x`` holds either point indices or the sent points themselves.
    """
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("need at least one sample")
    idx = _sent_indices(x, c)
    if idx.size != y.size:
        raise ValueError("x and y lengths differ")
    lp = _logp(p)
    total = 0.0
    for s in range(0, y.size, _CHUNK):
        dm = _metrics(y[s:s + _CHUNK], c, q)
        k = idx[s:s + _CHUNK]
        num = dm[np.arange(k.size), k]
        den = logsumexp(dm + lp, axis=1)
        total += math.fsum(num - den)
    return AirEstimate(total / y.size / LN2, "monte-carlo", int(y.size))


def rbmd_mc(bits, llr_matrix, c: Constellation, p) -> AirEstimate:
    """BMD rate from sent bits and demapper LLRs.

    ``bits`` and ``llr_matrix`` are ``(N, m)``; the sent point of row ``k``
    is looked up from its label to evaluate the ``-log2 P(x_k)`` term.
    """
    b = np.asarray(bits)
    lam = np.asarray(llr_matrix, dtype=float)
    if b.ndim != 2 or b.shape != lam.shape or b.shape[1] != c.m:
        raise ValueError(f"bits {b.shape} and LLRs {lam.shape} must both be (N, {c.m})")
    if b.shape[0] == 0:
        raise ValueError("need at least one sample")
    weights = 1 << np.arange(c.m - 1, -1, -1)
    lab = b.astype(np.int64) @ weights
    lookup = np.full(1 << c.m, -1, dtype=np.int64)
    lookup[c.labels] = np.arange(c.M)
    idx = lookup[lab]
    pr = np.asarray(p, dtype=float)[idx]
    n = b.shape[0]
    first = math.fsum(-np.log2(pr)) / n
    sign = 1.0 - 2.0 * b
    second = math.fsum(np.logaddexp(0.0, sign * lam).sum(axis=1)) / LN2 / n
    return AirEstimate(first - second, "monte-carlo", int(n))


# -- Gauss-Hermite quadrature ------------------------------------------------

@lru_cache(maxsize=None)
def _gh(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.hermite.hermgauss(order)
    w = w / math.sqrt(math.pi)
    if dim == 1:
        return t[:, None], w
    tt = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    ww = np.outer(w, w).ravel()
    return tt, ww


def bmd_quadrature_terms(coords, bits, p, v: float, order: int | None = None, grad: bool = False,
                         symbolwise: bool = False):
    """BMD rate of a real constellation on AWGN, with optional gradient.

    Parameters
    ----------
    coords : (M, d) array
        Constellation points as real vectors (d = 1 or 2); any scaling.
    bits : (M, m) array
        Bit labels.
    p : (M,) array
        Input PMF.
    v : float
        Noise variance per real dimension, in the units of ``coords``.
    order : int, optional
        Gauss-Hermite points per dimension; defaults to ``GH_ORDER_1D`` or
        ``GH_ORDER_2D``.
    grad : bool
        Also return ``dR/dp`` (treating entries as free) and ``dR/dv``.
    symbolwise : bool
        Return the symbol-wise mutual information instead (no gradient).

    Returns
    -------
    float or (float, ndarray, float)
        Rate in bits per ``d``-dimensional symbol.
    """
    u = np.asarray(coords, dtype=float)
    if order is None:
        order = GH_ORDER_1D if u.shape[1] == 1 else GH_ORDER_2D
    if order < GH_ORDER_MIN:
        raise ValueError(f"quadrature order must be >= {GH_ORDER_MIN}")
    if not v > 0:
        raise ValueError("noise variance must be positive")
    B = np.asarray(bits, dtype=float)
    P = np.asarray(p, dtype=float)
    M, d = u.shape
    m = B.shape[1]
    t, w = _gh(order, d)
    T = w.size
    s2v = math.sqrt(2.0 / v)
    PB1 = P[:, None] * B
    PB0 = P[:, None] * (1.0 - B)
    active = np.flatnonzero(P > 0) if not grad else np.arange(M)
    block = max(1, int(4_000_000 // (T * M)))

    G = 0.0
    g_expl = np.zeros(M)
    g_impl = np.zeros(M)
    dG_dv = 0.0
    for s in range(0, active.size, block):
        K = active[s:s + block]
        a = u[K, None, :] - u[None, :, :]
        a2 = (a ** 2).sum(axis=-1)
        at = np.einsum("kjd,td->ktj", a, t)
        D = -a2[:, None, :] / (2 * v) - s2v * at
        E = np.exp(D)
        S_all = E @ P
        PK = P[K]
        if symbolwise:
            G += float(PK @ (np.log(S_all) @ w))
            continue
        S1 = E @ PB1
        S0 = E @ PB0
        bk = B[K][:, None, :]
        match = np.where(bk > 0.5, S1, S0)
        term = m * np.log(S_all) - np.log(match).sum(axis=-1)
        tw = term @ w
        G += float(PK @ tw)
        if not grad:
            continue
        g_expl[K] = tw
        Q = 1.0 / match
        C0 = (Q * (1.0 - bk)).sum(axis=-1)
        sumQ = C0[..., None] + (Q * (2.0 * bk - 1.0)) @ B.T
        coef = E * (m / S_all[..., None] - sumQ)
        g_impl += np.einsum("k,t,ktj->j", PK, w, coef)
        dD = a2[:, None, :] / (2 * v * v) + at / (math.sqrt(2.0) * v ** 1.5)
        F = E * dD
        dS_all = F @ P
        dmatch = np.where(bk > 0.5, F @ PB1, F @ PB0)
        dterm = m * dS_all / S_all - (dmatch / match).sum(axis=-1)
        dG_dv += float(PK @ (dterm @ w))

    if symbolwise:
        return -G / LN2
    pos = P > 0
    H = float(-np.sum(P[pos] * np.log2(P[pos])))
    R = H - G / LN2
    if not grad:
        return R
    with np.errstate(divide="ignore"):
        dH = -np.log2(P) - 1.0 / LN2
    dR_dp = dH - (g_expl + g_impl) / LN2
    return R, dR_dp, -dG_dv / LN2


def _split_product(c: Constellation, p):
    """Return ``(pam, p1d)`` when ``p`` on ``c`` is a product PMF, else None."""
    if c.dimension == 1:
        return c, np.asarray(p, dtype=float)
    if c.component is None:
        return None
    L = c.component.M
    P = np.asarray(p, dtype=float).reshape(L, L)
    p1 = P.sum(axis=1)
    if not np.allclose(P, np.outer(p1, p1), rtol=0, atol=1e-13):
        return None
    return c.component, p1


def _noise_var(coords: np.ndarray, p, snr_db: float, dimension: int) -> float:
    """Per-real-dimension noise variance in the units of ``coords``."""
    energy = float(np.dot(np.asarray(p, dtype=float), (coords ** 2).sum(axis=1)))
    snr = 10 ** (snr_db / 10)
    return energy / snr if dimension == 1 else energy / (2 * snr)


def rbmd_quadrature(c: Constellation, p, snr_db: float, order: int | None = None,
                    force_2d: bool = False) -> AirEstimate:
    """BMD rate on AWGN at ``snr_db`` by Gauss-Hermite quadrature, in bit/4D-sym.

    A 1D constellation is read as the constituent PAM of a product QAM.
    Product inputs on a 2D constellation are integrated per real dimension
    (exact for product labeling on a circular channel) unless ``force_2d``.
    """
    split = None if force_2d else _split_product(c, p)
    if split is not None:
        pam, p1 = split
        u = pam.base.real[:, None]
        r = bmd_quadrature_terms(u, pam.bits, p1, _noise_var(u, p1, snr_db, 1), order)
        return AirEstimate(4 * r, "quadrature", 0, per4d=True)
    u = np.stack([c.base.real, c.base.imag], axis=1)
    r = bmd_quadrature_terms(u, c.bits, p, _noise_var(u, p, snr_db, 2), order)
    return AirEstimate(2 * r, "quadrature", 0, per4d=True)


def mi_quadrature(c: Constellation, p, snr_db: float, order: int | None = None) -> AirEstimate:
    """Symbol-wise mutual information on AWGN, in bit/4D-sym."""
    split = _split_product(c, p)
    if split is not None:
        pam, p1 = split
        u = pam.base.real[:, None]
        r = bmd_quadrature_terms(u, pam.bits, p1, _noise_var(u, p1, snr_db, 1), order,
                                 symbolwise=True)
        return AirEstimate(4 * r, "quadrature", 0, per4d=True)
    u = np.stack([c.base.real, c.base.imag], axis=1)
    r = bmd_quadrature_terms(u, c.bits, p, _noise_var(u, p, snr_db, 2), order, symbolwise=True)
    return AirEstimate(2 * r, "quadrature", 0, per4d=True)
