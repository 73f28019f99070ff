"""WDM transmitter: i.i.d. shaped QAM, RRC pulses, per-channel power.

The simulation grid is periodic with period ``n_symbols`` symbols. Pulse
shaping is a frequency-domain product with the RRC amplitude response, so
transmit and matched filters together are exactly Nyquist on the grid.
Channel centers are rounded to whole frequency bins to keep periodicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from ..constellation import Constellation, product_qam
from ..pmf import Pmf, sample
from .config import SimConfig

STREAM_SYMBOLS = 1


@dataclass
class OpticalField:
    """Dual-polarization baseband field in sqrt(W).

    ``samples`` has shape ``(2, n)``: x and y polarization.
    """

    samples: np.ndarray
    sample_rate: float
    center_frequency_offset: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError("samples must have shape (2, n)")
        self.samples = s

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def power(self) -> float:
        """Mean total power over both polarizations (W)."""
        return float(np.mean(np.abs(self.samples) ** 2) * 2)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def copy(self) -> "OpticalField":
        return OpticalField(self.samples.copy(), self.sample_rate, self.center_frequency_offset)


def rrc_response(f, symbol_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response, ``1`` at DC."""
    a = np.abs(np.asarray(f, dtype=float)) / symbol_rate
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    h = np.zeros_like(a)
    h[a <= lo] = 1.0
    band = (a > lo) & (a < hi)
    if rolloff > 0:
        h[band] = np.sqrt(0.5 * (1 + np.cos(math.pi / rolloff * (a[band] - lo))))
    return h


def channel_bins(cfg: SimConfig) -> np.ndarray:
    """Signed FFT-bin offset of every WDM channel center."""
    df = cfg.sample_rate / cfg.n_samples
    k = np.arange(cfg.link.wdm_channels) - cfg.center_channel
    return np.rint(k * cfg.link.wdm_spacing * 1e9 / df).astype(int)


@dataclass
class TxOutput:
    field: OpticalField
    indices: np.ndarray  # (channels, 2, n_symbols) 2D symbol indices
    constellations: list
    pmfs: list  # 2D PMFs aligned to the constellations

    def symbols(self, channel: int) -> np.ndarray:
        """Sent unit-energy symbols ``(2, n_symbols)`` of ``channel``."""
        return self.constellations[channel].points[self.indices[channel]]


def tx_generate(cfg: SimConfig) -> TxOutput:
    """Sum of independently modulated WDM channels at ``p_tx`` each."""
    n, os_ = cfg.n_samples, cfg.oversampling
    fs = cfg.sample_rate
    f = sfft.fftfreq(n, 1 / fs)
    h = rrc_response(f, cfg.link.symbol_rate * 1e9, cfg.link.rrc_rolloff)
    p_ch = 1e-3 * 10 ** (cfg.p_tx_dbm / 10)
    spec = np.zeros((2, n), dtype=complex)
    idx_all, consts, pmfs = [], [], []
    qams = {}
    for ch, (p1, k) in enumerate(zip(cfg.channel_pmfs(), channel_bins(cfg))):
        key = id(p1)
        if key not in qams:
            qams[key] = _qam(cfg, p1)
        qam, p2 = qams[key]
        idx = np.stack([sample(p2, cfg.n_symbols, cfg.seed, (STREAM_SYMBOLS, ch, pol))
                        for pol in range(2)])
        up = np.zeros((2, n), dtype=complex)
        up[:, ::os_] = qam.points[idx]
        X = sfft.fft(up, axis=1, workers=cfg.threads) * h
        # time-domain mean power per polarization via Parseval
        pw = np.sum(np.abs(X) ** 2, axis=1) / n ** 2
        X *= np.sqrt(p_ch / 2 / pw)[:, None]
        spec += np.roll(X, k, axis=1)
        idx_all.append(idx)
        consts.append(qam)
        pmfs.append(p2)
    x = sfft.ifft(spec, axis=1, workers=cfg.threads)
    return TxOutput(OpticalField(x, fs), np.array(idx_all), consts, pmfs)


def _qam(cfg: SimConfig, p1: Pmf) -> tuple[Constellation, Pmf]:
    from ..inputs import pam_for_order

    return product_qam(pam_for_order(cfg.qam_order), p1)
