"""Coherent receiver: CD compensation, matched RRC, scalar equalizer, AIR."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from ..air import AuxChannel, llrs, rbmd_mc
from ..pmf import entropy
from .config import SimConfig
from .fiber import _omega
from .transmitter import OpticalField, TxOutput, channel_bins, rrc_response

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    """Per-run estimates for the channel under test.

    ``x`` holds the sent unit-energy symbols and ``y`` the received ones
    after the scalar equalizer, both shaped ``(2, n_symbols)``.
    """

    channel_snr_db: float
    snr_db_pol: tuple
    rbmd_4d: float
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    entropy_4d: float
    warning: bool = False
    config_hash: str = ""


def rx_dsp(f: OpticalField, cfg: SimConfig, tx: TxOutput, distance_km: float | None = None,
           channel: int | None = None) -> RunResult:
    """Recover ``channel`` (default: center) and estimate SNR and R_BMD.

    Dispersion of ``distance_km`` (default: the whole link) is inverted
    exactly in the frequency domain before the channel is shifted to
    baseband and matched-filtered.
    """
    ch = cfg.center_channel if channel is None else channel
    dist = cfg.link.distance_km if distance_km is None else distance_km
    n, os_ = f.n, cfg.oversampling
    X = sfft.fft(f.samples, axis=1, workers=cfg.threads)
    if dist > 0 and cfg.link.beta2 != 0:
        X *= np.exp(-0.5j * cfg.link.beta2 * _omega(n, f.sample_rate) ** 2 * dist)
    X = np.roll(X, -channel_bins(cfg)[ch], axis=1)
    X *= rrc_response(sfft.fftfreq(n, 1 / f.sample_rate), cfg.link.symbol_rate * 1e9,
                      cfg.link.rrc_rolloff)
    y = sfft.ifft(X, axis=1, workers=cfg.threads)[:, ::os_]
    x = tx.symbols(ch)
    hs = np.sum(y * np.conj(x), axis=1) / np.sum(np.abs(x) ** 2, axis=1)
    ye = y / hs[:, None]
    err = np.mean(np.abs(ye - x) ** 2, axis=1)
    es = np.mean(np.abs(x) ** 2, axis=1)
    snr_lin = es / err
    snr_db = 10 * math.log10(float(np.mean(snr_lin)))

    c, p2 = tx.constellations[ch], tx.pmfs[ch]
    bits = c.bits
    rate = 0.0
    for pol in range(2):
        q = AuxChannel(float(err[pol]))
        lam = llrs(ye[pol], c, p2, q)
        rate += rbmd_mc(bits[tx.indices[ch, pol]], lam, c, p2).value
    warn = cfg.low_symbol_count
    if warn:
        log.warning("only %d symbols per polarization; estimates are noisy", cfg.n_symbols)
    return RunResult(snr_db, tuple(10 * np.log10(snr_lin)), rate, x, ye, hs,
                     2 * entropy(p2), warn, cfg.config_hash())
