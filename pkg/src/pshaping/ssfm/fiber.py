"""Manakov split-step propagation and lumped EDFA amplification.

The field obeys

    dE/dz = -alpha/2 E - j beta2/2 d^2E/dt^2 + j (8/9) gamma |E|^2 E

with ``|E|^2 = |Ex|^2 + |Ey|^2``. Each step is symmetric: half a linear
step in frequency, the full nonlinear phase, another linear half step.
Consecutive linear halves are merged.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import constants
from scipy import fft as sfft

from ..pmf import symbol_rng
from .config import SimConfig
from .transmitter import OpticalField

MANAKOV = 8.0 / 9.0
STREAM_ASE = 2


def _omega(n: int, fs: float) -> np.ndarray:
    return 2 * math.pi * sfft.fftfreq(n, 1 / fs)


def linear_step(n: int, fs: float, beta2: float, alpha: float, dz: float) -> np.ndarray:
    """Frequency response of dispersion and loss over ``dz`` km."""
    w = _omega(n, fs)
    return np.exp((0.5j * beta2 * w ** 2 - alpha / 2) * dz)


def n_steps(span_km: float, step_km: float) -> int:
    return max(1, int(math.ceil(span_km / step_km - 1e-9)))


def propagate_span(f: OpticalField, cfg: SimConfig, step_km: float | None = None) -> OpticalField:
    """Propagate one span of ``cfg.link.span_length`` km."""
    link = cfg.link
    L = link.span_length
    ns = n_steps(L, cfg.step_km if step_km is None else step_km)
    h = L / ns
    half = linear_step(f.n, f.sample_rate, link.beta2, link.alpha_neper, h / 2)
    full = half * half
    k = MANAKOV * link.gamma * h
    w = cfg.threads
    X = sfft.fft(f.samples, axis=1, workers=w)
    X *= half
    for i in range(ns):
        E = sfft.ifft(X, axis=1, workers=w)
        if k != 0.0:
            pw = E.real ** 2 + E.imag ** 2
            E *= np.exp(1j * k * (pw[0] + pw[1]))
        X = sfft.fft(E, axis=1, workers=w)
        X *= full if i < ns - 1 else half
    E = sfft.ifft(X, axis=1, workers=w)
    return OpticalField(E, f.sample_rate, f.center_frequency_offset)


def ase_sample_variance(cfg: SimConfig) -> float:
    """Complex noise variance per sample and polarization added by one EDFA."""
    link = cfg.link
    if link.edfa_nf == -math.inf:
        return 0.0
    psd = (link.span_gain - 1) * link.noise_figure * constants.h * link.carrier_frequency / 2
    return psd * cfg.sample_rate


def edfa(f: OpticalField, cfg: SimConfig, span_index: int) -> OpticalField:
    """Gain equal to the span loss plus white ASE on both polarizations."""
    g = math.sqrt(cfg.link.span_gain)
    out = f.samples * g
    var = ase_sample_variance(cfg)
    if var > 0:
        for pol in range(2):
            rng = symbol_rng(cfg.seed, STREAM_ASE, int(span_index), pol)
            z = rng.standard_normal((2, f.n))
            out[pol] += math.sqrt(var / 2) * (z[0] + 1j * z[1])
    return OpticalField(out, f.sample_rate, f.center_frequency_offset)
