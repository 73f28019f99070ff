"""Parsing of textual input-distribution specs used by configs and the CLI.

A spec names a 1D PMF on the constituent PAM of a square QAM:

``"uniform"``
    equiprobable points;
``"<preset>"``
    a catalog entry such as ``"64qam-d"`` (must match the QAM order);
``"mb:<snr_db>"``
    the MB input optimized for AWGN at that shaping SNR;
a list of numbers
    one-sided probabilities, smallest positive amplitude first.
"""

from __future__ import annotations

import math

from .constellation import Constellation, make_pam
from .errors import ConfigError
from .mbopt import optimize_mb
from .pmf import PRESETS, Pmf


def pam_for_order(qam_order: int) -> Constellation:
    L = math.isqrt(int(qam_order))
    if L * L != qam_order:
        raise ConfigError(f"QAM order {qam_order} is not a perfect square")
    try:
        return make_pam(L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_pmf_spec(spec, qam_order: int) -> Pmf:
    """1D PMF for ``spec`` on the PAM of ``qam_order``-QAM."""
    pam = pam_for_order(qam_order)
    if isinstance(spec, (list, tuple)):
        if len(spec) != pam.M // 2:
            raise ConfigError(f"one-sided PMF needs {pam.M // 2} entries, got {len(spec)}")
        try:
            return Pmf.symmetric([float(v) for v in spec])
        except ValueError as exc:
            raise ConfigError(f"bad one-sided PMF: {exc}") from None
    if not isinstance(spec, str):
        raise ConfigError(f"unrecognized PMF spec {spec!r}")
    s = spec.strip().lower()
    if s == "uniform":
        return Pmf.uniform(pam.M)
    if s.startswith("mb:"):
        try:
            snr = float(s[3:])
        except ValueError:
            raise ConfigError(f"bad shaping SNR in {spec!r}") from None
        return optimize_mb(pam, snr).pmf
    if s in PRESETS:
        pre = PRESETS[s]
        if pre.qam_order != qam_order:
            raise ConfigError(f"preset {s!r} is for {pre.qam_order}QAM, not {qam_order}QAM")
        return pre.pmf()
    raise ConfigError(f"unknown PMF spec {spec!r}; use 'uniform', 'mb:<snr_db>', a list, "
                      f"or one of: {', '.join(PRESETS)}")
