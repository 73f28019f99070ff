"""Probability mass functions over constellation points.

Includes the Maxwell-Boltzmann family, entropy, the catalog of fixed
shaped distributions for 16/64/256QAM, and reproducible i.i.d. sampling.

Random numbers come from numpy's Philox4x64-10 counter-based generator.
A stream is identified by ``(seed, *stream_ids)`` through
:class:`numpy.random.SeedSequence` spawn keys, so every consumer (symbol
source per WDM channel, ASE noise per span and polarization, ...) draws
from its own independent, order-insensitive stream. Indices are drawn by
inverse-CDF lookup of uniform doubles against the cumulative PMF.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .constellation import Constellation

SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probabilities aligned to the point order of a constellation."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("PMF must have at least one entry")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("PMF entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > SUM_TOL * max(1, p.size):
            raise ValueError(f"PMF sums to {p.sum():.15g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, weights) -> "Pmf":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, size: int) -> "Pmf":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def symmetric(cls, one_sided) -> "Pmf":
        """Full 1D PMF in ascending amplitude order from its positive half.

        ``one_sided[0]`` is the probability of the smallest positive
        amplitude. The result is renormalized, so rounded table values are
        accepted.
        """
        half = np.asarray(one_sided, dtype=float)
        return cls.from_weights(np.concatenate([half[::-1], half]))

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.size

    def __getitem__(self, idx):
        return self.probs[idx]

    def one_sided(self) -> np.ndarray:
        """Positive-amplitude half of a symmetric 1D PMF (ascending)."""
        n = self.probs.size
        return self.probs[n // 2:].copy()

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.probs, self.probs[::-1]))


def maxwell_boltzmann(c: "Constellation", nu: float) -> Pmf:
    """PMF proportional to ``exp(-nu * |x|^2)`` on the base lattice of ``c``.

    The weights use the unscaled lattice amplitudes, so ``nu`` does not
    depend on whatever normalization ``c`` currently carries.
    """
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    e = np.abs(c.base) ** 2
    return Pmf.from_weights(np.exp(-nu * (e - e.min())))


def entropy(p) -> float:
    """Entropy in bits; zero-probability entries contribute nothing."""
    q = np.asarray(p, dtype=float)
    q = q[q > 0]
    return float(-np.sum(q * np.log2(q)))


def symbol_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def sample(p, n: int, seed: int, stream: tuple[int, ...] = ()) -> np.ndarray:
    """Draw ``n`` i.i.d. indices from ``p``; deterministic in ``(seed, stream, n)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    q = np.asarray(p, dtype=float)
    cdf = np.cumsum(q)
    cdf[-1] = 1.0
    u = symbol_rng(seed, *stream).random(int(n))
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, q.size - 1)


@dataclass(frozen=True)
class Preset:
    """A fixed shaped distribution with its quoted operating point."""

    name: str
    qam_order: int
    one_sided: tuple[float, ...]
    shaping_snr_db: float
    snr_range_db: tuple[float, float]

    @property
    def pam_levels(self) -> int:
        return int(round(np.sqrt(self.qam_order)))

    def pmf(self) -> Pmf:
        return Pmf.symmetric(self.one_sided)


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in (
        Preset("16qam-a", 16, (0.432, 0.068), 1.2, (1.1, 6.1)),
        Preset("16qam-b", 16, (0.332, 0.168), 9.9, (6.1, 11.6)),
        Preset("64qam-c", 64, (0.277, 0.16, 0.053, 0.01), 9.3, (7.4, 12.2)),
        Preset("64qam-d", 64, (0.200, 0.157, 0.096, 0.046), 15.0, (12.2, 16.6)),
        Preset(
            "256qam-e", 256,
            (0.152, 0.131, 0.097, 0.062, 0.034, 0.016, 0.006, 0.002),
            15.5, (13.5, 18.1),
        ),
        Preset(
            "256qam-f", 256,
            (0.109, 0.101, 0.088, 0.071, 0.054, 0.038, 0.025, 0.015),
            20.6, (18.1, 22.1),
        ),
    )
}


def preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
