"""PAM/QAM constellations with binary-reflected Gray labels.

Points live on the odd-integer lattice scaled by ``rho``; all probabilistic
shaping enters through a :class:`~pshaping.pmf.Pmf` and the scalar ``rho``.
Point order for a QAM built by :func:`product_qam` is row-major over
``(real index, imaginary index)`` of the constituent PAM, and labels are
the real-part bits followed by the imaginary-part bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidStateError
from .pmf import Pmf

NORM_TOL = 1e-9


def gray_code(nbits: int) -> np.ndarray:
    """Binary-reflected Gray code by reflect-and-prefix recursion."""
    codes = [0]
    for b in range(nbits):
        codes = codes + [c | (1 << b) for c in reversed(codes)]
    return np.array(codes, dtype=np.int64)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Constellation:
    """Scaled lattice points with integer bit labels.

    Attributes
    ----------
    points : complex ndarray
        Amplitudes after scaling by ``rho``. 1D constellations have zero
        imaginary part.
    labels : int ndarray
        Bit label of each point, most significant bit first in :attr:`bits`.
    dimension : int
        1 for PAM, 2 for QAM.
    rho : float
        Scale applied to the odd-integer base lattice.
    component : Constellation or None
        Constituent PAM (unscaled) when the QAM is a product constellation.
    """

    points: np.ndarray
    labels: np.ndarray
    dimension: int
    rho: float = 1.0
    component: "Constellation | None" = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex).ravel()
        lab = np.array(self.labels, dtype=np.int64).ravel()
        M = pts.size
        if not _is_pow2(M) or M < 2:
            raise ValueError(f"constellation size must be a power of two, got {M}")
        if lab.size != M or np.unique(lab).size != M:
            raise ValueError("labels must be distinct and one per point")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.dimension == 2 and math.isqrt(M) ** 2 != M:
            raise ValueError("2D constellations need M = L^2 with L a power of two")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def M(self) -> int:
        return self.points.size

    @property
    def m(self) -> int:
        return self.M.bit_length() - 1

    @property
    def base(self) -> np.ndarray:
        """Unscaled lattice amplitudes."""
        return self.points / self.rho

    @property
    def bits(self) -> np.ndarray:
        """``(M, m)`` 0/1 matrix, column 0 is the most significant bit."""
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts) & 1).astype(np.int8)

    def coords(self) -> np.ndarray:
        """Real coordinates, shape ``(M, dimension)``."""
        if self.dimension == 1:
            return self.points.real[:, None].copy()
        return np.stack([self.points.real, self.points.imag], axis=1)

    def energy(self, p) -> float:
        """Average energy ``sum p |x|^2`` under ``p``."""
        q = _probs_for(self, p)
        return float(np.dot(q, np.abs(self.points) ** 2))

    def rescaled(self, rho: float) -> "Constellation":
        return Constellation(self.base * rho, self.labels, self.dimension, rho, self.component)


def _probs_for(c: Constellation, p) -> np.ndarray:
    q = np.asarray(p, dtype=float)
    if q.shape != (c.M,):
        raise ValueError(f"PMF has {q.size} entries, constellation has {c.M}")
    return q


def make_pam(levels: int) -> Constellation:
    """Unnormalized PAM ``{-(L-1), ..., -1, +1, ..., L-1}`` with BRGC labels."""
    if not isinstance(levels, (int, np.integer)) or levels < 2 or not _is_pow2(int(levels)):
        raise ValueError(f"levels must be a power of two >= 2, got {levels!r}")
    L = int(levels)
    pts = np.arange(-(L - 1), L, 2, dtype=float)
    return Constellation(pts, gray_code(L.bit_length() - 1), 1, 1.0)


def normalize(c: Constellation, p) -> Constellation:
    """Rescale ``c`` to unit average energy under ``p``.

    Energy is per complex symbol for 2D constellations and per real symbol
    for 1D ones.
    """
    q = _probs_for(c, p)
    e_base = float(np.dot(q, np.abs(c.base) ** 2))
    if e_base <= 0:
        raise ValueError("PMF puts no energy on the constellation")
    return c.rescaled(1.0 / math.sqrt(e_base))


def product_qam(pam: Constellation, p1d) -> tuple[Constellation, Pmf]:
    """Square QAM from a PAM and its 1D PMF, normalized to unit 2D energy."""
    if pam.dimension != 1:
        raise ValueError("product_qam needs a 1D constellation")
    q = _probs_for(pam, p1d)
    L = pam.M
    u = pam.base.real
    pts = (u[:, None] + 1j * u[None, :]).ravel()
    lab = ((pam.labels[:, None] << pam.m) | pam.labels[None, :]).ravel()
    p2 = Pmf.from_weights(np.outer(q, q).ravel())
    base_pam = Constellation(u, pam.labels, 1, 1.0)
    qam = Constellation(pts, lab, 2, 1.0, base_pam)
    assert qam.M == L * L
    return normalize(qam, p2), p2


def make_qam(order: int, p1d=None) -> tuple[Constellation, Pmf]:
    """Square ``order``-QAM; ``p1d`` defaults to uniform."""
    L = math.isqrt(order)
    if L * L != order:
        raise ValueError(f"QAM order {order} is not a perfect square")
    pam = make_pam(L)
    if p1d is None:
        p1d = Pmf.uniform(L)
    return product_qam(pam, p1d)


def marginal_1d(c: Constellation, p) -> Pmf:
    """Real-axis marginal of a product-QAM PMF."""
    if c.component is None:
        raise ValueError("marginal_1d needs a product constellation")
    L = c.component.M
    q = _probs_for(c, p).reshape(L, L)
    return Pmf.from_weights(q.sum(axis=1))


@dataclass(frozen=True)
class Moments:
    """Standardized fourth and sixth moments of a unit-energy input."""

    mu4: float
    mu6: float


def standardized_moment(c: Constellation, p, k: int) -> float:
    """``E[|X|^k]`` for a zero-mean, unit-energy constellation.

    Raises
    ------
    InvalidStateError
        If ``c`` is not normalized under ``p``.
    """
    q = _probs_for(c, p)
    if k not in (4, 6):
        raise ValueError("k must be 4 or 6")
    e = np.dot(q, np.abs(c.points) ** 2)
    if abs(e - 1.0) > NORM_TOL:
        raise InvalidStateError(f"constellation energy is {e:.12g}, expected 1")
    # evaluated on the base lattice so that scaling round-off cancels
    r2 = np.abs(c.base) ** 2
    e2 = np.dot(q, r2)
    return float(np.dot(q, r2 ** (k // 2)) / e2 ** (k // 2))


def moments(c: Constellation, p) -> Moments:
    return Moments(standardized_moment(c, p, 4), standardized_moment(c, p, 6))


def ring_classes(c: Constellation) -> np.ndarray:
    """Index of the energy class ``|x|^2`` of every point (ascending)."""
    r2 = np.rint(np.abs(c.base) ** 2).astype(np.int64)
    _, inv = np.unique(r2, return_inverse=True)
    return inv


# -- tabular text format ------------------------------------------------------

def write_table(path, c: Constellation, p) -> None:
    """One row per point: ``re im label_bits probability`` under a header."""
    q = _probs_for(c, p)
    lines = [
        f"# M={c.M} dimension={c.dimension} rho={float(c.rho)!r}"
        + (f" component={c.component.M}" if c.component is not None else ""),
        "# re im label_bits probability",
    ]
    for x, lab, pr in zip(c.points, c.labels, q):
        lines.append(f"{float(x.real)!r} {float(x.imag)!r} {int(lab):0{c.m}b} {float(pr)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path) -> tuple[Constellation, Pmf]:
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    header[key] = val
            continue
        re_, im_, bits, pr = line.split()
        rows.append((float(re_), float(im_), int(bits, 2), float(pr)))
    try:
        M, dim, rho = int(header["M"]), int(header["dimension"]), float(header["rho"])
    except KeyError as exc:
        raise ValueError(f"table header is missing {exc}") from None
    if len(rows) != M:
        raise ValueError(f"header says M={M} but found {len(rows)} rows")
    arr = np.array(rows)
    pts = arr[:, 0] + 1j * arr[:, 1]
    comp = None
    if "component" in header:
        L = int(header["component"])
        u = np.unique(np.round(pts.real / rho, 9))
        comp = make_pam(L)
        assert u.size == L
    c = Constellation(pts, arr[:, 2].astype(np.int64), dim, rho, comp)
    return c, Pmf(arr[:, 3]) if abs(arr[:, 3].sum() - 1) < 1e-12 else Pmf.from_weights(arr[:, 3])
