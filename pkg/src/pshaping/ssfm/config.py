"""Simulation configuration for the split-step link model."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..gnmodel import LinkParams
from ..inputs import parse_pmf_spec
from ..pmf import Pmf

MIN_SYMBOLS = 10_000

DESK_LINK = LinkParams(n_spans=10, wdm_channels=3)


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a run.

    Attributes
    ----------
    link : LinkParams
        Fiber, amplifier and WDM grid parameters.
    p_tx_dbm : float
        Launch power per channel, both polarizations together.
    oversampling : int
        Samples per symbol.
    n_symbols : int
        Symbols per channel and polarization (the simulation period).
    step_km : float
        Split-step length; each span uses the nearest equal subdivision.
    seed : int
    qam_order : int
    pmf : tuple
        One PMF spec per WDM channel (see :mod:`pshaping.inputs`); a single
        entry applies to every channel.
    threads : int
        FFT worker threads; results do not depend on it.
    """

    link: LinkParams = DESK_LINK
    p_tx_dbm: float = 0.0
    oversampling: int = 16
    n_symbols: int = 1 << 14
    step_km: float = 0.5
    seed: int = 1
    qam_order: int = 64
    pmf: tuple = ("uniform",)
    threads: int = field(default=1, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pmf", _normalize_pmf_field(self.pmf))
        if int(self.oversampling) != self.oversampling or self.oversampling < 2:
            raise ConfigError("oversampling must be an integer >= 2")
        if int(self.n_symbols) != self.n_symbols or self.n_symbols < 16:
            raise ConfigError("n_symbols must be an integer >= 16")
        if not self.step_km > 0:
            raise ConfigError("step_km must be positive")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        need = 2 * self.link.wdm_channels * self.link.wdm_spacing / self.link.symbol_rate
        if self.oversampling < need:
            raise ConfigError(f"oversampling {self.oversampling} cannot contain "
                              f"{self.link.wdm_channels} channels (needs >= {need:.2f})")
        if self.link.wdm_spacing < self.link.symbol_rate * (1 + self.link.rrc_rolloff):
            raise ConfigError("WDM spacing is narrower than the channel bandwidth")
        if len(self.pmf) not in (1, self.link.wdm_channels):
            raise ConfigError("pmf needs one entry or one per WDM channel")

    @property
    def sample_rate(self) -> float:
        return self.link.symbol_rate * 1e9 * self.oversampling

    @property
    def n_samples(self) -> int:
        return int(self.n_symbols * self.oversampling)

    @property
    def center_channel(self) -> int:
        return self.link.wdm_channels // 2

    @property
    def low_symbol_count(self) -> bool:
        return self.n_symbols < MIN_SYMBOLS

    def channel_pmfs(self) -> list[Pmf]:
        """Resolved 1D PMF of every WDM channel."""
        specs = self.pmf * self.link.wdm_channels if len(self.pmf) == 1 else self.pmf
        cache = {}
        out = []
        for s in specs:
            key = repr(s)
            if key not in cache:
                cache[key] = parse_pmf_spec(list(s) if isinstance(s, tuple) else s, self.qam_order)
            out.append(cache[key])
        return out

    def replace(self, **kw) -> "SimConfig":
        link_kw = {k: kw.pop(k) for k in list(kw) if k in _LINK_FIELDS}
        cfg = replace(self, **kw)
        if link_kw:
            cfg = replace(cfg, link=replace(cfg.link, **link_kw))
        return cfg

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("link", "threads")}
        d["pmf"] = [list(p) if isinstance(p, tuple) else p for p in self.pmf]
        return {"link": asdict(self.link), "sim": d}

    def config_hash(self) -> str:
        """Stable digest of the run-defining fields (thread count excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        unknown = set(d) - {"link", "sim"}
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
        link_d = dict(d.get("link", {}))
        bad = set(link_d) - set(_LINK_FIELDS)
        if bad:
            raise ConfigError(f"unknown link keys: {', '.join(sorted(bad))}")
        base = asdict(DESK_LINK)
        base.update(link_d)
        sim = dict(d.get("sim", {}))
        bad = set(sim) - set(_SIM_FIELDS)
        if bad:
            raise ConfigError(f"unknown sim keys: {', '.join(sorted(bad))}")
        try:
            return cls(link=LinkParams(**base), **sim)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_toml(cls, path) -> "SimConfig":
        return cls.from_dict(load_toml(path))


def _is_numeric_list(p) -> bool:
    return isinstance(p, (list, tuple)) and len(p) > 0 and all(isinstance(v, (int, float)) for v in p)


def _normalize_pmf_field(p) -> tuple:
    """``"uniform"`` or ``[0.3, 0.2]`` become one-entry tuples; lists become tuples."""
    if isinstance(p, str) or _is_numeric_list(p):
        p = [p]
    if not isinstance(p, (list, tuple)) or not p:
        raise ConfigError(f"bad pmf field {p!r}")
    return tuple(tuple(float(v) for v in e) if isinstance(e, (list, tuple)) else e for e in p)


def load_toml(path) -> dict:
    try:
        import tomllib as tomli
    except ModuleNotFoundError:
        import tomli

    try:
        with Path(path).open("rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


_LINK_FIELDS = tuple(f.name for f in fields(LinkParams))
_SIM_FIELDS = tuple(f.name for f in fields(SimConfig) if f.name != "link")
