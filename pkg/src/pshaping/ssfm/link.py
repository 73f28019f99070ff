"""End-to-end runs, result persistence and GN-model cross-checks."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from ..constellation import write_table
from ..tables import units_line
from ..gnmodel import (ChiRecord, EffectiveSnrBreakdown, ase_variance, chi_2000km_reference,
                       effective_snr, input_moments, scenario_chi)
from .config import SimConfig
from .fiber import edfa, propagate_span
from .receiver import RunResult, rx_dsp
from .transmitter import tx_generate

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("config_hash", "p_tx_dbm", "distance_km", "seed", "snr_x_db", "snr_y_db",
                  "channel_snr_db", "rbmd_4d", "warning")


def run_link(cfg: SimConfig) -> RunResult:
    """Transmit, propagate ``n_spans`` spans with an EDFA after each, receive."""
    tx = tx_generate(cfg)
    f = tx.field
    for s in range(cfg.link.n_spans):
        f = propagate_span(f, cfg)
        f = edfa(f, cfg, s)
    return rx_dsp(f, cfg, tx)


def result_row(cfg: SimConfig, r: RunResult) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "p_tx_dbm": cfg.p_tx_dbm,
        "distance_km": cfg.link.distance_km,
        "seed": cfg.seed,
        "snr_x_db": float(r.snr_db_pol[0]),
        "snr_y_db": float(r.snr_db_pol[1]),
        "channel_snr_db": r.channel_snr_db,
        "rbmd_4d": r.rbmd_4d,
        "warning": int(r.warning),
    }


def existing_hashes(path) -> set[str]:
    p = Path(path)
    if not p.exists():
        return set()
    with p.open(newline="") as fh:
        return {row["config_hash"] for row in csv.DictReader(row for row in fh if not row.startswith("#"))}


def append_result(path, cfg: SimConfig, r: RunResult) -> bool:
    """Append one row unless the config hash is already present."""
    p = Path(path)
    if cfg.config_hash() in existing_hashes(p):
        return False
    new = not p.exists()
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new:
            fh.write(units_line(RESULT_COLUMNS))
            w.writeheader()
        fh.write(f"# config {cfg.config_hash()} {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in result_row(cfg, r).items()})
    return True


def dump_symbols(path, r: RunResult, tx_const, tx_pmf) -> None:
    """Write sent/received symbols and the constellation table side by side."""
    p = Path(path)
    write_table(p.with_suffix(".pmf"), tx_const, tx_pmf)
    arr = np.column_stack([r.x[0].real, r.x[0].imag, r.y[0].real, r.y[0].imag,
                           r.x[1].real, r.x[1].imag, r.y[1].real, r.y[1].imag])
    np.savetxt(p, arr, header="x_re x_im y_re y_im (pol x) | x_re x_im y_re y_im (pol y)")


def gn_prediction(cfg: SimConfig, reference: ChiRecord | None = None,
                  channel: int | None = None) -> EffectiveSnrBreakdown:
    """Effective SNR the GN model predicts for ``cfg``'s link and input.

    The chi coefficients are carried over from the reference record with
    :func:`pshaping.gnmodel.scenario_chi`.
    """
    ref = reference or chi_2000km_reference()
    chi = scenario_chi(ref, cfg.link)
    ch = cfg.center_channel if channel is None else channel
    from ..inputs import pam_for_order

    m = input_moments(pam_for_order(cfg.qam_order), cfg.channel_pmfs()[ch])
    return effective_snr(1e-3 * 10 ** (cfg.p_tx_dbm / 10), ase_variance(cfg.link), chi, m)


def seed_sweep(cfg: SimConfig, seeds) -> tuple[list[RunResult], float, float]:
    """Runs over ``seeds``; returns results and mean/std of channel SNR (dB)."""
    res = [run_link(cfg.replace(seed=int(s))) for s in seeds]
    snr = np.array([r.channel_snr_db for r in res])
    return res, float(snr.mean()), float(snr.std(ddof=1)) if snr.size > 1 else math.nan
