"""Dual-polarization WDM split-step simulator at desk scale."""

from .config import DESK_LINK, SimConfig
from .fiber import edfa, propagate_span
from .link import append_result, gn_prediction, run_link, seed_sweep
from .receiver import RunResult, rx_dsp
from .transmitter import OpticalField, TxOutput, rrc_response, tx_generate

__all__ = [
    "DESK_LINK", "SimConfig", "OpticalField", "TxOutput", "RunResult", "tx_generate",
    "propagate_span", "edfa", "rx_dsp", "run_link", "append_result", "gn_prediction",
    "seed_sweep", "rrc_response",
]
