"""Monte-Carlo simulator of the OFDM multi-carrier transceiver."""

from .channel import ImpairmentState, apply_channel, heterodyne_detect, lo_beat, quantize
from .estimate import (
    ChannelEstimate,
    DegenerateInputError,
    NoOffSegmentError,
    SnuReference,
    SnuTrace,
    calibrate_snu,
    estimate_channel,
    gaussian_channel,
    snu_trace,
)
from .ofdm import DemodResult, IQFrame, SyncError, TxPlan, mc_demodulate, mc_generate, pilot_tone, rrc_taps
from .runner import SimulationConfig, SimulationResult, dump_symbols_csv, run_trials, simulate

__all__ = [
    "ChannelEstimate", "DegenerateInputError", "DemodResult", "IQFrame", "ImpairmentState",
    "NoOffSegmentError", "SimulationConfig", "SimulationResult", "SnuReference", "SnuTrace",
    "SyncError", "TxPlan", "apply_channel", "calibrate_snu", "dump_symbols_csv", "estimate_channel",
    "gaussian_channel", "heterodyne_detect", "lo_beat", "mc_demodulate", "mc_generate", "pilot_tone",
    "quantize", "rrc_taps", "run_trials", "simulate", "snu_trace",
]
